#include "coordreg/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

namespace coordreg {

namespace {

constexpr double kRankTol = 1e-12;

double max_abs_span(const double* p, std::size_t n) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(p[i]));
    return m;
}

}  // namespace

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    m.magnitude_bound = 1.0;
    return m;
}

void DenseMatrix::refresh_magnitude() {
    magnitude_bound = max_abs_span(entries.data(), entries.size());
}

void DenseVector::refresh_magnitude() {
    magnitude_bound = max_abs_span(entries.data(), entries.size());
}

// ============================================================================
// Products
// ============================================================================

DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols != b.rows) throw DimensionMismatch("multiply: inner dimensions differ");
    DenseMatrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ar = a.row_ptr(i);
        double* cr = c.row_ptr(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            double aik = ar[k];
            if (aik == 0.0) continue;
            const double* br = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols; ++j) cr[j] += aik * br[j];
        }
    }
    c.refresh_magnitude();
    return c;
}

DenseVector multiply(const DenseMatrix& a, const DenseVector& x) {
    if (a.cols != x.size()) throw DimensionMismatch("multiply: vector length differs");
    DenseVector y(a.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ar = a.row_ptr(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) acc += ar[j] * x[j];
        y[i] = acc;
    }
    y.refresh_magnitude();
    return y;
}

DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    t.magnitude_bound = a.magnitude_bound;
    t.grid = a.grid;
    return t;
}

DenseVector transpose_multiply(const DenseMatrix& a, const DenseVector& y) {
    if (a.rows != y.size()) throw DimensionMismatch("transpose_multiply: length differs");
    DenseVector x(a.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ar = a.row_ptr(i);
        double yi = y[i];
        if (yi == 0.0) continue;
        for (std::size_t j = 0; j < a.cols; ++j) x[j] += ar[j] * yi;
    }
    x.refresh_magnitude();
    return x;
}

double dot(const DenseVector& a, const DenseVector& b) {
    if (a.size() != b.size()) throw DimensionMismatch("dot: length differs");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(const DenseVector& v) { return std::sqrt(dot(v, v)); }

double max_abs(const DenseVector& v) { return max_abs_span(v.entries.data(), v.size()); }
double max_abs(const DenseMatrix& m) { return max_abs_span(m.entries.data(), m.entries.size()); }

// ============================================================================
// QR
// ============================================================================

namespace {

// In-place Householder factorization of work (n x d, row-major). Reflectors
// overwrite the lower part, R the upper. Optional column pivoting.
struct HouseholderQr {
    std::size_t n, d, kmax;
    std::vector<double> work;
    std::vector<double> beta;
    std::vector<std::size_t> perm;

    HouseholderQr(const DenseMatrix& m, bool pivot)
        : n(m.rows), d(m.cols), kmax(std::min(m.rows, m.cols)),
          work(m.entries), beta(m.cols, 0.0), perm(m.cols) {
        for (std::size_t j = 0; j < d; ++j) perm[j] = j;
        std::vector<double> colnorm2(d, 0.0);
        if (pivot) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) colnorm2[j] += work[i * d + j] * work[i * d + j];
        }
        for (std::size_t k = 0; k < kmax; ++k) {
            if (pivot) {
                std::size_t best = k;
                for (std::size_t j = k + 1; j < d; ++j)
                    if (colnorm2[j] > colnorm2[best]) best = j;
                if (best != k) {
                    for (std::size_t i = 0; i < n; ++i)
                        std::swap(work[i * d + k], work[i * d + best]);
                    std::swap(colnorm2[k], colnorm2[best]);
                    std::swap(perm[k], perm[best]);
                }
            }
            double normx = 0.0;
            for (std::size_t i = k; i < n; ++i) normx = std::hypot(normx, work[i * d + k]);
            if (normx == 0.0) { beta[k] = 0.0; continue; }
            double alpha = work[k * d + k] >= 0.0 ? -normx : normx;
            double v0 = work[k * d + k] - alpha;
            work[k * d + k] = alpha;
            double vnorm2 = v0 * v0;
            for (std::size_t i = k + 1; i < n; ++i) vnorm2 += work[i * d + k] * work[i * d + k];
            if (vnorm2 == 0.0) { beta[k] = 0.0; continue; }
            beta[k] = 2.0 / vnorm2;
            // apply (I - beta v v^T) to the trailing columns; v = (v0, col below diag)
            for (std::size_t j = k + 1; j < d; ++j) {
                double s = v0 * work[k * d + j];
                for (std::size_t i = k + 1; i < n; ++i) s += work[i * d + k] * work[i * d + j];
                s *= beta[k];
                work[k * d + j] -= s * v0;
                for (std::size_t i = k + 1; i < n; ++i) work[i * d + j] -= s * work[i * d + k];
            }
            // store v below the diagonal, normalized so v0 lives in beta scaling
            for (std::size_t i = k + 1; i < n; ++i) work[i * d + k] /= v0;
            beta[k] = beta[k] * v0 * v0;
            if (pivot) {
                for (std::size_t j = k + 1; j < d; ++j) {
                    double t = work[k * d + j];
                    colnorm2[j] = std::max(0.0, colnorm2[j] - t * t);
                }
            }
        }
    }

    double rdiag(std::size_t k) const { return work[k * d + k]; }

    // rank by diagonal threshold relative to the largest diagonal
    std::size_t rank() const {
        double dmax = 0.0;
        for (std::size_t k = 0; k < kmax; ++k) dmax = std::max(dmax, std::abs(rdiag(k)));
        if (dmax == 0.0) return 0;
        std::size_t r = 0;
        for (std::size_t k = 0; k < kmax; ++k)
            if (std::abs(rdiag(k)) > kRankTol * dmax) ++r; else break;
        return r;
    }

    // thin Q: first `rank` columns of the orthogonal factor
    DenseMatrix thin_q(std::size_t rank_cols) const {
        DenseMatrix q(n, rank_cols);
        for (std::size_t j = 0; j < rank_cols; ++j) q(j, j) = 1.0;
        for (std::size_t k = kmax; k-- > 0;) {
            if (beta[k] == 0.0) continue;
            for (std::size_t j = 0; j < rank_cols; ++j) {
                double s = q(k, j);
                for (std::size_t i = k + 1; i < n; ++i) s += work[i * d + k] * q(i, j);
                s *= beta[k];
                q(k, j) -= s;
                for (std::size_t i = k + 1; i < n; ++i) q(i, j) -= s * work[i * d + k];
            }
        }
        q.refresh_magnitude();
        return q;
    }

    // y := Q^T b (first d entries returned)
    std::vector<double> qt_apply(const DenseVector& b) const {
        std::vector<double> y(b.entries);
        for (std::size_t k = 0; k < kmax; ++k) {
            if (beta[k] == 0.0) continue;
            double s = y[k];
            for (std::size_t i = k + 1; i < n; ++i) s += work[i * d + k] * y[i];
            s *= beta[k];
            y[k] -= s;
            for (std::size_t i = k + 1; i < n; ++i) y[i] -= s * work[i * d + k];
        }
        y.resize(d);
        return y;
    }
};

}  // namespace

QrFactors qr_decompose(const DenseMatrix& m) {
    if (m.rows < m.cols) throw DimensionMismatch("qr_decompose: needs rows >= cols");
    if (m.cols == 0) throw BadParam("qr_decompose: empty matrix");
    HouseholderQr f(m, /*pivot=*/false);
    double dmax = 0.0, dmin = 0.0;
    for (std::size_t k = 0; k < m.cols; ++k) {
        double a = std::abs(f.rdiag(k));
        dmax = std::max(dmax, a);
        dmin = (k == 0) ? a : std::min(dmin, a);
    }
    if (dmin <= kRankTol * dmax || dmax == 0.0)
        throw RankDeficient("qr_decompose: triangular diagonal collapsed");

    QrFactors out;
    out.q = f.thin_q(m.cols);
    // invert R by back substitution, one unit column at a time
    std::size_t d = m.cols;
    DenseMatrix rinv(d, d);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = d; i-- > 0;) {
            double s = (i == j) ? 1.0 : 0.0;
            for (std::size_t k = i + 1; k < d; ++k) s -= f.work[i * d + k] * rinv(k, j);
            rinv(i, j) = s / f.rdiag(i);
        }
    }
    rinv.refresh_magnitude();
    out.r_inv_like = std::move(rinv);
    return out;
}

DenseVector leverage_scores(const DenseMatrix& a) {
    if (a.rows == 0 || a.cols == 0) throw BadParam("leverage_scores: empty matrix");
    DenseVector tau(a.rows);
    HouseholderQr f(a, /*pivot=*/true);
    std::size_t r = f.rank();
    if (r == 0) return tau;
    DenseMatrix q = f.thin_q(r);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < r; ++j) s += q(i, j) * q(i, j);
        tau[i] = s;
    }
    tau.refresh_magnitude();
    return tau;
}

DenseVector solve_l2_exact(const DenseMatrix& a, const DenseVector& b) {
    if (a.rows != b.size()) throw DimensionMismatch("solve_l2_exact: length differs");
    if (a.rows < a.cols) throw DimensionMismatch("solve_l2_exact: needs rows >= cols");
    HouseholderQr f(a, /*pivot=*/false);
    double dmax = 0.0, dmin = 0.0;
    for (std::size_t k = 0; k < a.cols; ++k) {
        double v = std::abs(f.rdiag(k));
        dmax = std::max(dmax, v);
        dmin = (k == 0) ? v : std::min(dmin, v);
    }
    if (dmin <= kRankTol * dmax || dmax == 0.0)
        throw RankDeficient("solve_l2_exact: rank deficient");
    std::vector<double> y = f.qt_apply(b);
    std::size_t d = a.cols;
    DenseVector x(d);
    for (std::size_t i = d; i-- > 0;) {
        double s = y[i];
        for (std::size_t k = i + 1; k < d; ++k) s -= f.work[i * d + k] * x[k];
        x[i] = s / f.rdiag(i);
    }
    x.refresh_magnitude();
    return x;
}

// ============================================================================
// IRLS
// ============================================================================

double lp_norm_pow(const DenseVector& v, double p) {
    if (p <= 0.0) throw BadParam("lp_norm: p must be positive");
    double s = 0.0;
    for (double e : v.entries) s += std::pow(std::abs(e), p);
    return s;
}

double lp_norm(const DenseVector& v, double p) {
    if (p <= 0.0) throw BadParam("lp_norm: p must be positive");
    if (p == 2.0) return l2_norm(v);
    if (p == 1.0) {
        double s = 0.0;
        for (double e : v.entries) s += std::abs(e);
        return s;
    }
    return std::pow(lp_norm_pow(v, p), 1.0 / p);
}

namespace {

DenseVector residual_of(const DenseMatrix& a, const DenseVector& b, const DenseVector& x) {
    DenseVector r = multiply(a, x);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
    return r;
}

// Weak-duality lower bound on min ||a x - b||_p: project the subgradient
// direction onto the nullspace of a^T, normalize in the dual norm.
double dual_lower_bound(const DenseMatrix& q, const DenseVector& b, const DenseVector& resid,
                        double p) {
    double pq = (p == 1.0) ? 0.0 : p / (p - 1.0);
    std::size_t n = resid.size();
    DenseVector u(n);
    for (std::size_t i = 0; i < n; ++i) {
        double r = resid[i];
        u[i] = (r == 0.0) ? 0.0 : std::copysign(std::pow(std::abs(r), p - 1.0), r);
    }
    // u := (I - Q Q^T) u
    std::size_t d = q.cols;
    std::vector<double> qtu(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* qr = q.row_ptr(i);
        for (std::size_t j = 0; j < d; ++j) qtu[j] += qr[j] * u[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double* qr = q.row_ptr(i);
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += qr[j] * qtu[j];
        u[i] -= s;
    }
    double num = dot(b, u);
    double den = lp_norm(u, pq);
    if (den == 0.0) return 0.0;
    return num / den;
}

}  // namespace

DenseVector solve_lp_irls(const DenseMatrix& a, const DenseVector& b, double p,
                          double tol, const IrlsOptions& opt) {
    if (p <= 1.0 || p > 2.0) throw BadParam("solve_lp_irls: p must lie in (1, 2]");
    if (tol <= 0.0) throw BadParam("solve_lp_irls: tol must be positive");
    if (a.rows != b.size()) throw DimensionMismatch("solve_lp_irls: length differs");

    QrFactors qr = qr_decompose(a);  // full-rank check + dual projector
    DenseVector x = solve_l2_exact(a, b);
    if (p == 2.0) return x;

    double bnorm2 = l2_norm(b);
    if (bnorm2 == 0.0) { DenseVector z(a.cols); return z; }
    double theta = opt.theta_rel * bnorm2;
    std::size_t n = a.rows, d = a.cols;

    DenseMatrix wa(n, d);
    DenseVector wb(n);
    for (int iter = 0; iter < opt.max_iters; ++iter) {
        DenseVector resid = residual_of(a, b, x);
        double obj = lp_norm(resid, p);
        double lb = dual_lower_bound(qr.q, b, resid, p);
        if (obj <= tol * 1e-6 * bnorm2) return x;  // consistent system
        if (lb > 0.0 && obj <= (1.0 + tol) * lb) return x;

        for (std::size_t i = 0; i < n; ++i) {
            double w = std::pow(std::max(std::abs(resid[i]), theta), 0.5 * p - 1.0);
            const double* ar = a.row_ptr(i);
            double* wr = wa.row_ptr(i);
            for (std::size_t j = 0; j < d; ++j) wr[j] = w * ar[j];
            wb[i] = w * b[i];
        }
        x = solve_l2_exact(wa, wb);
    }
    throw NoConvergence("solve_lp_irls: iteration budget exhausted");
}

// ============================================================================
// Grid rounding
// ============================================================================

double round_scalar_to_grid(double x, double grid_p) {
    if (!(grid_p > 0.0)) throw BadParam("round_to_grid: grid must be positive");
    double t = x * grid_p;
    double fl = std::floor(t);
    double frac = t - fl;
    double k;
    if (frac > 0.5) k = fl + 1.0;
    else if (frac < 0.5) k = fl;
    else k = (std::fmod(fl, 2.0) == 0.0) ? fl : fl + 1.0;
    double r = k / grid_p;
    return r == 0.0 ? 0.0 : r;  // normalize -0
}

DenseVector round_to_grid(const DenseVector& v, double grid_p) {
    DenseVector out = v;
    for (double& e : out.entries) e = round_scalar_to_grid(e, grid_p);
    out.refresh_magnitude();
    out.grid = grid_p;
    return out;
}

DenseMatrix round_to_grid(const DenseMatrix& m, double grid_p) {
    DenseMatrix out = m;
    for (double& e : out.entries) e = round_scalar_to_grid(e, grid_p);
    if (m.rows == m.cols && m.rows > 0) {
        // restore invertibility lost to rounding: bump zeroed diagonal entries,
        // then (rare) keep bumping the full diagonal while the factorization
        // still reports collapse
        bool changed = true;
        int guard = 0;
        while (changed && guard < 64) {
            changed = false;
            ++guard;
            bool invertible = true;
            try {
                (void)qr_decompose(out);
            } catch (const RankDeficient&) {
                invertible = false;
            }
            if (!invertible) {
                bool bumped = false;
                for (std::size_t i = 0; i < out.rows; ++i) {
                    if (out(i, i) == 0.0) {
                        out(i, i) = 1.0 / grid_p;
                        bumped = true;
                    }
                }
                if (!bumped)
                    for (std::size_t i = 0; i < out.rows; ++i) out(i, i) += 1.0 / grid_p;
                changed = true;
            }
        }
    }
    out.refresh_magnitude();
    out.grid = grid_p;
    return out;
}

double estimate_condition(const DenseMatrix& m, int iters) {
    if (m.rows < m.cols || m.cols == 0) throw DimensionMismatch("estimate_condition: shape");
    std::size_t d = m.cols;
    // explicit normal matrix; d is small throughout the repo
    DenseMatrix nmat(d, d);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* r = m.row_ptr(i);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) nmat(a, b) += r[a] * r[b];
    }
    auto power = [&](const DenseMatrix& mat) {
        std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
        double lam = 0.0;
        for (int it = 0; it < iters; ++it) {
            std::vector<double> w(d, 0.0);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) w[i] += mat(i, j) * v[j];
            double nw = 0.0;
            for (double e : w) nw += e * e;
            nw = std::sqrt(nw);
            if (nw == 0.0) return 0.0;
            lam = nw;
            for (std::size_t i = 0; i < d; ++i) v[i] = w[i] / nw;
        }
        return lam;
    };
    double lmax = power(nmat);
    if (lmax == 0.0) return std::numeric_limits<double>::infinity();
    DenseMatrix shifted(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            shifted(i, j) = (i == j ? lmax : 0.0) - nmat(i, j);
    double smax = power(shifted);
    double lmin = std::max(lmax - smax, 0.0);
    if (lmin <= 0.0) return std::numeric_limits<double>::infinity();
    return std::sqrt(lmax / lmin);
}

}  // namespace coordreg
