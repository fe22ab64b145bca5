#include "coordreg/lewis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "coordreg/errors.hpp"
#include "coordreg/rng.hpp"

namespace coordreg {

LeverageOracle exact_leverage_oracle() {
    return [](const DenseMatrix& scaled) { return leverage_scores(scaled).entries; };
}

namespace {

void check_p(double p) {
    if (!(p > 0.0) || !(p < 4.0)) throw BadParam("lewis: p must lie in (0, 4)");
}

DenseMatrix reweighted(const DenseMatrix& a, const std::vector<double>& w, double expo) {
    DenseMatrix out = a;
    for (std::size_t i = 0; i < a.rows; ++i) {
        // w = 0 happens exactly for zero rows; pow(0, expo) with the negative
        // exponents of p < 2 would turn them into inf * 0 = NaN rows.
        double f = w[i] > 0.0 ? std::pow(w[i], expo) : 0.0;
        double* row = out.row_ptr(i);
        for (std::size_t j = 0; j < a.cols; ++j) row[j] *= f;
    }
    out.refresh_magnitude();
    out.grid.reset();
    return out;
}

}  // namespace

std::vector<double> lewis_iterate(const DenseMatrix& a, double p, int iters,
                                  const LeverageOracle& oracle) {
    check_p(p);
    if (a.rows < 1 || a.cols < 1) throw BadParam("lewis: empty matrix");
    if (iters < 0) throw BadParam("lewis: negative iteration count");
    double expo = 0.5 - 1.0 / p;
    std::vector<double> w(a.rows, 1.0);
    for (int it = 0; it < iters; ++it) {
        std::vector<double> tau = oracle(reweighted(a, w, expo));
        if (tau.size() != a.rows) throw DimensionMismatch("lewis: oracle size mismatch");
        for (std::size_t i = 0; i < a.rows; ++i) {
            double base = std::pow(std::max(w[i], 0.0), 2.0 / p - 1.0) * std::max(tau[i], 0.0);
            w[i] = std::pow(base, p / 2.0);
        }
    }
    return w;
}

int default_lewis_iters(std::size_t rows) {
    double n = (double)std::max<std::size_t>(rows, 4);
    return (int)std::ceil(std::log2(std::log2(n))) + 2;
}

std::vector<double> lewis_weights(const DenseMatrix& a, double p) {
    return lewis_iterate(a, p, default_lewis_iters(a.rows));
}

double lewis_certificate(const DenseMatrix& a, const std::vector<double>& w, double p) {
    check_p(p);
    if (w.size() != a.rows) throw DimensionMismatch("lewis: weight size mismatch");
    std::vector<double> tau = leverage_scores(reweighted(a, w, 0.5 - 1.0 / p)).entries;
    double worst = 1.0;
    for (std::size_t i = 0; i < a.rows; ++i) {
        double wi = w[i], ti = tau[i];
        if (wi < 1e-300 && ti < 1e-300) continue;
        if (wi < 1e-300 || ti < 1e-300) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, std::max(wi / ti, ti / wi));
    }
    return worst;
}

SampleDraw rescaled_sampling(const std::vector<double>& q, double p, std::uint64_t seed) {
    if (!(p > 0.0)) throw BadParam("rescaled_sampling: p must be positive");
    SampleDraw draw;
    for (std::size_t i = 0; i < q.size(); ++i) {
        double qi = q[i];
        if (qi < 0.0 || qi > 1.0) throw BadParam("rescaled_sampling: probability out of range");
        if (qi <= 0.0) continue;
        Rng rng(mix_seed(seed, (std::uint64_t)i));
        if (qi >= 1.0 || rng.uniform01() < qi) {
            draw.indices.push_back((int)i);
            draw.scales.push_back(std::pow(qi, -1.0 / p));
        }
    }
    return draw;
}

SampledRegression lewis_sample_for_regression(const DenseMatrix& a, const DenseVector& b,
                                              double p, double eps, double delta,
                                              std::uint64_t seed) {
    check_p(p);
    if (a.rows != b.size()) throw DimensionMismatch("lewis sample: row mismatch");
    if (!(eps > 0.0) || !(eps < 1.0)) throw BadParam("lewis sample: eps must lie in (0, 1)");
    if (!(delta > 0.0) || !(delta < 1.0))
        throw BadParam("lewis sample: delta must lie in (0, 1)");

    DenseMatrix stacked(a.rows, a.cols + 1);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* src = a.row_ptr(i);
        double* dst = stacked.row_ptr(i);
        std::copy(src, src + a.cols, dst);
        dst[a.cols] = b[i];
    }
    stacked.refresh_magnitude();

    std::vector<double> w = lewis_weights(stacked, p);
    double dd = (double)stacked.cols;
    double lg = std::log(dd + 2.0);
    double beta = 4.0 * lg * lg * std::log((double)std::max<std::size_t>(a.rows, 2)) *
                  std::log(1.0 / delta) / eps;
    std::vector<double> q(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) q[i] = std::min(1.0, beta * w[i]);

    SampledRegression out;
    out.beta = beta;
    out.draw = rescaled_sampling(q, p, seed);
    std::size_t kept = out.draw.indices.size();
    out.sa = DenseMatrix(kept, a.cols);
    out.sb.entries.assign(kept, 0.0);
    for (std::size_t k = 0; k < kept; ++k) {
        int i = out.draw.indices[k];
        double f = out.draw.scales[k];
        const double* src = a.row_ptr(i);
        double* dst = out.sa.row_ptr(k);
        for (std::size_t j = 0; j < a.cols; ++j) dst[j] = f * src[j];
        out.sb.entries[k] = f * b[i];
    }
    out.sa.refresh_magnitude();
    double mg = 0.0;
    for (double v : out.sb.entries) mg = std::max(mg, std::abs(v));
    out.sb.magnitude_bound = mg;
    return out;
}

}  // namespace coordreg
