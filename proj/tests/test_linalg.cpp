#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <vector>

#include "coordreg/io.hpp"
#include "coordreg/linalg.hpp"
#include "coordreg/rng.hpp"
#include "doctest.h"

using namespace coordreg;

namespace {

DenseMatrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed,
                          double scale = 1.0) {
    Rng rng(seed);
    DenseMatrix m(n, d);
    for (double& e : m.entries) e = scale * rng.normal();
    m.refresh_magnitude();
    return m;
}

DenseVector random_vector(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    DenseVector v(n);
    for (double& e : v.entries) e = scale * rng.normal();
    v.refresh_magnitude();
    return v;
}

// Cyclic Jacobi eigensolver for small symmetric matrices; the independent
// route to (A^T A)^+ used to cross-check the QR-based leverage scores.
void jacobi_eigh(std::vector<std::vector<double>> s, std::vector<double>& evals,
                 std::vector<std::vector<double>>& evecs) {
    std::size_t d = s.size();
    evecs.assign(d, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < d; ++i) evecs[i][i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i + 1; j < d; ++j) off += s[i][j] * s[i][j];
        if (off < 1e-26) break;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                if (std::abs(s[p][q]) < 1e-300) continue;
                double theta = (s[q][q] - s[p][p]) / (2.0 * s[p][q]);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double sn = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    double skp = s[k][p], skq = s[k][q];
                    s[k][p] = c * skp - sn * skq;
                    s[k][q] = sn * skp + c * skq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    double spk = s[p][k], sqk = s[q][k];
                    s[p][k] = c * spk - sn * sqk;
                    s[q][k] = sn * spk + c * sqk;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    double vkp = evecs[k][p], vkq = evecs[k][q];
                    evecs[k][p] = c * vkp - sn * vkq;
                    evecs[k][q] = sn * vkp + c * vkq;
                }
            }
        }
    }
    evals.assign(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) evals[i] = s[i][i];
}

std::vector<double> leverage_oracle(const DenseMatrix& a) {
    std::size_t d = a.cols;
    std::vector<std::vector<double>> gram(d, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < d; ++k) gram[j][k] += a(i, j) * a(i, k);
    std::vector<double> evals;
    std::vector<std::vector<double>> evecs;
    jacobi_eigh(gram, evals, evecs);
    double emax = 0.0;
    for (double e : evals) emax = std::max(emax, e);
    std::vector<std::vector<double>> pinv(d, std::vector<double>(d, 0.0));
    for (std::size_t k = 0; k < d; ++k) {
        if (evals[k] <= 1e-10 * emax) continue;
        double inv = 1.0 / evals[k];
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                pinv[i][j] += inv * evecs[i][k] * evecs[j][k];
    }
    std::vector<double> tau(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < d; ++k) acc += a(i, j) * pinv[j][k] * a(i, k);
        tau[i] = acc;
    }
    return tau;
}

double objective_lp(const DenseMatrix& a, const DenseVector& b, const DenseVector& x,
                    double p) {
    DenseVector r = multiply(a, x);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
    return lp_norm(r, p);
}

}  // namespace

TEST_CASE("products and norms on hand values") {
    DenseMatrix a(2, 3);
    a.entries = {1, 2, 3, 4, 5, 6};
    DenseMatrix b(3, 2);
    b.entries = {7, 8, 9, 10, 11, 12};
    DenseMatrix c = multiply(a, b);
    CHECK(c.rows == 2);
    CHECK(c.cols == 2);
    CHECK(c(0, 0) == doctest::Approx(58.0));
    CHECK(c(0, 1) == doctest::Approx(64.0));
    CHECK(c(1, 0) == doctest::Approx(139.0));
    CHECK(c(1, 1) == doctest::Approx(154.0));

    DenseMatrix at = transpose(a);
    CHECK(at.rows == 3);
    CHECK(at(2, 1) == 6.0);

    DenseVector v(3);
    v.entries = {1, 0, -1};
    DenseVector av = multiply(a, v);
    CHECK(av[0] == doctest::Approx(-2.0));
    CHECK(av[1] == doctest::Approx(-2.0));

    DenseVector y(2);
    y.entries = {1, 1};
    DenseVector aty = transpose_multiply(a, y);
    CHECK(aty[0] == doctest::Approx(5.0));
    CHECK(aty[2] == doctest::Approx(9.0));

    DenseVector w(3);
    w.entries = {3, -4, 0};
    CHECK(l2_norm(w) == doctest::Approx(5.0));
    CHECK(lp_norm(w, 1.0) == doctest::Approx(7.0));
    CHECK(lp_norm_pow(w, 1.5) == doctest::Approx(std::pow(3.0, 1.5) + 8.0));
    CHECK(max_abs(w) == 4.0);

    DenseMatrix bad(2, 2);
    CHECK_THROWS_AS((void)multiply(a, bad), DimensionMismatch);
    CHECK_THROWS_AS((void)multiply(bad, v), DimensionMismatch);
}

TEST_CASE("qr factors reconstruct the input") {
    DenseMatrix a = random_matrix(20, 4, 41);
    QrFactors f = qr_decompose(a);
    CHECK(f.q.rows == 20);
    CHECK(f.q.cols == 4);
    CHECK(f.r_inv_like.rows == 4);

    DenseMatrix qtq = multiply(transpose(f.q), f.q);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(qtq(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));

    DenseMatrix recon = multiply(a, f.r_inv_like);
    for (std::size_t i = 0; i < recon.entries.size(); ++i)
        CHECK(recon.entries[i] == doctest::Approx(f.q.entries[i]).epsilon(1e-9));
}

TEST_CASE("qr of a single column is the normalized column") {
    DenseMatrix a(2, 1);
    a.entries = {3, 4};
    QrFactors f = qr_decompose(a);
    CHECK(std::abs(f.q(0, 0)) == doctest::Approx(0.6));
    CHECK(std::abs(f.q(1, 0)) == doctest::Approx(0.8));
    CHECK(std::abs(1.0 / f.r_inv_like(0, 0)) == doctest::Approx(5.0));
}

TEST_CASE("qr rejects rank-deficient input") {
    DenseMatrix a = random_matrix(10, 3, 42);
    for (std::size_t i = 0; i < a.rows; ++i) a(i, 2) = 2.0 * a(i, 0) - a(i, 1);
    CHECK_THROWS_AS((void)qr_decompose(a), RankDeficient);
}

TEST_CASE("leverage scores match the eigensolver oracle") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        DenseMatrix a = random_matrix(30, 4, seed);
        DenseVector tau = leverage_scores(a);
        std::vector<double> oracle = leverage_oracle(a);
        double sum = 0.0;
        for (std::size_t i = 0; i < tau.size(); ++i) {
            CHECK(tau[i] == doctest::Approx(oracle[i]).epsilon(1e-8));
            CHECK(tau[i] >= -1e-12);
            CHECK(tau[i] <= 1.0 + 1e-12);
            sum += tau[i];
        }
        CHECK(sum == doctest::Approx(4.0).epsilon(1e-9));
    }
}

TEST_CASE("leverage scores sum to the rank when columns collapse") {
    DenseMatrix a = random_matrix(25, 4, 7);
    for (std::size_t i = 0; i < a.rows; ++i) a(i, 3) = a(i, 0) + a(i, 1);
    DenseVector tau = leverage_scores(a);
    double sum = 0.0;
    for (std::size_t i = 0; i < tau.size(); ++i) sum += tau[i];
    CHECK(sum == doctest::Approx(3.0).epsilon(1e-8));
}

TEST_CASE("exact least squares zeroes the normal equations") {
    DenseMatrix a = random_matrix(40, 5, 11);
    DenseVector b = random_vector(40, 12);
    DenseVector x = solve_l2_exact(a, b);
    DenseVector r = multiply(a, x);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
    DenseVector atr = transpose_multiply(a, r);
    for (std::size_t j = 0; j < atr.size(); ++j)
        CHECK(std::abs(atr[j]) < 1e-8 * l2_norm(b));
}

TEST_CASE("irls at p = 2 agrees with the exact solver") {
    DenseMatrix a = random_matrix(30, 4, 21);
    DenseVector b = random_vector(30, 22);
    DenseVector x2 = solve_l2_exact(a, b);
    DenseVector xi = solve_lp_irls(a, b, 2.0, 1e-10);
    CHECK(objective_lp(a, b, xi, 2.0) ==
          doctest::Approx(objective_lp(a, b, x2, 2.0)).epsilon(1e-9));
}

TEST_CASE("irls finds the symmetric scalar minimizer") {
    DenseMatrix a(2, 1);
    a.entries = {1, 1};
    DenseVector b(2);
    b.entries = {0, 2};
    for (double p : {1.2, 1.5, 1.9}) {
        DenseVector x = solve_lp_irls(a, b, p, 1e-9);
        CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("irls solution survives a random perturbation probe") {
    DenseMatrix a = random_matrix(30, 4, 31);
    DenseVector b = random_vector(30, 32);
    double p = 1.4;
    DenseVector x = solve_lp_irls(a, b, p, 1e-9);
    double fx = objective_lp(a, b, x, p);
    double scale = std::max(1.0, l2_norm(x));
    Rng rng(33);
    for (int probe = 0; probe < 1000; ++probe) {
        DenseVector y = x;
        for (std::size_t j = 0; j < y.size(); ++j) y[j] += 1e-4 * scale * rng.normal();
        CHECK(objective_lp(a, b, y, p) >= fx * (1.0 - 1e-9));
    }
}

TEST_CASE("irls throws when its budget is too small") {
    DenseMatrix a = random_matrix(20, 3, 51);
    DenseVector b = random_vector(20, 52);
    IrlsOptions opt;
    opt.max_iters = 1;
    CHECK_THROWS_AS((void)solve_lp_irls(a, b, 1.1, 1e-12, opt), NoConvergence);
}

TEST_CASE("grid rounding: nearest multiple, ties to even") {
    CHECK(round_scalar_to_grid(0.26, 2.0) == doctest::Approx(0.5));
    CHECK(round_scalar_to_grid(0.24, 2.0) == doctest::Approx(0.0));
    CHECK(round_scalar_to_grid(0.25, 2.0) == 0.0);   // tie, k = 0 even
    CHECK(round_scalar_to_grid(0.75, 2.0) == 1.0);   // tie, k = 2 even
    CHECK(round_scalar_to_grid(-0.25, 2.0) == 0.0);
    CHECK(round_scalar_to_grid(-0.26, 2.0) == doctest::Approx(-0.5));
    CHECK_THROWS_AS((void)round_scalar_to_grid(1.0, 0.0), BadParam);
}

TEST_CASE("grid rounding is idempotent") {
    Rng rng(61);
    for (double grid : {2.0, 977.0, 5832000.0}) {
        for (int k = 0; k < 2000; ++k) {
            double v = 2000.0 * (rng.uniform01() - 0.5);
            double once = round_scalar_to_grid(v, grid);
            CHECK(round_scalar_to_grid(once, grid) == once);
        }
    }
}

TEST_CASE("square grid rounding restores a collapsed diagonal") {
    DenseMatrix m(2, 2);
    m.entries = {1e-9, 0.0, 0.0, 1.0};
    DenseMatrix r = round_to_grid(m, 2.0);
    CHECK(r(0, 0) == doctest::Approx(0.5));
    CHECK(r(1, 1) == doctest::Approx(1.0));

    DenseVector v(3);
    v.entries = {0.26, -0.26, 0.9};
    DenseVector rv = round_to_grid(v, 2.0);
    CHECK(rv[0] == doctest::Approx(0.5));
    CHECK(rv[1] == doctest::Approx(-0.5));
    CHECK(rv[2] == doctest::Approx(1.0));
}

TEST_CASE("condition estimate tracks a known spectrum") {
    DenseMatrix m(4, 4);
    for (std::size_t i = 0; i < 4; ++i) m(i, i) = (i == 0) ? 10.0 : 1.0;
    double est = estimate_condition(m, 40);
    CHECK(est == doctest::Approx(10.0).epsilon(0.2));
    CHECK(estimate_condition(DenseMatrix::identity(5), 20) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("matrix and vector files round-trip through disk") {
    DenseMatrix a(3, 2);
    a.entries = {1, -2, 3, 0, 5, -6};
    a.refresh_magnitude();
    write_matrix("/tmp/coordreg_io_a.mtx", a, 1.0);
    DenseMatrix back = read_matrix("/tmp/coordreg_io_a.mtx");
    CHECK(back.rows == 3);
    CHECK(back.cols == 2);
    CHECK(back.entries == a.entries);
    CHECK(back.grid.has_value());
    CHECK(*back.grid == 1.0);

    DenseVector v(4);
    v.entries = {0.5, -1.5, 2.0, 0.0};
    v.refresh_magnitude();
    write_vector("/tmp/coordreg_io_v.vec", v, 2.0);
    DenseVector vb = read_vector("/tmp/coordreg_io_v.vec");
    CHECK(vb.entries == v.entries);

    CHECK_THROWS_AS((void)read_matrix("/tmp/coordreg_definitely_missing.mtx"), IoError);
}
