#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "coordreg/errors.hpp"

namespace coordreg {

// ============================================================================
// Dense storage
// ============================================================================

// Row-major dense matrix. magnitude_bound is a tracked bound on |entry|;
// grid, when set, records that every entry is an integer multiple of 1/grid.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> entries;
    double magnitude_bound = 0.0;
    std::optional<double> grid;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c)
        : rows(r), cols(c), entries(r * c, 0.0) {}

    static DenseMatrix identity(std::size_t n);

    double& operator()(std::size_t i, std::size_t j) { return entries[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return entries[i * cols + j]; }

    double* row_ptr(std::size_t i) { return entries.data() + i * cols; }
    const double* row_ptr(std::size_t i) const { return entries.data() + i * cols; }

    void refresh_magnitude();
};

struct DenseVector {
    std::vector<double> entries;
    double magnitude_bound = 0.0;
    std::optional<double> grid;

    DenseVector() = default;
    explicit DenseVector(std::size_t n) : entries(n, 0.0) {}

    std::size_t size() const { return entries.size(); }
    double& operator[](std::size_t i) { return entries[i]; }
    double operator[](std::size_t i) const { return entries[i]; }

    void refresh_magnitude();
};

// q has orthonormal columns; r_inv_like is the square preconditioner with
// input == q * inverse(r_inv_like).
struct QrFactors {
    DenseMatrix q;
    DenseMatrix r_inv_like;
};

// ============================================================================
// Basic products
// ============================================================================

DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b);
DenseVector multiply(const DenseMatrix& a, const DenseVector& x);
DenseMatrix transpose(const DenseMatrix& a);
DenseVector transpose_multiply(const DenseMatrix& a, const DenseVector& y);  // a^T y
double dot(const DenseVector& a, const DenseVector& b);
double l2_norm(const DenseVector& v);
double max_abs(const DenseVector& v);
double max_abs(const DenseMatrix& m);

// ============================================================================
// Factorizations and solvers
// ============================================================================

// Householder QR of an rows >= cols matrix. Throws RankDeficient when the
// triangular diagonal collapses below 1e-12 of its largest entry.
QrFactors qr_decompose(const DenseMatrix& m);

// tau_i = a_i (A^T A)^+ a_i^T, computed from an orthonormal basis of the
// column space (pivoted QR); sums to rank(A) and handles rank deficiency.
DenseVector leverage_scores(const DenseMatrix& a);

// Exact least-squares minimizer of ||a x - b||_2 for full column rank a.
DenseVector solve_l2_exact(const DenseMatrix& a, const DenseVector& b);

struct IrlsOptions {
    int max_iters = 500;
    // residual floor used in the reweighting, relative to ||b||_2
    double theta_rel = 1e-10;
};

// IRLS minimizer of ||a x - b||_p for 1 < p <= 2. Terminates when the
// objective is within (1 + tol) of a dual lower bound; throws NoConvergence
// when the max_iters budget is exhausted first.
DenseVector solve_lp_irls(const DenseMatrix& a, const DenseVector& b, double p,
                          double tol, const IrlsOptions& opt = {});

double lp_norm(const DenseVector& v, double p);
double lp_norm_pow(const DenseVector& v, double p);  // sum |v_i|^p

// ============================================================================
// Grid rounding
// ============================================================================

// Nearest multiple of 1/grid_p, ties to the even multiple.
double round_scalar_to_grid(double x, double grid_p);

DenseVector round_to_grid(const DenseVector& v, double grid_p);

// Square inputs that lose invertibility to rounding get +1/grid_p added to the
// offending diagonal entries (smallest restoring diagonal perturbation).
DenseMatrix round_to_grid(const DenseMatrix& m, double grid_p);

// Condition-number estimate of m via power iterations on m^T m (and its
// spectral complement); `iters` matrix-free passes each.
double estimate_condition(const DenseMatrix& m, int iters);

}  // namespace coordreg
