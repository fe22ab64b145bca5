#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "coordreg/linalg.hpp"

namespace coordreg {

// Leverage scores of the reweighted matrix W^{1/2 - 1/p} A; swapping in an
// approximate oracle models sketched estimates.
using LeverageOracle = std::function<std::vector<double>(const DenseMatrix& scaled)>;

LeverageOracle exact_leverage_oracle();

// Fixed-point iteration w <- (w^{2/p - 1} tau(W^{1/2 - 1/p} A))^{p / 2}
// starting from all-ones. Converges doubly exponentially for p < 4.
std::vector<double> lewis_iterate(const DenseMatrix& a, double p, int iters,
                                  const LeverageOracle& oracle = exact_leverage_oracle());

int default_lewis_iters(std::size_t rows);

// lewis_iterate with the default iteration count and the exact oracle.
std::vector<double> lewis_weights(const DenseMatrix& a, double p);

// max_i max(w_i / tau_i, tau_i / w_i) against the exact leverage scores of
// the reweighted matrix; 1 means w is exactly the Lewis weight vector.
double lewis_certificate(const DenseMatrix& a, const std::vector<double>& w, double p);

struct SampleDraw {
    std::vector<int> indices;
    std::vector<double> scales;  // q_i^{-1/p} per kept row
};

// Keeps row i with probability q_i (independent coins, one per row, derived
// from the seed so every holder of the seed draws the same set).
SampleDraw rescaled_sampling(const std::vector<double>& q, double p, std::uint64_t seed);

struct SampledRegression {
    DenseMatrix sa;
    DenseVector sb;
    SampleDraw draw;
    double beta = 0.0;
};

// Offline reference path: Lewis weights of [a b], inclusion probabilities
// q = min(beta w, 1), rescaled row sample of the stacked system.
SampledRegression lewis_sample_for_regression(const DenseMatrix& a, const DenseVector& b,
                                              double p, double eps, double delta,
                                              std::uint64_t seed);

}  // namespace coordreg
