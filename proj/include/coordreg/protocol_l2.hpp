#pragma once

#include <cstdint>
#include <vector>

#include "coordreg/netsim.hpp"

namespace coordreg {

// Distributed least squares: a shared Count-Sketch / OSNAP cascade compresses
// the shares, the coordinator QR-factors the compressed sum into a rounded
// preconditioner, and unit-step gradient descent runs over the star.
struct L2Config {
    double eps = 0.1;
    int m1 = 0;  // Count-Sketch rows; 0 = ceil(4 d^2 / eps)
    int m2 = 0;  // first OSNAP rows; 0 = ceil(20 d ln(d + 2) / eps)
    int m3 = 0;  // second OSNAP rows; 0 = ceil(20 d ln(d + 2))
    int s_col2 = 0;  // OSNAP column sparsity; 0 = ceil(2 ln(d + 2) / eps)
    int s_col3 = 0;  // 0 = ceil(4 ln(d + 2))
    int gd_iters = 0;  // 0 = ceil(4 ln(1 / eps))
    double grid_c = 3.0;  // quantization grid P = (n d)^grid_c
    std::uint64_t sketch_seed = 1;  // shared randomness
    int workers = 1;
    bool identity_sketches = false;  // every sketch becomes the identity
    bool use_unrounded_r = false;    // precondition with R instead of the grid-rounded copy
    bool instrument = false;         // keep the per-iteration residual curve
};

struct L2Result {
    DenseVector x;
    double objective = 0.0;       // l2 residual norm on the true aggregate
    double oracle_objective = 0.0;
    double ratio_vs_oracle = 0.0;
    double condition_estimate = 0.0;
    Transcript transcript;
    std::vector<double> gd_curve;  // instrument only: preconditioned residual per iteration
};

L2Result run_l2(const ShardSet& shards, const L2Config& cfg);

// Per-iteration residual norms from an instrumented run.
const std::vector<double>& gd_residual_curve(const L2Result& result);

}  // namespace coordreg
