#pragma once

#include <cstdint>
#include <vector>

#include "coordreg/netsim.hpp"

namespace coordreg {

// Distributed lp regression for 1 < p < 2: a shared p-stable sketch T maps
// the problem into lr (1 < r < p), a distributed Lewis-weight iteration
// estimates row weights through OSNAP + Gaussian sketches, shared-seed row
// sampling compresses the system, and the coordinator finishes with IRLS.
struct LpConfig {
    double p = 1.5;
    double r = 0.0;  // 0 = (1 + p) / 2
    double eps = 0.25;
    int m_t = 0;  // p-stable rows; 0 = ceil(20 d ln(d + 2) / eps^mt_eps_exponent)
    double mt_eps_exponent = 3.0;
    int m_s = 0;    // OSNAP rows; 0 = ceil(20 (d + 1) ln(d + 2))
    int s_col = 0;  // OSNAP column sparsity; 0 = ceil(4 ln(d + 2))
    int gaussian_cols = 0;  // 0 = ceil(8 ln(d max(2, 1 / eps)))
    int lewis_iters = 0;    // 0 = ceil(log2 log2 m_t) + 2
    double beta_sample = 4.0;  // q_i = min(1, beta w_i ln^3((d + 2) / eps) / eps)
    double grid_c = 3.0;
    double solver_tol = 0.0;  // 0 = eps / 10
    std::uint64_t sketch_seed = 1;
    int workers = 1;
    bool identity_embed = false;    // T becomes the identity; final solve stays in lp
    bool force_keep_all = false;    // q_i = 1
    bool check_contraction = true;  // probe guard before sampling
    bool instrument = false;        // keep the aggregate sketched system and weights
};

struct LpResult {
    DenseVector x;
    double objective = 0.0;  // lp residual norm on the true aggregate
    double oracle_objective = 0.0;
    double ratio_vs_oracle = 0.0;
    long long sampled_rows = 0;
    double expected_rows = 0.0;
    Transcript transcript;
    DenseMatrix b_sketched;       // instrument only: aggregate [T A, T b]
    std::vector<double> lewis_w;  // instrument only: final broadcast weights
};

LpResult run_lp(const ShardSet& shards, const LpConfig& cfg);

// Shared-seed row subsample applied identically to every shard (zero
// communication); kept rows rescale by gamma^{-1/p}. verify recomputes the
// aggregate's [A b] leverage scores and rejects incoherent-instance misuse.
ShardSet uniform_presample(const ShardSet& shards, double p, double eps, double gamma,
                           std::uint64_t seed, bool verify = false);

}  // namespace coordreg
