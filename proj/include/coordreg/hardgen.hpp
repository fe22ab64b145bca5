#pragma once

#include <cstdint>
#include <vector>

#include "coordreg/netsim.hpp"

namespace coordreg {

enum class GapSign { positive, negative };

// Sign-vector pair (a, b) conditioned on the correlation Delta = sum a_i b_i
// landing in [c1 sqrt(n), c2 sqrt(n)] (or its mirror), together with the
// per-player additive share decomposition: each coordinate of a splits into
// t + 1 copies of a_i and t copies of -a_i across 2t + 1 players, and b
// likewise across its own 2t + 1 players.
struct GapInstance {
    int n = 0;
    int t = 0;
    std::vector<double> a;  // entries in {-1, 1}
    std::vector<double> b;
    std::vector<std::vector<double>> a_shards;  // 2t + 1 sign vectors
    std::vector<std::vector<double>> b_shards;
    long long delta = 0;
    double c1 = 2.0;
    double c2 = 6.0;
    std::uint64_t seed = 0;
};

GapInstance gen_gap(int n, int t, GapSign target, double c1, double c2, std::uint64_t seed);

// r_match |1 - x|^p + (n - r_match) |1 + x|^p with r_match = #{i : a_i = b_i}
double scalar_objective(long long r_match, long long n, double x, double p);

// Exact minimizer of ||a x - b||_p over scalars. p = 2 closed form, p = 1
// breakpoint, p in (1, 2) golden section on [-1, 1], p in (0, 1) grid plus
// refinement (experimental).
double solve_scalar_lp(const std::vector<double>& a, const std::vector<double>& b, double p);

struct DistinguishResult {
    GapSign answer = GapSign::negative;
    bool tie = false;  // x was exactly zero; answer defaults to negative
};

DistinguishResult distinguish(double x_approx);

struct PaddedInstance {
    int d = 0;
    std::vector<GapInstance> blocks;
    DenseMatrix a;  // block diagonal, (d * n) x d
    DenseVector b;
};

// pre: all blocks share n
PaddedInstance pad(const std::vector<GapInstance>& blocks);

// Round-robin regrouping of all 2(2t + 1) player shares (per block) into s
// servers; share sums reconstruct the padded (A, b) exactly.
ShardSet padded_to_shards(const PaddedInstance& inst, int s);

}  // namespace coordreg
