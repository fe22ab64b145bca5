#include "coordreg/hardgen.hpp"

#include <algorithm>
#include <cmath>

#include "coordreg/errors.hpp"
#include "coordreg/rng.hpp"

namespace coordreg {

namespace {

void check_signs(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (x != 1.0 && x != -1.0) throw BadParam(std::string(what) + ": entries must be +-1");
}

long long correlation(const std::vector<double>& a, const std::vector<double>& b) {
    long long acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] == b[i]) ? 1 : -1;
    return acc;
}

// t + 1 copies of s and t copies of -s, order shuffled.
void fill_shares(std::vector<std::vector<double>>& shards, int coord, double s, int t,
                 Rng& rng) {
    int players = 2 * t + 1;
    std::vector<double> vals(players, -s);
    for (int j = 0; j <= t; ++j) vals[j] = s;
    for (int j = players - 1; j > 0; --j)
        std::swap(vals[j], vals[rng.below((std::uint64_t)j + 1)]);
    for (int j = 0; j < players; ++j) shards[j][coord] = vals[j];
}

}  // namespace

GapInstance gen_gap(int n, int t, GapSign target, double c1, double c2, std::uint64_t seed) {
    if (n < 1) throw BadParam("gen_gap: n must be positive");
    if (t < 0) throw BadParam("gen_gap: t must be nonnegative");
    if (!(c1 > 0.0) || !(c2 > c1)) throw BadParam("gen_gap: need 0 < c1 < c2");
    if ((double)n < 4.0 * c2 * c2) throw BadParam("gen_gap: n too small for the Delta band");

    double root = std::sqrt((double)n);
    double lo = c1 * root, hi = c2 * root;
    Rng rng(mix_seed(seed, 0x9a9ull));
    const int kBudget = 100000;

    GapInstance inst;
    inst.n = n;
    inst.t = t;
    inst.c1 = c1;
    inst.c2 = c2;
    inst.seed = seed;
    inst.a.resize(n);
    inst.b.resize(n);

    bool found = false;
    for (int attempt = 0; attempt < kBudget && !found; ++attempt) {
        for (int i = 0; i < n; ++i) inst.a[i] = (double)rng.sign();
        for (int i = 0; i < n; ++i) inst.b[i] = (double)rng.sign();
        long long delta = correlation(inst.a, inst.b);
        double want = (target == GapSign::positive) ? (double)delta : -(double)delta;
        if (want >= lo && want <= hi) {
            inst.delta = delta;
            found = true;
        }
    }
    if (!found) throw RejectionBudget("gen_gap: Delta band not hit within budget");

    if (((inst.delta % 2) + 2) % 2 != (n % 2))
        throw BadParam("gen_gap: parity invariant violated");
    double eps = 1.0 / root;
    if (!((double)n >= (1.0 + eps) * ((double)n - c1 * root) - 1e-9))
        throw BadParam("gen_gap: threshold arithmetic invariant violated");

    int players = 2 * t + 1;
    inst.a_shards.assign(players, std::vector<double>(n, 0.0));
    inst.b_shards.assign(players, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) {
        fill_shares(inst.a_shards, i, inst.a[i], t, rng);
        fill_shares(inst.b_shards, i, inst.b[i], t, rng);
    }
    return inst;
}

double scalar_objective(long long r_match, long long n, double x, double p) {
    if (r_match < 0 || r_match > n) throw BadParam("scalar_objective: r_match out of range");
    if (!(p > 0.0) || !(p <= 2.0)) throw BadParam("scalar_objective: p must lie in (0, 2]");
    return (double)r_match * std::pow(std::abs(1.0 - x), p) +
           (double)(n - r_match) * std::pow(std::abs(1.0 + x), p);
}

namespace {

double golden_section(long long r, long long n, double p) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = -1.0, hi = 1.0;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = scalar_objective(r, n, x1, p);
    double f2 = scalar_objective(r, n, x2, p);
    while (hi - lo > 1e-12) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = scalar_objective(r, n, x1, p);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = scalar_objective(r, n, x2, p);
        }
    }
    return 0.5 * (lo + hi);
}

double grid_search(long long r, long long n, double p) {
    double best_x = 0.0, best_f = scalar_objective(r, n, 0.0, p);
    double lo = -1.0, hi = 1.0;
    for (int round = 0; round < 4; ++round) {
        const int kPts = 2001;
        double step = (hi - lo) / (kPts - 1);
        for (int k = 0; k < kPts; ++k) {
            double x = lo + k * step;
            double f = scalar_objective(r, n, x, p);
            if (f < best_f) {
                best_f = f;
                best_x = x;
            }
        }
        lo = std::max(-1.0, best_x - step);
        hi = std::min(1.0, best_x + step);
    }
    return best_x;
}

}  // namespace

double solve_scalar_lp(const std::vector<double>& a, const std::vector<double>& b, double p) {
    if (a.size() != b.size() || a.empty()) throw BadParam("solve_scalar_lp: bad sign vectors");
    if (!(p > 0.0) || !(p <= 2.0)) throw BadParam("solve_scalar_lp: p must lie in (0, 2]");
    check_signs(a, "solve_scalar_lp");
    check_signs(b, "solve_scalar_lp");
    long long n = (long long)a.size();
    long long delta = correlation(a, b);
    long long r = (n + delta) / 2;

    if (p == 2.0) return (double)delta / (double)n;
    if (p == 1.0) {
        if (2 * r > n) return 1.0;
        if (2 * r < n) return -1.0;
        return 0.0;
    }
    if (p > 1.0) return golden_section(r, n, p);
    return grid_search(r, n, p);
}

DistinguishResult distinguish(double x_approx) {
    DistinguishResult res;
    res.tie = (x_approx == 0.0);
    res.answer = (x_approx > 0.0) ? GapSign::positive : GapSign::negative;
    return res;
}

PaddedInstance pad(const std::vector<GapInstance>& blocks) {
    if (blocks.empty()) throw BadParam("pad: no blocks");
    int n = blocks[0].n;
    for (const auto& blk : blocks)
        if (blk.n != n) throw BadParam("pad: blocks must share n");

    PaddedInstance out;
    out.d = (int)blocks.size();
    out.blocks = blocks;
    out.a = DenseMatrix(n * out.d, out.d);
    out.b.entries.assign((std::size_t)n * out.d, 0.0);
    for (int k = 0; k < out.d; ++k) {
        for (int i = 0; i < n; ++i) {
            out.a(k * n + i, k) = blocks[k].a[i];
            out.b.entries[(std::size_t)k * n + i] = blocks[k].b[i];
        }
    }
    out.a.refresh_magnitude();
    out.a.grid = 1.0;
    out.b.magnitude_bound = 1.0;
    out.b.grid = 1.0;
    return out;
}

ShardSet padded_to_shards(const PaddedInstance& inst, int s) {
    if (s < 1) throw BadParam("padded_to_shards: needs at least one server");
    int n = inst.blocks.empty() ? 0 : inst.blocks[0].n;
    if (n == 0) throw BadParam("padded_to_shards: empty instance");

    ShardSet set;
    set.hidden_sum_bound = 1.0;
    for (int sv = 0; sv < s; ++sv) {
        set.a.push_back(DenseMatrix(inst.a.rows, inst.a.cols));
        DenseVector bi;
        bi.entries.assign(inst.b.size(), 0.0);
        set.b.push_back(std::move(bi));
    }

    int g = 0;
    for (int k = 0; k < inst.d; ++k) {
        const GapInstance& blk = inst.blocks[k];
        for (const auto& shard : blk.a_shards) {
            DenseMatrix& dest = set.a[g % s];
            for (int i = 0; i < n; ++i) dest(k * n + i, k) += shard[i];
            ++g;
        }
        for (const auto& shard : blk.b_shards) {
            DenseVector& dest = set.b[g % s];
            for (int i = 0; i < n; ++i) dest.entries[(std::size_t)k * n + i] += shard[i];
            ++g;
        }
    }
    for (int sv = 0; sv < s; ++sv) {
        set.a[sv].refresh_magnitude();
        set.a[sv].grid = 1.0;
        double mg = 0.0;
        for (double v : set.b[sv].entries) mg = std::max(mg, std::abs(v));
        set.b[sv].magnitude_bound = mg;
        set.b[sv].grid = 1.0;
    }
    return set;
}

}  // namespace coordreg
