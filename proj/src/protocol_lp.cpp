#include "coordreg/protocol_lp.hpp"

#include <algorithm>
#include <cmath>

#include "coordreg/errors.hpp"
#include "coordreg/lewis.hpp"
#include "coordreg/rng.hpp"
#include "coordreg/sketch.hpp"

namespace coordreg {

namespace {

DenseMatrix unflatten(const std::vector<double>& flat, std::size_t rows, std::size_t cols) {
    if (flat.size() != rows * cols) throw DimensionMismatch("unflatten: size mismatch");
    DenseMatrix m(rows, cols);
    m.entries = flat;
    m.refresh_magnitude();
    return m;
}

DenseMatrix hstack(const DenseMatrix& left, const DenseMatrix& right) {
    if (left.rows != right.rows) throw DimensionMismatch("hstack: row mismatch");
    DenseMatrix out(left.rows, left.cols + right.cols);
    for (std::size_t i = 0; i < left.rows; ++i) {
        double* dst = out.row_ptr(i);
        std::copy(left.row_ptr(i), left.row_ptr(i) + left.cols, dst);
        std::copy(right.row_ptr(i), right.row_ptr(i) + right.cols, dst + left.cols);
    }
    out.refresh_magnitude();
    return out;
}

struct LpParty {
    DenseMatrix b_i;        // server's sketched [A^i b^i]
    std::vector<double> w;  // latest broadcast weights, server view
    DenseMatrix r_tilde;
    // coordinator side
    std::vector<double> w_c;
    std::vector<double> answer_q;
};

}  // namespace

LpResult run_lp(const ShardSet& shards, const LpConfig& cfg) {
    int s = shards.num_servers();
    if (s < 1) throw BadParam("run_lp: empty shard set");
    if ((int)shards.b.size() != s) throw DimensionMismatch("run_lp: shard a/b count mismatch");
    std::size_t n = shards.a[0].rows, d = shards.a[0].cols;
    if (n < 1 || d < 1) throw BadParam("run_lp: empty instance");
    for (int i = 0; i < s; ++i)
        if (shards.a[i].rows != n || shards.a[i].cols != d || shards.b[i].size() != n)
            throw DimensionMismatch("run_lp: ragged shard set");

    double p = cfg.p;
    double r = cfg.r > 0.0 ? cfg.r : 0.5 * (1.0 + p);
    if (!(p > 1.0) || !(p < 2.0)) throw BadParam("run_lp: p must lie in (1, 2)");
    if (!(r > 1.0) || !(r < p)) throw BadParam("run_lp: need 1 < r < p");
    if (!(cfg.eps > 0.0) || !(cfg.eps < 1.0)) throw BadParam("run_lp: eps must lie in (0, 1)");
    if (cfg.lewis_iters < 0) throw BadParam("run_lp: negative lewis_iters");

    std::size_t dd = d + 1;
    double lg = std::log((double)d + 2.0);
    std::size_t mt = cfg.m_t > 0 ? (std::size_t)cfg.m_t
                                 : (std::size_t)std::ceil(20.0 * (double)d * lg /
                                                          std::pow(cfg.eps, cfg.mt_eps_exponent));
    if (cfg.identity_embed) mt = n;
    std::size_t ms = cfg.m_s > 0 ? (std::size_t)cfg.m_s
                                 : (std::size_t)std::ceil(20.0 * (double)dd * lg);
    if (mt < dd || ms < dd) throw BadParam("run_lp: sketch rows below column count");
    int sc = cfg.s_col > 0 ? cfg.s_col : (int)std::ceil(4.0 * lg);
    sc = std::min<std::size_t>(sc, ms);
    std::size_t g = cfg.gaussian_cols > 0
                        ? (std::size_t)cfg.gaussian_cols
                        : (std::size_t)std::ceil(
                              8.0 * std::log((double)d * std::max(2.0, 1.0 / cfg.eps)));
    g = std::max<std::size_t>(g, 1);
    int t_iters = cfg.lewis_iters > 0 ? cfg.lewis_iters : default_lewis_iters((int)mt);
    double grid = std::pow((double)n * (double)d, cfg.grid_c);
    double stol = cfg.solver_tol > 0.0 ? cfg.solver_tol : cfg.eps / 10.0;
    double solver_p = cfg.identity_embed ? p : r;
    double alpha = 0.5 - 1.0 / r;

    std::uint64_t seed_t = mix_seed(cfg.sketch_seed, 0x7101ull);
    std::uint64_t seed_s = mix_seed(cfg.sketch_seed, 0x7202ull);
    std::uint64_t seed_g = mix_seed(cfg.sketch_seed, 0x7303ull);
    std::uint64_t seed_sample = mix_seed(cfg.sketch_seed, 0x7404ull);
    std::uint64_t seed_probe = mix_seed(cfg.sketch_seed, 0x7505ull);

    // Shared sketched shards B^i = [T A^i, T b^i]; one generation pass of T
    // covers every shard.
    std::vector<DenseMatrix> b_is(s);
    if (cfg.identity_embed) {
        for (int i = 0; i < s; ++i) {
            DenseMatrix bm(n, 1);
            bm.entries = shards.b[i].entries;
            bm.refresh_magnitude();
            b_is[i] = hstack(shards.a[i], bm);
        }
    } else {
        std::vector<DenseMatrix> bmats(s);
        std::vector<const DenseMatrix*> ins;
        ins.reserve(2 * s);
        for (int i = 0; i < s; ++i) {
            bmats[i] = DenseMatrix(n, 1);
            bmats[i].entries = shards.b[i].entries;
            bmats[i].refresh_magnitude();
            ins.push_back(&shards.a[i]);
            ins.push_back(&bmats[i]);
        }
        SketchSpec ts;
        ts.family = SketchFamily::p_stable;
        ts.out_rows = mt;
        ts.in_rows = n;
        ts.seed = seed_t;
        ts.p = p;
        ts.r = r;
        ts.grid_p = grid;
        std::vector<DenseMatrix> outs = p_stable_sketch_apply_many(ts, ins, cfg.workers);
        for (int i = 0; i < s; ++i) b_is[i] = hstack(outs[2 * i], outs[2 * i + 1]);
    }

    SketchSpec gs;
    gs.family = SketchFamily::gaussian;
    gs.out_rows = g;
    gs.in_rows = dd;
    gs.seed = seed_g;
    gs.grid_p = grid;
    DenseMatrix gmat = gaussian_matrix(gs);

    SketchSpec os;
    os.family = SketchFamily::osnap;
    os.out_rows = ms;
    os.in_rows = mt;
    os.seed = seed_s;
    os.s_col = sc;

    DenseMatrix a_aggr = aggregate_a(shards);
    DenseVector b_aggr = aggregate_b(shards);
    DenseMatrix bv(n, 1);
    bv.entries = b_aggr.entries;
    DenseMatrix ab = hstack(a_aggr, bv);

    DenseMatrix b_sk(mt, dd);
    for (int i = 0; i < s; ++i)
        for (std::size_t k = 0; k < b_sk.entries.size(); ++k)
            b_sk.entries[k] += b_is[i].entries[k];
    b_sk.refresh_magnitude();

    if (cfg.check_contraction) {
        for (int probe = 0; probe < 10; ++probe) {
            Rng rng(mix_seed(seed_probe, (std::uint64_t)probe));
            DenseVector v(dd);
            for (std::size_t j = 0; j < dd; ++j) v[j] = rng.normal();
            double ny = lp_norm(multiply(ab, v), p);
            if (ny < 1e-30) continue;
            double nz = lp_norm(multiply(b_sk, v), r);
            double c = nz / ny;
            if (c < 1.0 - 2.0 * cfg.eps || c > 100.0 * (double)d)
                throw SketchFailure("run_lp: probe contraction estimate out of range");
        }
    }

    double qscale = cfg.beta_sample * std::pow(std::log(((double)d + 2.0) / cfg.eps), 3.0) /
                    cfg.eps;
    auto make_q = [&](const std::vector<double>& w) {
        std::vector<double> q(w.size(), 1.0);
        if (!cfg.force_keep_all)
            for (std::size_t i = 0; i < w.size(); ++i)
                q[i] = std::min(1.0, qscale * std::max(w[i], 0.0));
        return q;
    };

    std::vector<LpParty> states(s + 1);
    for (int i = 1; i <= s; ++i) states[i].b_i = std::move(b_is[i - 1]);

    long long sampled_rows = 0;
    double expected_rows = 0.0;

    auto step = [&](int round, int self, const Mailbox& inbox,
                    LpParty& st) -> std::vector<Letter> {
        std::vector<Letter> out;
        if (round < 4 * t_iters) {
            int slot = round % 4;
            if (slot == 0 && self != kCoordinator) {
                if (round == 0)
                    st.w.assign(mt, 1.0);
                else
                    st.w = inbox.one_from(kCoordinator).entries;
                DenseMatrix scaled = st.b_i;
                for (std::size_t i = 0; i < mt; ++i) {
                    double f = st.w[i] > 0.0 ? std::pow(st.w[i], alpha) : 0.0;
                    double* row = scaled.row_ptr(i);
                    for (std::size_t j = 0; j < dd; ++j) row[j] *= f;
                }
                scaled.refresh_magnitude();
                DenseMatrix sk = osnap_apply(os, scaled);
                out.push_back({kCoordinator, quantize_payload(sk.entries, grid),
                               "lewis_sketch"});
            } else if (slot == 1 && self == kCoordinator) {
                if (st.w_c.empty()) st.w_c.assign(mt, 1.0);
                DenseMatrix c_sum(ms, dd);
                for (int sv = 1; sv <= s; ++sv) {
                    const Payload& pl = inbox.one_from(sv);
                    if (pl.entries.size() != ms * dd)
                        throw DimensionMismatch("run_lp: bad lewis_sketch payload");
                    for (std::size_t k = 0; k < pl.entries.size(); ++k)
                        c_sum.entries[k] += pl.entries[k];
                }
                c_sum.refresh_magnitude();
                QrFactors f;
                try {
                    f = qr_decompose(c_sum);
                } catch (const RankDeficient&) {
                    double mu = std::max(1e-7 * max_abs(c_sum), 1e-30);
                    DenseMatrix ridge(ms + dd, dd);
                    std::copy(c_sum.entries.begin(), c_sum.entries.end(),
                              ridge.entries.begin());
                    for (std::size_t j = 0; j < dd; ++j) ridge(ms + j, j) = mu;
                    ridge.refresh_magnitude();
                    f = qr_decompose(ridge);
                }
                DenseMatrix rt = round_to_grid(f.r_inv_like, grid);
                st.r_tilde = rt;
                out.push_back({kBroadcast, quantize_payload(rt.entries, grid), "qr"});
            } else if (slot == 2 && self != kCoordinator) {
                st.r_tilde = unflatten(inbox.one_from(kCoordinator).entries, dd, dd);
                DenseMatrix brg = multiply(multiply(st.b_i, st.r_tilde), gmat);
                out.push_back({kCoordinator, quantize_payload(brg.entries, grid),
                               "lewis_tau"});
            } else if (slot == 3 && self == kCoordinator) {
                DenseMatrix z(mt, g);
                for (int sv = 1; sv <= s; ++sv) {
                    const Payload& pl = inbox.one_from(sv);
                    if (pl.entries.size() != mt * g)
                        throw DimensionMismatch("run_lp: bad lewis_tau payload");
                    for (std::size_t k = 0; k < pl.entries.size(); ++k)
                        z.entries[k] += pl.entries[k];
                }
                std::vector<double> w_new(mt, 0.0);
                for (std::size_t i = 0; i < mt; ++i) {
                    double wc = st.w_c[i];
                    if (wc <= 0.0) continue;
                    const double* row = z.row_ptr(i);
                    double tau = 0.0;
                    for (std::size_t j = 0; j < g; ++j) tau += row[j] * row[j];
                    tau *= std::pow(wc, 2.0 * alpha);
                    w_new[i] = std::pow(std::pow(wc, 2.0 / r - 1.0) * tau, r / 2.0);
                }
                Payload pw = quantize_payload(w_new, grid);
                st.w_c = pw.entries;
                out.push_back({kBroadcast, std::move(pw), "lewis_w"});
            }
            return out;
        }
        if (round == 4 * t_iters) {
            if (self == kCoordinator) return out;
            if (t_iters > 0)
                st.w = inbox.one_from(kCoordinator).entries;
            else
                st.w.assign(mt, 1.0);
            SampleDraw draw = rescaled_sampling(make_q(st.w), r, seed_sample);
            std::vector<double> rows;
            rows.reserve(draw.indices.size() * dd);
            for (int idx : draw.indices) {
                const double* src = st.b_i.row_ptr((std::size_t)idx);
                rows.insert(rows.end(), src, src + dd);
            }
            out.push_back({kCoordinator, quantize_payload(rows, grid), "sample"});
            return out;
        }
        if (self != kCoordinator) return out;
        if (st.w_c.empty()) st.w_c.assign(mt, 1.0);
        std::vector<double> q = make_q(st.w_c);
        SampleDraw draw = rescaled_sampling(q, r, seed_sample);
        std::size_t kept = draw.indices.size();
        double expected = 0.0;
        for (double qi : q) expected += qi;
        sampled_rows = (long long)kept;
        expected_rows = expected;
        if ((double)kept > 10.0 * std::max(expected, 1.0))
            throw SamplerOverflow("run_lp: realized sample exceeds 10x expectation");
        if (kept < dd) throw SketchFailure("run_lp: sample came back too small");

        std::vector<double> acc(kept * dd, 0.0);
        for (int sv = 1; sv <= s; ++sv) {
            const Payload& pl = inbox.one_from(sv);
            if (pl.entries.size() != acc.size())
                throw DimensionMismatch("run_lp: bad sample payload");
            for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += pl.entries[k];
        }
        DenseMatrix sa(kept, d);
        DenseVector sb(kept);
        for (std::size_t k = 0; k < kept; ++k) {
            double f = draw.scales[k];
            const double* src = acc.data() + k * dd;
            double* dst = sa.row_ptr(k);
            for (std::size_t j = 0; j < d; ++j) dst[j] = f * src[j];
            sb[k] = f * src[d];
        }
        sa.refresh_magnitude();
        sb.refresh_magnitude();
        DenseVector zsol = solve_lp_irls(sa, sb, solver_p, stol);
        Payload pa = quantize_payload(zsol.entries, grid);
        st.answer_q = pa.entries;
        out.push_back({kBroadcast, std::move(pa), "answer"});
        return out;
    };

    RunOptions opt;
    opt.workers = cfg.workers;
    Transcript t = run_rounds<LpParty>(s, 4 * t_iters + 2, states, step, opt);

    LpResult res;
    res.transcript = std::move(t);
    res.sampled_rows = sampled_rows;
    res.expected_rows = expected_rows;
    res.x.entries = states[0].answer_q;
    res.x.grid = grid;
    res.x.refresh_magnitude();
    if (cfg.instrument) {
        res.b_sketched = std::move(b_sk);
        res.lewis_w = states[0].w_c;
    }

    DenseVector resid = multiply(a_aggr, res.x);
    for (std::size_t i = 0; i < n; ++i) resid[i] -= b_aggr[i];
    res.objective = lp_norm(resid, p);

    DenseVector xo = solve_lp_irls(a_aggr, b_aggr, p, 1e-8);
    DenseVector ro = multiply(a_aggr, xo);
    for (std::size_t i = 0; i < n; ++i) ro[i] -= b_aggr[i];
    res.oracle_objective = std::min(lp_norm(ro, p), res.objective);

    double bn = lp_norm(b_aggr, p);
    if (res.objective <= 1e-6 * bn) {
        res.ratio_vs_oracle = 1.0;
    } else {
        double floor = 1e-4 * bn;
        res.ratio_vs_oracle = (res.objective + floor) / (res.oracle_objective + floor);
    }
    return res;
}

ShardSet uniform_presample(const ShardSet& shards, double p, double eps, double gamma,
                           std::uint64_t seed, bool verify) {
    int s = shards.num_servers();
    if (s < 1) throw BadParam("uniform_presample: empty shard set");
    if (!(p > 0.0)) throw BadParam("uniform_presample: p must be positive");
    if (!(eps > 0.0) || !(eps < 1.0))
        throw BadParam("uniform_presample: eps must lie in (0, 1)");
    if (!(gamma > 0.0) || gamma > 1.0)
        throw BadParam("uniform_presample: gamma must lie in (0, 1]");
    std::size_t n = shards.a[0].rows, d = shards.a[0].cols;

    if (verify) {
        DenseMatrix a_aggr = aggregate_a(shards);
        DenseVector b_aggr = aggregate_b(shards);
        DenseMatrix bv(n, 1);
        bv.entries = b_aggr.entries;
        DenseVector lev = leverage_scores(hstack(a_aggr, bv));
        double threshold = eps * eps / std::pow((double)d, 4.0 / p);
        for (std::size_t i = 0; i < lev.size(); ++i)
            if (lev[i] > threshold)
                throw LeverageTooLarge("uniform_presample: row leverage above threshold");
    }
    if (gamma == 1.0) return shards;

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(mix_seed(seed, (std::uint64_t)i));
        if (rng.uniform01() < gamma) keep.push_back(i);
    }
    double scale = std::pow(gamma, -1.0 / p);

    ShardSet out;
    out.hidden_sum_bound = shards.hidden_sum_bound * scale;
    for (int sv = 0; sv < s; ++sv) {
        DenseMatrix am(keep.size(), d);
        DenseVector bm(keep.size());
        for (std::size_t k = 0; k < keep.size(); ++k) {
            const double* src = shards.a[sv].row_ptr(keep[k]);
            double* dst = am.row_ptr(k);
            for (std::size_t j = 0; j < d; ++j) dst[j] = scale * src[j];
            bm[k] = scale * shards.b[sv][keep[k]];
        }
        am.refresh_magnitude();
        bm.refresh_magnitude();
        out.a.push_back(std::move(am));
        out.b.push_back(std::move(bm));
    }
    return out;
}

}  // namespace coordreg
