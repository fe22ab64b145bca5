#include "coordreg/protocol_l2.hpp"

#include <algorithm>
#include <cmath>

#include "coordreg/errors.hpp"
#include "coordreg/rng.hpp"
#include "coordreg/sketch.hpp"

namespace coordreg {

namespace {

std::vector<double> matvec(const DenseMatrix& m, const std::vector<double>& v) {
    if (v.size() != m.cols) throw DimensionMismatch("matvec: size mismatch");
    std::vector<double> out(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* row = m.row_ptr(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) acc += row[j] * v[j];
        out[i] = acc;
    }
    return out;
}

std::vector<double> mat_t_vec(const DenseMatrix& m, const std::vector<double>& v) {
    if (v.size() != m.rows) throw DimensionMismatch("mat_t_vec: size mismatch");
    std::vector<double> out(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* row = m.row_ptr(i);
        double f = v[i];
        for (std::size_t j = 0; j < m.cols; ++j) out[j] += f * row[j];
    }
    return out;
}

DenseMatrix unflatten(const std::vector<double>& flat, int rows, int cols) {
    if ((int)flat.size() != rows * cols) throw DimensionMismatch("unflatten: size mismatch");
    DenseMatrix m(rows, cols);
    m.entries = flat;
    m.refresh_magnitude();
    return m;
}

struct L2Party {
    // server side
    DenseMatrix a_hat;
    std::vector<double> b_hat;
    DenseMatrix r_tilde;
    std::vector<double> x;
    // coordinator side
    std::vector<double> x_c;
    std::vector<double> answer_q;
    std::vector<double> curve;
    double cond = 0.0;
};

}  // namespace

L2Result run_l2(const ShardSet& shards, const L2Config& cfg) {
    int s = shards.num_servers();
    if (s < 1) throw BadParam("run_l2: empty shard set");
    if ((int)shards.b.size() != s) throw DimensionMismatch("run_l2: shard a/b count mismatch");
    int n = (int)shards.a[0].rows, d = (int)shards.a[0].cols;
    if (n < 1 || d < 1) throw BadParam("run_l2: empty instance");
    for (int i = 0; i < s; ++i)
        if ((int)shards.a[i].rows != n || (int)shards.a[i].cols != d ||
            (int)shards.b[i].size() != n)
            throw DimensionMismatch("run_l2: ragged shard set");
    if (!(cfg.eps > 0.0) || !(cfg.eps < 1.0)) throw BadParam("run_l2: eps must lie in (0, 1)");

    double lg = std::log((double)d + 2.0);
    int m1 = cfg.m1 > 0 ? cfg.m1 : (int)std::ceil(4.0 * d * d / cfg.eps);
    int m2 = cfg.m2 > 0 ? cfg.m2 : (int)std::ceil(20.0 * d * lg / cfg.eps);
    int m3 = cfg.m3 > 0 ? cfg.m3 : (int)std::ceil(20.0 * d * lg);
    if (cfg.identity_sketches) m1 = m2 = m3 = n;
    if (m1 < d || m2 < d || m3 < d) throw BadParam("run_l2: sketch rows below column count");
    int sc2 = cfg.s_col2 > 0 ? cfg.s_col2 : (int)std::ceil(2.0 * lg / cfg.eps);
    int sc3 = cfg.s_col3 > 0 ? cfg.s_col3 : (int)std::ceil(4.0 * lg);
    sc2 = std::min(sc2, m2);
    sc3 = std::min(sc3, m3);
    int T = cfg.gd_iters > 0 ? cfg.gd_iters : (int)std::ceil(4.0 * std::log(1.0 / cfg.eps));
    T = std::max(T, 1);
    double grid = std::pow((double)n * (double)d, cfg.grid_c);
    double qr_grid = cfg.use_unrounded_r ? std::pow(2.0, 52) : grid;

    std::uint64_t seed1 = mix_seed(cfg.sketch_seed, 0x11aaull);
    std::uint64_t seed2 = mix_seed(cfg.sketch_seed, 0x22bbull);
    std::uint64_t seed3 = mix_seed(cfg.sketch_seed, 0x33ccull);

    std::vector<L2Party> states(s + 1);

    auto step = [&](int round, int self, const Mailbox& inbox,
                    L2Party& st) -> std::vector<Letter> {
        std::vector<Letter> out;
        if (round == 0) {
            if (self == kCoordinator) return out;
            const DenseMatrix& a = shards.a[self - 1];
            const DenseVector& b = shards.b[self - 1];
            DenseMatrix pi3;
            if (cfg.identity_sketches) {
                st.a_hat = a;
                st.b_hat = b.entries;
                pi3 = a;
            } else {
                SketchSpec cs;
                cs.family = SketchFamily::count_sketch;
                cs.out_rows = m1;
                cs.in_rows = n;
                cs.seed = seed1;
                DenseMatrix t1 = count_sketch_apply(cs, a);
                DenseVector tb1 = count_sketch_apply(cs, b);
                SketchSpec o2;
                o2.family = SketchFamily::osnap;
                o2.out_rows = m2;
                o2.in_rows = m1;
                o2.seed = seed2;
                o2.s_col = sc2;
                st.a_hat = osnap_apply(o2, t1);
                st.b_hat = osnap_apply(o2, tb1).entries;
                SketchSpec o3;
                o3.family = SketchFamily::osnap;
                o3.out_rows = m3;
                o3.in_rows = m2;
                o3.seed = seed3;
                o3.s_col = sc3;
                pi3 = osnap_apply(o3, st.a_hat);
            }
            out.push_back({kCoordinator, quantize_payload(pi3.entries, grid), "sketch"});
            return out;
        }
        if (round == 1) {
            if (self != kCoordinator) return out;
            DenseMatrix c_sum(m3, d);
            for (int sv = 1; sv <= s; ++sv) {
                const Payload& p = inbox.one_from(sv);
                if ((int)p.entries.size() != m3 * d)
                    throw DimensionMismatch("run_l2: bad sketch payload");
                for (std::size_t k = 0; k < p.entries.size(); ++k)
                    c_sum.entries[k] += p.entries[k];
            }
            c_sum.refresh_magnitude();
            QrFactors f = qr_decompose(c_sum);
            DenseMatrix rt = f.r_inv_like;
            if (!cfg.use_unrounded_r) rt = round_to_grid(rt, grid);
            st.cond = estimate_condition(multiply(c_sum, rt), 20);
            if (st.cond > 10.0)
                throw SketchFailure("run_l2: grid rounding destroyed the preconditioner");
            st.r_tilde = rt;
            st.x_c.assign(d, 0.0);
            out.push_back({kBroadcast, quantize_payload(rt.entries, qr_grid), "qr"});
            return out;
        }

        int k = (round - 2) / 4;
        int slot = (round - 2) % 4;
        if (slot == 0 && self != kCoordinator) {
            if (k == 0) {
                st.r_tilde = unflatten(inbox.one_from(kCoordinator).entries, d, d);
                st.x.assign(d, 0.0);
            } else {
                st.x = inbox.one_from(kCoordinator).entries;
            }
            std::vector<double> z = matvec(st.a_hat, matvec(st.r_tilde, st.x));
            for (int i = 0; i < m2; ++i) z[i] -= st.b_hat[i];
            out.push_back({kCoordinator, quantize_payload(z, grid), "iter"});
        } else if (slot == 1 && self == kCoordinator) {
            std::vector<double> y(m2, 0.0);
            for (int sv = 1; sv <= s; ++sv) {
                const Payload& p = inbox.one_from(sv);
                if ((int)p.entries.size() != m2)
                    throw DimensionMismatch("run_l2: bad residual payload");
                for (int i = 0; i < m2; ++i) y[i] += p.entries[i];
            }
            if (cfg.instrument) {
                double acc = 0.0;
                for (double v : y) acc += v * v;
                st.curve.push_back(std::sqrt(acc));
            }
            out.push_back({kBroadcast, quantize_payload(y, grid), "iter"});
        } else if (slot == 2 && self != kCoordinator) {
            std::vector<double> u = mat_t_vec(st.a_hat, inbox.one_from(kCoordinator).entries);
            out.push_back({kCoordinator, quantize_payload(u, grid), "iter"});
        } else if (slot == 3 && self == kCoordinator) {
            std::vector<double> u(d, 0.0);
            for (int sv = 1; sv <= s; ++sv) {
                const Payload& p = inbox.one_from(sv);
                if ((int)p.entries.size() != d)
                    throw DimensionMismatch("run_l2: bad gradient payload");
                for (int j = 0; j < d; ++j) u[j] += p.entries[j];
            }
            std::vector<double> g = mat_t_vec(st.r_tilde, u);
            for (int j = 0; j < d; ++j) st.x_c[j] -= g[j];
            if (k + 1 < T) {
                Payload p = quantize_payload(st.x_c, grid);
                st.x_c = p.entries;
                out.push_back({kBroadcast, std::move(p), "iter"});
            } else {
                Payload p = quantize_payload(matvec(st.r_tilde, st.x_c), grid);
                st.answer_q = p.entries;
                out.push_back({kBroadcast, std::move(p), "answer"});
            }
        }
        return out;
    };

    RunOptions opt;
    opt.workers = cfg.workers;
    Transcript t = run_rounds<L2Party>(s, 2 + 4 * T, states, step, opt);

    DenseMatrix a_hat_sum(m2, d);
    for (int sv = 1; sv <= s; ++sv)
        for (std::size_t k = 0; k < a_hat_sum.entries.size(); ++k)
            a_hat_sum.entries[k] += states[sv].a_hat.entries[k];
    double cond = estimate_condition(multiply(a_hat_sum, states[0].r_tilde), 20);
    if (cond > 10.0)
        throw SketchFailure("run_l2: preconditioned condition estimate above 10");

    L2Result res;
    res.transcript = std::move(t);
    res.condition_estimate = cond;
    res.gd_curve = std::move(states[0].curve);
    res.x.entries = states[0].answer_q;
    res.x.grid = grid;
    double mg = 0.0;
    for (double v : res.x.entries) mg = std::max(mg, std::abs(v));
    res.x.magnitude_bound = mg;

    DenseMatrix a = aggregate_a(shards);
    DenseVector b = aggregate_b(shards);
    std::vector<double> resid = matvec(a, res.x.entries);
    for (int i = 0; i < n; ++i) resid[i] -= b[i];
    double obj = 0.0;
    for (double v : resid) obj += v * v;
    res.objective = std::sqrt(obj);

    DenseVector xo = solve_l2_exact(a, b);
    std::vector<double> ro = matvec(a, xo.entries);
    double oo = 0.0;
    for (int i = 0; i < n; ++i) {
        double v = ro[i] - b[i];
        oo += v * v;
    }
    res.oracle_objective = std::sqrt(oo);

    double bn = 0.0;
    for (int i = 0; i < n; ++i) bn += b[i] * b[i];
    bn = std::sqrt(bn);
    if (res.objective <= 1e-6 * bn) {
        res.ratio_vs_oracle = 1.0;
    } else {
        double floor = 1e-4 * bn;
        res.ratio_vs_oracle = (res.objective + floor) / (res.oracle_objective + floor);
    }
    return res;
}

const std::vector<double>& gd_residual_curve(const L2Result& result) {
    if (result.gd_curve.empty())
        throw BadParam("gd_residual_curve: run was not instrumented");
    return result.gd_curve;
}

}  // namespace coordreg
