#include "coordreg/driver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "coordreg/errors.hpp"
#include "coordreg/io.hpp"
#include "coordreg/rng.hpp"

namespace coordreg {

const std::vector<std::string>& RunConfig::known_keys() {
    static const std::vector<std::string> keys = {
        "protocol", "kind", "n", "d", "s", "t", "sign", "c1", "c2", "magnitude", "seed",
        "protocol-seed", "eps", "p", "r", "m1", "m2", "m3", "s-col2", "s-col3", "gd-iters",
        "mt", "mt-eps-exponent", "ms", "s-col", "gaussian-cols", "lewis-iters", "beta",
        "grid-c", "solver-tol", "workers", "retries", "presample", "identity-sketches",
        "unrounded-r", "identity-embed", "keep-all", "no-contraction-check", "instrument",
        "out", "instance", "axis", "values", "seeds"};
    return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
        throw BadParam("config: unknown key '" + key + "'");
    kv[key] = value;
}

bool RunConfig::has(const std::string& key) const { return kv.count(key) > 0; }

std::string RunConfig::get_str(const std::string& key, const std::string& def) const {
    auto it = kv.find(key);
    return it == kv.end() ? def : it->second;
}

long long RunConfig::get_int(const std::string& key, long long def) const {
    auto it = kv.find(key);
    if (it == kv.end()) return def;
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(it->second, &pos);
    } catch (const std::exception&) {
        throw BadParam("config: key '" + key + "' is not an integer");
    }
    if (pos != it->second.size())
        throw BadParam("config: key '" + key + "' is not an integer");
    return v;
}

double RunConfig::get_real(const std::string& key, double def) const {
    auto it = kv.find(key);
    if (it == kv.end()) return def;
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(it->second, &pos);
    } catch (const std::exception&) {
        throw BadParam("config: key '" + key + "' is not a number");
    }
    if (pos != it->second.size()) throw BadParam("config: key '" + key + "' is not a number");
    return v;
}

bool RunConfig::get_flag(const std::string& key, bool def) const {
    auto it = kv.find(key);
    if (it == kv.end()) return def;
    const std::string& v = it->second;
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw BadParam("config: key '" + key + "' is not a flag value");
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::size_t eq = line.find('=');
        std::string trimmed = line;
        trimmed.erase(0, trimmed.find_first_not_of(" \t\r\n"));
        if (trimmed.empty()) continue;
        if (eq == std::string::npos)
            throw BadParam("config: line " + std::to_string(lineno) + " is not key = value");
        auto strip = [](std::string v) {
            v.erase(0, v.find_first_not_of(" \t\r\n"));
            std::size_t last = v.find_last_not_of(" \t\r\n");
            v.erase(last == std::string::npos ? 0 : last + 1);
            return v;
        };
        cfg.set(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    }
    return cfg;
}

// ============================================================================
// Instances
// ============================================================================

namespace {

GapSign parse_sign(const std::string& s) {
    if (s == "positive") return GapSign::positive;
    if (s == "negative") return GapSign::negative;
    throw BadParam("config: sign must be positive or negative");
}

InstanceBundle gen_random(const RunConfig& cfg) {
    long long n = cfg.get_int("n", 0);
    long long d = cfg.get_int("d", 0);
    long long s = cfg.get_int("s", 2);
    long long mag = cfg.get_int("magnitude", 100);
    std::uint64_t seed = (std::uint64_t)cfg.get_int("seed", 1);
    if (n < 1 || d < 1 || n < d) throw BadParam("gen random: need n >= d >= 1");
    if (s < 1) throw BadParam("gen random: need s >= 1");
    if (mag < 1) throw BadParam("gen random: magnitude must be positive");

    InstanceBundle bundle;
    bundle.kind = "random";
    for (int attempt = 0; attempt < 50; ++attempt) {
        Rng rng(mix_seed(seed, 0xa0ull + (std::uint64_t)attempt));
        DenseMatrix a((std::size_t)n, (std::size_t)d);
        for (double& e : a.entries) e = (double)rng.int_in(-mag, mag);
        a.refresh_magnitude();
        a.magnitude_bound = (double)mag;
        a.grid = 1.0;
        DenseVector b((std::size_t)n);
        for (double& e : b.entries) e = (double)rng.int_in(-mag, mag);
        b.refresh_magnitude();
        b.magnitude_bound = (double)mag;
        b.grid = 1.0;
        try {
            qr_decompose(a);
        } catch (const RankDeficient&) {
            continue;
        }
        bundle.a = std::move(a);
        bundle.b = std::move(b);
        break;
    }
    if (bundle.a.rows == 0) throw RejectionBudget("gen random: no full-rank draw found");
    bundle.shards = shard(bundle.a, bundle.b, (int)s, mix_seed(seed, 0xb1ull));
    bundle.meta["kind"] = "random";
    bundle.meta["n"] = std::to_string(n);
    bundle.meta["d"] = std::to_string(d);
    bundle.meta["s"] = std::to_string(s);
    bundle.meta["magnitude"] = std::to_string(mag);
    bundle.meta["seed"] = std::to_string(seed);
    return bundle;
}

InstanceBundle gen_gap_bundle(const RunConfig& cfg) {
    long long n = cfg.get_int("n", 0);
    long long t = cfg.get_int("t", 1);
    long long s = cfg.get_int("s", 2);
    double c1 = cfg.get_real("c1", 2.0);
    double c2 = cfg.get_real("c2", 6.0);
    std::uint64_t seed = (std::uint64_t)cfg.get_int("seed", 1);
    GapSign sign = parse_sign(cfg.get_str("sign", "positive"));
    if (s < 1) throw BadParam("gen gap: need s >= 1");

    GapInstance gap = gen_gap((int)n, (int)t, sign, c1, c2, seed);
    InstanceBundle bundle;
    bundle.kind = "gap";
    PaddedInstance padded = pad({gap});
    bundle.a = padded.a;
    bundle.b = padded.b;
    bundle.shards = padded_to_shards(padded, (int)s);
    bundle.meta["kind"] = "gap";
    bundle.meta["n"] = std::to_string(gap.n);
    bundle.meta["t"] = std::to_string(gap.t);
    bundle.meta["delta"] = std::to_string(gap.delta);
    bundle.meta["c1"] = std::to_string(c1);
    bundle.meta["c2"] = std::to_string(c2);
    bundle.meta["seed"] = std::to_string(seed);
    bundle.meta["s"] = std::to_string(s);
    bundle.meta["sign"] = cfg.get_str("sign", "positive");
    return bundle;
}

InstanceBundle gen_padded_bundle(const RunConfig& cfg) {
    long long n = cfg.get_int("n", 0);
    long long d = cfg.get_int("d", 0);
    long long t = cfg.get_int("t", 1);
    long long s = cfg.get_int("s", 2);
    double c1 = cfg.get_real("c1", 2.0);
    double c2 = cfg.get_real("c2", 6.0);
    std::uint64_t seed = (std::uint64_t)cfg.get_int("seed", 1);
    if (d < 1) throw BadParam("gen padded: need d >= 1");
    if (s < 1) throw BadParam("gen padded: need s >= 1");

    Rng signs(mix_seed(seed, 0x51ull));
    std::vector<GapInstance> blocks;
    blocks.reserve((std::size_t)d);
    for (long long k = 0; k < d; ++k) {
        GapSign sg = signs.sign() > 0 ? GapSign::positive : GapSign::negative;
        blocks.push_back(gen_gap((int)n, (int)t, sg, c1, c2, mix_seed(seed, 0xb10cull + (std::uint64_t)k)));
    }
    PaddedInstance padded = pad(blocks);
    InstanceBundle bundle;
    bundle.kind = "padded";
    bundle.a = padded.a;
    bundle.b = padded.b;
    bundle.shards = padded_to_shards(padded, (int)s);
    bundle.meta["kind"] = "padded";
    bundle.meta["n"] = std::to_string(n);
    bundle.meta["d"] = std::to_string(d);
    bundle.meta["t"] = std::to_string(t);
    bundle.meta["s"] = std::to_string(s);
    bundle.meta["c1"] = std::to_string(c1);
    bundle.meta["c2"] = std::to_string(c2);
    bundle.meta["seed"] = std::to_string(seed);
    for (long long k = 0; k < d; ++k)
        bundle.meta["delta_" + std::to_string(k)] = std::to_string(blocks[(std::size_t)k].delta);
    return bundle;
}

}  // namespace

InstanceBundle gen_instance(const RunConfig& cfg) {
    std::string kind = cfg.get_str("kind", "random");
    if (kind == "random") return gen_random(cfg);
    if (kind == "gap") return gen_gap_bundle(cfg);
    if (kind == "padded") return gen_padded_bundle(cfg);
    throw BadParam("gen: unknown kind '" + kind + "'");
}

void write_instance(const InstanceBundle& inst, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("write_instance: cannot create " + dir);
    double grid = inst.a.grid.value_or(1.0);
    write_matrix(dir + "/A.mtx", inst.a, grid);
    write_vector(dir + "/b.vec", inst.b, grid);
    for (int i = 0; i < inst.shards.num_servers(); ++i) {
        write_matrix(dir + "/shard" + std::to_string(i) + "_A.mtx", inst.shards.a[(std::size_t)i],
                     grid);
        write_vector(dir + "/shard" + std::to_string(i) + "_b.vec", inst.shards.b[(std::size_t)i],
                     grid);
    }
    std::ofstream meta(dir + "/meta.txt");
    if (!meta) throw IoError("write_instance: cannot write meta.txt");
    for (const auto& [k, v] : inst.meta) meta << k << ' ' << v << '\n';
    if (!meta.good()) throw IoError("write_instance: meta.txt write failed");
}

InstanceBundle read_instance(const std::string& dir) {
    std::ifstream meta(dir + "/meta.txt");
    if (!meta) throw IoError("read_instance: cannot open " + dir + "/meta.txt");
    InstanceBundle bundle;
    std::string k, v;
    while (meta >> k >> v) bundle.meta[k] = v;
    bundle.kind = bundle.meta.count("kind") ? bundle.meta["kind"] : "random";

    bundle.a = read_matrix(dir + "/A.mtx");
    bundle.b = read_vector(dir + "/b.vec");
    auto it = bundle.meta.find("s");
    if (it == bundle.meta.end()) throw IoError("read_instance: meta.txt lacks s");
    int s = std::stoi(it->second);
    for (int i = 0; i < s; ++i) {
        bundle.shards.a.push_back(read_matrix(dir + "/shard" + std::to_string(i) + "_A.mtx"));
        bundle.shards.b.push_back(read_vector(dir + "/shard" + std::to_string(i) + "_b.vec"));
    }
    bundle.shards.hidden_sum_bound =
        std::max(bundle.a.magnitude_bound, bundle.b.magnitude_bound);
    return bundle;
}

// ============================================================================
// Protocol plumbing
// ============================================================================

L2Config l2_config_from(const RunConfig& cfg, std::uint64_t protocol_seed) {
    L2Config c;
    c.eps = cfg.get_real("eps", 0.1);
    c.m1 = (int)cfg.get_int("m1", 0);
    c.m2 = (int)cfg.get_int("m2", 0);
    c.m3 = (int)cfg.get_int("m3", 0);
    c.s_col2 = (int)cfg.get_int("s-col2", 0);
    c.s_col3 = (int)cfg.get_int("s-col3", 0);
    c.gd_iters = (int)cfg.get_int("gd-iters", 0);
    c.grid_c = cfg.get_real("grid-c", 3.0);
    c.sketch_seed = protocol_seed;
    c.workers = (int)cfg.get_int("workers", 1);
    c.identity_sketches = cfg.get_flag("identity-sketches", false);
    c.use_unrounded_r = cfg.get_flag("unrounded-r", false);
    c.instrument = cfg.get_flag("instrument", false);
    return c;
}

LpConfig lp_config_from(const RunConfig& cfg, std::uint64_t protocol_seed) {
    LpConfig c;
    c.p = cfg.get_real("p", 1.5);
    c.r = cfg.get_real("r", 0.0);
    c.eps = cfg.get_real("eps", 0.25);
    c.m_t = (int)cfg.get_int("mt", 0);
    c.mt_eps_exponent = cfg.get_real("mt-eps-exponent", 3.0);
    c.m_s = (int)cfg.get_int("ms", 0);
    c.s_col = (int)cfg.get_int("s-col", 0);
    c.gaussian_cols = (int)cfg.get_int("gaussian-cols", 0);
    c.lewis_iters = (int)cfg.get_int("lewis-iters", 0);
    c.beta_sample = cfg.get_real("beta", 4.0);
    c.grid_c = cfg.get_real("grid-c", 3.0);
    c.solver_tol = cfg.get_real("solver-tol", 0.0);
    c.sketch_seed = protocol_seed;
    c.workers = (int)cfg.get_int("workers", 1);
    c.identity_embed = cfg.get_flag("identity-embed", false);
    c.force_keep_all = cfg.get_flag("keep-all", false);
    c.check_contraction = !cfg.get_flag("no-contraction-check", false);
    c.instrument = cfg.get_flag("instrument", false);
    return c;
}

RunRow run_one(const ShardSet& shards, const RunConfig& cfg, std::uint64_t protocol_seed) {
    std::string protocol = cfg.get_str("protocol", "l2");
    if (protocol != "l2" && protocol != "lp")
        throw BadParam("run: protocol must be l2 or lp");
    int max_retries = (int)cfg.get_int("retries", 3);
    if (max_retries < 0) throw BadParam("run: retries must be nonnegative");
    double gamma = cfg.get_real("presample", 0.0);
    if (gamma < 0.0 || gamma > 1.0) throw BadParam("run: presample must lie in (0, 1]");
    if (gamma > 0.0 && protocol != "lp")
        throw BadParam("run: presample applies to the lp protocol only");

    RunRow row;
    row.seed = protocol_seed;

    const ShardSet* live = &shards;
    ShardSet presampled;
    auto start = std::chrono::steady_clock::now();
    if (protocol == "lp" && gamma > 0.0 && gamma < 1.0) {
        LpConfig probe = lp_config_from(cfg, protocol_seed);
        presampled = uniform_presample(shards, probe.p, probe.eps, gamma,
                                       mix_seed(protocol_seed, 0xfeedull));
        live = &presampled;
    }

    for (int attempt = 0;; ++attempt) {
        std::uint64_t seed = attempt == 0
                                 ? protocol_seed
                                 : mix_seed(protocol_seed, 0x5e7ull + (std::uint64_t)attempt);
        try {
            if (protocol == "l2") {
                L2Result res = run_l2(*live, l2_config_from(cfg, seed));
                row.ratio = res.ratio_vs_oracle;
                row.objective = res.objective;
                row.oracle = res.oracle_objective;
                row.bits_total = res.transcript.total_bits();
                row.bits_sketch = res.transcript.bits_in_phase("sketch");
                row.bits_qr = res.transcript.bits_in_phase("qr");
                row.bits_iter = res.transcript.bits_in_phase("iter") +
                                res.transcript.bits_in_phase("answer");
                row.bits_sample = 0;
                row.eps = l2_config_from(cfg, seed).eps;
            } else {
                LpResult res = run_lp(*live, lp_config_from(cfg, seed));
                row.ratio = res.ratio_vs_oracle;
                row.objective = res.objective;
                row.oracle = res.oracle_objective;
                row.bits_total = res.transcript.total_bits();
                row.bits_sketch = res.transcript.bits_in_phase("lewis_sketch");
                row.bits_qr = res.transcript.bits_in_phase("qr");
                row.bits_iter = res.transcript.bits_in_phase("lewis_tau") +
                                res.transcript.bits_in_phase("lewis_w") +
                                res.transcript.bits_in_phase("answer");
                row.bits_sample = res.transcript.bits_in_phase("sample");
                row.eps = lp_config_from(cfg, seed).eps;
            }
            row.retries = attempt;
            break;
        } catch (const SketchFailure&) {
            if (attempt >= max_retries) throw;
        }
    }
    auto end = std::chrono::steady_clock::now();
    row.ms = std::chrono::duration<double, std::milli>(end - start).count();
    return row;
}

const char* kCsvHeader =
    "seed,ratio,objective,oracle,bits_total,bits_sketch,bits_qr,bits_iter,bits_sample,"
    "retries,ms";

void write_csv_preamble(std::ostream& out, const RunConfig& cfg) {
    for (const auto& [k, v] : cfg.kv) out << "# " << k << " = " << v << '\n';
    out << kCsvHeader << '\n';
}

std::string format_csv_row(const RunRow& row) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "%llu,%.12g,%.12g,%.12g,%llu,%llu,%llu,%llu,%llu,%d,%.3f",
                  (unsigned long long)row.seed, row.ratio, row.objective, row.oracle,
                  (unsigned long long)row.bits_total, (unsigned long long)row.bits_sketch,
                  (unsigned long long)row.bits_qr, (unsigned long long)row.bits_iter,
                  (unsigned long long)row.bits_sample, row.retries, row.ms);
    return std::string(buf);
}

// ============================================================================
// Sweeps
// ============================================================================

const SweepColumnFit& SweepSummary::fit_for(const std::string& column) const {
    for (const auto& f : fits)
        if (f.column == column) return f;
    throw BadParam("sweep: no fit for column " + column);
}

std::string SweepSummary::serialize() const {
    std::ostringstream out;
    for (const auto& f : fits)
        out << f.column << ' ' << f.slope << ' ' << f.r2 << '\n';
    return out.str();
}

namespace {

SweepColumnFit fit_loglog(const std::string& column, const std::vector<double>& xs,
                          const std::vector<double>& ys) {
    SweepColumnFit fit;
    fit.column = column;
    for (double y : ys)
        if (y <= 0.0) return fit;
    std::size_t m = xs.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < m; ++i) {
        double lx = std::log(xs[i]), ly = std::log(ys[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        syy += ly * ly;
    }
    double den = m * sxx - sx * sx;
    if (std::abs(den) < 1e-30) return fit;
    fit.slope = (m * sxy - sx * sy) / den;
    double ss_tot = syy - sy * sy / m;
    double intercept = (sy - fit.slope * sx) / m;
    double ss_res = 0;
    for (std::size_t i = 0; i < m; ++i) {
        double e = std::log(ys[i]) - (intercept + fit.slope * std::log(xs[i]));
        ss_res += e * e;
    }
    fit.r2 = ss_tot > 1e-30 ? 1.0 - ss_res / ss_tot : 0.0;
    return fit;
}

}  // namespace

SweepSummary run_sweep(const std::string& axis, const std::vector<double>& values,
                       const RunConfig& base, int num_seeds, std::vector<RunRow>& rows_out,
                       std::vector<double>* xs_out) {
    if (axis != "s" && axis != "d" && axis != "eps")
        throw BadParam("sweep: axis must be s, d, or eps");
    if (values.size() < 3) throw BadParam("sweep: need at least three axis values");
    if (num_seeds < 1) throw BadParam("sweep: need at least one seed");

    std::uint64_t inst_seed0 = (std::uint64_t)base.get_int("seed", 1);
    std::uint64_t proto_seed0 = (std::uint64_t)base.get_int("protocol-seed", 977);

    std::vector<double> xs;
    std::vector<std::vector<double>> col_means(5);
    for (double value : values) {
        RunConfig cfg = base;
        double x = value;
        if (axis == "eps") {
            if (!(value > 0.0) || !(value < 1.0))
                throw BadParam("sweep: eps values must lie in (0, 1)");
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", value);
            cfg.set("eps", buf);
            x = 1.0 / value;
        } else {
            long long iv = (long long)std::llround(value);
            if (iv < 1 || (double)iv != value)
                throw BadParam("sweep: " + axis + " values must be positive integers");
            cfg.set(axis, std::to_string(iv));
        }

        double acc[5] = {0, 0, 0, 0, 0};
        for (int k = 0; k < num_seeds; ++k) {
            cfg.set("seed", std::to_string(inst_seed0 + (std::uint64_t)k));
            InstanceBundle inst = gen_instance(cfg);
            RunRow row = run_one(inst.shards, cfg, proto_seed0 + (std::uint64_t)k);
            rows_out.push_back(row);
            if (xs_out) xs_out->push_back(x);
            acc[0] += (double)row.bits_total;
            acc[1] += (double)row.bits_sketch;
            acc[2] += (double)row.bits_qr;
            acc[3] += (double)row.bits_iter;
            acc[4] += (double)row.bits_sample;
        }
        xs.push_back(x);
        for (int c = 0; c < 5; ++c) col_means[(std::size_t)c].push_back(acc[c] / num_seeds);
    }

    SweepSummary summary;
    const char* names[5] = {"bits_total", "bits_sketch", "bits_qr", "bits_iter",
                            "bits_sample"};
    for (int c = 0; c < 5; ++c)
        summary.fits.push_back(fit_loglog(names[c], xs, col_means[(std::size_t)c]));
    return summary;
}

}  // namespace coordreg
