#include "coordreg/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace coordreg {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

void require(bool ok, const char* msg) {
    if (!ok) throw BadParam(msg);
}

}  // namespace

// ============================================================================
// p-stable sampling
// ============================================================================

double sample_p_stable_value(double p, Rng& rng) {
    if (p <= 0.0 || p > 2.0) throw BadParam("sample_p_stable: p outside (0, 2]");
    double u = kPi * (rng.uniform_open() - 0.5);
    if (p == 1.0) return std::tan(u);
    double w = rng.exponential();
    if (p == 2.0) return 2.0 * std::sin(u) * std::sqrt(w);
    double a = std::sin(p * u) / std::pow(std::cos(u), 1.0 / p);
    double b = std::pow(std::cos((1.0 - p) * u) / w, (1.0 - p) / p);
    return a * b;
}

DenseVector sample_p_stable(double p, std::size_t count, std::uint64_t seed) {
    DenseVector out(count);
    Rng rng(mix_seed(seed, 0x5741b1e5ull));
    for (std::size_t i = 0; i < count; ++i) out[i] = sample_p_stable_value(p, rng);
    out.refresh_magnitude();
    return out;
}

// ============================================================================
// Alpha constants
// ============================================================================

AlphaConstant estimate_alpha(double p, double r, long long num_samples) {
    require(p > 0.0 && p <= 2.0, "estimate_alpha: p outside (0, 2]");
    require(r > 0.0 && r < p, "estimate_alpha: needs 0 < r < p");
    require(num_samples >= 1000, "estimate_alpha: too few samples");

    std::uint64_t seed = mix_seed(0xa1fa0001ull + static_cast<std::uint64_t>(kAlphaConventionVersion),
                                  mix_seed(static_cast<std::uint64_t>(p * 1e9),
                                           static_cast<std::uint64_t>(r * 1e9)));
    Rng rng(seed);
    double sum = 0.0, sumsq = 0.0;
    for (long long i = 0; i < num_samples; ++i) {
        double z = std::pow(std::abs(sample_p_stable_value(p, rng)), r);
        sum += z;
        sumsq += z * z;
    }
    double n = static_cast<double>(num_samples);
    double mean = sum / n;
    double var = std::max(0.0, sumsq / n - mean * mean);
    double se = std::sqrt(var / n);

    AlphaConstant c;
    c.p = p;
    c.r = r;
    c.value = std::pow(mean, 1.0 / r);
    c.error = 3.0 * se * (1.0 / r) * std::pow(mean, 1.0 / r - 1.0);
    c.samples = num_samples;
    c.convention = kAlphaConventionVersion;
    return c;
}

AlphaTable::AlphaTable(std::string path) : path_(std::move(path)) { load(); }

void AlphaTable::load() {
    if (path_.empty()) return;
    std::ifstream f(path_);
    if (!f) return;  // cold cache
    AlphaConstant c;
    while (f >> c.p >> c.r >> c.value >> c.error >> c.samples >> c.convention)
        rows_.push_back(c);
}

void AlphaTable::store() const {
    if (path_.empty()) return;
    std::ofstream f(path_);
    if (!f) throw IoError("alpha table: cannot write " + path_);
    char buf[256];
    for (const AlphaConstant& c : rows_) {
        std::snprintf(buf, sizeof buf, "%.12g %.12g %.17g %.6g %lld %d\n",
                      c.p, c.r, c.value, c.error, c.samples, c.convention);
        f << buf;
    }
}

const AlphaConstant& AlphaTable::lookup(double p, double r, long long num_samples) {
    for (const AlphaConstant& c : rows_) {
        if (std::abs(c.p - p) < 1e-12 && std::abs(c.r - r) < 1e-12 &&
            c.convention == kAlphaConventionVersion && c.samples >= num_samples)
            return c;
    }
    rows_.push_back(estimate_alpha(p, r, num_samples));
    store();
    return rows_.back();
}

namespace {
std::mutex g_alpha_mutex;
std::string g_alpha_path;
AlphaTable* g_alpha_table = nullptr;
}  // namespace

AlphaTable& default_alpha_table() {
    std::lock_guard<std::mutex> lk(g_alpha_mutex);
    if (g_alpha_table == nullptr) g_alpha_table = new AlphaTable(g_alpha_path);
    return *g_alpha_table;
}

void set_default_alpha_table_path(const std::string& path) {
    std::lock_guard<std::mutex> lk(g_alpha_mutex);
    delete g_alpha_table;
    g_alpha_table = nullptr;
    g_alpha_path = path;
}

// ============================================================================
// Count-Sketch and OSNAP
// ============================================================================

namespace {

void check_left_apply(const SketchSpec& spec, std::size_t rows, const char* who) {
    if (spec.out_rows == 0) throw BadParam("sketch: out_rows must be positive");
    if (rows != spec.in_rows) {
        std::ostringstream os;
        os << who << ": input has " << rows << " rows, spec expects " << spec.in_rows;
        throw DimensionMismatch(os.str());
    }
}

}  // namespace

DenseMatrix count_sketch_apply(const SketchSpec& spec, const DenseMatrix& m) {
    check_left_apply(spec, m.rows, "count_sketch_apply");
    DenseMatrix out(spec.out_rows, m.cols);
    for (std::size_t j = 0; j < m.rows; ++j) {
        Rng rng(mix_seed(spec.seed, j));
        std::size_t h = rng.below(spec.out_rows);
        double sgn = rng.sign();
        const double* src = m.row_ptr(j);
        double* dst = out.row_ptr(h);
        for (std::size_t c = 0; c < m.cols; ++c) dst[c] += sgn * src[c];
    }
    out.refresh_magnitude();
    return out;
}

DenseVector count_sketch_apply(const SketchSpec& spec, const DenseVector& v) {
    check_left_apply(spec, v.size(), "count_sketch_apply");
    DenseVector out(spec.out_rows);
    for (std::size_t j = 0; j < v.size(); ++j) {
        Rng rng(mix_seed(spec.seed, j));
        std::size_t h = rng.below(spec.out_rows);
        double sgn = rng.sign();
        out[h] += sgn * v[j];
    }
    out.refresh_magnitude();
    return out;
}

namespace {

// Floyd's sampling of spec.s_col distinct target rows plus signs. stamp is a
// caller-owned out_rows-sized scratch; the j + 1 generation mark makes resets
// between columns unnecessary. Deterministic per (seed, column j).
inline void osnap_column(const SketchSpec& spec, std::size_t j,
                         std::size_t* rows_out, double* vals_out,
                         std::vector<std::size_t>& stamp) {
    std::size_t m = spec.out_rows;
    std::size_t s = static_cast<std::size_t>(spec.s_col);
    Rng rng(mix_seed(spec.seed ^ 0x05a9b3c1d2e4f608ull, j));
    double scale = 1.0 / std::sqrt(static_cast<double>(s));
    std::size_t count = 0;
    for (std::size_t k = m - s; k < m; ++k) {
        std::size_t t = rng.below(k + 1);
        std::size_t pick = stamp[t] == j + 1 ? k : t;
        stamp[pick] = j + 1;
        rows_out[count] = pick;
        vals_out[count] = rng.sign() * scale;
        ++count;
    }
}

}  // namespace

DenseMatrix osnap_apply(const SketchSpec& spec, const DenseMatrix& m) {
    check_left_apply(spec, m.rows, "osnap_apply");
    require(spec.s_col >= 1, "osnap: s_col must be >= 1");
    require(static_cast<std::size_t>(spec.s_col) <= spec.out_rows,
            "osnap: s_col exceeds out_rows");
    DenseMatrix out(spec.out_rows, m.cols);
    std::vector<std::size_t> rows(spec.s_col);
    std::vector<double> vals(spec.s_col);
    std::vector<std::size_t> stamp(spec.out_rows, 0);
    for (std::size_t j = 0; j < m.rows; ++j) {
        osnap_column(spec, j, rows.data(), vals.data(), stamp);
        const double* src = m.row_ptr(j);
        for (int k = 0; k < spec.s_col; ++k) {
            double* dst = out.row_ptr(rows[k]);
            double v = vals[k];
            for (std::size_t c = 0; c < m.cols; ++c) dst[c] += v * src[c];
        }
    }
    out.refresh_magnitude();
    return out;
}

DenseVector osnap_apply(const SketchSpec& spec, const DenseVector& v) {
    check_left_apply(spec, v.size(), "osnap_apply");
    require(spec.s_col >= 1, "osnap: s_col must be >= 1");
    require(static_cast<std::size_t>(spec.s_col) <= spec.out_rows,
            "osnap: s_col exceeds out_rows");
    DenseVector out(spec.out_rows);
    std::vector<std::size_t> rows(spec.s_col);
    std::vector<double> vals(spec.s_col);
    std::vector<std::size_t> stamp(spec.out_rows, 0);
    for (std::size_t j = 0; j < v.size(); ++j) {
        osnap_column(spec, j, rows.data(), vals.data(), stamp);
        for (int k = 0; k < spec.s_col; ++k) out[rows[k]] += vals[k] * v[j];
    }
    out.refresh_magnitude();
    return out;
}

// ============================================================================
// p-stable sketch
// ============================================================================

namespace {

double resolve_alpha(const SketchSpec& spec) {
    if (spec.alpha > 0.0) return spec.alpha;
    return default_alpha_table().lookup(spec.p, spec.r).value;
}

}  // namespace

std::vector<DenseMatrix> p_stable_sketch_apply_many(
    const SketchSpec& spec, const std::vector<const DenseMatrix*>& inputs,
    int workers) {
    require(spec.family == SketchFamily::p_stable, "p_stable_sketch_apply: wrong family");
    require(spec.r > 0.0 && spec.r < spec.p && spec.p <= 2.0,
            "p_stable_sketch_apply: needs 0 < r < p <= 2");
    for (const DenseMatrix* m : inputs)
        check_left_apply(spec, m->rows, "p_stable_sketch_apply");
    if (inputs.empty()) return {};

    double alpha = resolve_alpha(spec);
    double scale = 1.0 / (std::pow(static_cast<double>(spec.out_rows), 1.0 / spec.r) * alpha);
    std::size_t n = spec.in_rows;
    std::size_t total_cols = 0;
    for (const DenseMatrix* m : inputs) total_cols += m->cols;

    // stack inputs side by side so the generated row is consumed once
    DenseMatrix stacked(n, total_cols);
    {
        std::size_t off = 0;
        for (const DenseMatrix* m : inputs) {
            for (std::size_t i = 0; i < n; ++i) {
                const double* src = m->row_ptr(i);
                double* dst = stacked.row_ptr(i) + off;
                for (std::size_t c = 0; c < m->cols; ++c) dst[c] = src[c];
            }
            off += m->cols;
        }
    }

    DenseMatrix prod(spec.out_rows, total_cols);
    auto do_rows = [&](std::size_t lo, std::size_t hi) {
        std::vector<double> trow(n);
        for (std::size_t t = lo; t < hi; ++t) {
            Rng rng(mix_seed(spec.seed, t));
            if (spec.grid_p > 0.0) {
                for (std::size_t k = 0; k < n; ++k)
                    trow[k] = round_scalar_to_grid(scale * sample_p_stable_value(spec.p, rng),
                                                   spec.grid_p);
            } else {
                for (std::size_t k = 0; k < n; ++k)
                    trow[k] = scale * sample_p_stable_value(spec.p, rng);
            }
            double* dst = prod.row_ptr(t);
            for (std::size_t k = 0; k < n; ++k) {
                double coef = trow[k];
                if (coef == 0.0) continue;
                const double* src = stacked.row_ptr(k);
                for (std::size_t c = 0; c < total_cols; ++c) dst[c] += coef * src[c];
            }
        }
    };
    if (workers <= 1 || spec.out_rows < 64) {
        do_rows(0, spec.out_rows);
    } else {
        std::size_t w = std::min<std::size_t>(workers, spec.out_rows);
        std::vector<std::thread> pool;
        std::size_t chunk = (spec.out_rows + w - 1) / w;
        for (std::size_t b = 0; b < w; ++b) {
            std::size_t lo = b * chunk, hi = std::min(spec.out_rows, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(do_rows, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    std::vector<DenseMatrix> out;
    out.reserve(inputs.size());
    std::size_t off = 0;
    for (const DenseMatrix* m : inputs) {
        DenseMatrix piece(spec.out_rows, m->cols);
        for (std::size_t i = 0; i < spec.out_rows; ++i) {
            const double* src = prod.row_ptr(i) + off;
            double* dst = piece.row_ptr(i);
            for (std::size_t c = 0; c < m->cols; ++c) dst[c] = src[c];
        }
        piece.refresh_magnitude();
        out.push_back(std::move(piece));
        off += m->cols;
    }
    return out;
}

DenseMatrix p_stable_sketch_apply(const SketchSpec& spec, const DenseMatrix& m) {
    std::vector<const DenseMatrix*> one{&m};
    return std::move(p_stable_sketch_apply_many(spec, one)[0]);
}

// ============================================================================
// Gaussian sketch (right multiplication)
// ============================================================================

DenseMatrix gaussian_matrix(const SketchSpec& spec) {
    require(spec.family == SketchFamily::gaussian, "gaussian_matrix: wrong family");
    require(spec.out_rows >= 1, "gaussian: needs at least one output column");
    DenseMatrix g(spec.in_rows, spec.out_rows);
    double scale = 1.0 / std::sqrt(static_cast<double>(spec.out_rows));
    Rng rng(mix_seed(spec.seed, 0x6a155ull));
    for (double& e : g.entries) e = scale * rng.normal();
    if (spec.grid_p > 0.0) g = round_to_grid(g, spec.grid_p);
    g.refresh_magnitude();
    return g;
}

DenseMatrix gaussian_sketch_apply(const SketchSpec& spec, const DenseMatrix& m) {
    if (m.cols != spec.in_rows)
        throw DimensionMismatch("gaussian_sketch_apply: input columns differ from spec");
    return multiply(m, gaussian_matrix(spec));
}

}  // namespace coordreg
