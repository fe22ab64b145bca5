#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coordreg/linalg.hpp"
#include "coordreg/rng.hpp"

namespace coordreg {

// ============================================================================
// Shared sketch descriptions
// ============================================================================

// A SketchSpec fully determines the realized sketch: two parties holding the
// same spec obtain bit-identical applications.
enum class SketchFamily { count_sketch, osnap, p_stable, gaussian };

struct SketchSpec {
    SketchFamily family = SketchFamily::count_sketch;
    std::size_t out_rows = 0;  // gaussian: output column count
    std::size_t in_rows = 0;   // gaussian: input column count (rows of G)
    std::uint64_t seed = 0;
    int s_col = 1;             // osnap: nonzeros per column
    double p = 2.0;            // p_stable index, char. function exp(-|t|^p)
    double r = 0.0;            // p_stable target norm, 0 < r < p
    double grid_p = 0.0;       // p_stable/gaussian entry rounding; 0 = none
    double alpha = 0.0;        // p_stable normalizer; 0 = resolve via table
};

// ============================================================================
// p-stable moment constants
// ============================================================================

inline constexpr int kAlphaConventionVersion = 1;

struct AlphaConstant {
    double p = 0.0;
    double r = 0.0;
    double value = 0.0;      // (E |Z|^r)^(1/r)
    double error = 0.0;      // three propagated standard errors
    long long samples = 0;
    int convention = kAlphaConventionVersion;
};

// Monte Carlo estimate of alpha_{p,r}; deterministic for fixed inputs.
AlphaConstant estimate_alpha(double p, double r, long long num_samples = 10000000);

// On-disk cache of alpha constants, lines "p r value error samples convention".
class AlphaTable {
public:
    AlphaTable() = default;
    explicit AlphaTable(std::string path);

    const AlphaConstant& lookup(double p, double r, long long num_samples = 10000000);

private:
    std::string path_;
    std::vector<AlphaConstant> rows_;
    void load();
    void store() const;
};

// Process-wide table used when SketchSpec.alpha == 0.
AlphaTable& default_alpha_table();
void set_default_alpha_table_path(const std::string& path);

// ============================================================================
// Sampling
// ============================================================================

// Standard symmetric p-stable draw (Chambers-Mallows-Stuck); p = 2 is
// Gaussian with variance 2.
double sample_p_stable_value(double p, Rng& rng);

DenseVector sample_p_stable(double p, std::size_t count, std::uint64_t seed);

// ============================================================================
// Applications (sketch times input)
// ============================================================================

DenseMatrix count_sketch_apply(const SketchSpec& spec, const DenseMatrix& m);
DenseVector count_sketch_apply(const SketchSpec& spec, const DenseVector& v);

DenseMatrix osnap_apply(const SketchSpec& spec, const DenseMatrix& m);
DenseVector osnap_apply(const SketchSpec& spec, const DenseVector& v);

DenseMatrix p_stable_sketch_apply(const SketchSpec& spec, const DenseMatrix& m);

// One generation pass of the realized T applied to several same-height
// matrices; identical to calling p_stable_sketch_apply per input.
std::vector<DenseMatrix> p_stable_sketch_apply_many(
    const SketchSpec& spec, const std::vector<const DenseMatrix*>& inputs,
    int workers = 1);

// Right multiplication by G with i.i.d. N(0, 1/out_cols) entries.
DenseMatrix gaussian_sketch_apply(const SketchSpec& spec, const DenseMatrix& m);
DenseMatrix gaussian_matrix(const SketchSpec& spec);

}  // namespace coordreg
