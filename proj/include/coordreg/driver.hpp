#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "coordreg/hardgen.hpp"
#include "coordreg/netsim.hpp"
#include "coordreg/protocol_l2.hpp"
#include "coordreg/protocol_lp.hpp"

namespace coordreg {

// Flat key-value configuration shared by the CLI and the config file; every
// key is validated against the known set, so typos fail loudly.
struct RunConfig {
    std::map<std::string, std::string> kv;

    static const std::vector<std::string>& known_keys();
    static RunConfig from_file(const std::string& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& def) const;
    long long get_int(const std::string& key, long long def) const;
    double get_real(const std::string& key, double def) const;
    bool get_flag(const std::string& key, bool def) const;
};

struct InstanceBundle {
    std::string kind;  // random | gap | padded
    ShardSet shards;
    DenseMatrix a;
    DenseVector b;
    std::map<std::string, std::string> meta;
};

// kind, sizes, and seeds come from the config.
InstanceBundle gen_instance(const RunConfig& cfg);
void write_instance(const InstanceBundle& inst, const std::string& dir);
InstanceBundle read_instance(const std::string& dir);

L2Config l2_config_from(const RunConfig& cfg, std::uint64_t protocol_seed);
LpConfig lp_config_from(const RunConfig& cfg, std::uint64_t protocol_seed);

struct RunRow {
    std::uint64_t seed = 0;
    double ratio = 0.0;
    double objective = 0.0;
    double oracle = 0.0;
    std::uint64_t bits_total = 0;
    std::uint64_t bits_sketch = 0;
    std::uint64_t bits_qr = 0;
    std::uint64_t bits_iter = 0;
    std::uint64_t bits_sample = 0;
    int retries = 0;
    double ms = 0.0;
    double eps = 0.0;  // echo of the target used for the exit-code contract
};

// Executes the configured protocol ("protocol" key: l2 | lp), reseeding and
// retrying on SketchFailure up to the "retries" budget; rethrows when the
// budget is exhausted. An optional presample gamma applies first (lp only).
RunRow run_one(const ShardSet& shards, const RunConfig& cfg, std::uint64_t protocol_seed);

extern const char* kCsvHeader;
void write_csv_preamble(std::ostream& out, const RunConfig& cfg);
std::string format_csv_row(const RunRow& row);

struct SweepColumnFit {
    std::string column;
    double slope = 0.0;
    double r2 = 0.0;
};

struct SweepSummary {
    std::vector<SweepColumnFit> fits;
    const SweepColumnFit& fit_for(const std::string& column) const;
    std::string serialize() const;  // lines "column slope r2"
};

// axis in {s, d, eps}; at least three values. One instance and one protocol
// run per (value, seed index); rows come back in deterministic order with
// matching x coordinates (the axis value, or 1/eps for the eps axis). Fits
// are log-log regressions of the per-value mean of each bits column.
SweepSummary run_sweep(const std::string& axis, const std::vector<double>& values,
                       const RunConfig& base, int num_seeds, std::vector<RunRow>& rows_out,
                       std::vector<double>* xs_out = nullptr);

}  // namespace coordreg
