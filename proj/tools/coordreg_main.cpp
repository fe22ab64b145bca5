#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "coordreg/driver.hpp"
#include "coordreg/errors.hpp"

namespace {

using coordreg::RunConfig;

const std::vector<std::string> kValueKeys = {
    "kind", "n", "d", "s", "t", "sign", "c1", "c2", "magnitude", "seed", "protocol-seed",
    "eps", "p", "r", "m1", "m2", "m3", "s-col2", "s-col3", "gd-iters", "mt",
    "mt-eps-exponent", "ms", "s-col", "gaussian-cols", "lewis-iters", "beta", "grid-c",
    "solver-tol", "workers", "retries", "presample", "out", "instance", "axis", "values",
    "seeds"};

const std::vector<std::string> kFlagKeys = {"identity-sketches", "unrounded-r",
                                            "identity-embed", "keep-all",
                                            "no-contraction-check", "instrument"};

struct SubState {
    CLI::App* app = nullptr;
    std::string config_path;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> value_opts;
    std::map<std::string, CLI::Option*> flag_opts;
};

void attach_common(CLI::App* sub, SubState& st) {
    st.app = sub;
    sub->add_option("--config", st.config_path, "key = value config file; CLI overrides it");
    for (const auto& key : kValueKeys)
        st.value_opts[key] = sub->add_option("--" + key, st.values[key]);
    for (const auto& key : kFlagKeys) st.flag_opts[key] = sub->add_flag("--" + key);
}

RunConfig collect(const SubState& st) {
    RunConfig cfg;
    if (!st.config_path.empty()) cfg = RunConfig::from_file(st.config_path);
    for (const auto& [key, opt] : st.value_opts)
        if (opt->count() > 0) cfg.set(key, st.values.at(key));
    for (const auto& [key, opt] : st.flag_opts)
        if (opt->count() > 0) cfg.set(key, "1");
    return cfg;
}

coordreg::InstanceBundle load_or_gen(const RunConfig& cfg) {
    if (cfg.has("instance")) return coordreg::read_instance(cfg.get_str("instance", ""));
    return coordreg::gen_instance(cfg);
}

void emit_row(const RunConfig& cfg, const coordreg::RunRow& row) {
    std::string path = cfg.get_str("out", "");
    if (path.empty()) {
        coordreg::write_csv_preamble(std::cout, cfg);
        std::cout << coordreg::format_csv_row(row) << '\n';
        return;
    }
    std::error_code ec;
    bool fresh = !std::filesystem::exists(path, ec) ||
                 std::filesystem::file_size(path, ec) == 0;
    std::ofstream out(path, std::ios::app);
    if (!out) throw coordreg::IoError("run: cannot open " + path);
    if (fresh) coordreg::write_csv_preamble(out, cfg);
    out << coordreg::format_csv_row(row) << '\n';
    if (!out.good()) throw coordreg::IoError("run: write failed for " + path);
}

int cmd_gen(const std::string& kind, const SubState& st) {
    RunConfig cfg = collect(st);
    cfg.set("kind", kind);
    coordreg::InstanceBundle inst = coordreg::gen_instance(cfg);
    std::string out = cfg.get_str("out", "");
    if (out.empty()) throw coordreg::BadParam("gen: --out directory is required");
    coordreg::write_instance(inst, out);

    std::ostringstream line;
    line << "gen " << inst.kind << " n=" << inst.meta.at("n");
    if (inst.meta.count("d")) line << " d=" << inst.meta.at("d");
    line << " s=" << inst.meta.at("s");
    if (inst.meta.count("delta")) line << " delta=" << inst.meta.at("delta");
    for (const auto& [k, v] : inst.meta)
        if (k.rfind("delta_", 0) == 0) line << ' ' << k << '=' << v;
    line << " -> " << out;
    std::cout << line.str() << '\n';
    return 0;
}

int cmd_run(const std::string& protocol, const SubState& st) {
    RunConfig cfg = collect(st);
    cfg.set("protocol", protocol);
    coordreg::InstanceBundle inst = load_or_gen(cfg);
    std::uint64_t proto_seed = (std::uint64_t)cfg.get_int("protocol-seed", 977);
    coordreg::RunRow row = coordreg::run_one(inst.shards, cfg, proto_seed);
    emit_row(cfg, row);
    return row.ratio > 1.0 + row.eps ? 1 : 0;
}

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &pos);
        } catch (const std::exception&) {
            throw coordreg::BadParam("sweep: bad axis value '" + tok + "'");
        }
        if (pos != tok.size()) throw coordreg::BadParam("sweep: bad axis value '" + tok + "'");
        out.push_back(v);
    }
    return out;
}

int cmd_sweep(const std::string& protocol, const SubState& st) {
    RunConfig cfg = collect(st);
    cfg.set("protocol", protocol);
    std::string axis = cfg.get_str("axis", "");
    std::vector<double> values = parse_values(cfg.get_str("values", ""));
    int seeds = (int)cfg.get_int("seeds", 5);

    std::vector<coordreg::RunRow> rows;
    coordreg::SweepSummary summary = coordreg::run_sweep(axis, values, cfg, seeds, rows);

    std::string path = cfg.get_str("out", "");
    if (path.empty()) {
        coordreg::write_csv_preamble(std::cout, cfg);
        for (const auto& row : rows) std::cout << coordreg::format_csv_row(row) << '\n';
        std::istringstream lines(summary.serialize());
        std::string line;
        while (std::getline(lines, line)) std::cout << "# fit " << line << '\n';
    } else {
        std::ofstream out(path);
        if (!out) throw coordreg::IoError("sweep: cannot open " + path);
        coordreg::write_csv_preamble(out, cfg);
        for (const auto& row : rows) out << coordreg::format_csv_row(row) << '\n';
        if (!out.good()) throw coordreg::IoError("sweep: write failed for " + path);
        std::ofstream sum(path + ".summary");
        if (!sum) throw coordreg::IoError("sweep: cannot open " + path + ".summary");
        sum << summary.serialize();
        if (!sum.good()) throw coordreg::IoError("sweep: write failed for " + path + ".summary");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coordinator-model regression simulator"};
    app.require_subcommand(1);

    CLI::App* gen = app.add_subcommand("gen", "generate an instance and its shards");
    gen->require_subcommand(1);
    std::map<std::string, SubState> gen_states;
    for (const std::string kind : {"random", "gap", "padded"}) {
        CLI::App* sub = gen->add_subcommand(kind);
        attach_common(sub, gen_states[kind]);
    }

    SubState l2_state, lp_state, sweep_state;
    attach_common(app.add_subcommand("run-l2", "run the l2 protocol, emit one CSV row"),
                  l2_state);
    attach_common(app.add_subcommand("run-lp", "run the lp protocol, emit one CSV row"),
                  lp_state);
    CLI::App* sweep = app.add_subcommand("sweep", "sweep an axis, emit CSV plus slope fits");
    attach_common(sweep, sweep_state);
    std::string sweep_protocol = "l2";
    sweep->add_option("--protocol", sweep_protocol)
        ->check(CLI::IsMember({"l2", "lp"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        (void)app.exit(e);
        return 2;
    }

    const SubState* failed_state = nullptr;
    try {
        for (const auto& [kind, st] : gen_states) {
            if (st.app->parsed()) {
                failed_state = &st;
                return cmd_gen(kind, st);
            }
        }
        if (l2_state.app->parsed()) return cmd_run("l2", l2_state);
        if (lp_state.app->parsed()) return cmd_run("lp", lp_state);
        if (sweep_state.app->parsed()) return cmd_sweep(sweep_protocol, sweep_state);
    } catch (const coordreg::BadParam& e) {
        std::cerr << "error: " << e.what() << '\n';
        if (failed_state) std::cerr << failed_state->app->help();
        return 2;
    } catch (const coordreg::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const coordreg::SketchFailure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const coordreg::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
