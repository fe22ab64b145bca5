#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "coordreg/driver.hpp"
#include "coordreg/io.hpp"
#include "coordreg/linalg.hpp"
#include "doctest.h"

using namespace coordreg;

namespace {

struct CmdResult {
    int code = -1;
    std::string out;
};

CmdResult run_cmd(const std::string& args) {
    const char* bin = std::getenv("COORDREG_BIN");
    REQUIRE(bin != nullptr);
    std::string cmd = std::string(bin) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CmdResult res;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe)) res.out += buf;
    int status = pclose(pipe);
    res.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

bool have_cli() { return std::getenv("COORDREG_BIN") != nullptr; }

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunConfig small_l2() {
    RunConfig cfg;
    cfg.set("protocol", "l2");
    cfg.set("n", "240");
    cfg.set("d", "3");
    cfg.set("s", "2");
    cfg.set("seed", "5");
    cfg.set("eps", "0.25");
    cfg.set("gd-iters", "4");
    return cfg;
}

}  // namespace

TEST_CASE("config rejects unknown keys and malformed numbers") {
    RunConfig cfg;
    cfg.set("n", "12");
    CHECK(cfg.get_int("n", 0) == 12);
    CHECK_THROWS_AS(cfg.set("frobnicate", "1"), BadParam);

    cfg.set("n", "12x");
    CHECK_THROWS_AS((void)cfg.get_int("n", 0), BadParam);
    cfg.set("eps", "1.5e-2");
    CHECK(cfg.get_real("eps", 0.0) == doctest::Approx(0.015));
    cfg.set("eps", "abc");
    CHECK_THROWS_AS((void)cfg.get_real("eps", 0.0), BadParam);

    cfg.set("instrument", "yes");
    CHECK(cfg.get_flag("instrument", false));
    cfg.set("instrument", "0");
    CHECK_FALSE(cfg.get_flag("instrument", true));
    cfg.set("instrument", "maybe");
    CHECK_THROWS_AS((void)cfg.get_flag("instrument", false), BadParam);

    CHECK(cfg.get_str("protocol", "l2") == "l2");
    CHECK_FALSE(cfg.has("protocol"));
}

TEST_CASE("config files parse key = value lines with comments") {
    std::string path = "/tmp/coordreg_test_cfg.txt";
    {
        std::ofstream out(path);
        out << "# a comment\n"
            << "protocol = lp\n"
            << "\n"
            << "n=500\n"
            << "  eps =  0.25  # trailing note\n";
    }
    RunConfig cfg = RunConfig::from_file(path);
    CHECK(cfg.get_str("protocol", "") == "lp");
    CHECK(cfg.get_int("n", 0) == 500);
    CHECK(cfg.get_real("eps", 0.0) == doctest::Approx(0.25));

    {
        std::ofstream out(path);
        out << "frobnicate = 1\n";
    }
    CHECK_THROWS_AS((void)RunConfig::from_file(path), BadParam);
    CHECK_THROWS_AS((void)RunConfig::from_file("/tmp/no_such_cfg_file.txt"), IoError);
    std::remove(path.c_str());
}

TEST_CASE("csv header and row formatting are pinned") {
    CHECK(std::string(kCsvHeader) ==
          "seed,ratio,objective,oracle,bits_total,bits_sketch,bits_qr,bits_iter,"
          "bits_sample,retries,ms");

    RunRow row;
    row.seed = 3;
    row.ratio = 1.25;
    row.objective = 10.0;
    row.oracle = 8.0;
    row.bits_total = 100;
    row.bits_sketch = 40;
    row.bits_qr = 30;
    row.bits_iter = 20;
    row.bits_sample = 10;
    row.retries = 1;
    row.ms = 12.5;
    CHECK(format_csv_row(row) == "3,1.25,10,8,100,40,30,20,10,1,12.500");

    RunConfig cfg;
    cfg.set("protocol", "l2");
    cfg.set("n", "100");
    cfg.set("d", "3");
    std::ostringstream out;
    write_csv_preamble(out, cfg);
    CHECK(out.str() == "# d = 3\n# n = 100\n# protocol = l2\n" + std::string(kCsvHeader) +
                           "\n");
}

TEST_CASE("generated bundles aggregate and round-trip through disk") {
    SUBCASE("random") {
        RunConfig cfg;
        cfg.set("kind", "random");
        cfg.set("n", "60");
        cfg.set("d", "4");
        cfg.set("s", "3");
        cfg.set("seed", "9");
        InstanceBundle bundle = gen_instance(cfg);
        CHECK(bundle.kind == "random");
        CHECK(bundle.meta.at("n") == "60");
        CHECK(bundle.shards.num_servers() == 3);
        CHECK(aggregate_a(bundle.shards).entries == bundle.a.entries);
        CHECK(aggregate_b(bundle.shards).entries == bundle.b.entries);

        std::string dir = "/tmp/coordreg_test_inst";
        write_instance(bundle, dir);
        InstanceBundle back = read_instance(dir);
        CHECK(back.a.entries == bundle.a.entries);
        CHECK(back.b.entries == bundle.b.entries);
        CHECK(back.shards.num_servers() == 3);
        for (int sv = 0; sv < 3; ++sv) {
            CHECK(back.shards.a[sv].entries == bundle.shards.a[sv].entries);
            CHECK(back.shards.b[sv].entries == bundle.shards.b[sv].entries);
        }
        CHECK(back.meta.at("kind") == "random");
        CHECK(back.shards.hidden_sum_bound > 0.0);
    }
    SUBCASE("gap") {
        RunConfig cfg;
        cfg.set("kind", "gap");
        cfg.set("n", "400");
        cfg.set("t", "1");
        cfg.set("sign", "negative");
        cfg.set("s", "2");
        cfg.set("seed", "3");
        InstanceBundle bundle = gen_instance(cfg);
        CHECK(bundle.a.cols == 1);
        CHECK(bundle.a.rows == 400);
        long long delta = std::stoll(bundle.meta.at("delta"));
        CHECK(delta <= -40);
        CHECK(delta >= -120);
        CHECK(bundle.shards.num_servers() == 2);
        CHECK(aggregate_a(bundle.shards).entries == bundle.a.entries);
    }
    SUBCASE("padded") {
        RunConfig cfg;
        cfg.set("kind", "padded");
        cfg.set("n", "200");
        cfg.set("d", "3");
        cfg.set("t", "1");
        cfg.set("s", "4");
        cfg.set("seed", "11");
        InstanceBundle bundle = gen_instance(cfg);
        CHECK(bundle.a.rows == 600);
        CHECK(bundle.a.cols == 3);
        CHECK(bundle.meta.count("delta_0") == 1);
        CHECK(bundle.meta.count("delta_2") == 1);
        CHECK(bundle.shards.num_servers() == 4);
        CHECK(aggregate_b(bundle.shards).entries == bundle.b.entries);
    }
}

TEST_CASE("run_one mirrors the protocol transcripts into csv columns") {
    RunConfig cfg = small_l2();
    cfg.set("kind", "random");
    InstanceBundle bundle = gen_instance(cfg);

    SUBCASE("l2 phase mapping") {
        RunRow row = run_one(bundle.shards, cfg, 977);
        L2Result direct = run_l2(bundle.shards, l2_config_from(cfg, 977));
        CHECK(row.seed == 977);
        CHECK(row.retries == 0);
        CHECK(row.ratio == direct.ratio_vs_oracle);
        CHECK(row.bits_total == direct.transcript.total_bits());
        CHECK(row.bits_sketch == direct.transcript.bits_in_phase("sketch"));
        CHECK(row.bits_qr == direct.transcript.bits_in_phase("qr"));
        CHECK(row.bits_iter == direct.transcript.bits_in_phase("iter") +
                                   direct.transcript.bits_in_phase("answer"));
        CHECK(row.bits_sample == 0);

        RunRow again = run_one(bundle.shards, cfg, 977);
        CHECK(again.ratio == row.ratio);
        CHECK(again.bits_total == row.bits_total);
    }
    SUBCASE("lp phase mapping") {
        RunConfig lp = cfg;
        lp.set("protocol", "lp");
        lp.set("p", "1.5");
        lp.set("r", "1.25");
        RunRow row = run_one(bundle.shards, lp, 977);
        LpResult direct = run_lp(bundle.shards, lp_config_from(lp, 977));
        CHECK(row.bits_total == direct.transcript.total_bits());
        CHECK(row.bits_sketch == direct.transcript.bits_in_phase("lewis_sketch"));
        CHECK(row.bits_sample == direct.transcript.bits_in_phase("sample"));
        CHECK(row.bits_iter == direct.transcript.bits_in_phase("lewis_tau") +
                                   direct.transcript.bits_in_phase("lewis_w") +
                                   direct.transcript.bits_in_phase("answer"));
        CHECK(row.bits_sample > 0);
    }
    SUBCASE("presample is lp-only and range-checked") {
        RunConfig bad = cfg;
        bad.set("presample", "0.5");
        CHECK_THROWS_AS((void)run_one(bundle.shards, bad, 977), BadParam);
        RunConfig lp = cfg;
        lp.set("protocol", "lp");
        lp.set("presample", "1.5");
        CHECK_THROWS_AS((void)run_one(bundle.shards, lp, 977), BadParam);
    }
}

TEST_CASE("sketch failures consume the retry budget") {
    RunConfig cfg;
    cfg.set("protocol", "l2");
    cfg.set("kind", "random");
    cfg.set("n", "300");
    cfg.set("d", "4");
    cfg.set("s", "2");
    cfg.set("seed", "71");
    cfg.set("eps", "0.1");
    cfg.set("m3", "4");
    cfg.set("s-col3", "1");
    cfg.set("gd-iters", "2");
    InstanceBundle bundle = gen_instance(cfg);

    cfg.set("retries", "3");
    RunRow row = run_one(bundle.shards, cfg, 6);
    CHECK(row.retries >= 1);
    CHECK(row.retries <= 3);

    cfg.set("retries", "0");
    CHECK_THROWS_AS((void)run_one(bundle.shards, cfg, 6), SketchFailure);
}

TEST_CASE("sweeps fit the expected server-count slope") {
    RunConfig base = small_l2();
    std::vector<RunRow> rows;
    std::vector<double> xs;
    SweepSummary summary = run_sweep("s", {2.0, 4.0, 8.0}, base, 2, rows, &xs);
    CHECK(rows.size() == 6);
    CHECK(xs.size() == 6);
    CHECK(xs[0] == 2.0);
    CHECK(xs[5] == 8.0);
    const SweepColumnFit& fit = summary.fit_for("bits_sketch");
    CHECK(fit.slope == doctest::Approx(1.0).epsilon(0.1));
    CHECK(fit.r2 >= 0.95);
    CHECK_THROWS_AS((void)summary.fit_for("bogus"), BadParam);

    CHECK_THROWS_AS((void)run_sweep("q", {2, 4, 8}, base, 1, rows), BadParam);
    CHECK_THROWS_AS((void)run_sweep("s", {2, 4}, base, 1, rows), BadParam);
    CHECK_THROWS_AS((void)run_sweep("s", {2, 4, 8}, base, 0, rows), BadParam);
    CHECK_THROWS_AS((void)run_sweep("eps", {0.5, 1.5, 0.1}, base, 1, rows), BadParam);
}

TEST_CASE("cli exit codes follow the contract") {
    if (!have_cli()) return;

    CHECK(run_cmd("run-l2 --frobnicate 1").code == 2);
    CHECK(run_cmd("bogus-subcommand").code == 2);
    CHECK(run_cmd("gen").code == 2);
    CHECK(run_cmd("run-lp --n 100 --d 3 --s 2 --p 2.5").code == 2);
    CHECK(run_cmd("gen random --n 50 --d 3").code == 2);  // --out is required
    CHECK(run_cmd("--help").code == 0);

    CmdResult ok = run_cmd("run-l2 --n 240 --d 3 --s 2 --seed 5 --eps 0.25 --gd-iters 4");
    CHECK(ok.code == 0);
    CHECK(ok.out.find(kCsvHeader) != std::string::npos);
    CHECK(ok.out.find("977,") != std::string::npos);

    CmdResult miss = run_cmd(
        "run-l2 --n 300 --d 4 --s 2 --seed 71 --eps 0.1 --m3 4 --s-col3 1 "
        "--gd-iters 2 --retries 0 --protocol-seed 0");
    CHECK(miss.code == 1);

    CmdResult io = run_cmd(
        "run-l2 --n 200 --d 3 --s 2 --seed 5 --eps 0.3 --out /nonexistent_dir_xyz/r.csv");
    CHECK(io.code == 3);

    CmdResult guard = run_cmd(
        "run-l2 --n 300 --d 4 --s 2 --seed 71 --eps 0.1 --m3 4 --s-col3 1 "
        "--gd-iters 2 --retries 0 --protocol-seed 6");
    CHECK(guard.code == 4);
}

TEST_CASE("cli generation is byte-deterministic and feeds runs") {
    if (!have_cli()) return;

    std::string da = "/tmp/coordreg_test_genA", db = "/tmp/coordreg_test_genB";
    (void)run_cmd("gen random --n 60 --d 4 --s 3 --seed 9 --out " + da);
    (void)run_cmd("gen random --n 60 --d 4 --s 3 --seed 9 --out " + db);
    for (const char* f : {"A.mtx", "b.vec", "meta.txt", "shard0_A.mtx", "shard2_b.vec"}) {
        std::string fa = slurp(da + "/" + f);
        CHECK(!fa.empty());
        CHECK(fa == slurp(db + "/" + f));
    }

    CmdResult run = run_cmd("run-l2 --instance " + da + " --eps 0.3 --gd-iters 4");
    CHECK(run.code == 0);
    CHECK(run.out.find("# instance = " + da) != std::string::npos);

    CmdResult sweep = run_cmd(
        "sweep --axis s --values 2,4,8 --seeds 1 --protocol l2 --n 240 --d 3 "
        "--gd-iters 3 --eps 0.25");
    CHECK(sweep.code == 0);
    CHECK(sweep.out.find("# fit bits_sketch") != std::string::npos);
    CHECK(sweep.out.find("# fit bits_total") != std::string::npos);
}
