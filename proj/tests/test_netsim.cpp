#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <string>
#include <vector>

#include "coordreg/netsim.hpp"
#include "doctest.h"

using namespace coordreg;

namespace {

Payload scalar_payload(double v, double grid_p) {
    return quantize_payload({v}, grid_p);
}

DenseMatrix integer_matrix(std::size_t n, std::size_t d, long long mag, std::uint64_t seed) {
    Rng rng(seed);
    DenseMatrix m(n, d);
    for (double& e : m.entries) e = (double)rng.int_in(-mag, mag);
    m.refresh_magnitude();
    m.grid = 1.0;
    return m;
}

DenseVector integer_vector(std::size_t n, long long mag, std::uint64_t seed) {
    Rng rng(seed);
    DenseVector v(n);
    for (double& e : v.entries) e = (double)rng.int_in(-mag, mag);
    v.refresh_magnitude();
    v.grid = 1.0;
    return v;
}

}  // namespace

TEST_CASE("payload bits follow the level-count formula") {
    CHECK(payload_bits(1, 1.0, 1.0) == 2);  // {-1, 0, 1}
    CHECK(payload_bits(5, 1.0, 1.0) == 10);
    CHECK(payload_bits(0, 1e9, 1e9) == 0);
    CHECK(payload_bits(3, 0.0, 1.0) == 0);  // single level

    double k = std::pow(2.0, 31.0) - 1.0;  // 2 k + 1 = 2^32 - 1 levels
    CHECK(payload_bits(1, k, 1.0) == 32);
    CHECK(payload_bits(16, k, 1.0) == 16 * 32);
    CHECK(payload_bits(1, k + 1.0, 1.0) == 33);

    // magnitude and grid enter only through their product
    CHECK(payload_bits(1, 7.0, 64.0) == payload_bits(1, 7.0 * 64.0, 1.0));
}

TEST_CASE("quantize_payload rounds onto the grid and tracks magnitude") {
    Payload p = quantize_payload({0.26, -1.4, 0.74}, 2.0);
    CHECK(p.entries[0] == doctest::Approx(0.5));
    CHECK(p.entries[1] == doctest::Approx(-1.5));
    CHECK(p.entries[2] == doctest::Approx(0.5));  // tie 1.48 -> no; 0.74*2=1.48 -> 1.5
    CHECK(p.magnitude == doctest::Approx(1.5));
    CHECK(p.grid_p == 2.0);
    CHECK_THROWS_AS((void)quantize_payload({1.0}, 0.0), BadParam);
}

TEST_CASE("transcript enforces the star topology") {
    Transcript t(3);
    t.send(0, 1, kCoordinator, scalar_payload(1.0, 1.0), "x");
    t.send(0, kCoordinator, 2, scalar_payload(1.0, 1.0), "x");
    CHECK_THROWS_AS(t.send(0, 1, 2, scalar_payload(1.0, 1.0), "x"), TopologyViolation);
    CHECK_THROWS_AS(t.send(0, 1, 1, scalar_payload(1.0, 1.0), "x"), TopologyViolation);
    CHECK_THROWS_AS(t.send(0, 4, kCoordinator, scalar_payload(1.0, 1.0), "x"),
                    TopologyViolation);
    CHECK_THROWS_AS(t.send(-1, 1, kCoordinator, scalar_payload(1.0, 1.0), "x"), BadParam);

    Payload off;
    off.entries = {0.3};
    off.grid_p = 1.0;
    off.magnitude = 1.0;
    CHECK_THROWS_AS(t.send(1, 1, kCoordinator, off, "x"), BadParam);

    Transcript placeholder;
    CHECK_THROWS_AS(placeholder.send(0, 1, kCoordinator, scalar_payload(1.0, 1.0), "x"),
                    TopologyViolation);
}

TEST_CASE("broadcast appends one copy per server") {
    Transcript t(3);
    Payload p = quantize_payload(std::vector<double>(10, 3.0), 1.0);  // 3 bits per entry
    t.broadcast(0, p, "model");
    CHECK(t.total_messages() == 3);
    CHECK(t.total_bits() == 3 * 10 * 3);
    for (int sv = 1; sv <= 3; ++sv) CHECK(t.bits_received_by(sv) == 30);
    CHECK(t.bits_sent_by(kCoordinator) == 90);
    CHECK(t.bits_in_round(0) == 90);
    CHECK(t.bits_in_phase("model") == 90);
    CHECK(t.entries_in_phase("model") == 30);
}

TEST_CASE("sharding reconstructs the hidden pair exactly") {
    DenseMatrix a = integer_matrix(15, 4, 9, 1);
    DenseVector b = integer_vector(15, 9, 2);

    ShardSet one = shard(a, b, 1, 5);
    CHECK(one.a[0].entries == a.entries);
    CHECK(one.b[0].entries == b.entries);

    for (int s : {2, 4}) {
        ShardSet set = shard(a, b, s, 5);
        REQUIRE(set.num_servers() == s);
        DenseMatrix ra = aggregate_a(set);
        DenseVector rb = aggregate_b(set);
        CHECK(ra.entries == a.entries);
        CHECK(rb.entries == b.entries);
        CHECK(set.hidden_sum_bound == 9.0);
        for (int i = 0; i < s; ++i)
            for (double e : set.a[(std::size_t)i].entries) {
                CHECK(e == std::round(e));
                CHECK(std::abs(e) <= 9.0 * s);
            }
    }

    ShardSet strict = shard(a, b, 4, 5, true);
    CHECK(aggregate_a(strict).entries == a.entries);
    for (const auto& sa : strict.a)
        for (double e : sa.entries) CHECK(std::abs(e) <= 9.0);

    ShardSet again = shard(a, b, 4, 5);
    CHECK(again.a[2].entries == shard(a, b, 4, 5).a[2].entries);

    CHECK_THROWS_AS((void)shard(a, b, 0, 5), BadParam);
    DenseMatrix frac = a;
    frac(0, 0) = 0.5;
    CHECK_THROWS_AS((void)shard(frac, b, 2, 5), BadParam);
}

TEST_CASE("echo protocol: counts, delivery, and determinism") {
    struct State {
        double value = 0.0;
        double echoed = 0.0;
    };

    auto build_step = [](bool /*tag*/) {
        return [](int round, int self, const Mailbox& inbox,
                  State& st) -> std::vector<Letter> {
            std::vector<Letter> out;
            if (round == 0 && self != kCoordinator) {
                st.value = (double)self;
                out.push_back({kCoordinator, quantize_payload({st.value}, 1.0), "up"});
            }
            if (round == 1 && self == kCoordinator) {
                double sum = 0.0;
                for (int sv = 1; sv < (int)inbox.by_sender.size(); ++sv)
                    if (inbox.has(sv)) sum += inbox.one_from(sv).entries[0];
                out.push_back({kBroadcast, quantize_payload({sum}, 1.0), "down"});
            }
            if (round == 2 && self != kCoordinator)
                st.echoed = inbox.one_from(kCoordinator).entries[0];
            return out;
        };
    };

    std::vector<State> states(3);
    Transcript t = run_rounds<State>(2, 3, states, build_step(true));
    CHECK(t.total_messages() == 4);  // 2 uploads + 2 broadcast copies
    CHECK(states[1].echoed == 3.0);
    CHECK(states[2].echoed == 3.0);

    std::vector<State> states2(3);
    Transcript t2 = run_rounds<State>(2, 3, states2, build_step(false));
    CHECK(t2.serialize() == t.serialize());
    CHECK(t2.hash() == t.hash());

    std::vector<State> states3(3);
    RunOptions opt;
    opt.workers = 4;
    Transcript t3 = run_rounds<State>(2, 3, states3, build_step(false), opt);
    CHECK(t3.serialize() == t.serialize());
    CHECK(t3.hash() == t.hash());

    std::vector<State> empty_states(3);
    Transcript t0 = run_rounds<State>(
        2, 0, empty_states,
        [](int, int, const Mailbox&, State&) { return std::vector<Letter>{}; });
    CHECK(t0.total_messages() == 0);
    CHECK(t0.total_bits() == 0);
}

TEST_CASE("servers cannot broadcast through the round engine") {
    struct State {};
    std::vector<State> states(3);
    CHECK_THROWS_AS(
        (void)run_rounds<State>(2, 1, states,
                                [](int, int self, const Mailbox&, State&) {
                                    std::vector<Letter> out;
                                    if (self == 1)
                                        out.push_back(
                                            {kBroadcast, quantize_payload({1.0}, 1.0), "x"});
                                    return out;
                                }),
        TopologyViolation);
}

TEST_CASE("serialization emits records then the summary block") {
    Transcript t(2);
    t.send(0, 1, kCoordinator, quantize_payload({1.0, -1.0}, 1.0), "up");
    t.send(0, 2, kCoordinator, quantize_payload({0.0}, 1.0), "up");
    t.broadcast(1, quantize_payload({2.0}, 1.0), "down");

    std::string expected =
        "0 1 0 2 4\n"
        "0 2 0 1 0\n"
        "1 0 1 1 3\n"
        "1 0 2 1 3\n"
        "summary messages 4 bits 10\n"
        "phase up entries 3 bits 4\n"
        "phase down entries 2 bits 6\n"
        "party 0 sent 6 received 4\n"
        "party 1 sent 4 received 3\n"
        "party 2 sent 0 received 3\n";
    CHECK(t.serialize() == expected);
}

TEST_CASE("transcript hash is content sensitive") {
    Transcript a(2);
    a.send(0, 1, kCoordinator, quantize_payload({1.0}, 1.0), "x");
    Transcript b(2);
    b.send(0, 1, kCoordinator, quantize_payload({1.0}, 1.0), "x");
    CHECK(a.hash() == b.hash());

    Transcript c(2);
    c.send(0, 1, kCoordinator, quantize_payload({-1.0}, 1.0), "x");
    CHECK(a.hash() != c.hash());

    Transcript d(2);
    d.send(0, 1, kCoordinator, quantize_payload({1.0}, 1.0), "y");
    CHECK(a.hash() != d.hash());
}
