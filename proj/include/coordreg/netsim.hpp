#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "coordreg/errors.hpp"
#include "coordreg/linalg.hpp"
#include "coordreg/rng.hpp"

namespace coordreg {

// ============================================================================
// Star topology: party 0 is the coordinator, parties 1..s are servers.
// Messages cross the star only; a round is a synchronous barrier, and
// everything sent in round k is delivered at the start of round k + 1.
// ============================================================================

inline constexpr int kCoordinator = 0;
inline constexpr int kBroadcast = -1;

// Quantized tensor: entries on the 1/grid_p grid, |entry| <= magnitude.
struct Payload {
    std::vector<double> entries;
    double grid_p = 1.0;
    double magnitude = 0.0;
};

// Rounds raw values onto the grid; magnitude becomes the realized maximum.
Payload quantize_payload(const std::vector<double>& raw, double grid_p);

// entry_count * ceil(log2(2 * magnitude * grid_p + 1))
std::uint64_t payload_bits(std::size_t entry_count, double magnitude, double grid_p);

std::uint64_t payload_hash(const Payload& p);

struct MessageRecord {
    int round = 0;
    int from = 0;
    int to = 0;
    std::size_t entry_count = 0;
    std::uint64_t bits = 0;
    double magnitude = 0.0;
    double grid_p = 1.0;
    std::uint64_t content_hash = 0;
    std::string phase;
};

class Transcript {
public:
    Transcript() = default;  // empty placeholder; send() rejects every party id
    explicit Transcript(int num_servers);

    // Validates topology and the payload grid invariant, computes bits,
    // appends one record.
    void send(int round, int from, int to, const Payload& payload, const std::string& phase);

    // Coordinator-only: one copy per server, s records.
    void broadcast(int round, const Payload& payload, const std::string& phase);

    int num_servers() const { return num_servers_; }
    const std::vector<MessageRecord>& records() const { return records_; }

    std::uint64_t total_bits() const { return total_bits_; }
    std::size_t total_messages() const { return records_.size(); }
    std::uint64_t bits_in_phase(const std::string& phase) const;
    std::size_t entries_in_phase(const std::string& phase) const;
    std::uint64_t bits_in_round(int round) const;
    std::uint64_t bits_sent_by(int party) const;
    std::uint64_t bits_received_by(int party) const;

    // Per-message lines "round from to entries bits", then a summary block.
    std::string serialize() const;
    std::uint64_t hash() const;

private:
    int num_servers_ = 0;
    std::vector<MessageRecord> records_;
    std::uint64_t total_bits_ = 0;
};

// ============================================================================
// Additive shares
// ============================================================================

struct ShardSet {
    std::vector<DenseMatrix> a;  // one per server
    std::vector<DenseVector> b;
    double hidden_sum_bound = 0.0;  // magnitude bound of the aggregate

    int num_servers() const { return static_cast<int>(a.size()); }
};

// Splits integer (a, b) into s additive integer shares: s - 1 uniform in
// [-M, M], the last the exact remainder (bounded by s * M). strict resamples
// until every share lies in [-M, M].
ShardSet shard(const DenseMatrix& a, const DenseVector& b, int s, std::uint64_t seed,
               bool strict = false);

DenseMatrix aggregate_a(const ShardSet& shards);
DenseVector aggregate_b(const ShardSet& shards);

// ============================================================================
// Round engine
// ============================================================================

struct Letter {
    int to = kCoordinator;
    Payload payload;
    std::string phase;
};

// Payloads delivered to one party at the start of a round, keyed by sender.
struct Mailbox {
    std::vector<std::vector<Payload>> by_sender;

    bool has(int sender) const {
        return sender >= 0 && sender < static_cast<int>(by_sender.size()) &&
               !by_sender[sender].empty();
    }
    const Payload& one_from(int sender) const;
};

struct RunOptions {
    int workers = 1;
};

// Executes `num_rounds` barrier-synchronized rounds. Every party's step runs
// once per round (possibly in parallel); messages append to the transcript in
// party order, so the transcript is identical for any worker count.
template <class State>
Transcript run_rounds(int num_servers, int num_rounds, std::vector<State>& states,
                      const std::function<std::vector<Letter>(int round, int self,
                                                              const Mailbox& inbox,
                                                              State& state)>& step,
                      const RunOptions& opt = {}) {
    if (num_servers < 1) throw BadParam("run_rounds: needs at least one server");
    if (states.size() != static_cast<std::size_t>(num_servers) + 1)
        throw BadParam("run_rounds: states must hold coordinator + servers");

    Transcript t(num_servers);
    int parties = num_servers + 1;
    std::vector<Mailbox> inboxes(parties);
    for (Mailbox& mb : inboxes) mb.by_sender.assign(parties, {});

    for (int round = 0; round < num_rounds; ++round) {
        std::vector<std::vector<Letter>> outboxes(parties);
        auto run_party = [&](int self) {
            outboxes[self] = step(round, self, inboxes[self], states[self]);
        };
        if (opt.workers <= 1) {
            for (int self = 0; self < parties; ++self) run_party(self);
        } else {
            std::vector<std::thread> pool;
            int w = std::min(opt.workers, parties);
            for (int b = 0; b < w; ++b) {
                pool.emplace_back([&, b] {
                    for (int self = b; self < parties; self += w) run_party(self);
                });
            }
            for (auto& th : pool) th.join();
        }

        std::vector<Mailbox> next(parties);
        for (Mailbox& mb : next) mb.by_sender.assign(parties, {});
        for (int self = 0; self < parties; ++self) {
            for (Letter& letter : outboxes[self]) {
                if (letter.to == kBroadcast) {
                    if (self != kCoordinator)
                        throw TopologyViolation("run_rounds: only the coordinator broadcasts");
                    t.broadcast(round, letter.payload, letter.phase);
                    for (int sv = 1; sv < parties; ++sv)
                        next[sv].by_sender[kCoordinator].push_back(letter.payload);
                } else {
                    t.send(round, self, letter.to, letter.payload, letter.phase);
                    next[letter.to].by_sender[self].push_back(std::move(letter.payload));
                }
            }
        }
        inboxes = std::move(next);
    }
    return t;
}

}  // namespace coordreg
