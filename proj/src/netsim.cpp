#include "coordreg/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "coordreg/errors.hpp"

namespace coordreg {

Payload quantize_payload(const std::vector<double>& raw, double grid_p) {
    if (grid_p <= 0.0) throw BadParam("quantize_payload: grid_p must be positive");
    Payload out;
    out.grid_p = grid_p;
    out.entries.resize(raw.size());
    double mag = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        double v = round_scalar_to_grid(raw[i], grid_p);
        out.entries[i] = v;
        mag = std::max(mag, std::abs(v));
    }
    out.magnitude = mag;
    return out;
}

std::uint64_t payload_bits(std::size_t entry_count, double magnitude, double grid_p) {
    if (entry_count == 0) return 0;
    long double levels = 2.0L * (long double)magnitude * (long double)grid_p + 1.0L;
    if (levels < 1.0L) levels = 1.0L;
    int per = (int)std::ceil((double)std::log2(levels));
    while (per > 0 && std::pow(2.0L, per - 1) >= levels) --per;
    while (std::pow(2.0L, per) < levels) ++per;
    return (std::uint64_t)entry_count * (std::uint64_t)per;
}

std::uint64_t payload_hash(const Payload& p) {
    std::uint64_t h = kFnvOffset;
    h = fnv1a_u64(h, (std::uint64_t)p.entries.size());
    std::uint64_t gbits;
    static_assert(sizeof(gbits) == sizeof(double));
    std::memcpy(&gbits, &p.grid_p, sizeof(gbits));
    h = fnv1a_u64(h, gbits);
    if (!p.entries.empty())
        h = fnv1a(h, p.entries.data(), p.entries.size() * sizeof(double));
    return h;
}

const Payload& Mailbox::one_from(int sender) const {
    if (!has(sender)) throw BadParam("mailbox: no payload from that sender");
    if (by_sender[sender].size() != 1)
        throw BadParam("mailbox: expected exactly one payload from that sender");
    return by_sender[sender][0];
}

Transcript::Transcript(int num_servers) : num_servers_(num_servers) {
    if (num_servers < 1) throw BadParam("transcript: needs at least one server");
}

namespace {

void check_on_grid(const Payload& p) {
    for (double v : p.entries) {
        if (round_scalar_to_grid(v, p.grid_p) != v)
            throw BadParam("transcript: payload entry is off the grid");
        if (std::abs(v) > p.magnitude * (1.0 + 1e-12) + 1e-300)
            throw BadParam("transcript: payload entry exceeds declared magnitude");
    }
}

}  // namespace

void Transcript::send(int round, int from, int to, const Payload& payload,
                      const std::string& phase) {
    if (round < 0) throw BadParam("transcript: negative round");
    if (from < 0 || from > num_servers_ || to < 0 || to > num_servers_)
        throw TopologyViolation("transcript: party id out of range");
    if (from == to) throw TopologyViolation("transcript: self-send");
    if (from != kCoordinator && to != kCoordinator)
        throw TopologyViolation("transcript: server-to-server link does not exist");
    check_on_grid(payload);

    MessageRecord rec;
    rec.round = round;
    rec.from = from;
    rec.to = to;
    rec.entry_count = payload.entries.size();
    rec.bits = payload_bits(rec.entry_count, payload.magnitude, payload.grid_p);
    rec.magnitude = payload.magnitude;
    rec.grid_p = payload.grid_p;
    rec.content_hash = payload_hash(payload);
    rec.phase = phase;
    total_bits_ += rec.bits;
    records_.push_back(std::move(rec));
}

void Transcript::broadcast(int round, const Payload& payload, const std::string& phase) {
    for (int sv = 1; sv <= num_servers_; ++sv) send(round, kCoordinator, sv, payload, phase);
}

std::uint64_t Transcript::bits_in_phase(const std::string& phase) const {
    std::uint64_t acc = 0;
    for (const auto& r : records_)
        if (r.phase == phase) acc += r.bits;
    return acc;
}

std::size_t Transcript::entries_in_phase(const std::string& phase) const {
    std::size_t acc = 0;
    for (const auto& r : records_)
        if (r.phase == phase) acc += r.entry_count;
    return acc;
}

std::uint64_t Transcript::bits_in_round(int round) const {
    std::uint64_t acc = 0;
    for (const auto& r : records_)
        if (r.round == round) acc += r.bits;
    return acc;
}

std::uint64_t Transcript::bits_sent_by(int party) const {
    std::uint64_t acc = 0;
    for (const auto& r : records_)
        if (r.from == party) acc += r.bits;
    return acc;
}

std::uint64_t Transcript::bits_received_by(int party) const {
    std::uint64_t acc = 0;
    for (const auto& r : records_)
        if (r.to == party) acc += r.bits;
    return acc;
}

std::string Transcript::serialize() const {
    std::ostringstream out;
    for (const auto& r : records_)
        out << r.round << ' ' << r.from << ' ' << r.to << ' ' << r.entry_count << ' '
            << r.bits << '\n';
    out << "summary messages " << records_.size() << " bits " << total_bits_ << '\n';

    std::vector<std::string> order;
    for (const auto& r : records_)
        if (std::find(order.begin(), order.end(), r.phase) == order.end())
            order.push_back(r.phase);
    for (const auto& ph : order)
        out << "phase " << ph << " entries " << entries_in_phase(ph) << " bits "
            << bits_in_phase(ph) << '\n';
    for (int p = 0; p <= num_servers_; ++p)
        out << "party " << p << " sent " << bits_sent_by(p) << " received "
            << bits_received_by(p) << '\n';
    return out.str();
}

std::uint64_t Transcript::hash() const {
    std::uint64_t h = kFnvOffset;
    h = fnv1a_u64(h, (std::uint64_t)num_servers_);
    for (const auto& r : records_) {
        h = fnv1a_u64(h, (std::uint64_t)r.round);
        h = fnv1a_u64(h, (std::uint64_t)r.from);
        h = fnv1a_u64(h, (std::uint64_t)r.to);
        h = fnv1a_u64(h, (std::uint64_t)r.entry_count);
        h = fnv1a_u64(h, r.bits);
        h = fnv1a_u64(h, r.content_hash);
        h = fnv1a(h, r.phase.data(), r.phase.size());
    }
    return h;
}

namespace {

long long checked_int(double v, double bound, const char* what) {
    double r = std::round(v);
    if (std::abs(v - r) > 1e-9) throw BadParam(std::string(what) + ": entry is not integral");
    if (std::abs(r) > bound + 0.5) throw BadParam(std::string(what) + ": entry exceeds bound");
    return (long long)r;
}

// Draws s - 1 uniform shares for one scalar; the remainder closes the sum.
// strict re-draws the whole tuple until every share (remainder included) fits
// in [-bound, bound].
void share_scalar(long long value, long long bound, int s, std::uint64_t entry_seed,
                  bool strict, std::vector<long long>& out) {
    Rng rng(entry_seed);
    std::uint64_t width = 2 * (std::uint64_t)bound + 1;
    const int kBudget = 100000;
    for (int attempt = 0; attempt < kBudget; ++attempt) {
        long long partial = 0;
        for (int i = 0; i + 1 < s; ++i) {
            long long v = (long long)rng.below(width) - bound;
            out[i] = v;
            partial += v;
        }
        long long rest = value - partial;
        out[s - 1] = rest;
        if (!strict || std::llabs(rest) <= bound) return;
    }
    throw RejectionBudget("shard: strict resampling budget exhausted");
}

}  // namespace

ShardSet shard(const DenseMatrix& a, const DenseVector& b, int s, std::uint64_t seed,
               bool strict) {
    if (s < 1) throw BadParam("shard: needs at least one server");
    if (a.rows != b.size()) throw DimensionMismatch("shard: matrix/vector row mismatch");
    long long ma = std::llround(a.magnitude_bound);
    long long mb = std::llround(b.magnitude_bound);
    if (ma < 1) ma = 1;
    if (mb < 1) mb = 1;

    ShardSet set;
    set.hidden_sum_bound = (double)std::max(ma, mb);
    set.a.reserve(s);
    set.b.reserve(s);
    for (int i = 0; i < s; ++i) {
        set.a.push_back(DenseMatrix(a.rows, a.cols));
        set.a.back().grid = 1.0;
        DenseVector bi;
        bi.entries.assign(b.size(), 0.0);
        bi.grid = 1.0;
        set.b.push_back(std::move(bi));
    }

    std::vector<long long> shares(s);
    std::uint64_t a_domain = mix_seed(seed, 0x5151a1ull);
    std::uint64_t b_domain = mix_seed(seed, 0x5151b2ull);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            long long v = checked_int(a(i, j), (double)ma, "shard");
            std::uint64_t idx = (std::uint64_t)(i * a.cols + j);
            share_scalar(v, ma, s, mix_seed(a_domain, idx), strict, shares);
            for (int sv = 0; sv < s; ++sv) set.a[sv].entries[idx] = (double)shares[sv];
        }
        long long v = checked_int(b[i], (double)mb, "shard");
        share_scalar(v, mb, s, mix_seed(b_domain, (std::uint64_t)i), strict, shares);
        for (int sv = 0; sv < s; ++sv) set.b[sv].entries[i] = (double)shares[sv];
    }
    for (int sv = 0; sv < s; ++sv) {
        set.a[sv].refresh_magnitude();
        double mg = 0.0;
        for (double v : set.b[sv].entries) mg = std::max(mg, std::abs(v));
        set.b[sv].magnitude_bound = mg;
    }
    return set;
}

DenseMatrix aggregate_a(const ShardSet& shards) {
    if (shards.a.empty()) throw BadParam("aggregate: empty shard set");
    DenseMatrix sum(shards.a[0].rows, shards.a[0].cols);
    for (const auto& m : shards.a) {
        if (m.rows != sum.rows || m.cols != sum.cols)
            throw DimensionMismatch("aggregate: ragged shard set");
        for (std::size_t k = 0; k < sum.entries.size(); ++k) sum.entries[k] += m.entries[k];
    }
    sum.refresh_magnitude();
    sum.grid = shards.a[0].grid;
    return sum;
}

DenseVector aggregate_b(const ShardSet& shards) {
    if (shards.b.empty()) throw BadParam("aggregate: empty shard set");
    DenseVector sum;
    sum.entries.assign(shards.b[0].size(), 0.0);
    for (const auto& v : shards.b) {
        if (v.size() != sum.size()) throw DimensionMismatch("aggregate: ragged shard set");
        for (std::size_t k = 0; k < sum.entries.size(); ++k) sum.entries[k] += v.entries[k];
    }
    double mg = 0.0;
    for (double v : sum.entries) mg = std::max(mg, std::abs(v));
    sum.magnitude_bound = mg;
    sum.grid = shards.b[0].grid;
    return sum;
}

}  // namespace coordreg
