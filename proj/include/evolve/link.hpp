#pragma once

#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "evolve/bytes.hpp"
#include "evolve/rng.hpp"

namespace evolve {

/// One named network configuration: rate, one-way delay, loss and relative
/// delay spread. The five built-ins mirror the PLC and cellular setups the
/// platform is benchmarked against.
struct LinkProfile {
    std::string name;
    double rate_mbps = 0;
    double one_way_latency_ms = 0;
    double plr_percent = 0;
    double jitter_fraction = 0;

    void validate() const;  // throws ValidationError on out-of-range fields

    /// Case-insensitive lookup of evolve10/evolve100/evolve1g/4g/5g.
    static LinkProfile builtin(const std::string& name);
    static const std::vector<LinkProfile>& builtins();
    /// Load profiles from a JSON config file (array of objects with the
    /// field names above).
    static std::vector<LinkProfile> load_file(const std::filesystem::path& path);
    /// Built-in lookup first, then (optionally) a config file.
    static LinkProfile resolve(const std::string& name,
                               const std::vector<LinkProfile>& extra = {});
};

struct TransportModel {
    enum class Kind { ideal, loss_throttled };
    Kind kind = Kind::ideal;
    uint32_t mss_bytes = 1460;

    void validate() const;
    static TransportModel ideal() { return {Kind::ideal, 1460}; }
    static TransportModel loss(uint32_t mss = 1460) { return {Kind::loss_throttled, mss}; }
};

const char* to_string(TransportModel::Kind kind);
TransportModel::Kind transport_kind_from_string(const std::string& s);

/// Throughput after loss. Ideal transport moves at the raw profile rate; the
/// loss-throttled transport caps it at the Mathis ceiling
/// MSS*8 / (RTT * sqrt(p)), which collapses to the raw rate when p == 0.
double effective_rate_mbps(const LinkProfile& profile, const TransportModel& model);

/// Analytical expected time for one request/response exchange, jitter
/// excluded: 2 * one_way_latency + (request + response) * 8 / effective_rate.
/// This is the oracle the emulator is validated against.
double model_transfer_time_ms(const LinkProfile& profile, const TransportModel& model,
                              uint64_t request_bytes, uint64_t response_bytes);

struct TransferResult {
    double duration_ms = 0;
    uint64_t bytes_sent = 0;
    uint64_t bytes_received = 0;
    uint64_t retransmissions = 0;
};

/// One timed request/response sample.
struct Measurement {
    std::string scenario;
    std::string profile;
    std::string transport;
    int sample_index = 0;
    uint64_t request_bytes = 0;
    uint64_t response_bytes = 0;
    double handshake_ms = 0;
    double rtt_ms = 0;
};

enum class Side { a, b };
inline Side peer(Side s) { return s == Side::a ? Side::b : Side::a; }

/// A message on the wire. `head` holds materialized bytes; `synthetic`
/// counts trailing all-zero payload bytes that only matter for timing and
/// byte metering, so 100 MB benchmark transfers never touch 100 MB of RAM.
struct WireMsg {
    Bytes head;
    uint64_t synthetic = 0;

    uint64_t wire_size() const { return head.size() + synthetic; }
};

/// Bidirectional channel with virtual time.
///
/// Both endpoints share one simulated clock. A send is stamped with a depart
/// time (the sender's serializer is busy until the previous frame finished),
/// a serialization delay at the effective rate plus a jittered one-way delay
/// gives the arrival time, and a recv advances the clock to that arrival.
/// Nothing sleeps; identical (profile, model, seed, traffic) gives identical
/// timings.
class EmulatedLink {
public:
    using Tap = std::function<void(Side from, const WireMsg&)>;
    using Fault = std::function<void(Side from, WireMsg&)>;

    EmulatedLink(LinkProfile profile, TransportModel model, uint64_t seed);

    void send(Side from, WireMsg msg);
    std::optional<WireMsg> recv(Side to);
    bool pending(Side to) const;

    double now_ms() const;
    /// Push the clock forward (local processing or time spent on another
    /// link while composing multi-hop flows).
    void advance_ms(double ms);
    void advance_to_ms(double t);

    void close();
    bool closed() const;
    /// A down link silently drops sends; recv never sees them.
    void set_down(bool down);
    bool down() const;

    void set_tap(Tap tap);
    void set_fault(Fault fault);

    uint64_t bytes_sent(Side from) const;
    uint64_t messages_sent(Side from) const;
    uint64_t retransmissions(Side from) const;

    const LinkProfile& profile() const { return profile_; }
    const TransportModel& transport() const { return model_; }

private:
    double sample_one_way_delay_ms();

    LinkProfile profile_;
    TransportModel model_;
    double rate_eff_mbps_;
    SeededRng rng_;

    mutable std::mutex mu_;
    double clock_ms_ = 0;
    bool closed_ = false;
    bool down_ = false;
    struct Delivery {
        double arrival_ms;
        WireMsg msg;
    };
    struct DirectionState {
        double busy_until_ms = 0;
        double last_arrival_ms = 0;
        uint64_t bytes_sent = 0;
        uint64_t messages_sent = 0;
        double retrans_accum = 0;
        std::deque<Delivery> inbox;  // indexed by *destination* side
    };
    DirectionState& dir(Side s) { return dirs_[s == Side::a ? 0 : 1]; }
    const DirectionState& dir(Side s) const { return dirs_[s == Side::a ? 0 : 1]; }
    DirectionState dirs_[2];
    Tap tap_;
    Fault fault_;
};

std::unique_ptr<EmulatedLink> open_link(const LinkProfile& profile, const TransportModel& model,
                                        uint64_t seed);

/// Thrown when the link is closed mid-benchmark; carries what completed.
class BenchmarkAborted : public std::runtime_error {
public:
    explicit BenchmarkAborted(std::vector<Measurement> done)
        : std::runtime_error("benchmark aborted: link closed"), completed(std::move(done)) {}
    std::vector<Measurement> completed;
};

/// Sequential request/response echo benchmark over a raw link, side A
/// driving and side B answering with `response_bytes`. Default sample count
/// is 300.
std::vector<Measurement> rtt_benchmark(EmulatedLink& link, uint64_t request_bytes,
                                       uint64_t response_bytes, int samples = 300);

}  // namespace evolve
