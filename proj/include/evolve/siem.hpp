#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evolve/bytes.hpp"
#include "evolve/crypto.hpp"

namespace evolve {

class EventBus;
class Conduit;

/// One CAN frame: 8-byte timestamp, 2-byte id, 1-byte dlc, dlc data bytes,
/// big-endian.
struct CanRecord {
    uint64_t timestamp_us = 0;
    uint16_t can_id = 0;  // 11-bit
    uint8_t dlc = 8;      // 0-8
    std::array<uint8_t, 8> data{};

    size_t encoded_size() const { return 11 + dlc; }
    void encode_to(ByteWriter& w) const;
};

struct LogBatch {
    std::string vehicle_id;
    uint32_t window_seconds = 0;
    std::vector<CanRecord> records;  // time-ordered
    uint64_t encoded_size_bytes = 0;

    Bytes encode() const;
    static LogBatch decode(ByteSpan data);
};

/// Traffic shape for the synthetic generator: per-id steady rates plus
/// injected floods.
struct TrafficSpec {
    struct IdRate {
        uint16_t can_id = 0;
        double rate_hz = 0;
        double start_fraction = 0.0;  // active span within the window
        double end_fraction = 1.0;
    };
    std::vector<IdRate> base;    // scaled to hit the target byte count
    std::vector<IdRate> floods;  // kept at their exact stated rates

    static TrafficSpec default_spec();
};

/// Deterministic CAN log generator. Base traffic is periodic with seeded
/// phase jitter and is scaled so the encoded batch lands within 1% of
/// target_bytes; flood ids emit at exactly their configured rate.
LogBatch generate_synthetic_logs(uint64_t seed, uint32_t window_seconds, uint64_t target_bytes,
                                 const TrafficSpec& spec = TrafficSpec::default_spec(),
                                 const std::string& vehicle_id = "veh-0");

struct CorrelationRule {
    std::string rule_id;
    uint16_t can_id = 0;
    double max_rate_hz = 0;
    uint32_t window_ms = 1000;

    void validate() const;
    static std::vector<CorrelationRule> load_file(const std::filesystem::path& path);
};

enum class Severity : uint8_t { info = 0, warning = 1, critical = 2 };

struct Alert {
    std::string rule_id;
    std::string vehicle_id;
    uint64_t window_start_us = 0;
    uint64_t window_end_us = 0;
    double observed_rate_hz = 0;
    Severity severity = Severity::warning;

    Bytes encode() const;
    static Alert decode(ByteSpan data);
};

/// Sliding-window frequency analysis: one alert per rule covering the
/// maximal violating span. Pure function of (batch, rules).
std::vector<Alert> analyze_logs(const LogBatch& batch,
                                const std::vector<CorrelationRule>& rules);

/// Secondary per-id anomaly screen: flags ids whose peak 1-second rate sits
/// more than `z_threshold` standard deviations above their own mean rate.
struct RateAnomaly {
    uint16_t can_id = 0;
    double peak_rate_hz = 0;
    double mean_rate_hz = 0;
    double z_score = 0;
};
std::vector<RateAnomaly> detect_rate_anomalies(const LogBatch& batch, double z_threshold = 6.0);

struct FlParameters {
    uint64_t model_version = 0;
    Bytes blob;  // ~1 MB opaque parameter pack
};

constexpr uint64_t kFlBlobBytes = 1'000'000;

/// A digest of an analyzed batch; this is what goes upstream instead of the
/// raw logs unless a critical alert forces a full forward.
struct BatchDigest {
    std::string vehicle_id;
    uint64_t window_start_us = 0;
    uint64_t window_end_us = 0;
    uint64_t record_count = 0;
    uint64_t encoded_size_bytes = 0;
    crypto::Digest batch_hash{};

    Bytes encode() const;
};

BatchDigest make_digest(const LogBatch& batch);

/// Charger-side SIEM service state: analysis queue, FL parameter cache, and
/// the bounded cloud retry queue.
class SiemService {
public:
    SiemService(EventBus* bus, std::vector<CorrelationRule> rules);

    /// Runs the rule engine, publishes each alert on siem/alerts (critical
    /// alerts ride at critical criticality), and returns them.
    std::vector<Alert> analyze_and_publish(const LogBatch& batch);

    /// Sends alerts plus the digest upstream; the raw batch rides along only
    /// when some alert is critical. Unreachable cloud queues the upload for
    /// retry (bounded queue).
    void forward_to_cloud(const std::vector<Alert>& alerts, const BatchDigest& digest,
                          const Blob* raw_batch = nullptr);
    size_t retry_queue_depth() const { return retry_.size(); }
    /// Attempts to flush the retry queue; returns how many uploads went out.
    size_t retry_pending();

    /// FL parameter distribution. The charger refreshes from the cloud only
    /// when the backend has announced a version newer than the cached one.
    FlParameters pull_fl_parameters();
    void note_cloud_fl_version(uint64_t version);

    void set_cloud(Conduit* cloud) { cloud_ = cloud; }
    Conduit* cloud() const { return cloud_; }
    const std::vector<CorrelationRule>& rules() const { return rules_; }
    void set_rules(std::vector<CorrelationRule> rules) { rules_ = std::move(rules); }

    /// Uploads land here; analysis runs decoupled from upload completion.
    void enqueue_batch(LogBatch batch) { batches_.push_back(std::move(batch)); }
    size_t pending_batches() const { return batches_.size(); }
    /// Analyzes the oldest queued batch: rule engine, alert publication, and
    /// cloud forwarding per the digest-unless-critical policy.
    std::vector<Alert> analyze_next();

private:
    bool try_ingest(const Bytes& payload);

    EventBus* bus_;
    std::vector<CorrelationRule> rules_;
    Conduit* cloud_ = nullptr;
    std::optional<FlParameters> fl_cache_;
    uint64_t cloud_fl_version_ = 0;
    std::deque<Bytes> retry_;
    std::deque<LogBatch> batches_;
    static constexpr size_t kRetryQueueCap = 64;
};

}  // namespace evolve
