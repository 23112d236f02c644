#include "evolve/siem.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "evolve/bus.hpp"
#include "evolve/errors.hpp"
#include "evolve/frame.hpp"
#include "evolve/link.hpp"
#include "evolve/rng.hpp"
#include "evolve/session.hpp"
#include "evolve/update.hpp"  // cloudop codes

namespace evolve {

void CanRecord::encode_to(ByteWriter& w) const {
    w.u64(timestamp_us);
    w.u16(can_id);
    w.u8(dlc);
    w.raw(ByteSpan(data.data(), dlc));
}

Bytes LogBatch::encode() const {
    ByteWriter w;
    w.lp_string(vehicle_id);
    w.u32(window_seconds);
    w.u32(uint32_t(records.size()));
    for (const auto& r : records) r.encode_to(w);
    return w.take();
}

LogBatch LogBatch::decode(ByteSpan data) {
    try {
        ByteReader r(data);
        LogBatch b;
        b.vehicle_id = r.lp_string();
        b.window_seconds = r.u32();
        uint32_t count = r.u32();
        b.records.reserve(count);
        uint64_t prev_ts = 0;
        for (uint32_t i = 0; i < count; i++) {
            CanRecord rec;
            rec.timestamp_us = r.u64();
            rec.can_id = r.u16();
            rec.dlc = r.u8();
            if (rec.can_id >= 2048) throw ProtocolError("can_id out of 11-bit range");
            if (rec.dlc > 8) throw ProtocolError("dlc out of range");
            auto bytes = r.raw(rec.dlc);
            std::copy(bytes.begin(), bytes.end(), rec.data.begin());
            if (rec.timestamp_us < prev_ts) throw ProtocolError("records not time-ordered");
            prev_ts = rec.timestamp_us;
            b.records.push_back(rec);
        }
        r.expect_done();
        b.encoded_size_bytes = data.size();
        return b;
    } catch (const ProtocolError&) {
        throw;
    } catch (const std::exception& e) {
        throw ProtocolError(std::string("malformed log batch: ") + e.what());
    }
}

TrafficSpec TrafficSpec::default_spec() {
    TrafficSpec spec;
    // A small powertrain-ish id mix; weights sum to 1 after scaling.
    const uint16_t ids[] = {0x100, 0x101, 0x105, 0x110, 0x118, 0x120, 0x128,
                            0x140, 0x150, 0x160, 0x170, 0x1A0, 0x1B0, 0x200,
                            0x210, 0x220, 0x260, 0x2A0, 0x300, 0x340};
    const double weights[] = {10, 10, 8, 8, 6, 6, 5, 5, 4, 4, 4, 4, 3, 3, 3, 3, 2, 2, 1, 1};
    for (size_t i = 0; i < std::size(ids); i++) spec.base.push_back({ids[i], weights[i], 0, 1});
    return spec;
}

LogBatch generate_synthetic_logs(uint64_t seed, uint32_t window_seconds, uint64_t target_bytes,
                                 const TrafficSpec& spec, const std::string& vehicle_id) {
    if (target_bytes < 1024) throw ValidationError("target_bytes must be at least 1 KB");
    if (window_seconds == 0) throw ValidationError("window must be positive");

    SeededRng rng(SeededRng::derive(seed, 0xCA9));
    const uint64_t window_us = uint64_t(window_seconds) * 1'000'000ull;
    const size_t record_bytes = 19;  // dlc 8 throughout
    const uint64_t header_bytes = 2 + vehicle_id.size() + 4 + 4;

    uint64_t flood_count = 0;
    for (const auto& f : spec.floods)
        flood_count += uint64_t(std::llround(f.rate_hz * window_seconds *
                                             (f.end_fraction - f.start_fraction)));

    uint64_t total_target = (target_bytes - std::min(target_bytes - 1, header_bytes)) /
                            record_bytes;
    uint64_t base_count = total_target > flood_count ? total_target - flood_count : 0;

    double weight_sum = 0;
    for (const auto& b : spec.base) weight_sum += b.rate_hz;

    struct Stream {
        uint16_t can_id;
        uint64_t count;
        double start_frac, end_frac;
    };
    std::vector<Stream> streams;
    uint64_t assigned = 0;
    for (size_t i = 0; i < spec.base.size(); i++) {
        const auto& b = spec.base[i];
        uint64_t n = (i + 1 == spec.base.size())
                         ? base_count - assigned
                         : uint64_t(double(base_count) * b.rate_hz / weight_sum);
        assigned += n;
        streams.push_back({b.can_id, n, b.start_fraction, b.end_fraction});
    }
    for (const auto& f : spec.floods) {
        uint64_t n = uint64_t(
            std::llround(f.rate_hz * window_seconds * (f.end_fraction - f.start_fraction)));
        streams.push_back({f.can_id, n, f.start_fraction, f.end_fraction});
    }

    LogBatch batch;
    batch.vehicle_id = vehicle_id;
    batch.window_seconds = window_seconds;
    batch.records.reserve(size_t(base_count + flood_count));

    for (const auto& s : streams) {
        if (s.count == 0) continue;
        double span_us = (s.end_frac - s.start_frac) * double(window_us);
        double origin_us = s.start_frac * double(window_us);
        double period = span_us / double(s.count);
        double phase = rng.u01() * period;
        for (uint64_t k = 0; k < s.count; k++) {
            double jitter = rng.symmetric() * 0.2 * period;
            double t = origin_us + phase + double(k) * period + jitter;
            if (t < origin_us) t = origin_us;
            if (t >= origin_us + span_us) t = origin_us + span_us - 1;
            CanRecord rec;
            rec.timestamp_us = uint64_t(t);
            rec.can_id = s.can_id;
            rec.dlc = 8;
            uint64_t payload = rng.next_u64();
            for (int b = 0; b < 8; b++) rec.data[size_t(b)] = uint8_t(payload >> (8 * b));
            batch.records.push_back(rec);
        }
    }
    std::stable_sort(batch.records.begin(), batch.records.end(),
                     [](const CanRecord& a, const CanRecord& b) {
                         return a.timestamp_us < b.timestamp_us;
                     });

    // Exact-fit the encoded size: pop tail records until the shortfall is
    // representable as a sum of record sizes (each 11..19 bytes), then fill
    // with short-dlc records at the window tail.
    uint64_t current = header_bytes + record_bytes * batch.records.size();
    uint16_t filler_id = spec.base.empty() ? uint16_t(0x100) : spec.base.back().can_id;
    uint64_t delta = target_bytes - current;
    auto representable = [](uint64_t d) { return d == 0 || (d >= 11 && d != 20 && d != 21); };
    while (!representable(delta) && !batch.records.empty()) {
        current -= batch.records.back().encoded_size();
        batch.records.pop_back();
        delta = target_bytes - current;
    }
    while (delta > 0) {
        uint64_t sz = std::min<uint64_t>(19, delta);
        while (sz > 11 && !representable(delta - sz)) sz--;
        CanRecord rec;
        rec.timestamp_us = window_us - 1;
        rec.can_id = filler_id;
        rec.dlc = uint8_t(sz - 11);
        uint64_t payload = rng.next_u64();
        for (uint8_t b = 0; b < rec.dlc; b++) rec.data[b] = uint8_t(payload >> (8 * b));
        batch.records.push_back(rec);
        current += sz;
        delta -= sz;
    }
    batch.encoded_size_bytes = current;
    return batch;
}

void CorrelationRule::validate() const {
    if (max_rate_hz <= 0) throw ValidationError("rule " + rule_id + ": max_rate_hz must be > 0");
    if (window_ms == 0) throw ValidationError("rule " + rule_id + ": window_ms must be > 0");
    if (can_id >= 2048) throw ValidationError("rule " + rule_id + ": can_id out of range");
}

std::vector<CorrelationRule> CorrelationRule::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open rules config: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad rules config: " + std::string(e.what()));
    }
    if (!doc.is_array()) throw ConfigError("rules config must be a JSON array");
    std::vector<CorrelationRule> out;
    for (const auto& item : doc) {
        CorrelationRule r;
        try {
            r.rule_id = item.at("rule_id").get<std::string>();
            r.can_id = item.at("can_id").get<uint16_t>();
            r.max_rate_hz = item.at("max_rate_hz").get<double>();
            r.window_ms = item.at("window_ms").get<uint32_t>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("bad rule entry: ") + e.what());
        }
        r.validate();
        out.push_back(std::move(r));
    }
    return out;
}

Bytes Alert::encode() const {
    ByteWriter w;
    w.lp_string(rule_id);
    w.lp_string(vehicle_id);
    w.u64(window_start_us);
    w.u64(window_end_us);
    uint64_t rate_bits;
    static_assert(sizeof(rate_bits) == sizeof(observed_rate_hz));
    std::memcpy(&rate_bits, &observed_rate_hz, sizeof(rate_bits));
    w.u64(rate_bits);
    w.u8(uint8_t(severity));
    return w.take();
}

Alert Alert::decode(ByteSpan data) {
    ByteReader r(data);
    Alert a;
    a.rule_id = r.lp_string();
    a.vehicle_id = r.lp_string();
    a.window_start_us = r.u64();
    a.window_end_us = r.u64();
    uint64_t rate_bits = r.u64();
    std::memcpy(&a.observed_rate_hz, &rate_bits, sizeof(rate_bits));
    a.severity = Severity(r.u8());
    return a;
}

std::vector<Alert> analyze_logs(const LogBatch& batch,
                                const std::vector<CorrelationRule>& rules) {
    if (rules.empty()) throw ValidationError("analyze_logs needs at least one rule");

    // Timestamps per id, already time-ordered.
    std::map<uint16_t, std::vector<uint64_t>> by_id;
    for (const auto& r : batch.records) by_id[r.can_id].push_back(r.timestamp_us);

    std::vector<Alert> alerts;
    for (const auto& rule : rules) {
        rule.validate();
        auto it = by_id.find(rule.can_id);
        if (it == by_id.end()) continue;
        const auto& ts = it->second;
        const uint64_t window_us = uint64_t(rule.window_ms) * 1000ull;
        const double window_s = double(rule.window_ms) / 1000.0;

        std::optional<Alert> open;
        size_t right = 0;
        double peak_count = 0;
        for (size_t i = 0; i < ts.size(); i++) {
            if (right < i) right = i;
            while (right < ts.size() && ts[right] < ts[i] + window_us) right++;
            size_t count = right - i;  // records in [ts[i], ts[i]+window)
            bool violating = double(count) > rule.max_rate_hz * window_s;
            if (!violating) continue;
            uint64_t span_end = ts[i] + window_us;
            if (open && ts[i] <= open->window_end_us) {
                open->window_end_us = std::max(open->window_end_us, span_end);
                peak_count = std::max(peak_count, double(count));
            } else {
                if (open) {
                    open->observed_rate_hz = peak_count / window_s;
                    open->severity = open->observed_rate_hz >= 2 * rule.max_rate_hz
                                         ? Severity::critical
                                         : Severity::warning;
                    alerts.push_back(*open);
                }
                open = Alert{rule.rule_id, batch.vehicle_id, ts[i], span_end, 0,
                             Severity::warning};
                peak_count = double(count);
            }
        }
        if (open) {
            open->observed_rate_hz = peak_count / window_s;
            open->severity = open->observed_rate_hz >= 2 * rule.max_rate_hz ? Severity::critical
                                                                            : Severity::warning;
            alerts.push_back(*open);
        }
    }
    return alerts;
}

std::vector<RateAnomaly> detect_rate_anomalies(const LogBatch& batch, double z_threshold) {
    std::map<uint16_t, std::map<uint64_t, uint64_t>> bins;  // id -> second -> count
    for (const auto& r : batch.records) bins[r.can_id][r.timestamp_us / 1'000'000ull] += 1;

    std::vector<RateAnomaly> out;
    for (const auto& [id, series] : bins) {
        uint64_t span = batch.window_seconds > 0 ? batch.window_seconds
                                                 : series.rbegin()->first + 1;
        if (span < 10) continue;

        // Per-second rates including the silent seconds; a robust
        // median/MAD score keeps steady traffic from flagging itself.
        std::vector<double> rates(size_t(span), 0.0);
        double sum = 0, peak = 0;
        for (const auto& [sec, c] : series) {
            if (sec < span) rates[size_t(sec)] = double(c);
            sum += double(c);
            peak = std::max(peak, double(c));
        }
        std::vector<double> sorted = rates;
        std::sort(sorted.begin(), sorted.end());
        double median = sorted[sorted.size() / 2];
        std::vector<double> dev;
        dev.reserve(sorted.size());
        for (double r : rates) dev.push_back(std::abs(r - median));
        std::sort(dev.begin(), dev.end());
        double mad = dev[dev.size() / 2];

        double z = mad > 0 ? 0.6745 * (peak - median) / mad : peak - median;
        if (z > z_threshold) out.push_back({id, peak, sum / double(span), z});
    }
    return out;
}

Bytes BatchDigest::encode() const {
    ByteWriter w;
    w.lp_string(vehicle_id);
    w.u64(window_start_us);
    w.u64(window_end_us);
    w.u64(record_count);
    w.u64(encoded_size_bytes);
    w.raw(batch_hash);
    return w.take();
}

BatchDigest make_digest(const LogBatch& batch) {
    BatchDigest d;
    d.vehicle_id = batch.vehicle_id;
    if (!batch.records.empty()) {
        d.window_start_us = batch.records.front().timestamp_us;
        d.window_end_us = batch.records.back().timestamp_us;
    }
    d.record_count = batch.records.size();
    d.encoded_size_bytes = batch.encoded_size_bytes;
    d.batch_hash = crypto::sha256(batch.encode());
    return d;
}

// --- SiemService ---

SiemService::SiemService(EventBus* bus, std::vector<CorrelationRule> rules)
    : bus_(bus), rules_(std::move(rules)) {}

std::vector<Alert> SiemService::analyze_and_publish(const LogBatch& batch) {
    auto alerts = analyze_logs(batch, rules_);
    if (bus_) {
        for (const auto& a : alerts) {
            Event e;
            e.topic = "siem/alerts";
            e.payload = a.encode();
            e.criticality =
                a.severity == Severity::critical ? Criticality::critical : Criticality::standard;
            bus_->publish("vas_siem", std::move(e));
        }
    }
    return alerts;
}

void SiemService::forward_to_cloud(const std::vector<Alert>& alerts, const BatchDigest& digest,
                                   const Blob* raw_batch) {
    bool critical = std::any_of(alerts.begin(), alerts.end(), [](const Alert& a) {
        return a.severity == Severity::critical;
    });
    ByteWriter w;
    w.u8(cloudop::kSiemIngest);
    w.u16(uint16_t(alerts.size()));
    for (const auto& a : alerts) {
        Bytes enc = a.encode();
        w.u16(uint16_t(enc.size()));
        w.raw(enc);
    }
    Bytes digest_enc = digest.encode();
    w.u16(uint16_t(digest_enc.size()));
    w.raw(digest_enc);
    if (critical && raw_batch) {
        w.u8(1);
        w.u64(raw_batch->size());
        w.raw(raw_batch->data);
        // synthetic batches forward their byte count only
    } else {
        w.u8(0);
    }
    Bytes payload = w.take();
    if (!try_ingest(payload)) {
        if (retry_.size() >= kRetryQueueCap) retry_.pop_front();
        retry_.push_back(std::move(payload));
    }
}

bool SiemService::try_ingest(const Bytes& payload) {
    if (!cloud_) return false;
    try {
        WireMsg reply = cloud_->request(encode_frame({MsgType::vas_data, payload}));
        Frame f = decode_frame(reply);
        return !f.body.empty() && f.body[0] == cloudop::kSiemAck;
    } catch (const TransportError&) {
        return false;
    }
}

size_t SiemService::retry_pending() {
    size_t sent = 0;
    while (!retry_.empty()) {
        if (!try_ingest(retry_.front())) break;
        retry_.pop_front();
        sent += 1;
    }
    return sent;
}

FlParameters SiemService::pull_fl_parameters() {
    if (fl_cache_ && fl_cache_->model_version >= cloud_fl_version_) return *fl_cache_;
    if (!cloud_) {
        if (fl_cache_) return *fl_cache_;
        throw UnavailableError("no FL parameters cached and no cloud link");
    }
    ByteWriter w;
    w.u8(cloudop::kFlFetch);
    WireMsg reply;
    try {
        reply = cloud_->request(encode_frame({MsgType::vas_data, w.take()}));
    } catch (const TransportError&) {
        if (fl_cache_) return *fl_cache_;
        throw UnavailableError("FL parameters unavailable: cloud unreachable");
    }
    Frame f = decode_frame(reply);
    if (f.body.empty() || f.body[0] != cloudop::kFlBlob)
        throw UnavailableError("cloud has no FL parameters");
    ByteReader r(ByteSpan(f.body.data() + 1, f.body.size() - 1));
    FlParameters fl;
    fl.model_version = r.u64();
    fl.blob = r.raw(r.remaining());
    fl_cache_ = fl;
    if (fl.model_version > cloud_fl_version_) cloud_fl_version_ = fl.model_version;
    return fl;
}

void SiemService::note_cloud_fl_version(uint64_t version) {
    cloud_fl_version_ = std::max(cloud_fl_version_, version);
}

std::vector<Alert> SiemService::analyze_next() {
    if (batches_.empty()) throw StateError("no uploaded batch queued for analysis");
    LogBatch batch = std::move(batches_.front());
    batches_.pop_front();
    auto alerts = analyze_and_publish(batch);
    Blob raw = Blob::real(batch.encode());
    forward_to_cloud(alerts, make_digest(batch), &raw);
    return alerts;
}

}  // namespace evolve
