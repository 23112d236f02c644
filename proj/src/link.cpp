#include "evolve/link.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "evolve/errors.hpp"

namespace evolve {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

// PLC links are wired and stable; cellular links wander. Values chosen so
// that 300-sample runs land at a coefficient of variation below 0.05 for PLC
// and above 0.15 for cellular.
constexpr double kPlcJitter = 0.03;
constexpr double kCellularJitter = 0.45;

}  // namespace

void LinkProfile::validate() const {
    if (name.empty()) throw ValidationError("link profile needs a name");
    if (!(rate_mbps > 0)) throw ValidationError(name + ": rate_mbps must be > 0");
    if (one_way_latency_ms < 0) throw ValidationError(name + ": latency must be >= 0");
    if (plr_percent < 0 || plr_percent >= 100)
        throw ValidationError(name + ": plr_percent must be in [0, 100)");
    if (jitter_fraction < 0 || jitter_fraction >= 1)
        throw ValidationError(name + ": jitter_fraction must be in [0, 1)");
}

const std::vector<LinkProfile>& LinkProfile::builtins() {
    static const std::vector<LinkProfile> profiles = {
        {"EVolve10", 10, 2, 0, kPlcJitter},
        {"EVolve100", 100, 2, 0, kPlcJitter},
        {"EVolve1G", 1000, 2, 0, kPlcJitter},
        {"4G", 30, 36, 0.2, kCellularJitter},
        {"5G", 100, 17, 0.2, kCellularJitter},
    };
    return profiles;
}

LinkProfile LinkProfile::builtin(const std::string& name) {
    std::string key = lower(name);
    for (const auto& p : builtins())
        if (lower(p.name) == key) return p;
    throw ConfigError("unknown link profile: " + name);
}

std::vector<LinkProfile> LinkProfile::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open profile config: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad profile config " + path.string() + ": " + e.what());
    }
    if (!doc.is_array()) throw ConfigError("profile config must be a JSON array");
    std::vector<LinkProfile> out;
    for (const auto& item : doc) {
        LinkProfile p;
        try {
            p.name = item.at("name").get<std::string>();
            p.rate_mbps = item.at("rate_mbps").get<double>();
            p.one_way_latency_ms = item.at("one_way_latency_ms").get<double>();
            p.plr_percent = item.at("plr_percent").get<double>();
            p.jitter_fraction = item.at("jitter_fraction").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("bad profile entry: ") + e.what());
        }
        p.validate();
        out.push_back(std::move(p));
    }
    return out;
}

LinkProfile LinkProfile::resolve(const std::string& name, const std::vector<LinkProfile>& extra) {
    std::string key = lower(name);
    for (const auto& p : extra)
        if (lower(p.name) == key) return p;
    return builtin(name);
}

void TransportModel::validate() const {
    if (mss_bytes == 0) throw ValidationError("mss_bytes must be > 0");
}

const char* to_string(TransportModel::Kind kind) {
    return kind == TransportModel::Kind::ideal ? "ideal" : "loss";
}

TransportModel::Kind transport_kind_from_string(const std::string& s) {
    std::string k = lower(s);
    if (k == "ideal") return TransportModel::Kind::ideal;
    if (k == "loss" || k == "loss_throttled") return TransportModel::Kind::loss_throttled;
    throw UsageError("unknown transport model: " + s);
}

double effective_rate_mbps(const LinkProfile& profile, const TransportModel& model) {
    profile.validate();
    model.validate();
    if (model.kind == TransportModel::Kind::ideal || profile.plr_percent == 0)
        return profile.rate_mbps;
    double p = profile.plr_percent / 100.0;
    double rtt_s = 2.0 * profile.one_way_latency_ms / 1000.0;
    if (rtt_s <= 0) return profile.rate_mbps;
    double cap = double(model.mss_bytes) * 8.0 / (rtt_s * std::sqrt(p)) / 1e6;
    return std::min(profile.rate_mbps, cap);
}

double model_transfer_time_ms(const LinkProfile& profile, const TransportModel& model,
                              uint64_t request_bytes, uint64_t response_bytes) {
    if (request_bytes < 1) throw ValidationError("request_bytes must be >= 1");
    double rate = effective_rate_mbps(profile, model);
    double serialization_ms = double(request_bytes + response_bytes) * 8.0 / (rate * 1000.0);
    return 2.0 * profile.one_way_latency_ms + serialization_ms;
}

EmulatedLink::EmulatedLink(LinkProfile profile, TransportModel model, uint64_t seed)
    : profile_(std::move(profile)),
      model_(model),
      rate_eff_mbps_(effective_rate_mbps(profile_, model_)),
      rng_(seed) {}

double EmulatedLink::sample_one_way_delay_ms() {
    double u = rng_.symmetric();  // one draw per message, jitter 0 included
    return profile_.one_way_latency_ms * (1.0 + profile_.jitter_fraction * u);
}

void EmulatedLink::send(Side from, WireMsg msg) {
    Tap tap;
    Fault fault;
    {
        std::lock_guard lock(mu_);
        if (closed_) throw LinkDownError("link closed");
        tap = tap_;
        fault = fault_;
    }
    // Callbacks run unlocked; a tap may close or down the link.
    if (tap) tap(from, msg);
    if (fault) fault(from, msg);

    std::lock_guard lock(mu_);
    if (closed_) throw LinkDownError("link closed");
    if (down_) return;  // dropped on the floor

    auto& d = dir(from);
    uint64_t size = msg.wire_size();
    double depart = std::max(clock_ms_, d.busy_until_ms);
    double serialization = double(size) * 8.0 / (rate_eff_mbps_ * 1000.0);
    double arrival = depart + serialization + sample_one_way_delay_ms();
    arrival = std::max(arrival, d.last_arrival_ms);  // FIFO per direction

    d.busy_until_ms = depart + serialization;
    d.last_arrival_ms = arrival;
    d.bytes_sent += size;
    d.messages_sent += 1;
    if (model_.kind == TransportModel::Kind::loss_throttled && profile_.plr_percent > 0) {
        double packets = std::ceil(double(size) / double(model_.mss_bytes));
        d.retrans_accum += packets * profile_.plr_percent / 100.0;
    }
    dir(peer(from)).inbox.push_back({arrival, std::move(msg)});
}

std::optional<WireMsg> EmulatedLink::recv(Side to) {
    std::lock_guard lock(mu_);
    auto& inbox = dir(to).inbox;
    if (inbox.empty()) return std::nullopt;
    Delivery d = std::move(inbox.front());
    inbox.pop_front();
    clock_ms_ = std::max(clock_ms_, d.arrival_ms);
    return std::move(d.msg);
}

bool EmulatedLink::pending(Side to) const {
    std::lock_guard lock(mu_);
    return !dir(to).inbox.empty();
}

double EmulatedLink::now_ms() const {
    std::lock_guard lock(mu_);
    return clock_ms_;
}

void EmulatedLink::advance_ms(double ms) {
    std::lock_guard lock(mu_);
    clock_ms_ += ms;
}

void EmulatedLink::advance_to_ms(double t) {
    std::lock_guard lock(mu_);
    clock_ms_ = std::max(clock_ms_, t);
}

void EmulatedLink::close() {
    std::lock_guard lock(mu_);
    closed_ = true;
}

bool EmulatedLink::closed() const {
    std::lock_guard lock(mu_);
    return closed_;
}

void EmulatedLink::set_down(bool down) {
    std::lock_guard lock(mu_);
    down_ = down;
}

bool EmulatedLink::down() const {
    std::lock_guard lock(mu_);
    return down_;
}

void EmulatedLink::set_tap(Tap tap) {
    std::lock_guard lock(mu_);
    tap_ = std::move(tap);
}

void EmulatedLink::set_fault(Fault fault) {
    std::lock_guard lock(mu_);
    fault_ = std::move(fault);
}

uint64_t EmulatedLink::bytes_sent(Side from) const {
    std::lock_guard lock(mu_);
    return dir(from).bytes_sent;
}

uint64_t EmulatedLink::messages_sent(Side from) const {
    std::lock_guard lock(mu_);
    return dir(from).messages_sent;
}

uint64_t EmulatedLink::retransmissions(Side from) const {
    std::lock_guard lock(mu_);
    return uint64_t(dir(from).retrans_accum);
}

std::unique_ptr<EmulatedLink> open_link(const LinkProfile& profile, const TransportModel& model,
                                        uint64_t seed) {
    profile.validate();
    model.validate();
    return std::make_unique<EmulatedLink>(profile, model, seed);
}

std::vector<Measurement> rtt_benchmark(EmulatedLink& link, uint64_t request_bytes,
                                       uint64_t response_bytes, int samples) {
    if (samples < 1) throw ValidationError("samples must be >= 1");
    if (request_bytes < 1) throw ValidationError("request_bytes must be >= 1");
    std::vector<Measurement> out;
    out.reserve(size_t(samples));

    auto make_msg = [](uint64_t size) {
        WireMsg m;
        size_t real = size_t(std::min<uint64_t>(size, 8));
        m.head.assign(real, 0xA5);
        m.synthetic = size - real;
        return m;
    };

    for (int i = 0; i < samples; i++) {
        try {
            double start = link.now_ms();
            link.send(Side::a, make_msg(request_bytes));
            auto req = link.recv(Side::b);
            if (!req) throw TransportError("echo peer saw no request");
            link.send(Side::b, make_msg(response_bytes));
            auto resp = link.recv(Side::a);
            if (!resp) throw TransportError("no response on link");
            Measurement m;
            m.scenario = "rtt";
            m.profile = link.profile().name;
            m.transport = to_string(link.transport().kind);
            m.sample_index = i;
            m.request_bytes = request_bytes;
            m.response_bytes = response_bytes;
            m.rtt_ms = link.now_ms() - start;
            out.push_back(std::move(m));
        } catch (const LinkDownError&) {
            throw BenchmarkAborted(std::move(out));
        }
    }
    return out;
}

}  // namespace evolve
