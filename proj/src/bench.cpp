#include "evolve/bench.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "evolve/errors.hpp"
#include "evolve/platform.hpp"

namespace evolve {

void Scenario::validate() const {
    if (samples < 1) throw UsageError("samples must be >= 1");
    if (name == Name::micropayments) {
        if (bursts.empty()) throw UsageError("micropayments needs a bursts list");
        for (int n : bursts)
            if (n < 1) throw UsageError("burst counts must be >= 1 in scenario runs");
    }
}

Scenario::Name scenario_from_string(const std::string& s) {
    if (s == "stability") return Scenario::Name::stability;
    if (s == "updates") return Scenario::Name::updates;
    if (s == "siem_upload") return Scenario::Name::siem_upload;
    if (s == "fl_pull") return Scenario::Name::fl_pull;
    if (s == "naive_payment") return Scenario::Name::naive_payment;
    if (s == "micropayments") return Scenario::Name::micropayments;
    throw UsageError("unknown scenario: " + s);
}

const char* to_string(Scenario::Name name) {
    switch (name) {
        case Scenario::Name::stability: return "stability";
        case Scenario::Name::updates: return "updates";
        case Scenario::Name::siem_upload: return "siem_upload";
        case Scenario::Name::fl_pull: return "fl_pull";
        case Scenario::Name::naive_payment: return "naive_payment";
        case Scenario::Name::micropayments: return "micropayments";
    }
    return "?";
}

namespace {

struct ScenarioWorld {
    Platform platform;
    std::vector<uint16_t> services;
    Session session;
    double handshake_ms = 0;

    ScenarioWorld(const Scenario& sc, std::vector<uint16_t> svcs, PlatformConfig config)
        : platform(std::move(config)), services(std::move(svcs)) {
        (void)sc;
        platform.add_vehicle();
        reconnect();
    }

    void reconnect() {
        auto connected = platform.connect(0, services);
        session = std::move(connected.session);
        handshake_ms = connected.handshake_ms;
    }

    void maybe_reconnect(const Scenario& sc, int sample) {
        if (sc.reconnect_per_sample && sample > 0) reconnect();
    }
};

PlatformConfig config_for(const Scenario& sc) {
    PlatformConfig pc;
    pc.vehicle_profile = LinkProfile::resolve(sc.profile, sc.extra_profiles);
    pc.transport = sc.transport;
    pc.seed = sc.seed;
    return pc;
}

Measurement base_measurement(const Scenario& sc, int index, double handshake_ms) {
    Measurement m;
    m.scenario = to_string(sc.name);
    m.profile = LinkProfile::resolve(sc.profile, sc.extra_profiles).name;
    m.transport = to_string(sc.transport.kind);
    m.sample_index = index;
    m.handshake_ms = handshake_ms;
    return m;
}

std::vector<Measurement> run_stability(const Scenario& sc) {
    ScenarioWorld world(sc, {}, config_for(sc));
    std::vector<Measurement> out;
    for (int i = 0; i < sc.samples; i++) {
        world.maybe_reconnect(sc, i);
        ByteWriter w;
        w.u8(vasop::kPing);
        w.u32(uint32_t(kSmallPayloadBytes));
        double start = world.session.conduit->link().now_ms();
        vas_request(world.session, kSvcCharging, w.take(), 0, kSmallPayloadBytes);
        Measurement m = base_measurement(sc, i, world.handshake_ms);
        m.request_bytes = kSmallPayloadBytes;
        m.response_bytes = kSmallPayloadBytes;
        m.rtt_ms = world.session.conduit->link().now_ms() - start;
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<Measurement> run_updates(const Scenario& sc) {
    ScenarioWorld world(sc, {kSvcUpdates}, config_for(sc));
    // Pre-seed the charger cache so every sample is a pure vehicle-link
    // download, as in the cache-less benchmark setup.
    auto repo_keys = crypto::KeyPair::from_seed(SeededRng::derive(sc.seed, 0xFE0));
    Blob image = Blob::zeros(kUpdateImageBytes);
    auto manifest = make_signed_manifest(repo_keys, "ecu-bench", Version{1, 2, 0}, image);
    world.platform.charger().set_repo_key(repo_keys.pk);
    world.platform.charger().updates().notify_update(manifest);
    world.platform.charger().cache().put(manifest, image);

    std::vector<Measurement> out;
    for (int i = 0; i < sc.samples; i++) {
        world.maybe_reconnect(sc, i);
        double start = world.session.conduit->link().now_ms();
        auto got = request_update(world.session, "ecu-bench", Version{1, 0, 0},
                                  kSmallPayloadBytes);
        if (!got) throw StateError("benchmark image missing from cache");
        Measurement m = base_measurement(sc, i, world.handshake_ms);
        m.request_bytes = kSmallPayloadBytes;
        m.response_bytes = kUpdateImageBytes;
        m.rtt_ms = world.session.conduit->link().now_ms() - start;
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<Measurement> run_siem_upload(const Scenario& sc) {
    ScenarioWorld world(sc, {kSvcSiem}, config_for(sc));
    Blob payload = Blob::zeros(kLogUploadBytes);
    std::vector<Measurement> out;
    for (int i = 0; i < sc.samples; i++) {
        world.maybe_reconnect(sc, i);
        double start = world.session.conduit->link().now_ms();
        upload_log_bytes(world.session, payload, "veh-bench", 600);
        Measurement m = base_measurement(sc, i, world.handshake_ms);
        m.request_bytes = kLogUploadBytes;
        m.response_bytes = kAckBytes;
        m.rtt_ms = world.session.conduit->link().now_ms() - start;
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<Measurement> run_fl_pull(const Scenario& sc) {
    ScenarioWorld world(sc, {kSvcSiem}, config_for(sc));
    world.platform.siem_backend().put_fl_parameters(1, sc.seed);
    // Prime the charger cache; the samples measure the vehicle link only.
    world.platform.charger().siem().pull_fl_parameters();

    std::vector<Measurement> out;
    for (int i = 0; i < sc.samples; i++) {
        world.maybe_reconnect(sc, i);
        double start = world.session.conduit->link().now_ms();
        pull_fl_parameters(world.session, kSmallPayloadBytes);
        Measurement m = base_measurement(sc, i, world.handshake_ms);
        m.request_bytes = kSmallPayloadBytes;
        m.response_bytes = kFlPullBytes;
        m.rtt_ms = world.session.conduit->link().now_ms() - start;
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<Measurement> run_naive_payment(const Scenario& sc) {
    ScenarioWorld world(sc, {kSvcPayments}, config_for(sc));
    Vehicle& veh = world.platform.vehicle();
    std::vector<Measurement> out;
    for (int i = 0; i < sc.samples; i++) {
        world.maybe_reconnect(sc, i);
        VehicleWallet wallet(veh.credentials.keys, world.session.session_id,
                             world.platform.charger().keys().pk, Tariff{25, 100});
        double start = world.session.conduit->link().now_ms();
        naive_payment(world.session, wallet, 2500);
        Measurement m = base_measurement(sc, i, world.handshake_ms);
        m.request_bytes = kSmallPayloadBytes;
        m.response_bytes = kSmallPayloadBytes;
        m.rtt_ms = world.session.conduit->link().now_ms() - start;
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<Measurement> run_micropayments(const Scenario& sc) {
    std::vector<Measurement> out;
    int index = 0;
    for (int n : sc.bursts) {
        for (int s = 0; s < sc.samples; s++) {
            Scenario one = sc;
            one.seed = SeededRng::derive(sc.seed, uint64_t(n) * 1000 + uint64_t(s));
            ScenarioWorld world(one, {kSvcPayments}, config_for(one));
            Vehicle& veh = world.platform.vehicle();
            VehicleWallet wallet(veh.credentials.keys, world.session.session_id,
                                 world.platform.charger().keys().pk, Tariff{25, 100});
            start_micropayment_session(world.session, Tariff{25, 100});

            double start = world.session.conduit->link().now_ms();
            for (int k = 0; k < n; k++) micropayment_burst(world.session, wallet);
            double total = world.session.conduit->link().now_ms() - start;
            reconcile_micropayments(world.session, wallet);

            Measurement m = base_measurement(sc, index++, world.handshake_ms);
            m.request_bytes = uint64_t(n) * kSmallPayloadBytes;
            m.response_bytes = uint64_t(n) * kSmallPayloadBytes;
            m.rtt_ms = total;
            out.push_back(std::move(m));
        }
    }
    return out;
}

}  // namespace

std::vector<Measurement> run_scenario(const Scenario& scenario) {
    scenario.validate();
    switch (scenario.name) {
        case Scenario::Name::stability: return run_stability(scenario);
        case Scenario::Name::updates: return run_updates(scenario);
        case Scenario::Name::siem_upload: return run_siem_upload(scenario);
        case Scenario::Name::fl_pull: return run_fl_pull(scenario);
        case Scenario::Name::naive_payment: return run_naive_payment(scenario);
        case Scenario::Name::micropayments: return run_micropayments(scenario);
    }
    throw UsageError("unhandled scenario");
}

double micropayment_latency_ms(const LinkProfile& profile, const TransportModel& transport,
                               int n_bursts, uint64_t seed) {
    if (n_bursts < 0) throw UsageError("n_bursts must be >= 0");
    PlatformConfig pc;
    pc.vehicle_profile = profile;
    pc.transport = transport;
    pc.seed = seed;
    Platform platform(std::move(pc));
    platform.add_vehicle();
    auto connected = platform.connect(0, {kSvcPayments});
    VehicleWallet wallet(platform.vehicle().credentials.keys, connected.session.session_id,
                         platform.charger().keys().pk, Tariff{25, 100});
    start_micropayment_session(connected.session, Tariff{25, 100});

    double start = connected.session.conduit->link().now_ms();
    for (int k = 0; k < n_bursts; k++) micropayment_burst(connected.session, wallet);
    double total = connected.session.conduit->link().now_ms() - start;
    reconcile_micropayments(connected.session, wallet);
    return total;
}

// --- CSV and summaries ---

namespace {
constexpr const char* kCsvHeader =
    "scenario,profile,transport,sample,request_bytes,response_bytes,handshake_ms,rtt_ms";
}

void write_csv(std::ostream& out, const std::vector<Measurement>& measurements) {
    out << kCsvHeader << "\n";
    out << std::fixed << std::setprecision(6);
    for (const auto& m : measurements) {
        out << m.scenario << ',' << m.profile << ',' << m.transport << ',' << m.sample_index
            << ',' << m.request_bytes << ',' << m.response_bytes << ',' << m.handshake_ms << ','
            << m.rtt_ms << "\n";
    }
}

std::vector<Measurement> read_csv(std::istream& in) {
    std::vector<Measurement> out;
    std::string line;
    size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        line_no++;
        if (line.empty()) continue;
        if (!saw_header) {
            if (line != kCsvHeader)
                throw ValidationError("line " + std::to_string(line_no) + ": bad CSV header");
            saw_header = true;
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 8)
            throw ValidationError("line " + std::to_string(line_no) + ": expected 8 fields, got " +
                                  std::to_string(fields.size()));
        try {
            Measurement m;
            m.scenario = fields[0];
            m.profile = fields[1];
            m.transport = fields[2];
            m.sample_index = std::stoi(fields[3]);
            m.request_bytes = std::stoull(fields[4]);
            m.response_bytes = std::stoull(fields[5]);
            m.handshake_ms = std::stod(fields[6]);
            m.rtt_ms = std::stod(fields[7]);
            if (m.rtt_ms <= 0)
                throw ValidationError("line " + std::to_string(line_no) + ": rtt_ms must be > 0");
            out.push_back(std::move(m));
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception&) {
            throw ValidationError("line " + std::to_string(line_no) + ": malformed row");
        }
    }
    return out;
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0;
    double s = 0;
    for (double x : xs) s += x;
    return s / double(xs.size());
}

double stdev_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0;
    double m = mean_of(xs);
    double s = 0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / double(xs.size() - 1));
}

double percentile_of(std::vector<double> xs, double q) {
    if (xs.empty()) return 0;
    std::sort(xs.begin(), xs.end());
    size_t rank = size_t(std::ceil(q * double(xs.size())));
    if (rank == 0) rank = 1;
    if (rank > xs.size()) rank = xs.size();
    return xs[rank - 1];
}

LineFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
    LineFit fit;
    size_t n = std::min(xs.size(), ys.size());
    if (n < 2) return fit;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < n; i++) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    double denom = double(n) * sxx - sx * sx;
    if (denom == 0) return fit;
    fit.slope = (double(n) * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / double(n);
    double ss_tot = 0, ss_res = 0, my = sy / double(n);
    for (size_t i = 0; i < n; i++) {
        double pred = fit.slope * xs[i] + fit.intercept;
        ss_tot += (ys[i] - my) * (ys[i] - my);
        ss_res += (ys[i] - pred) * (ys[i] - pred);
    }
    fit.r_squared = ss_tot == 0 ? 1.0 : 1.0 - ss_res / ss_tot;
    return fit;
}

std::vector<SummaryRow> summarize(const std::vector<Measurement>& measurements) {
    std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
    for (const auto& m : measurements) groups[{m.scenario, m.profile}].push_back(m.rtt_ms);

    std::vector<SummaryRow> rows;
    for (const auto& [key, rtts] : groups) {
        SummaryRow r;
        r.scenario = key.first;
        r.profile = key.second;
        r.samples = rtts.size();
        r.mean_ms = mean_of(rtts);
        r.p50_ms = percentile_of(rtts, 0.50);
        r.p95_ms = percentile_of(rtts, 0.95);
        r.stdev_ms = stdev_of(rtts);
        r.coefficient_of_variation = r.mean_ms > 0 ? r.stdev_ms / r.mean_ms : 0;
        rows.push_back(std::move(r));
    }
    return rows;  // std::map iteration gives deterministic ordering
}

std::string render_table(const std::vector<SummaryRow>& rows) {
    std::ostringstream out;
    out << std::left << std::setw(16) << "scenario" << std::setw(12) << "profile" << std::right
        << std::setw(8) << "n" << std::setw(14) << "mean_ms" << std::setw(14) << "p50_ms"
        << std::setw(14) << "p95_ms" << std::setw(12) << "stdev_ms" << std::setw(8) << "cv"
        << "\n";
    out << std::fixed;
    for (const auto& r : rows) {
        out << std::left << std::setw(16) << r.scenario << std::setw(12) << r.profile
            << std::right << std::setw(8) << r.samples << std::setprecision(3) << std::setw(14)
            << r.mean_ms << std::setw(14) << r.p50_ms << std::setw(14) << r.p95_ms
            << std::setw(12) << r.stdev_ms << std::setprecision(4) << std::setw(8)
            << r.coefficient_of_variation << "\n";
    }
    return out.str();
}

std::string render_dat(const std::vector<SummaryRow>& rows) {
    std::ostringstream out;
    out << "# scenario profile samples mean_ms p50_ms p95_ms stdev_ms cv\n";
    out << std::fixed << std::setprecision(6);
    for (const auto& r : rows) {
        out << r.scenario << ' ' << r.profile << ' ' << r.samples << ' ' << r.mean_ms << ' '
            << r.p50_ms << ' ' << r.p95_ms << ' ' << r.stdev_ms << ' '
            << r.coefficient_of_variation << "\n";
    }
    return out.str();
}

}  // namespace evolve
