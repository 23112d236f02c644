#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "evolve/errors.hpp"
#include "evolve/link.hpp"

using namespace evolve;

namespace {
constexpr uint64_t kKB = 1024;
constexpr uint64_t kMB = 1'000'000;
constexpr uint64_t k100MB = 100'000'000;

WireMsg msg_of(uint64_t size) {
    WireMsg m;
    m.head.assign(size_t(std::min<uint64_t>(size, 8)), 1);
    m.synthetic = size - m.head.size();
    return m;
}
}  // namespace

TEST_CASE("built-in profiles match the published table exactly") {
    struct Row { const char* name; double rate, lat, plr; };
    const Row rows[] = {{"EVolve10", 10, 2, 0},
                        {"EVolve100", 100, 2, 0},
                        {"EVolve1G", 1000, 2, 0},
                        {"4G", 30, 36, 0.2},
                        {"5G", 100, 17, 0.2}};
    for (const auto& r : rows) {
        auto p = LinkProfile::builtin(r.name);
        CHECK(p.rate_mbps == r.rate);
        CHECK(p.one_way_latency_ms == r.lat);
        CHECK(p.plr_percent == r.plr);
    }
    // case-insensitive lookup
    CHECK(LinkProfile::builtin("evolve1g").name == "EVolve1G");
    CHECK(LinkProfile::builtin("5g").name == "5G");
    CHECK_THROWS_AS(LinkProfile::builtin("6G"), ConfigError);
}

TEST_CASE("profile validation rejects out-of-range fields") {
    LinkProfile p{"bad", 0, 2, 0, 0};
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = {"bad", 10, -1, 0, 0};
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = {"bad", 10, 2, 100, 0};
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = {"bad", 10, 2, 0, 1.0};
    CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("effective rate: identity without loss, Mathis cap with loss") {
    auto ideal = TransportModel::ideal();
    auto loss = TransportModel::loss();
    CHECK(effective_rate_mbps(LinkProfile::builtin("EVolve100"), ideal) == 100.0);
    // zero-loss identity for every PLC profile
    for (const char* name : {"EVolve10", "EVolve100", "EVolve1G"})
        CHECK(effective_rate_mbps(LinkProfile::builtin(name), ideal) ==
              effective_rate_mbps(LinkProfile::builtin(name), loss));
    // hand-evaluated Mathis caps: 1460*8 / (2*latency/1000 * sqrt(0.002)) / 1e6
    CHECK(effective_rate_mbps(LinkProfile::builtin("5G"), loss) ==
          doctest::Approx(7.681551169763982).epsilon(1e-9));
    CHECK(effective_rate_mbps(LinkProfile::builtin("4G"), loss) ==
          doctest::Approx(3.627399163499659).epsilon(1e-9));
}

TEST_CASE("analytical transfer time matches hand-computed values") {
    auto ideal = TransportModel::ideal();
    auto loss = TransportModel::loss();
    CHECK(model_transfer_time_ms(LinkProfile::builtin("EVolve10"), ideal, kKB, k100MB) ==
          doctest::Approx(80004.8192).epsilon(1e-9));
    CHECK(model_transfer_time_ms(LinkProfile::builtin("EVolve1G"), ideal, kKB, k100MB) ==
          doctest::Approx(804.008192).epsilon(1e-9));
    CHECK(model_transfer_time_ms(LinkProfile::builtin("EVolve100"), ideal, kKB, kKB) ==
          doctest::Approx(4.16384).epsilon(1e-9));
    CHECK(model_transfer_time_ms(LinkProfile::builtin("5G"), loss, k100MB, 64) ==
          doctest::Approx(104179.698481962).epsilon(1e-6));
    CHECK_THROWS_AS(
        model_transfer_time_ms(LinkProfile::builtin("EVolve10"), ideal, 0, kKB),
        ValidationError);
}

TEST_CASE("transfer time is strictly increasing in total payload") {
    auto ideal = TransportModel::ideal();
    for (const auto& p : LinkProfile::builtins()) {
        double prev = 0;
        for (uint64_t total : {uint64_t(1), kKB, 64 * kKB, kMB, 10 * kMB, k100MB}) {
            double t = model_transfer_time_ms(p, ideal, total, 0);
            CHECK(t > prev);
            prev = t;
        }
    }
}

TEST_CASE("identical seed and traffic give identical timings") {
    for (int round = 0; round < 2; round++) {
        auto a = open_link(LinkProfile::builtin("EVolve100"), TransportModel::ideal(), 42);
        auto b = open_link(LinkProfile::builtin("EVolve100"), TransportModel::ideal(), 42);
        auto ma = rtt_benchmark(*a, kKB, kKB, 20);
        auto mb = rtt_benchmark(*b, kKB, kKB, 20);
        REQUIRE(ma.size() == mb.size());
        for (size_t i = 0; i < ma.size(); i++) CHECK(ma[i].rtt_ms == mb[i].rtt_ms);
    }
    // two identical transfers on one 5G link with the same per-message draws
    auto l1 = open_link(LinkProfile::builtin("5G"), TransportModel::ideal(), 7);
    auto l2 = open_link(LinkProfile::builtin("5G"), TransportModel::ideal(), 7);
    auto m1 = rtt_benchmark(*l1, kMB, 64, 5);
    auto m2 = rtt_benchmark(*l2, kMB, 64, 5);
    for (size_t i = 0; i < m1.size(); i++) CHECK(m1[i].rtt_ms == m2[i].rtt_ms);
}

TEST_CASE("jitter bounds and latency floor hold for every sample") {
    for (const auto& p : LinkProfile::builtins()) {
        auto link = open_link(p, TransportModel::ideal(), 11);
        auto ms = rtt_benchmark(*link, kKB, kKB, 200);
        double floor = 2 * p.one_way_latency_ms * (1 - p.jitter_fraction);
        double ser = model_transfer_time_ms(p, TransportModel::ideal(), kKB, kKB) -
                     2 * p.one_way_latency_ms;
        double ceil = 2 * p.one_way_latency_ms * (1 + p.jitter_fraction) + ser + 1e-9;
        for (const auto& m : ms) {
            CHECK(m.rtt_ms >= floor);
            CHECK(m.rtt_ms <= ceil);
        }
    }
}

TEST_CASE("5G exchange duration sits in the jitter envelope") {
    auto p = LinkProfile::builtin("5G");
    auto link = open_link(p, TransportModel::ideal(), 1);
    auto ms = rtt_benchmark(*link, kKB, kKB, 50);
    double ser = 2.0 * 1024 * 8 / (100 * 1000.0);
    for (const auto& m : ms) {
        CHECK(m.rtt_ms >= 34.0 * (1 - p.jitter_fraction) + ser - 1e-9);
        CHECK(m.rtt_ms <= 34.0 * (1 + p.jitter_fraction) + ser + 1e-9);
    }
}

TEST_CASE("emulated mean agrees with the analytical oracle") {
    // every built-in profile, payloads 1 KB / 1 MB / 100 MB, 100 samples
    for (const auto& p : LinkProfile::builtins()) {
        auto link = open_link(p, TransportModel::ideal(), 5);
        for (uint64_t payload : {kKB, kMB, k100MB}) {
            auto ms = rtt_benchmark(*link, payload, 64, 100);
            double sum = 0;
            for (const auto& m : ms) sum += m.rtt_ms;
            double mean = sum / double(ms.size());
            double oracle = model_transfer_time_ms(p, TransportModel::ideal(), payload, 64);
            CHECK(std::abs(mean - oracle) / oracle <= 2 * p.jitter_fraction);
        }
    }
}

TEST_CASE("a 1 KB to ACK exchange on EVolve10 lands near 4.87 ms") {
    auto link = open_link(LinkProfile::builtin("EVolve10"), TransportModel::ideal(), 7);
    auto ms = rtt_benchmark(*link, kKB, 64, 100);
    double sum = 0;
    for (const auto& m : ms) sum += m.rtt_ms;
    double mean = sum / double(ms.size());
    CHECK(mean == doctest::Approx(4.8704).epsilon(0.05));
}

TEST_CASE("closing the link mid-benchmark aborts with completed samples") {
    auto link = open_link(LinkProfile::builtin("EVolve100"), TransportModel::ideal(), 3);
    int sent = 0;
    link->set_tap([&](Side from, const WireMsg&) {
        if (from == Side::a && ++sent == 6) link->close();
    });
    try {
        rtt_benchmark(*link, kKB, kKB, 300);
        FAIL("expected BenchmarkAborted");
    } catch (const BenchmarkAborted& e) {
        CHECK(e.completed.size() == 5);
    }
}

TEST_CASE("one sample returns a list of length one") {
    auto link = open_link(LinkProfile::builtin("4G"), TransportModel::ideal(), 9);
    CHECK(rtt_benchmark(*link, kKB, kKB, 1).size() == 1);
}

TEST_CASE("5G vs EVolve100 small-payload mean ratio is at least 6") {
    auto plc = open_link(LinkProfile::builtin("EVolve100"), TransportModel::ideal(), 21);
    auto cell = open_link(LinkProfile::builtin("5G"), TransportModel::ideal(), 21);
    auto mp = rtt_benchmark(*plc, kKB, kKB, 300);
    auto mc = rtt_benchmark(*cell, kKB, kKB, 300);
    double sp = 0, sc = 0;
    for (const auto& m : mp) sp += m.rtt_ms;
    for (const auto& m : mc) sc += m.rtt_ms;
    CHECK(sc / sp >= 6.0);
}

TEST_CASE("pipelined frames accumulate serialization but share latency") {
    // 10 frames of 1 MB sent back to back arrive in order; total time is one
    // latency plus ten serializations, not ten latencies.
    auto p = LinkProfile::builtin("EVolve100");
    p.jitter_fraction = 0;
    auto link = open_link(p, TransportModel::ideal(), 1);
    for (int i = 0; i < 10; i++) link->send(Side::a, msg_of(kMB));
    double last = 0;
    for (int i = 0; i < 10; i++) {
        auto m = link->recv(Side::b);
        REQUIRE(m.has_value());
        CHECK(link->now_ms() >= last);
        last = link->now_ms();
    }
    double ser_one = double(kMB) * 8 / (100 * 1000);
    CHECK(last == doctest::Approx(10 * ser_one + 2.0).epsilon(1e-9));
}

TEST_CASE("byte meters count wire bytes per direction") {
    auto link = open_link(LinkProfile::builtin("EVolve100"), TransportModel::ideal(), 2);
    link->send(Side::a, msg_of(1000));
    link->send(Side::b, msg_of(50));
    CHECK(link->bytes_sent(Side::a) == 1000);
    CHECK(link->bytes_sent(Side::b) == 50);
}

TEST_CASE("loss-throttled sends accumulate expected retransmissions") {
    auto link = open_link(LinkProfile::builtin("5G"), TransportModel::loss(), 2);
    link->send(Side::a, msg_of(kMB));  // ~685 packets at 0.2% loss
    CHECK(link->retransmissions(Side::a) >= 1);
    auto ideal = open_link(LinkProfile::builtin("5G"), TransportModel::ideal(), 2);
    ideal->send(Side::a, msg_of(kMB));
    CHECK(ideal->retransmissions(Side::a) == 0);
}

TEST_CASE("profiles load from a JSON config file") {
    auto path = std::filesystem::temp_directory_path() / "evolve_profiles_test.json";
    {
        std::ofstream out(path);
        out << R"([{"name":"lab","rate_mbps":42,"one_way_latency_ms":3,)"
            << R"("plr_percent":0.5,"jitter_fraction":0.1}])";
    }
    auto profiles = LinkProfile::load_file(path);
    REQUIRE(profiles.size() == 1);
    CHECK(profiles[0].name == "lab");
    CHECK(profiles[0].rate_mbps == 42);
    CHECK(LinkProfile::resolve("LAB", profiles).rate_mbps == 42);
    CHECK(LinkProfile::resolve("4g", profiles).rate_mbps == 30);
    std::filesystem::remove(path);

    auto shipped = LinkProfile::load_file(std::filesystem::path(EVOLVE_CONFIG_DIR) /
                                          "profiles.json");
    REQUIRE(shipped.size() == 5);
    for (size_t i = 0; i < shipped.size(); i++) {
        CHECK(shipped[i].name == LinkProfile::builtins()[i].name);
        CHECK(shipped[i].rate_mbps == LinkProfile::builtins()[i].rate_mbps);
        CHECK(shipped[i].jitter_fraction == LinkProfile::builtins()[i].jitter_fraction);
    }
}

TEST_CASE("transfer duration is never below twice the one-way latency") {
    auto link = open_link(LinkProfile::builtin("4G"), TransportModel::ideal(), 13);
    auto ms = rtt_benchmark(*link, 1, 1, 50);
    for (const auto& m : ms) CHECK(m.rtt_ms >= 2 * 36.0 * (1 - 0.45));
}
