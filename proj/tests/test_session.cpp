#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "evolve/charger.hpp"
#include "evolve/errors.hpp"
#include "evolve/handshake.hpp"
#include "evolve/platform.hpp"

using namespace evolve;

namespace {

PlatformConfig quick_config(uint64_t seed = 1) {
    PlatformConfig pc;
    pc.seed = seed;
    pc.with_cloud = false;
    return pc;
}

}  // namespace

TEST_CASE("SDP finds the one charger in scope") {
    Platform p(quick_config());
    p.add_vehicle();
    std::vector<Conduit*> scope = {&p.vehicle_conduit()};
    auto found = sdp_discover(scope, p.vehicle().rng);
    CHECK(found.response.charger_address == p.charger().sdp_info().charger_address);
    CHECK(found.response.port == 15118);
    CHECK(found.response.security_required);
    CHECK(found.elapsed_ms > 0);
}

TEST_CASE("SDP times out with no charger in scope") {
    Platform p(quick_config());
    p.add_vehicle();
    std::vector<Conduit*> scope;  // empty broadcast domain
    CHECK_THROWS_AS(sdp_discover(scope, p.vehicle().rng), TimeoutError);
}

TEST_CASE("SDP picks the lower-delay responder of two chargers") {
    ChargerConfig fast_cfg;
    fast_cfg.seed = 10;
    fast_cfg.address = 0x0A000001;
    ChargerConfig slow_cfg;
    slow_cfg.seed = 11;
    slow_cfg.address = 0x0A000002;
    Charger fast(fast_cfg), slow(slow_cfg);

    auto fast_link = open_link(LinkProfile::builtin("EVolve100"), TransportModel::ideal(), 1);
    auto slow_link = open_link(LinkProfile::builtin("4G"), TransportModel::ideal(), 2);
    Conduit fast_conduit(*fast_link, fast), slow_conduit(*slow_link, slow);

    SeededRng rng(77);
    // order in scope must not matter; the faster link wins
    auto found = sdp_discover({&slow_conduit, &fast_conduit}, rng);
    CHECK(found.response.charger_address == 0x0A000001);
    CHECK(found.scope_index == 1);
}

TEST_CASE("session establishes with matching fingerprints on both ends") {
    Platform p(quick_config());
    p.add_vehicle();
    auto connected = p.connect(0, {});
    CHECK(connected.session.peer_identity == crypto::fingerprint(p.charger().keys().pk));
    CHECK(p.charger().session_count() == 1);
    CHECK(connected.handshake_ms > 0);
}

TEST_CASE("unknown vehicle key is rejected and leaves no session state") {
    Platform p(quick_config());
    p.add_vehicle();
    Vehicle stranger(999);  // never authorized on the charger
    std::vector<Conduit*> scope = {&p.vehicle_conduit()};
    auto found = sdp_discover(scope, stranger.rng);
    CHECK(p.charger().session_count() == 0);
    CHECK_THROWS_AS(
        establish_session(stranger.credentials, found.response, p.vehicle_conduit(),
                          stranger.rng),
        AuthenticationError);
    CHECK(p.charger().session_count() == 0);
}

TEST_CASE("replayed handshake transcript is rejected") {
    Platform p(quick_config());
    p.add_vehicle();
    auto& link = p.vehicle_link();

    std::vector<WireMsg> captured;
    link.set_tap([&](Side from, const WireMsg& m) {
        if (from == Side::a) captured.push_back(m);
    });
    auto connected = p.connect(0, {});
    CHECK(p.charger().session_count() == 1);
    link.set_tap({});

    // captured: sdp, hello, finish, snp request, select...; replay hello+finish
    std::optional<WireMsg> hello, finish;
    for (const auto& m : captured) {
        Frame f = decode_frame(m);
        if (f.type == MsgType::session_hello && !hello) hello = m;
        if (f.type == MsgType::session_finish && !finish) finish = m;
    }
    REQUIRE(hello.has_value());
    REQUIRE(finish.has_value());

    link.send(Side::a, *hello);
    p.charger().pump(link);
    auto challenge = link.recv(Side::a);
    REQUIRE(challenge.has_value());
    CHECK(decode_frame(*challenge).type == MsgType::session_challenge);

    link.send(Side::a, *finish);
    p.charger().pump(link);
    auto reply = link.recv(Side::a);
    REQUIRE(reply.has_value());
    Frame f = decode_frame(*reply);
    CHECK(f.type == MsgType::error);
    auto [code, text] = decode_error_frame(f.body);
    CHECK(code == kErrAuthentication);
    CHECK(p.charger().session_count() == 0);  // replay created nothing
}

TEST_CASE("handshake against a dead link raises a transport error") {
    Platform p(quick_config());
    p.add_vehicle();
    std::vector<Conduit*> scope = {&p.vehicle_conduit()};
    auto found = sdp_discover(scope, p.vehicle().rng);
    p.vehicle_link().set_down(true);
    CHECK_THROWS_AS(
        establish_session(p.vehicle().credentials, found.response, p.vehicle_conduit(),
                          p.vehicle().rng),
        TransportError);
}

TEST_CASE("default catalog lists charging plus the three VASs in order") {
    Platform p(quick_config());
    p.add_vehicle();
    auto connected = p.connect(0, {});
    auto catalog = negotiate_services(connected.session);
    REQUIRE(catalog.size() == 4);
    CHECK(catalog[0].name == "charging");
    CHECK(catalog[0].criticality == Criticality::critical);
    CHECK(catalog[1].name == "updates");
    CHECK(catalog[2].name == "siem");
    CHECK(catalog[3].name == "payments");
    CHECK(connected.session.negotiated_services == catalog);
}

TEST_CASE("catalog with VASs disabled offers charging only") {
    auto pc = quick_config();
    pc.vas_enabled = false;
    Platform p(pc);
    p.add_vehicle();
    auto connected = p.connect(0, {});
    auto catalog = negotiate_services(connected.session);
    REQUIRE(catalog.size() == 1);
    CHECK(catalog[0].name == "charging");
}

TEST_CASE("catalog codec is the identity and preserves order") {
    std::vector<ServiceDescriptor> catalog = {
        {9, "zeta", {{"k", "v"}, {"a", ""}}, Criticality::standard},
        {1, "alpha", {}, Criticality::critical},
        {5, "mid", {{"x", "y"}}, Criticality::standard},
    };
    CHECK(decode_catalog(encode_catalog(catalog)) == catalog);
    CHECK_THROWS_AS(decode_catalog(to_bytes("garbage")), ProtocolError);
}

TEST_CASE("a corrupted catalog closes the session with a protocol error") {
    Platform p(quick_config());
    p.add_vehicle();
    auto connected = p.connect(0, {});
    bool armed = true;
    p.vehicle_link().set_fault([&](Side from, WireMsg& m) {
        if (from == Side::b && armed && m.head.size() > 40) {
            m.head[20] ^= 0x01;  // corrupt the sealed catalog body
            armed = false;
        }
    });
    CHECK_THROWS_AS(negotiate_services(connected.session), ProtocolError);
    CHECK(connected.session.closed);
}

TEST_CASE("service selection enforces catalog membership and ordering") {
    Platform p(quick_config());
    p.add_vehicle();
    // raw session with nothing selected yet
    std::vector<Conduit*> scope = {&p.vehicle_conduit()};
    auto found = sdp_discover(scope, p.vehicle().rng);
    Session session = establish_session(p.vehicle().credentials, found.response,
                                        p.vehicle_conduit(), p.vehicle().rng);
    negotiate_services(session);

    // a VAS before charging is an ordering error
    CHECK_THROWS_AS(select_service(session, kSvcPayments), OrderingError);
    // unknown id is a selection error
    auto charging = select_service(session, kSvcCharging);
    CHECK(charging.service_id == kSvcCharging);
    CHECK_THROWS_AS(select_service(session, 9999), SelectionError);
    // charging then payments gives two valid handles
    auto payments = select_service(session, kSvcPayments);
    CHECK(payments.service_id == kSvcPayments);
    CHECK(session.selected.contains(kSvcCharging));
    CHECK(session.selected.contains(kSvcPayments));
}

TEST_CASE("no VAS payload crosses the link before session establishment") {
    Platform p(quick_config());
    p.add_vehicle();
    bool session_accepted = false;
    p.vehicle_link().set_tap([&](Side, const WireMsg& m) {
        Frame f = decode_frame(m);
        if (f.type == MsgType::session_accept) session_accepted = true;
        if (f.type == MsgType::vas_data) CHECK(session_accepted);
    });
    auto connected = p.connect(0, {kSvcPayments});
    negotiate_services(connected.session);
    ByteWriter w;
    w.u8(vasop::kPing);
    w.u32(0);
    vas_request(connected.session, kSvcCharging, w.take());
    CHECK(session_accepted);
}

TEST_CASE("session ids do not repeat across 100000 sequential sessions") {
    SeededRng rng(4242);
    std::set<SessionId> seen;
    handshake::Nonce vehicle_nonce{};
    for (int i = 0; i < 100000; i++) {
        handshake::Nonce charger_nonce;
        for (auto& b : charger_nonce) b = uint8_t(rng.next_u64());
        for (auto& b : vehicle_nonce) b = uint8_t(rng.next_u64());
        auto id = handshake::derive_session_id(charger_nonce, vehicle_nonce);
        CHECK(seen.insert(id).second);
    }
}

TEST_CASE("vehicle rejects an untrusted charger identity") {
    Platform p(quick_config());
    p.add_vehicle();
    Vehicle& veh = p.vehicle();
    // pin a different charger key
    veh.credentials.trusted_chargers.insert(crypto::KeyPair::from_seed(uint64_t(555)).pk);
    std::vector<Conduit*> scope = {&p.vehicle_conduit()};
    auto found = sdp_discover(scope, veh.rng);
    CHECK_THROWS_AS(
        establish_session(veh.credentials, found.response, p.vehicle_conduit(), veh.rng),
        AuthenticationError);
}
