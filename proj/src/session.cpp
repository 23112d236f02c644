#include "evolve/session.hpp"

#include <algorithm>

#include "evolve/errors.hpp"
#include "evolve/handshake.hpp"

namespace evolve {

namespace {

constexpr std::array<uint8_t, 4> kSdpRequestMagic = {'E', 'V', 'S', 'D'};
constexpr std::array<uint8_t, 4> kSdpResponseMagic = {'E', 'V', 'S', 'R'};

}  // namespace

std::string address_to_string(uint32_t address) {
    return std::to_string(address >> 24) + "." + std::to_string((address >> 16) & 0xFF) + "." +
           std::to_string((address >> 8) & 0xFF) + "." + std::to_string(address & 0xFF);
}

Bytes encode_catalog(const std::vector<ServiceDescriptor>& catalog) {
    ByteWriter w;
    if (catalog.size() > 0xFFFF) throw ProtocolError("catalog too large");
    w.u16(uint16_t(catalog.size()));
    for (const auto& d : catalog) {
        w.u16(d.service_id);
        w.lp_string(d.name);
        w.u8(uint8_t(d.criticality));
        if (d.parameters.size() > 0xFFFF) throw ProtocolError("too many parameters");
        w.u16(uint16_t(d.parameters.size()));
        for (const auto& [k, v] : d.parameters) {
            w.lp_string(k);
            w.lp_string(v);
        }
    }
    return w.take();
}

std::vector<ServiceDescriptor> decode_catalog(ByteSpan data) {
    try {
        ByteReader r(data);
        uint16_t count = r.u16();
        std::vector<ServiceDescriptor> out;
        out.reserve(count);
        for (uint16_t i = 0; i < count; i++) {
            ServiceDescriptor d;
            d.service_id = r.u16();
            d.name = r.lp_string();
            uint8_t crit = r.u8();
            if (crit != uint8_t(Criticality::critical) && crit != uint8_t(Criticality::standard))
                throw ProtocolError("bad criticality");
            d.criticality = Criticality(crit);
            uint16_t params = r.u16();
            for (uint16_t j = 0; j < params; j++) {
                std::string k = r.lp_string();
                std::string v = r.lp_string();
                d.parameters.emplace_back(std::move(k), std::move(v));
            }
            out.push_back(std::move(d));
        }
        r.expect_done();
        return out;
    } catch (const ProtocolError&) {
        throw;
    } catch (const std::exception& e) {
        throw ProtocolError(std::string("malformed catalog: ") + e.what());
    }
}

WireMsg Conduit::request(WireMsg msg) {
    send(std::move(msg));
    auto reply = poll();
    if (!reply) throw TransportError("no reply from peer");
    return std::move(*reply);
}

// --- SDP ---

Bytes encode_sdp_request(const SdpRequest& req) {
    ByteWriter w;
    w.raw(kSdpRequestMagic);
    w.raw(ByteSpan(req.nonce.data(), req.nonce.size()));
    w.zeros(4);
    return w.take();
}

SdpRequest decode_sdp_request(ByteSpan body) {
    if (body.size() != 16) throw ProtocolError("SDP request must be 16 bytes");
    ByteReader r(body);
    if (r.arr<4>() != kSdpRequestMagic) throw ProtocolError("bad SDP magic");
    SdpRequest req;
    req.nonce = r.arr<8>();
    return req;
}

Bytes encode_sdp_response(const SdpRequest& req, const SdpResponse& resp) {
    ByteWriter w;
    w.raw(kSdpResponseMagic);
    w.raw(ByteSpan(req.nonce.data(), req.nonce.size()));
    w.u32(resp.charger_address);
    w.u16(resp.port);
    w.u8(resp.security_required ? 1 : 0);
    return w.take();
}

SdpResponse decode_sdp_response(ByteSpan body, const SdpRequest& expect) {
    if (body.size() != 19) throw ProtocolError("SDP response must be 19 bytes");
    ByteReader r(body);
    if (r.arr<4>() != kSdpResponseMagic) throw ProtocolError("bad SDP response magic");
    if (r.arr<8>() != expect.nonce) throw ProtocolError("SDP nonce mismatch");
    SdpResponse resp;
    resp.charger_address = r.u32();
    resp.port = r.u16();
    if (resp.port == 0) throw ProtocolError("SDP response port must be > 0");
    resp.security_required = r.u8() != 0;
    return resp;
}

DiscoveryResult sdp_discover(std::vector<Conduit*> scope, SeededRng& rng, double timeout_ms) {
    std::optional<DiscoveryResult> best;
    for (size_t i = 0; i < scope.size(); i++) {
        Conduit* c = scope[i];
        if (!c) continue;
        SdpRequest req;
        for (auto& b : req.nonce) b = uint8_t(rng.next_u64());
        double start = c->link().now_ms();
        c->send(encode_frame({MsgType::sdp_request, encode_sdp_request(req)}));
        auto reply = c->poll();
        if (!reply) continue;  // silent scope entry
        double elapsed = c->link().now_ms() - start;
        if (elapsed > timeout_ms) continue;
        Frame f = decode_frame(*reply);
        if (f.type != MsgType::sdp_response) continue;
        SdpResponse resp = decode_sdp_response(f.body, req);
        if (!best || elapsed < best->elapsed_ms) best = DiscoveryResult{resp, i, elapsed};
    }
    if (!best)
        throw TimeoutError("SDP discovery: no charger responded within " +
                           std::to_string(timeout_ms) + " ms");
    return *best;
}

// --- handshake codecs ---

namespace handshake {

Bytes encode_hello(const Hello& h) {
    ByteWriter w;
    w.raw(h.nonce);
    w.raw(h.ephemeral);
    return w.take();
}

Hello decode_hello(ByteSpan body) {
    if (body.size() != 48) throw ProtocolError("bad hello size");
    ByteReader r(body);
    Hello h;
    h.nonce = r.arr<16>();
    h.ephemeral = r.arr<32>();
    return h;
}

Bytes encode_challenge(const Challenge& c) {
    if (c.signature.size() != crypto::kDefaultSigWidth) throw ProtocolError("bad challenge sig");
    ByteWriter w;
    w.raw(c.nonce);
    w.raw(c.ephemeral);
    w.raw(c.static_key);
    w.raw(c.signature);
    return w.take();
}

Challenge decode_challenge(ByteSpan body) {
    if (body.size() != 16 + 32 + 32 + crypto::kDefaultSigWidth)
        throw ProtocolError("bad challenge size");
    ByteReader r(body);
    Challenge c;
    c.nonce = r.arr<16>();
    c.ephemeral = r.arr<32>();
    c.static_key = r.arr<32>();
    c.signature = r.raw(crypto::kDefaultSigWidth);
    return c;
}

Bytes encode_finish(const Finish& f) {
    if (f.signature.size() != crypto::kDefaultSigWidth) throw ProtocolError("bad finish sig");
    ByteWriter w;
    w.raw(f.static_key);
    w.raw(f.signature);
    return w.take();
}

Finish decode_finish(ByteSpan body) {
    if (body.size() != 32 + crypto::kDefaultSigWidth) throw ProtocolError("bad finish size");
    ByteReader r(body);
    Finish f;
    f.static_key = r.arr<32>();
    f.signature = r.raw(crypto::kDefaultSigWidth);
    return f;
}

Bytes challenge_sig_payload(ByteSpan hello_body, const Challenge& c) {
    ByteWriter w;
    w.raw(to_bytes("evolve.hs.challenge"));
    w.raw(hello_body);
    w.raw(c.nonce);
    w.raw(c.ephemeral);
    w.raw(c.static_key);
    return w.take();
}

Bytes finish_sig_payload(ByteSpan hello_body, ByteSpan challenge_body,
                         const crypto::PublicKey& vehicle_key) {
    ByteWriter w;
    w.raw(to_bytes("evolve.hs.finish"));
    w.raw(hello_body);
    w.raw(challenge_body);
    w.raw(vehicle_key);
    return w.take();
}

ChannelKeys derive_channel_keys(const std::array<uint8_t, 32>& shared, const Nonce& vehicle_nonce,
                                const Nonce& charger_nonce) {
    auto derive = [&](std::string_view label) {
        ByteWriter w;
        w.raw(to_bytes(label));
        w.raw(shared);
        w.raw(vehicle_nonce);
        w.raw(charger_nonce);
        Bytes material = w.take();
        return crypto::sha256(material);
    };
    ChannelKeys keys;
    keys.vehicle_to_charger = derive("evolve.key.v2c");
    keys.charger_to_vehicle = derive("evolve.key.c2v");
    return keys;
}

SessionId derive_session_id(const Nonce& charger_nonce, const Nonce& vehicle_nonce) {
    ByteWriter w;
    w.raw(to_bytes("evolve.session.id"));
    w.raw(charger_nonce);
    w.raw(vehicle_nonce);
    Bytes material = w.take();
    auto digest = crypto::sha256(material);
    SessionId id;
    std::copy_n(digest.begin(), id.size(), id.begin());
    return id;
}

}  // namespace handshake

// --- SecureChannel ---

SecureChannel::SecureChannel(EmulatedLink& link, Side side, crypto::ChannelKey send_key,
                             crypto::ChannelKey recv_key, uint64_t initial_send_counter,
                             uint64_t initial_recv_counter)
    : link_(&link),
      side_(side),
      send_key_(send_key),
      recv_key_(recv_key),
      send_counter_(initial_send_counter),
      recv_counter_(initial_recv_counter) {
    send_dir_ = side == Side::a ? handshake::kDirVehicleToCharger : handshake::kDirChargerToVehicle;
    recv_dir_ = side == Side::a ? handshake::kDirChargerToVehicle : handshake::kDirVehicleToCharger;
}

void SecureChannel::send_control(MsgType type, ByteSpan plaintext) {
    Bytes sealed = crypto::box_seal(send_key_, send_dir_, send_counter_++, plaintext);
    link_->send(side_, encode_frame({type, std::move(sealed)}));
}

void SecureChannel::send_vas(uint16_t service_id, ByteSpan plaintext, uint64_t synthetic,
                             uint64_t pad_frame_to) {
    // Inner layout: u32 payload length, payload, zero padding.
    ByteWriter inner;
    inner.u32(uint32_t(plaintext.size()));
    inner.raw(plaintext);
    if (pad_frame_to > 0) {
        uint64_t base = kFrameHeaderBytes + 2 + crypto::kBoxOverhead + inner.size() + synthetic;
        if (base > pad_frame_to)
            throw ProtocolError("payload exceeds benchmark pad size");
        inner.zeros(size_t(pad_frame_to - base));
    }
    Bytes inner_bytes = inner.take();
    Bytes sealed = crypto::box_seal(send_key_, send_dir_, send_counter_++, inner_bytes);
    ByteWriter body;
    body.u16(service_id);
    body.raw(sealed);
    link_->send(side_, encode_frame({MsgType::vas_data, body.take(), synthetic}));
}

void SecureChannel::send_error(uint16_t code, std::string_view message) {
    link_->send(side_, encode_frame({MsgType::error, encode_error_frame(code, message)}));
}

std::optional<SecureChannel::Received> SecureChannel::recv() {
    auto msg = link_->recv(side_);
    if (!msg) return std::nullopt;
    Frame f = decode_frame(*msg);
    Received r;
    r.type = f.type;
    r.synthetic = f.synthetic_body;
    if (f.type == MsgType::error) {
        auto [code, text] = decode_error_frame(f.body);
        r.error_code = code;
        r.error_message = text;
        return r;
    }
    if (f.type == MsgType::vas_data) {
        if (f.body.size() < 2) throw ProtocolError("short VAS frame");
        ByteReader hdr(f.body);
        r.service_id = hdr.u16();
        ByteSpan sealed(f.body.data() + 2, f.body.size() - 2);
        auto inner = crypto::box_open(recv_key_, recv_dir_, recv_counter_++, sealed);
        if (!inner) throw ProtocolError("VAS frame failed authentication");
        ByteReader ir(*inner);
        uint32_t len = ir.u32();
        if (len > ir.remaining()) throw ProtocolError("bad inner payload length");
        r.plaintext = ir.raw(len);
        return r;
    }
    switch (f.type) {
        case MsgType::snp_catalog_request:
        case MsgType::snp_catalog:
        case MsgType::service_select:
        case MsgType::service_select_ack:
        case MsgType::session_accept: {
            auto plain = crypto::box_open(recv_key_, recv_dir_, recv_counter_++, f.body);
            if (!plain) throw ProtocolError("control frame failed authentication");
            r.plaintext = std::move(*plain);
            return r;
        }
        default:
            // Cleartext phases (SDP, handshake) pass through undecrypted.
            r.plaintext = std::move(f.body);
            return r;
    }
}

Bytes encode_error_frame(uint16_t code, std::string_view message) {
    ByteWriter w;
    w.u16(code);
    w.lp_string(message);
    return w.take();
}

std::pair<uint16_t, std::string> decode_error_frame(ByteSpan body) {
    ByteReader r(body);
    uint16_t code = r.u16();
    std::string msg = r.lp_string();
    return {code, msg};
}

// --- vehicle-side session establishment ---

Session establish_session(const VehicleCredentials& credentials, const SdpResponse& sdp,
                          Conduit& conduit, SeededRng& rng) {
    if (!sdp.security_required)
        throw AuthenticationError("charger does not require a secure session");

    handshake::Hello hello;
    for (auto& b : hello.nonce) b = uint8_t(rng.next_u64());
    Bytes eph_seed(32);
    for (auto& b : eph_seed) b = uint8_t(rng.next_u64());
    auto eph = crypto::EphemeralKey::from_seed(eph_seed);
    hello.ephemeral = eph.public_point;
    Bytes hello_body = handshake::encode_hello(hello);

    WireMsg reply = conduit.request(encode_frame({MsgType::session_hello, hello_body}));
    Frame f = decode_frame(reply);
    if (f.type == MsgType::error) {
        auto [code, text] = decode_error_frame(f.body);
        if (code == kErrAuthentication) throw AuthenticationError(text);
        throw ProtocolError(text);
    }
    if (f.type != MsgType::session_challenge) throw ProtocolError("expected session challenge");
    auto challenge = handshake::decode_challenge(f.body);

    if (!credentials.trusted_chargers.empty() &&
        !credentials.trusted_chargers.contains(challenge.static_key))
        throw AuthenticationError("charger key is not trusted");
    Bytes chal_payload = handshake::challenge_sig_payload(hello_body, challenge);
    if (!crypto::verify(challenge.static_key, chal_payload, challenge.signature))
        throw AuthenticationError("charger signature invalid");

    handshake::Finish finish;
    finish.static_key = credentials.keys.pk;
    Bytes fin_payload = handshake::finish_sig_payload(hello_body, f.body, credentials.keys.pk);
    finish.signature = crypto::sign(credentials.keys, fin_payload);

    WireMsg accept_msg =
        conduit.request(encode_frame({MsgType::session_finish, handshake::encode_finish(finish)}));
    Frame accept = decode_frame(accept_msg);
    if (accept.type == MsgType::error) {
        auto [code, text] = decode_error_frame(accept.body);
        if (code == kErrAuthentication) throw AuthenticationError(text);
        throw ProtocolError(text);
    }
    if (accept.type != MsgType::session_accept) throw ProtocolError("expected session accept");

    auto shared = crypto::dh(eph.secret_scalar, challenge.ephemeral);
    auto keys = handshake::derive_channel_keys(shared, hello.nonce, challenge.nonce);
    auto sealed_id = crypto::box_open(keys.charger_to_vehicle, handshake::kDirChargerToVehicle, 0,
                                      accept.body);
    if (!sealed_id || sealed_id->size() != 16)
        throw AuthenticationError("session accept failed authentication");

    Session s;
    std::copy_n(sealed_id->begin(), s.session_id.size(), s.session_id.begin());
    s.peer_identity = crypto::fingerprint(challenge.static_key);
    // The charger consumed c2v counter 0 for the accept message.
    s.channel = std::make_shared<SecureChannel>(conduit.link(), Side::a, keys.vehicle_to_charger,
                                                keys.charger_to_vehicle, 0, 1);
    s.conduit = &conduit;
    s.established_at_ms = conduit.link().now_ms();
    return s;
}

namespace {

SecureChannel::Received channel_request(Session& session, MsgType type, ByteSpan plaintext) {
    if (session.closed) throw StateError("session closed");
    session.channel->send_control(type, plaintext);
    session.conduit->peer().pump(session.conduit->link());
    auto r = session.channel->recv();
    if (!r) throw TransportError("no reply on session channel");
    return *r;
}

}  // namespace

std::vector<ServiceDescriptor> negotiate_services(Session& session) {
    SecureChannel::Received r;
    try {
        r = channel_request(session, MsgType::snp_catalog_request, {});
    } catch (const ProtocolError&) {
        session.closed = true;
        throw;
    }
    if (r.type == MsgType::error) {
        session.closed = true;
        throw ProtocolError("catalog request failed: " + r.error_message);
    }
    if (r.type != MsgType::snp_catalog) {
        session.closed = true;
        throw ProtocolError("expected SNP catalog");
    }
    std::vector<ServiceDescriptor> catalog;
    try {
        catalog = decode_catalog(r.plaintext);
    } catch (const ProtocolError&) {
        session.closed = true;
        throw;
    }
    session.negotiated_services = catalog;
    return catalog;
}

ServiceHandle select_service(Session& session, uint16_t service_id,
                             const std::vector<std::pair<std::string, std::string>>& params) {
    ByteWriter w;
    w.u16(service_id);
    if (params.size() > 0xFFFF) throw ProtocolError("too many parameters");
    w.u16(uint16_t(params.size()));
    for (const auto& [k, v] : params) {
        w.lp_string(k);
        w.lp_string(v);
    }
    Bytes body = w.take();
    auto r = channel_request(session, MsgType::service_select, body);
    if (r.type == MsgType::error) {
        if (r.error_code == kErrSelectionUnknown) throw SelectionError(r.error_message);
        if (r.error_code == kErrSelectionOrdering) throw OrderingError(r.error_message);
        throw ProtocolError(r.error_message);
    }
    if (r.type != MsgType::service_select_ack) throw ProtocolError("expected select ack");
    ByteReader ack(r.plaintext);
    if (ack.u16() != service_id) throw ProtocolError("select ack id mismatch");
    session.selected.insert(service_id);
    return ServiceHandle{&session, service_id};
}

SecureChannel::Received vas_request(Session& session, uint16_t service_id, ByteSpan plaintext,
                                    uint64_t synthetic, uint64_t pad_frame_to) {
    if (session.closed) throw StateError("session closed");
    if (!session.selected.contains(service_id)) throw SelectionError("service not selected");
    session.channel->send_vas(service_id, plaintext, synthetic, pad_frame_to);
    session.conduit->peer().pump(session.conduit->link());
    auto r = session.channel->recv();
    if (!r) throw TransportError("no VAS reply");
    return *r;
}

}  // namespace evolve
