#include "evolve/charger.hpp"

#include <algorithm>

#include "evolve/cloud.hpp"
#include "evolve/errors.hpp"

namespace evolve {

std::vector<ServiceDescriptor> default_catalog(bool vas_enabled) {
    std::vector<ServiceDescriptor> catalog;
    catalog.push_back({kSvcCharging,
                       "charging",
                       {{"max_kw", "150"}, {"connector", "CCS2"}},
                       Criticality::critical});
    if (vas_enabled) {
        catalog.push_back({kSvcUpdates, "updates", {{"proto", "ota/1"}}, Criticality::standard});
        catalog.push_back({kSvcSiem, "siem", {{"max_batch_mb", "100"}}, Criticality::standard});
        catalog.push_back({kSvcPayments,
                           "payments",
                           {{"currency", "cents"}, {"modes", "naive,micro"}},
                           Criticality::standard});
    }
    return catalog;
}

Charger::Charger(ChargerConfig config)
    : config_(config),
      keys_(crypto::KeyPair::from_seed(SeededRng::derive(config.seed, 0x11))),
      rng_(SeededRng::derive(config.seed, 0x22)),
      sdp_info_{config.address, config.port, true},
      bus_(),
      catalog_(default_catalog(config.vas_enabled)),
      cache_(config.cache_capacity_bytes, config.cache_dir),
      updates_(crypto::PublicKey{}, &bus_, &cache_),
      siem_(&bus_, config.siem_rules),
      payments_(keys_, &bus_) {
    bus_.set_acl(EventBus::default_platform_acl());
}

void Charger::authorize_vehicle(const crypto::PublicKey& vehicle_key) {
    std::lock_guard lock(mu_);
    authorized_vehicles_.insert(vehicle_key);
}

void Charger::set_repo_key(const crypto::PublicKey& repo_key) {
    updates_.set_repo_key(repo_key);
}

size_t Charger::session_count() const {
    std::lock_guard lock(mu_);
    size_t n = 0;
    for (const auto& [_, conn] : connections_)
        if (conn->phase == Connection::Phase::established) n++;
    return n;
}

uint64_t Charger::sessions_established() const {
    std::lock_guard lock(mu_);
    return sessions_established_;
}

Charger::Connection& Charger::connection(EmulatedLink& link) {
    std::lock_guard lock(mu_);
    auto it = connections_.find(&link);
    if (it == connections_.end())
        it = connections_.emplace(&link, std::make_unique<Connection>()).first;
    return *it->second;
}

void Charger::pump(EmulatedLink& link) {
    Connection& conn = connection(link);
    while (link.pending(Side::b)) {
        try {
            if (conn.phase == Connection::Phase::established) {
                auto r = conn.channel->recv();
                if (!r) break;
                if (r->type == MsgType::sdp_request || r->type == MsgType::session_hello) {
                    // Vehicle restarted discovery or handshake on this link.
                    Frame f{r->type, r->plaintext};
                    conn = Connection{};
                    handle_handshake(link, conn, f);
                    continue;
                }
                if (r->type == MsgType::vas_data)
                    handle_vas(link, conn, *r);
                else
                    handle_control(link, conn, *r);
            } else {
                auto msg = link.recv(Side::b);
                if (!msg) break;
                handle_handshake(link, conn, decode_frame(*msg));
            }
        } catch (const ProtocolError& e) {
            if (conn.phase == Connection::Phase::established && conn.channel) {
                conn.channel->send_error(kErrProtocol, e.what());
                conn = Connection{};
            } else {
                link.send(Side::b,
                          encode_frame({MsgType::error, encode_error_frame(kErrProtocol,
                                                                           e.what())}));
            }
        }
    }
}

void Charger::on_cloud_frame(const Frame& frame) {
    if (frame.body.empty()) return;
    uint8_t op = frame.body[0];
    if (op == cloudop::kNotifyManifest) {
        ByteReader r(ByteSpan(frame.body.data() + 1, frame.body.size() - 1));
        uint16_t len = r.u16();
        Bytes enc = r.raw(len);
        updates_.notify_update(UpdateManifest::decode(enc));
    } else if (op == cloudop::kFlNotify) {
        ByteReader r(ByteSpan(frame.body.data() + 1, frame.body.size() - 1));
        siem_.note_cloud_fl_version(r.u64());
    }
}

void Charger::handle_handshake(EmulatedLink& link, Connection& conn, const Frame& frame) {
    switch (frame.type) {
        case MsgType::sdp_request: {
            SdpRequest req = decode_sdp_request(frame.body);
            link.send(Side::b,
                      encode_frame({MsgType::sdp_response, encode_sdp_response(req, sdp_info_)}));
            return;
        }
        case MsgType::session_hello: {
            auto hello = handshake::decode_hello(frame.body);
            conn = Connection{};
            conn.hello_body = frame.body;
            conn.vehicle_nonce = hello.nonce;
            conn.vehicle_eph = hello.ephemeral;

            handshake::Challenge chal;
            {
                std::lock_guard lock(mu_);
                for (auto& b : chal.nonce) b = uint8_t(rng_.next_u64());
                Bytes eph_seed(32);
                for (auto& b : eph_seed) b = uint8_t(rng_.next_u64());
                auto eph = crypto::EphemeralKey::from_seed(eph_seed);
                conn.eph_secret = eph.secret_scalar;
                chal.ephemeral = eph.public_point;
            }
            conn.charger_nonce = chal.nonce;
            chal.static_key = keys_.pk;
            chal.signature =
                crypto::sign(keys_, handshake::challenge_sig_payload(conn.hello_body, chal));
            conn.challenge_body = handshake::encode_challenge(chal);
            conn.phase = Connection::Phase::challenged;
            link.send(Side::b, encode_frame({MsgType::session_challenge, conn.challenge_body}));
            return;
        }
        case MsgType::session_finish: {
            if (conn.phase != Connection::Phase::challenged) {
                link.send(Side::b, encode_frame({MsgType::error,
                                                 encode_error_frame(kErrProtocol,
                                                                    "finish without hello")}));
                return;
            }
            auto fin = handshake::decode_finish(frame.body);
            bool authorized;
            {
                std::lock_guard lock(mu_);
                authorized = authorized_vehicles_.contains(fin.static_key);
            }
            Bytes payload =
                handshake::finish_sig_payload(conn.hello_body, conn.challenge_body,
                                              fin.static_key);
            if (!authorized || !crypto::verify(fin.static_key, payload, fin.signature)) {
                conn = Connection{};  // no server-side session state survives
                link.send(Side::b,
                          encode_frame({MsgType::error,
                                        encode_error_frame(kErrAuthentication,
                                                           authorized
                                                               ? "handshake signature invalid"
                                                               : "vehicle credential unknown")}));
                return;
            }
            auto shared = crypto::dh(conn.eph_secret, conn.vehicle_eph);
            auto keys = handshake::derive_channel_keys(shared, conn.vehicle_nonce,
                                                       conn.charger_nonce);
            conn.session_id = handshake::derive_session_id(conn.charger_nonce,
                                                           conn.vehicle_nonce);
            conn.vehicle_key = fin.static_key;
            conn.channel = std::make_unique<SecureChannel>(link, Side::b,
                                                           keys.charger_to_vehicle,
                                                           keys.vehicle_to_charger);
            conn.phase = Connection::Phase::established;
            {
                std::lock_guard lock(mu_);
                sessions_established_ += 1;
            }
            conn.channel->send_control(MsgType::session_accept,
                                       ByteSpan(conn.session_id.data(), conn.session_id.size()));
            return;
        }
        default:
            link.send(Side::b,
                      encode_frame({MsgType::error,
                                    encode_error_frame(kErrProtocol, "unexpected frame")}));
    }
}

void Charger::handle_control(EmulatedLink& link, Connection& conn,
                             const SecureChannel::Received& msg) {
    (void)link;
    switch (msg.type) {
        case MsgType::snp_catalog_request: {
            conn.channel->send_control(MsgType::snp_catalog, encode_catalog(catalog_));
            return;
        }
        case MsgType::service_select: {
            ByteReader r(msg.plaintext);
            uint16_t id = r.u16();
            uint16_t params = r.u16();
            for (uint16_t i = 0; i < params; i++) {
                r.lp_string();
                r.lp_string();
            }
            auto in_catalog = std::any_of(catalog_.begin(), catalog_.end(),
                                          [&](const ServiceDescriptor& d) {
                                              return d.service_id == id;
                                          });
            if (!in_catalog) {
                conn.channel->send_error(kErrSelectionUnknown,
                                         "service " + std::to_string(id) + " not offered");
                return;
            }
            if (id != kSvcCharging && !conn.selected.contains(kSvcCharging)) {
                conn.channel->send_error(kErrSelectionOrdering,
                                         "charging service must be selected first");
                return;
            }
            conn.selected.insert(id);
            if (id == kSvcCharging) {
                Event e;
                e.topic = "charging/state";
                e.payload = to_bytes("session-started");
                e.criticality = Criticality::critical;
                bus_.publish("charging_stack", std::move(e));
            }
            ByteWriter w;
            w.u16(id);
            conn.channel->send_control(MsgType::service_select_ack, w.take());
            return;
        }
        default:
            conn.channel->send_error(kErrProtocol, "unexpected control frame");
    }
}

void Charger::handle_vas(EmulatedLink& link, Connection& conn,
                         const SecureChannel::Received& msg) {
    uint16_t svc = msg.service_id;
    if (!conn.selected.contains(svc)) {
        conn.channel->send_error(kErrService, "service not selected");
        return;
    }
    ByteSpan payload(msg.plaintext);
    switch (svc) {
        case kSvcCharging:
            vas_charging(conn, payload);
            return;
        case kSvcUpdates:
            vas_updates(link, conn, payload);
            return;
        case kSvcSiem:
            vas_siem(conn, payload, msg.synthetic);
            return;
        case kSvcPayments:
            vas_payments(conn, payload);
            return;
        default:
            conn.channel->send_error(kErrService, "no handler for service");
    }
}

namespace {

void send_vas_error(SecureChannel& ch, uint16_t svc, uint64_t pad, uint16_t code,
                    std::string_view what) {
    ByteWriter w;
    w.u8(vasop::kVasError);
    w.u16(code);
    w.lp_string(what);
    ch.send_vas(svc, w.take(), 0, pad);
}

// VAS error codes inside kVasError payloads.
constexpr uint16_t kVasErrState = 1;
constexpr uint16_t kVasErrAuth = 2;
constexpr uint16_t kVasErrSequencing = 3;
constexpr uint16_t kVasErrUnavailable = 4;
constexpr uint16_t kVasErrValidation = 5;
constexpr uint16_t kVasErrIntegrity = 6;
constexpr uint16_t kVasErrDisputed = 7;

}  // namespace

void Charger::vas_charging(Connection& conn, ByteSpan payload) {
    ByteReader r(payload);
    uint8_t op = r.u8();
    if (op != vasop::kPing) {
        conn.channel->send_error(kErrService, "unknown charging op");
        return;
    }
    uint32_t pad = r.u32();
    ByteWriter w;
    w.u8(vasop::kPong);
    conn.channel->send_vas(kSvcCharging, w.take(), 0, pad);
}

void Charger::vas_updates(EmulatedLink& link, Connection& conn, ByteSpan payload) {
    ByteReader r(payload);
    uint8_t op = r.u8();
    if (op != vasop::kRequestUpdate) {
        conn.channel->send_error(kErrService, "unknown updates op");
        return;
    }
    std::string ecu = r.lp_string();
    Version min_version{r.u16(), r.u16(), r.u16()};

    auto best = updates_.best_available(ecu, min_version);
    if (!best) {
        ByteWriter w;
        w.u8(vasop::kUpToDate);
        conn.channel->send_vas(kSvcUpdates, w.take());
        return;
    }

    CacheEntry entry;
    try {
        // A cache miss fetches over the cellular link; the time that takes
        // delays the vehicle-facing reply. Cache hits move no cloud bytes and
        // must not disturb the vehicle timeline.
        Conduit* cloud = updates_.cloud();
        double mark = 0;
        if (cloud) {
            cloud->link().advance_to_ms(link.now_ms());
            mark = cloud->link().now_ms();
        }
        entry = updates_.fetch_update(*best, nullptr);
        if (cloud && cloud->link().now_ms() > mark) link.advance_to_ms(cloud->link().now_ms());
    } catch (const Error& e) {
        send_vas_error(*conn.channel, kSvcUpdates, 0,
                       e.code() == Errc::integrity ? kVasErrIntegrity : kVasErrUnavailable,
                       e.what());
        return;
    }

    ByteWriter w;
    w.u8(vasop::kManifest);
    Bytes enc = entry.manifest.encode();
    w.u16(uint16_t(enc.size()));
    w.raw(enc);
    conn.channel->send_vas(kSvcUpdates, w.take());

    uint64_t offset = 0;
    uint64_t remaining_real = entry.image.data.size();
    uint64_t remaining_synth = entry.image.synthetic;
    while (remaining_real > 0 || remaining_synth > 0) {
        ByteWriter chunk;
        chunk.u8(vasop::kImageChunk);
        chunk.u64(offset);
        uint64_t synth = 0;
        if (remaining_real > 0) {
            uint64_t n = std::min<uint64_t>(remaining_real, kTransferChunkBytes);
            chunk.raw(ByteSpan(entry.image.data.data() + offset, size_t(n)));
            offset += n;
            remaining_real -= n;
        } else {
            synth = std::min<uint64_t>(remaining_synth, kTransferChunkBytes);
            remaining_synth -= synth;
            offset += synth;
        }
        conn.channel->send_vas(kSvcUpdates, chunk.take(), synth);
    }
    ByteWriter end;
    end.u8(vasop::kImageEnd);
    conn.channel->send_vas(kSvcUpdates, end.take());
}

void Charger::vas_siem(Connection& conn, ByteSpan payload, uint64_t synthetic) {
    ByteReader r(payload);
    uint8_t op = r.u8();
    switch (op) {
        case vasop::kUploadBegin: {
            conn.upload = UploadState{};
            conn.upload.active = true;
            conn.upload.vehicle_id = r.lp_string();
            conn.upload.window_seconds = r.u32();
            conn.upload.expected_bytes = r.u64();
            return;  // vehicle streams chunks; ack comes after the end marker
        }
        case vasop::kUploadChunk: {
            if (!conn.upload.active) {
                conn.channel->send_error(kErrService, "chunk without begin");
                return;
            }
            size_t real = r.remaining();
            if (real > 0) {
                Bytes chunk = r.raw(real);
                conn.upload.real_data.insert(conn.upload.real_data.end(), chunk.begin(),
                                             chunk.end());
            }
            conn.upload.received += real + synthetic;
            return;
        }
        case vasop::kUploadEnd: {
            if (!conn.upload.active) {
                conn.channel->send_error(kErrService, "end without begin");
                return;
            }
            conn.upload.active = false;
            if (conn.upload.received == conn.upload.expected_bytes &&
                conn.upload.real_data.size() == conn.upload.expected_bytes) {
                try {
                    siem_.enqueue_batch(LogBatch::decode(conn.upload.real_data));
                } catch (const ProtocolError&) {
                    // Synthetic or malformed payloads are metered but not analyzed.
                }
            }
            ByteWriter w;
            w.u8(vasop::kUploadAck);
            w.u64(conn.upload.received);
            conn.channel->send_vas(kSvcSiem, w.take());
            return;
        }
        case vasop::kFlPull: {
            uint32_t pad = r.u32();
            try {
                Conduit* cloud = siem_.cloud();
                double mark = 0;
                if (cloud) {
                    cloud->link().advance_to_ms(conn.channel->link().now_ms());
                    mark = cloud->link().now_ms();
                }
                FlParameters fl = siem_.pull_fl_parameters();
                if (cloud && cloud->link().now_ms() > mark)
                    conn.channel->link().advance_to_ms(cloud->link().now_ms());
                ByteWriter w;
                w.u8(vasop::kFlRsp);
                w.u64(fl.model_version);
                w.raw(fl.blob);
                conn.channel->send_vas(kSvcSiem, w.take(), 0, pad);
            } catch (const UnavailableError& e) {
                send_vas_error(*conn.channel, kSvcSiem, pad, kVasErrUnavailable, e.what());
            }
            return;
        }
        default:
            conn.channel->send_error(kErrService, "unknown siem op");
    }
}

void Charger::vas_payments(Connection& conn, ByteSpan payload) {
    ByteReader r(payload);
    uint8_t op = r.u8();
    uint32_t pad = r.u32();
    auto reply = [&](ByteWriter& w) { conn.channel->send_vas(kSvcPayments, w.take(), 0, pad); };

    try {
        switch (op) {
            case vasop::kNaivePay: {
                auto draft = ReconciliationRecord::decode(r.raw(kReconciliationBytes));
                auto record = payments_.naive_payment(conn.session_id, conn.vehicle_key, draft);
                ByteWriter w;
                w.u8(vasop::kNaivePayRsp);
                w.raw(record.encode());
                reply(w);
                if (gateway_) {
                    try {
                        gateway_settle_over_link(*gateway_, record);
                    } catch (const Error&) {
                        // Settlement retries are out of the vehicle's path.
                    }
                }
                return;
            }
            case vasop::kPayStart: {
                Tariff tariff{r.u32(), r.u32()};
                payments_.start_session(conn.session_id, tariff, conn.vehicle_key);
                ByteWriter w;
                w.u8(vasop::kPayStartAck);
                reply(w);
                return;
            }
            case vasop::kNextBurst: {
                auto* ps = payments_.find_session(conn.session_id);
                if (!ps) throw StateError("no open payment session");
                if (r.u8() != 0)
                    payments_.accept_authorization(*ps,
                                                   PaymentAuthorization::decode(
                                                       r.raw(kAuthorizationBytes)));
                MicroReceipt receipt = payments_.issue_micro_receipt(*ps);
                ByteWriter w;
                w.u8(vasop::kReceipt);
                w.raw(receipt.encode());
                reply(w);
                return;
            }
            case vasop::kReconcile: {
                auto* ps = payments_.find_session(conn.session_id);
                if (!ps) throw StateError("no open payment session");
                if (r.u8() != 0)
                    payments_.accept_authorization(*ps,
                                                   PaymentAuthorization::decode(
                                                       r.raw(kAuthorizationBytes)));
                bool has_sig = r.u8() != 0;
                if (!has_sig) {
                    auto prepared = payments_.prepare_reconciliation(*ps);
                    if (prepared.dispute) {
                        ByteWriter w;
                        w.u8(vasop::kVasError);
                        w.u16(kVasErrDisputed);
                        w.lp_string("chain disputed at burst " +
                                    std::to_string(prepared.dispute->burst_index));
                        reply(w);
                        return;
                    }
                    ByteWriter w;
                    w.u8(vasop::kReconcileRsp);
                    w.raw(prepared.draft->encode());
                    reply(w);
                    return;
                }
                Bytes sig = r.raw(kReconciliationSigWidth);
                auto record = payments_.commit_reconciliation(*ps, sig);
                ByteWriter w;
                w.u8(vasop::kReconcileRsp);
                w.raw(record.encode());
                reply(w);
                if (gateway_) {
                    try {
                        gateway_settle_over_link(*gateway_, record);
                    } catch (const Error&) {
                    }
                }
                return;
            }
            default:
                conn.channel->send_error(kErrService, "unknown payments op");
        }
    } catch (const Error& e) {
        uint16_t code = kVasErrState;
        switch (e.code()) {
            case Errc::authentication: code = kVasErrAuth; break;
            case Errc::sequencing: code = kVasErrSequencing; break;
            case Errc::validation: code = kVasErrValidation; break;
            case Errc::state: code = kVasErrState; break;
            default: code = kVasErrState; break;
        }
        send_vas_error(*conn.channel, kSvcPayments, pad, code, e.what());
    }
}

}  // namespace evolve
