#include "evolve/vehicle.hpp"

#include "evolve/charger.hpp"  // vasop codes

namespace evolve {

namespace {

void throw_vas_error(ByteSpan payload) {
    ByteReader r(payload);
    r.u8();  // kVasError
    uint16_t code = r.u16();
    std::string what = r.lp_string();
    switch (code) {
        case 2: throw AuthenticationError(what);
        case 3: throw SequencingError(what);
        case 4: throw UnavailableError(what);
        case 5: throw ValidationError(what);
        case 6: throw IntegrityError(what);
        case 7: throw StateError(what);
        default: throw StateError(what);
    }
}

SecureChannel::Received expect_vas(Session& session, uint16_t svc,
                                   const SecureChannel::Received& r) {
    (void)session;
    if (r.type == MsgType::error) throw ProtocolError(r.error_message);
    if (r.type != MsgType::vas_data || r.service_id != svc)
        throw ProtocolError("unexpected reply frame");
    if (!r.plaintext.empty() && r.plaintext[0] == vasop::kVasError) throw_vas_error(r.plaintext);
    return r;
}

}  // namespace

std::optional<UpdateDownload> request_update(Session& session, const std::string& ecu_model,
                                             Version min_version, uint64_t pad_request_to) {
    ByteWriter w;
    w.u8(vasop::kRequestUpdate);
    w.lp_string(ecu_model);
    w.u16(min_version.major);
    w.u16(min_version.minor);
    w.u16(min_version.patch);
    auto first = expect_vas(session, kSvcUpdates,
                            vas_request(session, kSvcUpdates, w.take(), 0, pad_request_to));
    if (first.plaintext.empty()) throw ProtocolError("empty updates reply");
    if (first.plaintext[0] == vasop::kUpToDate) return std::nullopt;
    if (first.plaintext[0] != vasop::kManifest) throw ProtocolError("expected manifest");

    ByteReader mr(first.plaintext);
    mr.u8();
    uint16_t len = mr.u16();
    UpdateDownload out;
    out.manifest = UpdateManifest::decode(mr.raw(len));

    for (;;) {
        auto next = session.channel->recv();
        if (!next) {
            session.conduit->peer().pump(session.conduit->link());
            next = session.channel->recv();
            if (!next) throw TransportError("image stream interrupted");
        }
        auto chunk = expect_vas(session, kSvcUpdates, *next);
        if (chunk.plaintext.empty()) throw ProtocolError("empty image frame");
        if (chunk.plaintext[0] == vasop::kImageEnd) break;
        if (chunk.plaintext[0] != vasop::kImageChunk) throw ProtocolError("expected image chunk");
        ByteReader cr(chunk.plaintext);
        cr.u8();
        cr.u64();  // offset
        size_t real = cr.remaining();
        if (real > 0) {
            Bytes data = cr.raw(real);
            out.image.data.insert(out.image.data.end(), data.begin(), data.end());
        }
        out.image.synthetic += chunk.synthetic;
    }
    return out;
}

namespace {

Bytes do_upload(Session& session, const Blob& payload, const std::string& vehicle_id,
                uint32_t window_seconds) {
    if (session.closed) throw StateError("session closed");
    if (!session.selected.contains(kSvcSiem)) throw SelectionError("siem service not selected");

    uint64_t streamed = 0;
    try {
        ByteWriter begin;
        begin.u8(vasop::kUploadBegin);
        begin.lp_string(vehicle_id);
        begin.u32(window_seconds);
        begin.u64(payload.size());
        session.channel->send_vas(kSvcSiem, begin.take());

        uint64_t offset = 0;
        uint64_t remaining_real = payload.data.size();
        uint64_t remaining_synth = payload.synthetic;
        while (remaining_real > 0 || remaining_synth > 0) {
            ByteWriter chunk;
            chunk.u8(vasop::kUploadChunk);
            uint64_t synth = 0;
            if (remaining_real > 0) {
                uint64_t n = std::min<uint64_t>(remaining_real, kTransferChunkBytes);
                chunk.raw(ByteSpan(payload.data.data() + offset, size_t(n)));
                offset += n;
                remaining_real -= n;
                streamed += n;
            } else {
                synth = std::min<uint64_t>(remaining_synth, kTransferChunkBytes);
                remaining_synth -= synth;
                streamed += synth;
            }
            session.channel->send_vas(kSvcSiem, chunk.take(), synth);
        }
        ByteWriter end;
        end.u8(vasop::kUploadEnd);
        session.channel->send_vas(kSvcSiem, end.take());
    } catch (const LinkDownError& e) {
        throw ResumableOffsetError(streamed, std::string("upload interrupted: ") + e.what());
    }

    session.conduit->peer().pump(session.conduit->link());
    auto r = session.channel->recv();
    if (!r)
        throw ResumableOffsetError(streamed, "upload interrupted: no ack from charger");
    auto ack = expect_vas(session, kSvcSiem, *r);
    if (ack.plaintext.empty() || ack.plaintext[0] != vasop::kUploadAck)
        throw ProtocolError("expected upload ack");
    return ack.plaintext;
}

}  // namespace

Bytes upload_logs(Session& session, const LogBatch& batch) {
    return do_upload(session, Blob::real(batch.encode()), batch.vehicle_id,
                     batch.window_seconds);
}

Bytes upload_log_bytes(Session& session, const Blob& payload, const std::string& vehicle_id,
                       uint32_t window_seconds) {
    return do_upload(session, payload, vehicle_id, window_seconds);
}

FlParameters pull_fl_parameters(Session& session, uint64_t pad_request_to) {
    ByteWriter w;
    w.u8(vasop::kFlPull);
    w.u32(0);  // reply unpadded; the blob dominates
    auto r = expect_vas(session, kSvcSiem,
                        vas_request(session, kSvcSiem, w.take(), 0, pad_request_to));
    if (r.plaintext.empty() || r.plaintext[0] != vasop::kFlRsp)
        throw ProtocolError("expected FL parameters");
    ByteReader br(r.plaintext);
    br.u8();
    FlParameters fl;
    fl.model_version = br.u64();
    fl.blob = br.raw(br.remaining());
    return fl;
}

// --- payments ---

namespace {
constexpr uint64_t pad_of(bool benchmark_pad) { return benchmark_pad ? kBenchmarkFrameBytes : 0; }
}  // namespace

ReconciliationRecord naive_payment(Session& session, VehicleWallet& wallet, Amount amount,
                                   bool benchmark_pad) {
    uint64_t pad = pad_of(benchmark_pad);
    ReconciliationRecord draft = wallet.draft_naive_record(amount);
    ByteWriter w;
    w.u8(vasop::kNaivePay);
    w.u32(uint32_t(pad));
    w.raw(draft.encode());
    auto r = expect_vas(session, kSvcPayments,
                        vas_request(session, kSvcPayments, w.take(), 0, pad));
    if (r.plaintext.empty() || r.plaintext[0] != vasop::kNaivePayRsp)
        throw ProtocolError("expected naive payment response");
    auto record = ReconciliationRecord::decode(
        ByteSpan(r.plaintext.data() + 1, kReconciliationBytes));
    wallet.accept_naive_record(record);  // throws and stores nothing on a bad signature
    return record;
}

void start_micropayment_session(Session& session, const Tariff& tariff, bool benchmark_pad) {
    uint64_t pad = pad_of(benchmark_pad);
    tariff.validate();
    ByteWriter w;
    w.u8(vasop::kPayStart);
    w.u32(uint32_t(pad));
    w.u32(tariff.price_per_wh);
    w.u32(tariff.burst_wh);
    auto r = expect_vas(session, kSvcPayments,
                        vas_request(session, kSvcPayments, w.take(), 0, pad));
    if (r.plaintext.empty() || r.plaintext[0] != vasop::kPayStartAck)
        throw ProtocolError("expected payment start ack");
}

MicroReceipt micropayment_burst(Session& session, VehicleWallet& wallet, bool benchmark_pad) {
    uint64_t pad = pad_of(benchmark_pad);
    ByteWriter w;
    w.u8(vasop::kNextBurst);
    w.u32(uint32_t(pad));
    if (wallet.authorizations().empty()) {
        w.u8(0);
    } else {
        w.u8(1);
        w.raw(wallet.authorizations().back().encode());
    }
    auto r = expect_vas(session, kSvcPayments,
                        vas_request(session, kSvcPayments, w.take(), 0, pad));
    if (r.plaintext.empty() || r.plaintext[0] != vasop::kReceipt)
        throw ProtocolError("expected micro-receipt");
    auto receipt = MicroReceipt::decode(ByteSpan(r.plaintext.data() + 1, kMicroReceiptBytes));
    wallet.authorize_burst(receipt);
    return receipt;
}

ReconciliationRecord reconcile_micropayments(Session& session, VehicleWallet& wallet,
                                             bool benchmark_pad) {
    uint64_t pad = pad_of(benchmark_pad);

    // Leg 1: final authorization rides with the reconcile request; charger
    // answers with its signed draft.
    ByteWriter w;
    w.u8(vasop::kReconcile);
    w.u32(uint32_t(pad));
    if (wallet.authorizations().size() == wallet.receipts().size() &&
        !wallet.authorizations().empty()) {
        w.u8(1);
        w.raw(wallet.authorizations().back().encode());
    } else {
        w.u8(0);
    }
    w.u8(0);  // no countersignature yet
    auto r = expect_vas(session, kSvcPayments,
                        vas_request(session, kSvcPayments, w.take(), 0, pad));
    if (r.plaintext.empty() || r.plaintext[0] != vasop::kReconcileRsp)
        throw ProtocolError("expected reconciliation draft");
    auto draft = ReconciliationRecord::decode(
        ByteSpan(r.plaintext.data() + 1, kReconciliationBytes));

    // Leg 2: verify against our own chain, countersign, commit.
    Bytes sig = wallet.countersign_reconciliation(draft);
    ByteWriter c;
    c.u8(vasop::kReconcile);
    c.u32(uint32_t(pad));
    c.u8(0);  // no further authorization
    c.u8(1);
    c.raw(sig);
    auto rc = expect_vas(session, kSvcPayments,
                         vas_request(session, kSvcPayments, c.take(), 0, pad));
    if (rc.plaintext.empty() || rc.plaintext[0] != vasop::kReconcileRsp)
        throw ProtocolError("expected committed reconciliation");
    return ReconciliationRecord::decode(ByteSpan(rc.plaintext.data() + 1, kReconciliationBytes));
}

}  // namespace evolve
