#include "evolve/payments.hpp"

#include "evolve/bus.hpp"
#include "evolve/errors.hpp"

namespace evolve {

namespace {

constexpr std::string_view kReceiptDomain = "evolve.pay.receipt";
constexpr std::string_view kAuthDomain = "evolve.pay.auth";
constexpr std::string_view kReconDomain = "evolve.pay.recon";

void check_sig_width(const Bytes& sig, size_t expect, const char* what) {
    if (sig.size() != expect) throw ValidationError(std::string(what) + ": bad signature width");
}

}  // namespace

void Tariff::validate() const {
    if (price_per_wh == 0 || burst_wh == 0)
        throw ValidationError("tariff fields must be positive");
    if (uint64_t(price_per_wh) * burst_wh > 0xFFFFFFFFULL)
        throw ValidationError("burst amount overflows currency range");
}

Amount Tariff::burst_amount() const { return Amount(uint64_t(price_per_wh) * burst_wh); }

// --- MicroReceipt ---

Bytes MicroReceipt::signed_payload() const {
    ByteWriter w;
    w.raw(to_bytes(kReceiptDomain));
    w.raw(session_id);
    w.u32(burst_index);
    w.u32(energy_wh);
    w.u32(amount);
    w.raw(prev_auth_hash);
    return w.take();
}

Bytes MicroReceipt::encode() const {
    ByteWriter w;
    w.raw(session_id);
    w.u32(burst_index);
    w.u32(energy_wh);
    w.u32(amount);
    w.raw(prev_auth_hash);
    if (charger_signature.size() != kReceiptSigWidth)
        throw ValidationError("receipt signature must be 37 bytes");
    w.raw(charger_signature);
    Bytes out = w.take();
    if (out.size() != kMicroReceiptBytes) throw ValidationError("receipt encoding size");
    return out;
}

MicroReceipt MicroReceipt::decode(ByteSpan data) {
    if (data.size() != kMicroReceiptBytes) throw ProtocolError("micro-receipt must be 97 bytes");
    ByteReader r(data);
    MicroReceipt m;
    m.session_id = r.arr<16>();
    m.burst_index = r.u32();
    m.energy_wh = r.u32();
    m.amount = r.u32();
    m.prev_auth_hash = r.arr<32>();
    m.charger_signature = r.raw(kReceiptSigWidth);
    return m;
}

crypto::Digest MicroReceipt::digest() const { return crypto::sha256(encode()); }

// --- PaymentAuthorization ---

Bytes PaymentAuthorization::signed_payload() const {
    ByteWriter w;
    w.raw(to_bytes(kAuthDomain));
    w.raw(session_id);
    w.u32(burst_index);
    w.u32(amount);
    w.raw(receipt_hash);
    return w.take();
}

Bytes PaymentAuthorization::encode() const {
    ByteWriter w;
    w.raw(session_id);
    w.u32(burst_index);
    w.u32(amount);
    w.raw(receipt_hash);
    if (vehicle_signature.size() != kAuthorizationSigWidth)
        throw ValidationError("authorization signature must be 63 bytes");
    w.raw(vehicle_signature);
    Bytes out = w.take();
    if (out.size() != kAuthorizationBytes) throw ValidationError("authorization encoding size");
    return out;
}

PaymentAuthorization PaymentAuthorization::decode(ByteSpan data) {
    if (data.size() != kAuthorizationBytes)
        throw ProtocolError("payment authorization must be 119 bytes");
    ByteReader r(data);
    PaymentAuthorization a;
    a.session_id = r.arr<16>();
    a.burst_index = r.u32();
    a.amount = r.u32();
    a.receipt_hash = r.arr<32>();
    a.vehicle_signature = r.raw(kAuthorizationSigWidth);
    return a;
}

crypto::Digest PaymentAuthorization::digest() const { return crypto::sha256(encode()); }

// --- ReconciliationRecord ---

Bytes ReconciliationRecord::signed_payload() const {
    ByteWriter w;
    w.raw(to_bytes(kReconDomain));
    w.raw(session_id);
    w.u32(burst_count);
    w.u32(total_energy_wh);
    w.u32(total_amount);
    w.raw(chain_head_hash);
    w.raw(charger_key);
    w.raw(vehicle_key);
    return w.take();
}

Bytes ReconciliationRecord::encode() const {
    ByteWriter w;
    w.raw(session_id);
    w.u32(burst_count);
    w.u32(total_energy_wh);
    w.u32(total_amount);
    w.raw(chain_head_hash);
    w.raw(charger_key);
    w.raw(vehicle_key);
    check_sig_width(charger_signature, kReconciliationSigWidth, "reconciliation");
    check_sig_width(vehicle_signature, kReconciliationSigWidth, "reconciliation");
    w.raw(charger_signature);
    w.raw(vehicle_signature);
    Bytes out = w.take();
    if (out.size() != kReconciliationBytes) throw ValidationError("reconciliation encoding size");
    return out;
}

ReconciliationRecord ReconciliationRecord::decode(ByteSpan data) {
    if (data.size() != kReconciliationBytes)
        throw ProtocolError("reconciliation record must be 268 bytes");
    ByteReader r(data);
    ReconciliationRecord rec;
    rec.session_id = r.arr<16>();
    rec.burst_count = r.u32();
    rec.total_energy_wh = r.u32();
    rec.total_amount = r.u32();
    rec.chain_head_hash = r.arr<32>();
    rec.charger_key = r.arr<32>();
    rec.vehicle_key = r.arr<32>();
    rec.charger_signature = r.raw(kReconciliationSigWidth);
    rec.vehicle_signature = r.raw(kReconciliationSigWidth);
    return rec;
}

bool ReconciliationRecord::verify_signatures() const {
    Bytes payload = signed_payload();
    return crypto::verify(charger_key, payload, charger_signature) &&
           crypto::verify(vehicle_key, payload, vehicle_signature);
}

// --- chain verification ---

std::optional<DisputedElement> verify_chain(const SessionId& session_id,
                                            const std::vector<MicroReceipt>& receipts,
                                            const std::vector<PaymentAuthorization>& auths,
                                            const crypto::PublicKey& charger_key,
                                            const crypto::PublicKey& vehicle_key) {
    crypto::Digest prev_auth = crypto::kZeroDigest;
    for (size_t k = 0; k < receipts.size(); k++) {
        const auto& receipt = receipts[k];
        DisputedElement bad_receipt{uint32_t(k), DisputedElement::Kind::receipt};
        if (receipt.session_id != session_id || receipt.burst_index != k ||
            receipt.prev_auth_hash != prev_auth)
            return bad_receipt;
        if (receipt.charger_signature.size() != kReceiptSigWidth ||
            !crypto::verify(charger_key, receipt.signed_payload(), receipt.charger_signature))
            return bad_receipt;

        if (k >= auths.size()) break;  // trailing unauthorized receipt is legal mid-session
        const auto& auth = auths[k];
        DisputedElement bad_auth{uint32_t(k), DisputedElement::Kind::authorization};
        if (auth.session_id != session_id || auth.burst_index != k ||
            auth.amount != receipt.amount || auth.receipt_hash != receipt.digest())
            return bad_auth;
        if (auth.vehicle_signature.size() != kAuthorizationSigWidth ||
            !crypto::verify(vehicle_key, auth.signed_payload(), auth.vehicle_signature))
            return bad_auth;
        prev_auth = auth.digest();
    }
    return std::nullopt;
}

// --- PaymentEngine ---

PaymentEngine::PaymentEngine(crypto::KeyPair charger_keys, EventBus* bus)
    : keys_(charger_keys), bus_(bus) {}

PaymentSession& PaymentEngine::start_session(const SessionId& id, const Tariff& tariff,
                                             const crypto::PublicKey& vehicle_key) {
    tariff.validate();
    auto it = sessions_.find(id);
    if (it != sessions_.end() && it->second.state == PaymentState::open)
        throw StateError("payment session already open");
    PaymentSession s;
    s.session_id = id;
    s.tariff = tariff;
    vehicle_keys_[id] = vehicle_key;
    auto [pos, _] = sessions_.insert_or_assign(id, std::move(s));
    return pos->second;
}

PaymentSession* PaymentEngine::find_session(const SessionId& id) {
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : &it->second;
}

MicroReceipt PaymentEngine::issue_micro_receipt(PaymentSession& session) {
    if (session.state != PaymentState::open) throw StateError("payment session not open");
    if (session.receipts.size() != session.authorizations.size())
        throw SequencingError("previous burst not yet authorized");

    MicroReceipt r;
    r.session_id = session.session_id;
    r.burst_index = uint32_t(session.receipts.size());
    r.energy_wh = session.tariff.burst_wh;
    r.amount = session.tariff.burst_amount();
    r.prev_auth_hash = session.authorizations.empty() ? crypto::kZeroDigest
                                                      : session.authorizations.back().digest();
    r.charger_signature = crypto::sign(keys_, r.signed_payload(), kReceiptSigWidth);
    session.receipts.push_back(r);
    return r;
}

void PaymentEngine::accept_authorization(PaymentSession& session,
                                         const PaymentAuthorization& auth) {
    if (session.state != PaymentState::open) throw StateError("payment session not open");
    if (session.receipts.size() != session.authorizations.size() + 1)
        throw SequencingError("no receipt awaiting authorization");
    const MicroReceipt& receipt = session.receipts.back();
    auto vk = vehicle_keys_.find(session.session_id);
    if (vk == vehicle_keys_.end()) throw StateError("no vehicle key for session");

    bool ok = auth.session_id == session.session_id &&
              auth.burst_index == receipt.burst_index && auth.amount == receipt.amount &&
              auth.receipt_hash == receipt.digest() &&
              auth.vehicle_signature.size() == kAuthorizationSigWidth &&
              crypto::verify(vk->second, auth.signed_payload(), auth.vehicle_signature);
    if (!ok) {
        session.state = PaymentState::disputed;
        session.dispute = DisputedElement{receipt.burst_index,
                                          DisputedElement::Kind::authorization};
        throw AuthenticationError("authorization rejected for burst " +
                                  std::to_string(receipt.burst_index));
    }
    session.authorizations.push_back(auth);
}

PaymentEngine::Prepared PaymentEngine::prepare_reconciliation(PaymentSession& session) {
    if (session.state == PaymentState::reconciled) throw StateError("already reconciled");
    if (session.receipts.size() != session.authorizations.size())
        throw SequencingError("every receipt must be authorized before reconciliation");

    auto vk = vehicle_keys_.find(session.session_id);
    if (vk == vehicle_keys_.end()) throw StateError("no vehicle key for session");

    Prepared prepared;
    auto broken = verify_chain(session.session_id, session.receipts, session.authorizations,
                               keys_.pk, vk->second);
    if (broken) {
        session.state = PaymentState::disputed;
        session.dispute = broken;
        prepared.dispute = broken;
        publish_outcome(session);
        return prepared;
    }

    ReconciliationRecord rec;
    rec.session_id = session.session_id;
    rec.burst_count = uint32_t(session.receipts.size());
    uint64_t energy = 0, amount = 0;
    for (const auto& r : session.receipts) {
        energy += r.energy_wh;
        amount += r.amount;
    }
    if (energy > 0xFFFFFFFFULL || amount > 0xFFFFFFFFULL)
        throw ValidationError("session totals overflow");
    rec.total_energy_wh = uint32_t(energy);
    rec.total_amount = Amount(amount);
    rec.chain_head_hash = session.authorizations.empty()
                              ? crypto::kZeroDigest
                              : session.authorizations.back().digest();
    rec.charger_key = keys_.pk;
    rec.vehicle_key = vk->second;
    rec.charger_signature = crypto::sign(keys_, rec.signed_payload(), kReconciliationSigWidth);
    rec.vehicle_signature.assign(kReconciliationSigWidth, 0);
    prepared.draft = std::move(rec);
    return prepared;
}

ReconciliationRecord PaymentEngine::commit_reconciliation(PaymentSession& session,
                                                          const Bytes& vehicle_sig) {
    if (session.state != PaymentState::open) throw StateError("session not awaiting commit");
    auto vk = vehicle_keys_.find(session.session_id);
    if (vk == vehicle_keys_.end()) throw StateError("no vehicle key for session");

    Prepared prepared = prepare_reconciliation(session);
    if (!prepared.draft) throw StateError("chain became disputed before commit");
    ReconciliationRecord rec = *prepared.draft;
    rec.vehicle_signature = vehicle_sig;
    if (vehicle_sig.size() != kReconciliationSigWidth ||
        !crypto::verify(vk->second, rec.signed_payload(), vehicle_sig))
        throw AuthenticationError("vehicle countersignature invalid");

    session.state = PaymentState::reconciled;
    settled_.push_back(rec);
    publish_outcome(session);
    return rec;
}

ReconcileOutcome PaymentEngine::reconcile(
    PaymentSession& session,
    const std::function<Bytes(const ReconciliationRecord&)>& countersign) {
    ReconcileOutcome outcome;
    Prepared prepared = prepare_reconciliation(session);
    if (prepared.dispute) {
        outcome.state = PaymentState::disputed;
        outcome.dispute = prepared.dispute;
        return outcome;
    }
    Bytes sig = countersign(*prepared.draft);
    outcome.record = commit_reconciliation(session, sig);
    outcome.state = PaymentState::reconciled;
    return outcome;
}

ReconciliationRecord PaymentEngine::naive_payment(const SessionId& id,
                                                  const crypto::PublicKey& vehicle_key,
                                                  ReconciliationRecord draft) {
    if (draft.session_id != id) throw ValidationError("naive payment session mismatch");
    if (draft.vehicle_key != vehicle_key) throw AuthenticationError("naive payment key mismatch");
    if (draft.charger_key != keys_.pk) throw AuthenticationError("naive payment charger mismatch");
    if (!crypto::verify(vehicle_key, draft.signed_payload(), draft.vehicle_signature))
        throw AuthenticationError("naive payment vehicle signature invalid");
    draft.charger_signature = crypto::sign(keys_, draft.signed_payload(),
                                           kReconciliationSigWidth);
    settled_.push_back(draft);
    return draft;
}

void PaymentEngine::publish_outcome(const PaymentSession& session) {
    if (!bus_) return;
    ByteWriter w;
    w.raw(session.session_id);
    w.u8(uint8_t(session.state));
    if (session.dispute) {
        w.u8(session.dispute->kind == DisputedElement::Kind::receipt ? 1 : 2);
        w.u32(session.dispute->burst_index);
    }
    Event e;
    e.topic = "payments/reconciled";
    e.payload = w.take();
    e.criticality = Criticality::standard;
    bus_->publish("vas_payments", std::move(e));
}

// --- VehicleWallet ---

VehicleWallet::VehicleWallet(crypto::KeyPair keys, SessionId session_id,
                             crypto::PublicKey charger_key, Tariff tariff)
    : keys_(keys), session_id_(session_id), charger_key_(charger_key), tariff_(tariff) {
    tariff_.validate();
}

PaymentAuthorization VehicleWallet::authorize_burst(const MicroReceipt& receipt) {
    if (state_ != PaymentState::open) throw StateError("wallet not open");

    if (receipt.charger_signature.size() != kReceiptSigWidth ||
        !crypto::verify(charger_key_, receipt.signed_payload(), receipt.charger_signature))
        throw AuthenticationError("receipt signature invalid");
    if (receipt.session_id != session_id_)
        throw AuthenticationError("receipt for a different session");
    if (receipt.amount != tariff_.burst_amount() || receipt.energy_wh != tariff_.burst_wh)
        throw AuthenticationError("receipt amount does not match tariff");

    crypto::Digest expected_prev =
        authorizations_.empty() ? crypto::kZeroDigest : authorizations_.back().digest();
    if (receipt.burst_index != authorizations_.size() || receipt.prev_auth_hash != expected_prev) {
        state_ = PaymentState::disputed;
        throw StateError("receipt chain position mismatch; session disputed");
    }

    PaymentAuthorization a;
    a.session_id = session_id_;
    a.burst_index = receipt.burst_index;
    a.amount = receipt.amount;
    a.receipt_hash = receipt.digest();
    a.vehicle_signature = crypto::sign(keys_, a.signed_payload(), kAuthorizationSigWidth);
    receipts_.push_back(receipt);
    authorizations_.push_back(a);
    return a;
}

ReconciliationRecord VehicleWallet::draft_naive_record(Amount amount) {
    ReconciliationRecord rec;
    rec.session_id = session_id_;
    rec.burst_count = 0;
    rec.total_energy_wh = 0;
    rec.total_amount = amount;
    rec.chain_head_hash = crypto::kZeroDigest;
    rec.charger_key = charger_key_;
    rec.vehicle_key = keys_.pk;
    rec.vehicle_signature = crypto::sign(keys_, rec.signed_payload(), kReconciliationSigWidth);
    rec.charger_signature.assign(kReconciliationSigWidth, 0);  // filled by the charger
    return rec;
}

void VehicleWallet::accept_naive_record(const ReconciliationRecord& record) {
    if (record.charger_key != charger_key_ || record.vehicle_key != keys_.pk)
        throw AuthenticationError("naive record keys do not match session");
    if (!crypto::verify(charger_key_, record.signed_payload(), record.charger_signature))
        throw AuthenticationError("charger signature invalid; record not stored");
    record_ = record;
}

Bytes VehicleWallet::countersign_reconciliation(const ReconciliationRecord& record) {
    if (record.session_id != session_id_) throw ValidationError("record session mismatch");
    if (record.charger_key != charger_key_ || record.vehicle_key != keys_.pk)
        throw AuthenticationError("record keys do not match session");
    auto broken = verify_chain(session_id_, receipts_, authorizations_, charger_key_, keys_.pk);
    if (broken) {
        state_ = PaymentState::disputed;
        throw StateError("own chain verification failed; refusing to countersign");
    }
    uint64_t amount = 0, energy = 0;
    for (const auto& r : receipts_) {
        amount += r.amount;
        energy += r.energy_wh;
    }
    if (record.burst_count != receipts_.size() || record.total_amount != amount ||
        record.total_energy_wh != energy)
        throw ValidationError("record totals disagree with own chain");
    crypto::Digest head =
        authorizations_.empty() ? crypto::kZeroDigest : authorizations_.back().digest();
    if (record.chain_head_hash != head) throw ValidationError("record head hash mismatch");
    if (!crypto::verify(charger_key_, record.signed_payload(), record.charger_signature))
        throw AuthenticationError("charger reconciliation signature invalid");
    Bytes sig = crypto::sign(keys_, record.signed_payload(), kReconciliationSigWidth);
    ReconciliationRecord complete = record;
    complete.vehicle_signature = sig;
    record_ = complete;
    state_ = PaymentState::reconciled;
    return sig;
}

}  // namespace evolve
