#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "evolve/bytes.hpp"
#include "evolve/crypto.hpp"
#include "evolve/session.hpp"

namespace evolve {

class EventBus;

/// Integer minor currency units; no floating-point money anywhere.
using Amount = uint32_t;

struct Tariff {
    uint32_t price_per_wh = 0;
    uint32_t burst_wh = 0;

    void validate() const;  // both must be > 0
    Amount burst_amount() const;
};

// Wire sizes of the canonical payment encodings. The micro-receipt and
// authorization carry truncated-challenge signatures (37 and 63 bytes); the
// reconciliation record embeds both parties' public keys plus two 72-byte
// signatures so a third party can verify it standalone.
constexpr size_t kMicroReceiptBytes = 97;
constexpr size_t kAuthorizationBytes = 119;
constexpr size_t kReconciliationBytes = 268;
constexpr size_t kReceiptSigWidth = 37;
constexpr size_t kAuthorizationSigWidth = 63;
constexpr size_t kReconciliationSigWidth = 72;

/// Charger-signed per-burst statement. prev_auth_hash chains it to the
/// authorization of the previous burst (zero digest for burst 0).
struct MicroReceipt {
    SessionId session_id{};
    uint32_t burst_index = 0;
    uint32_t energy_wh = 0;
    Amount amount = 0;
    crypto::Digest prev_auth_hash{};
    Bytes charger_signature;  // 37 bytes

    Bytes signed_payload() const;
    Bytes encode() const;  // exactly 97 bytes
    static MicroReceipt decode(ByteSpan data);
    crypto::Digest digest() const;
};

/// Vehicle-signed confirmation of one receipt.
struct PaymentAuthorization {
    SessionId session_id{};
    uint32_t burst_index = 0;
    Amount amount = 0;
    crypto::Digest receipt_hash{};
    Bytes vehicle_signature;  // 63 bytes

    Bytes signed_payload() const;
    Bytes encode() const;  // exactly 119 bytes
    static PaymentAuthorization decode(ByteSpan data);
    crypto::Digest digest() const;
};

/// Dual-signed end-of-session settlement record.
struct ReconciliationRecord {
    SessionId session_id{};
    uint32_t burst_count = 0;
    uint32_t total_energy_wh = 0;
    Amount total_amount = 0;
    crypto::Digest chain_head_hash{};
    crypto::PublicKey charger_key{};
    crypto::PublicKey vehicle_key{};
    Bytes charger_signature;  // 72 bytes
    Bytes vehicle_signature;  // 72 bytes

    Bytes signed_payload() const;  // everything before the signature slots
    Bytes encode() const;          // exactly 268 bytes
    static ReconciliationRecord decode(ByteSpan data);
    bool verify_signatures() const;
};

enum class PaymentState { open, reconciled, disputed };

struct DisputedElement {
    enum class Kind { receipt, authorization };
    uint32_t burst_index = 0;
    Kind kind = Kind::receipt;

    bool operator==(const DisputedElement&) const = default;
};

/// Walks the alternating chain receipt0 -> auth0 -> receipt1 -> ... and
/// returns the first broken element, or nullopt when the whole chain
/// verifies. Only public keys are needed, so either party (or the gateway)
/// can run it over the other's stored chain.
std::optional<DisputedElement> verify_chain(const SessionId& session_id,
                                            const std::vector<MicroReceipt>& receipts,
                                            const std::vector<PaymentAuthorization>& auths,
                                            const crypto::PublicKey& charger_key,
                                            const crypto::PublicKey& vehicle_key);

struct PaymentSession {
    SessionId session_id{};
    Tariff tariff;
    std::vector<MicroReceipt> receipts;
    std::vector<PaymentAuthorization> authorizations;
    PaymentState state = PaymentState::open;
    std::optional<DisputedElement> dispute;
};

struct ReconcileOutcome {
    PaymentState state = PaymentState::reconciled;
    std::optional<ReconciliationRecord> record;  // set when reconciled
    std::optional<DisputedElement> dispute;      // set when disputed
};

/// Charger-side payment processor.
class PaymentEngine {
public:
    PaymentEngine(crypto::KeyPair charger_keys, EventBus* bus = nullptr);

    /// Opens the micropayment session for a wire session. Throws StateError
    /// if one is already open, ValidationError on a bad tariff.
    PaymentSession& start_session(const SessionId& id, const Tariff& tariff,
                                  const crypto::PublicKey& vehicle_key);
    PaymentSession* find_session(const SessionId& id);

    /// Issues the next receipt. The previous burst must be authorized.
    MicroReceipt issue_micro_receipt(PaymentSession& session);

    /// Validates and appends a vehicle authorization.
    void accept_authorization(PaymentSession& session, const PaymentAuthorization& auth);

    /// Verifies the full chain, emits the dual-signed record (the vehicle
    /// countersignature is produced by `countersign`), and publishes the
    /// outcome on payments/reconciled. On a broken chain the session goes to
    /// disputed and the outcome carries the first invalid element.
    ReconcileOutcome reconcile(PaymentSession& session,
                               const std::function<Bytes(const ReconciliationRecord&)>& countersign);

    /// Wire-friendly two-phase form: prepare verifies the chain and returns
    /// either the charger-signed draft (vehicle signature zeroed) or the
    /// dispute; commit installs the vehicle countersignature.
    struct Prepared {
        std::optional<ReconciliationRecord> draft;
        std::optional<DisputedElement> dispute;
    };
    Prepared prepare_reconciliation(PaymentSession& session);
    ReconciliationRecord commit_reconciliation(PaymentSession& session, const Bytes& vehicle_sig);

    /// One-shot payment: verifies the vehicle-signed draft record, adds the
    /// charger signature, stores it.
    ReconciliationRecord naive_payment(const SessionId& id, const crypto::PublicKey& vehicle_key,
                                       ReconciliationRecord draft);

    const crypto::PublicKey& public_key() const { return keys_.pk; }
    const std::vector<ReconciliationRecord>& settled() const { return settled_; }

private:
    void publish_outcome(const PaymentSession& session);

    crypto::KeyPair keys_;
    EventBus* bus_;
    std::map<SessionId, crypto::PublicKey> vehicle_keys_;
    std::map<SessionId, PaymentSession> sessions_;
    std::vector<ReconciliationRecord> settled_;
};

/// Vehicle-side payment state: verifies receipts against its own copy of the
/// chain and signs authorizations and reconciliation records.
class VehicleWallet {
public:
    VehicleWallet(crypto::KeyPair keys, SessionId session_id, crypto::PublicKey charger_key,
                  Tariff tariff);

    /// Verifies the receipt (signature, index, chain position, amount) and
    /// returns the signed authorization. A bad signature or amount refuses
    /// (AuthenticationError); a chain-position mismatch marks the wallet
    /// disputed (StateError).
    PaymentAuthorization authorize_burst(const MicroReceipt& receipt);

    /// Builds the vehicle-signed draft for a one-shot payment of `amount`.
    ReconciliationRecord draft_naive_record(Amount amount);
    /// Verifies a charger-completed naive record before storing it.
    void accept_naive_record(const ReconciliationRecord& record);

    /// Verifies the charger-proposed record against the wallet's own chain
    /// and returns the vehicle signature for it.
    Bytes countersign_reconciliation(const ReconciliationRecord& record);

    PaymentState state() const { return state_; }
    const std::vector<MicroReceipt>& receipts() const { return receipts_; }
    const std::vector<PaymentAuthorization>& authorizations() const { return authorizations_; }
    const std::optional<ReconciliationRecord>& stored_record() const { return record_; }
    const crypto::PublicKey& public_key() const { return keys_.pk; }

private:
    crypto::KeyPair keys_;
    SessionId session_id_;
    crypto::PublicKey charger_key_;
    Tariff tariff_;
    std::vector<MicroReceipt> receipts_;
    std::vector<PaymentAuthorization> authorizations_;
    PaymentState state_ = PaymentState::open;
    std::optional<ReconciliationRecord> record_;
};

}  // namespace evolve
