#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "evolve/errors.hpp"
#include "evolve/platform.hpp"

using namespace evolve;

namespace {

struct Parties {
    crypto::KeyPair charger_keys = crypto::KeyPair::from_seed(uint64_t(0xC0FE));
    crypto::KeyPair vehicle_keys = crypto::KeyPair::from_seed(uint64_t(0xEE0));
    SessionId sid{};
    PaymentEngine engine{charger_keys, nullptr};

    Parties() {
        for (size_t i = 0; i < sid.size(); i++) sid[i] = uint8_t(i + 1);
    }
    VehicleWallet wallet(Tariff tariff) {
        return VehicleWallet(vehicle_keys, sid, charger_keys.pk, tariff);
    }
};

void run_bursts(PaymentEngine& engine, PaymentSession& ps, VehicleWallet& wallet, int n) {
    for (int i = 0; i < n; i++) {
        auto receipt = engine.issue_micro_receipt(ps);
        auto auth = wallet.authorize_burst(receipt);
        engine.accept_authorization(ps, auth);
    }
}

}  // namespace

TEST_CASE("canonical encodings measure exactly 97, 119 and 268 bytes") {
    Parties p;
    auto& ps = p.engine.start_session(p.sid, Tariff{5, 1}, p.vehicle_keys.pk);
    auto wallet = p.wallet(Tariff{5, 1});

    auto receipt = p.engine.issue_micro_receipt(ps);
    CHECK(receipt.encode().size() == kMicroReceiptBytes);
    auto auth = wallet.authorize_burst(receipt);
    CHECK(auth.encode().size() == kAuthorizationBytes);
    p.engine.accept_authorization(ps, auth);

    auto outcome = p.engine.reconcile(
        ps, [&](const ReconciliationRecord& r) { return wallet.countersign_reconciliation(r); });
    REQUIRE(outcome.record.has_value());
    CHECK(outcome.record->encode().size() == kReconciliationBytes);

    // codecs invert
    auto r2 = MicroReceipt::decode(receipt.encode());
    CHECK(r2.encode() == receipt.encode());
    auto a2 = PaymentAuthorization::decode(auth.encode());
    CHECK(a2.encode() == auth.encode());
    auto rec2 = ReconciliationRecord::decode(outcome.record->encode());
    CHECK(rec2.encode() == outcome.record->encode());
}

TEST_CASE("tariff validation") {
    CHECK_THROWS_AS((Tariff{0, 10}).validate(), ValidationError);
    CHECK_THROWS_AS((Tariff{10, 0}).validate(), ValidationError);
    CHECK_NOTHROW((Tariff{25, 100}).validate());
    CHECK(Tariff{25, 100}.burst_amount() == 2500);
    Parties p;
    CHECK_THROWS_AS(p.engine.start_session(p.sid, Tariff{5, 0}, p.vehicle_keys.pk),
                    ValidationError);
}

TEST_CASE("burst zero is the genesis of the chain") {
    Parties p;
    auto& ps = p.engine.start_session(p.sid, Tariff{25, 100}, p.vehicle_keys.pk);
    auto receipt = p.engine.issue_micro_receipt(ps);
    CHECK(receipt.burst_index == 0);
    CHECK(receipt.prev_auth_hash == crypto::kZeroDigest);
    CHECK(receipt.amount == 2500);
    CHECK(receipt.energy_wh == 100);
}

TEST_CASE("issuing without authorizing the previous burst is a sequencing error") {
    Parties p;
    auto& ps = p.engine.start_session(p.sid, Tariff{25, 100}, p.vehicle_keys.pk);
    p.engine.issue_micro_receipt(ps);
    CHECK_THROWS_AS(p.engine.issue_micro_receipt(ps), SequencingError);
}

TEST_CASE("a second open session on one handle is a state error") {
    Parties p;
    p.engine.start_session(p.sid, Tariff{25, 100}, p.vehicle_keys.pk);
    CHECK_THROWS_AS(p.engine.start_session(p.sid, Tariff{25, 100}, p.vehicle_keys.pk),
                    StateError);
}

TEST_CASE("receipts chain to the previous authorization") {
    Parties p;
    auto& ps = p.engine.start_session(p.sid, Tariff{5, 1}, p.vehicle_keys.pk);
    auto wallet = p.wallet(Tariff{5, 1});
    auto r0 = p.engine.issue_micro_receipt(ps);
    auto a0 = wallet.authorize_burst(r0);
    p.engine.accept_authorization(ps, a0);
    auto r1 = p.engine.issue_micro_receipt(ps);
    CHECK(r1.burst_index == 1);
    CHECK(r1.prev_auth_hash == a0.digest());
}

TEST_CASE("the wallet refuses a receipt with an altered amount") {
    Parties p;
    auto& ps = p.engine.start_session(p.sid, Tariff{25, 100}, p.vehicle_keys.pk);
    auto wallet = p.wallet(Tariff{25, 100});
    auto receipt = p.engine.issue_micro_receipt(ps);
    receipt.amount += 1;  // signature no longer covers the content
    CHECK_THROWS_AS(wallet.authorize_burst(receipt), AuthenticationError);
}

TEST_CASE("a replayed burst-k receipt after k+1 is refused by chain position") {
    Parties p;
    auto& ps = p.engine.start_session(p.sid, Tariff{5, 1}, p.vehicle_keys.pk);
    auto wallet = p.wallet(Tariff{5, 1});
    auto r0 = p.engine.issue_micro_receipt(ps);
    auto a0 = wallet.authorize_burst(r0);
    p.engine.accept_authorization(ps, a0);
    auto r1 = p.engine.issue_micro_receipt(ps);
    wallet.authorize_burst(r1);
    CHECK_THROWS_AS(wallet.authorize_burst(r0), StateError);  // chain mismatch -> dispute
    CHECK(wallet.state() == PaymentState::disputed);
}

TEST_CASE("ten honest bursts at amount 5 reconcile to exactly 50") {
    Parties p;
    auto& ps = p.engine.start_session(p.sid, Tariff{5, 1}, p.vehicle_keys.pk);
    auto wallet = p.wallet(Tariff{5, 1});
    run_bursts(p.engine, ps, wallet, 10);

    auto outcome = p.engine.reconcile(
        ps, [&](const ReconciliationRecord& r) { return wallet.countersign_reconciliation(r); });
    CHECK(outcome.state == PaymentState::reconciled);
    REQUIRE(outcome.record.has_value());

    // brute-force sum over the stored receipts
    uint64_t expected = 0;
    for (const auto& r : ps.receipts) expected += r.amount;
    CHECK(expected == 50);
    CHECK(outcome.record->total_amount == 50);
    CHECK(outcome.record->total_energy_wh == 10);
    CHECK(outcome.record->burst_count == 10);
    CHECK(outcome.record->verify_signatures());
    CHECK(ps.state == PaymentState::reconciled);
    CHECK(wallet.state() == PaymentState::reconciled);
}

TEST_CASE("zero bursts reconcile to a valid empty record") {
    Parties p;
    auto& ps = p.engine.start_session(p.sid, Tariff{5, 1}, p.vehicle_keys.pk);
    auto wallet = p.wallet(Tariff{5, 1});
    auto outcome = p.engine.reconcile(
        ps, [&](const ReconciliationRecord& r) { return wallet.countersign_reconciliation(r); });
    CHECK(outcome.state == PaymentState::reconciled);
    REQUIRE(outcome.record.has_value());
    CHECK(outcome.record->total_amount == 0);
    CHECK(outcome.record->burst_count == 0);
    CHECK(outcome.record->chain_head_hash == crypto::kZeroDigest);
    CHECK(outcome.record->verify_signatures());
}

TEST_CASE("conservation: total equals bursts times price times energy exactly") {
    Parties p;
    Tariff tariff{17, 13};  // 221 per burst
    auto& ps = p.engine.start_session(p.sid, tariff, p.vehicle_keys.pk);
    auto wallet = p.wallet(tariff);
    run_bursts(p.engine, ps, wallet, 37);
    auto outcome = p.engine.reconcile(
        ps, [&](const ReconciliationRecord& r) { return wallet.countersign_reconciliation(r); });
    REQUIRE(outcome.record.has_value());
    CHECK(outcome.record->total_amount == 37u * 17u * 13u);
    CHECK(outcome.record->total_energy_wh == 37u * 13u);
}

TEST_CASE("tampering any stored element disputes at its index") {
    // exhaustive over the 20 chain elements of a 10-burst session, sampling
    // bit positions inside each element
    SeededRng rng(555);
    for (int element = 0; element < 20; element++) {
        Parties p;
        auto& ps = p.engine.start_session(p.sid, Tariff{5, 1}, p.vehicle_keys.pk);
        auto wallet = p.wallet(Tariff{5, 1});
        run_bursts(p.engine, ps, wallet, 10);

        uint32_t index = uint32_t(element / 2);
        bool is_receipt = element % 2 == 0;
        for (int trial = 0; trial < 4; trial++) {
            PaymentSession dirty = ps;
            Bytes enc = is_receipt ? dirty.receipts[index].encode()
                                   : dirty.authorizations[index].encode();
            size_t bit = rng.below(enc.size() * 8);
            enc[bit / 8] ^= uint8_t(1u << (bit % 8));
            if (is_receipt)
                dirty.receipts[index] = MicroReceipt::decode(enc);
            else
                dirty.authorizations[index] = PaymentAuthorization::decode(enc);

            auto broken = verify_chain(p.sid, dirty.receipts, dirty.authorizations,
                                       p.charger_keys.pk, p.vehicle_keys.pk);
            REQUIRE(broken.has_value());
            CHECK(broken->burst_index == index);
            CHECK((broken->kind == DisputedElement::Kind::receipt) == is_receipt);

            auto outcome = p.engine.reconcile(dirty, [&](const ReconciliationRecord& r) {
                return wallet.countersign_reconciliation(r);
            });
            CHECK(outcome.state == PaymentState::disputed);
            REQUIRE(outcome.dispute.has_value());
            CHECK(outcome.dispute->burst_index == index);
            CHECK(dirty.state == PaymentState::disputed);
        }
    }
}

TEST_CASE("tampering receipt 3 of 10 disputes at index 3") {
    Parties p;
    auto& ps = p.engine.start_session(p.sid, Tariff{5, 1}, p.vehicle_keys.pk);
    auto wallet = p.wallet(Tariff{5, 1});
    run_bursts(p.engine, ps, wallet, 10);
    ps.receipts[3].energy_wh ^= 0x4;
    auto outcome = p.engine.reconcile(
        ps, [&](const ReconciliationRecord& r) { return wallet.countersign_reconciliation(r); });
    CHECK(outcome.state == PaymentState::disputed);
    REQUIRE(outcome.dispute.has_value());
    CHECK(outcome.dispute->burst_index == 3);
    CHECK(outcome.dispute->kind == DisputedElement::Kind::receipt);
}

TEST_CASE("non-repudiation: either party verifies the whole chain with public keys") {
    Parties p;
    auto& ps = p.engine.start_session(p.sid, Tariff{7, 3}, p.vehicle_keys.pk);
    auto wallet = p.wallet(Tariff{7, 3});
    run_bursts(p.engine, ps, wallet, 6);

    // the charger verifies the vehicle's stored copy, and vice versa, from
    // public keys alone
    CHECK_FALSE(verify_chain(p.sid, wallet.receipts(), wallet.authorizations(),
                             p.charger_keys.pk, p.vehicle_keys.pk)
                    .has_value());
    CHECK_FALSE(verify_chain(p.sid, ps.receipts, ps.authorizations, p.charger_keys.pk,
                             p.vehicle_keys.pk)
                    .has_value());
    // the wrong public key refuses the chain immediately
    auto stranger = crypto::KeyPair::from_seed(uint64_t(404));
    CHECK(verify_chain(p.sid, ps.receipts, ps.authorizations, stranger.pk, p.vehicle_keys.pk)
              .has_value());
}

TEST_CASE("naive payment: zero amount is a valid record") {
    Parties p;
    auto wallet = p.wallet(Tariff{25, 100});
    auto draft = wallet.draft_naive_record(0);
    auto record = p.engine.naive_payment(p.sid, p.vehicle_keys.pk, draft);
    CHECK(record.total_amount == 0);
    CHECK(record.verify_signatures());
    wallet.accept_naive_record(record);
    CHECK(wallet.stored_record().has_value());
}

TEST_CASE("naive payment signed by the wrong charger key is rejected and not stored") {
    Parties p;
    auto wallet = p.wallet(Tariff{25, 100});
    auto draft = wallet.draft_naive_record(2500);

    auto imposter = crypto::KeyPair::from_seed(uint64_t(666));
    ReconciliationRecord forged = draft;
    forged.charger_signature = crypto::sign(imposter, forged.signed_payload(),
                                            kReconciliationSigWidth);
    CHECK_THROWS_AS(wallet.accept_naive_record(forged), AuthenticationError);
    CHECK_FALSE(wallet.stored_record().has_value());
}

TEST_CASE("wire flow: bursts, reconciliation and gateway settlement") {
    Platform platform({});
    platform.add_vehicle();
    auto connected = platform.connect(0, {kSvcPayments});
    VehicleWallet wallet(platform.vehicle().credentials.keys, connected.session.session_id,
                         platform.charger().keys().pk, Tariff{25, 100});

    // every payment frame is padded to exactly 1 KB on the wire
    platform.vehicle_link().set_tap([](Side, const WireMsg& m) {
        Frame f = decode_frame(m);
        if (f.type == MsgType::vas_data && f.body.size() >= 2 &&
            (uint16_t(f.body[0]) << 8 | f.body[1]) == kSvcPayments)
            CHECK(m.wire_size() == 1024);
    });

    start_micropayment_session(connected.session, Tariff{25, 100});
    for (int i = 0; i < 5; i++) micropayment_burst(connected.session, wallet);
    CHECK(wallet.receipts().size() == 5);

    auto record = reconcile_micropayments(connected.session, wallet);
    platform.vehicle_link().set_tap({});
    CHECK(record.burst_count == 5);
    CHECK(record.total_amount == 5u * 2500u);
    CHECK(record.verify_signatures());
    CHECK(wallet.state() == PaymentState::reconciled);
    CHECK(platform.gateway().settlement_count() == 1);
}

TEST_CASE("wire flow: naive payment round trip on EVolve10 lands near 5.6 ms") {
    PlatformConfig pc;
    pc.vehicle_profile = LinkProfile::builtin("EVolve10");
    Platform platform(std::move(pc));
    platform.add_vehicle();
    auto connected = platform.connect(0, {kSvcPayments});
    VehicleWallet wallet(platform.vehicle().credentials.keys, connected.session.session_id,
                         platform.charger().keys().pk, Tariff{25, 100});

    double start = platform.vehicle_link().now_ms();
    auto record = naive_payment(connected.session, wallet, 2500);
    double rtt = platform.vehicle_link().now_ms() - start;
    CHECK(record.total_amount == 2500);
    CHECK(record.verify_signatures());
    CHECK(wallet.stored_record().has_value());
    CHECK(rtt == doctest::Approx(5.64).epsilon(0.05));
    CHECK(platform.gateway().settlement_count() == 1);
}

TEST_CASE("wire flow: starting a second session on one handle is a state error") {
    Platform platform({});
    platform.add_vehicle();
    auto connected = platform.connect(0, {kSvcPayments});
    start_micropayment_session(connected.session, Tariff{25, 100});
    CHECK_THROWS_AS(start_micropayment_session(connected.session, Tariff{25, 100}), StateError);
}
