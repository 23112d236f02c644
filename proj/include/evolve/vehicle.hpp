#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "evolve/errors.hpp"
#include "evolve/payments.hpp"
#include "evolve/session.hpp"
#include "evolve/siem.hpp"
#include "evolve/update.hpp"

namespace evolve {

/// Vehicle identity and per-vehicle randomness (nonces, ephemeral keys).
struct Vehicle {
    explicit Vehicle(uint64_t seed)
        : credentials{crypto::KeyPair::from_seed(SeededRng::derive(seed, 0xE7)), {}},
          rng(SeededRng::derive(seed, 0xE8)) {}

    VehicleCredentials credentials;
    SeededRng rng;
};

// Benchmark parity: small control exchanges ride in frames padded to 1 KB.
constexpr uint64_t kBenchmarkFrameBytes = 1024;

// --- updates client ---

struct UpdateDownload {
    UpdateManifest manifest;
    Blob image;
};

/// Asks the charger for anything newer than min_version and streams it down.
/// nullopt means up to date. Content verification happens in apply_update.
std::optional<UpdateDownload> request_update(Session& session, const std::string& ecu_model,
                                             Version min_version, uint64_t pad_request_to = 0);

// --- siem client ---

class ResumableOffsetError : public Error {
public:
    ResumableOffsetError(uint64_t offset, const std::string& what)
        : Error(Errc::transport, what), offset(offset) {}
    uint64_t offset;
};

/// Streams the batch up and returns the charger's ack payload (<= 64 bytes
/// on the wire). A transfer interruption surfaces the resumable offset.
Bytes upload_logs(Session& session, const LogBatch& batch);
/// Timing-path variant: streams `payload` (typically synthetic) with the
/// stated metadata instead of an encoded batch.
Bytes upload_log_bytes(Session& session, const Blob& payload, const std::string& vehicle_id,
                       uint32_t window_seconds);

FlParameters pull_fl_parameters(Session& session, uint64_t pad_request_to = 0);

// --- payments client ---

/// One-shot payment: drafts and signs the record, exchanges it (padded to
/// 1 KB frames in benchmark mode), verifies the charger's completion.
ReconciliationRecord naive_payment(Session& session, VehicleWallet& wallet, Amount amount,
                                   bool benchmark_pad = true);

void start_micropayment_session(Session& session, const Tariff& tariff,
                                bool benchmark_pad = true);

/// One burst: sends the previous authorization (none for burst 0), receives
/// and locally authorizes the next receipt. One 1 KB <-> 1 KB exchange.
MicroReceipt micropayment_burst(Session& session, VehicleWallet& wallet,
                                bool benchmark_pad = true);

/// Final authorization + two-leg reconciliation; returns the dual-signed
/// record after countersigning.
ReconciliationRecord reconcile_micropayments(Session& session, VehicleWallet& wallet,
                                             bool benchmark_pad = true);

}  // namespace evolve
