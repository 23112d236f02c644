#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "evolve/bus.hpp"
#include "evolve/bytes.hpp"
#include "evolve/crypto.hpp"
#include "evolve/frame.hpp"
#include "evolve/handshake.hpp"
#include "evolve/payments.hpp"
#include "evolve/session.hpp"
#include "evolve/siem.hpp"
#include "evolve/update.hpp"

namespace evolve {

// VAS op codes carried in the first plaintext byte of a VAS-data payload.
namespace vasop {
// charging service
constexpr uint8_t kPing = 0x01;
constexpr uint8_t kPong = 0x81;
// updates service
constexpr uint8_t kRequestUpdate = 0x01;
constexpr uint8_t kManifest = 0x81;
constexpr uint8_t kUpToDate = 0x82;
constexpr uint8_t kImageChunk = 0x83;
constexpr uint8_t kImageEnd = 0x84;
// siem service
constexpr uint8_t kUploadBegin = 0x01;
constexpr uint8_t kUploadChunk = 0x02;
constexpr uint8_t kUploadEnd = 0x03;
constexpr uint8_t kUploadAck = 0x81;
constexpr uint8_t kFlPull = 0x05;
constexpr uint8_t kFlRsp = 0x85;
// payments service
constexpr uint8_t kNaivePay = 0x01;
constexpr uint8_t kNaivePayRsp = 0x81;
constexpr uint8_t kPayStart = 0x02;
constexpr uint8_t kPayStartAck = 0x82;
constexpr uint8_t kNextBurst = 0x03;
constexpr uint8_t kReceipt = 0x83;
constexpr uint8_t kReconcile = 0x04;
constexpr uint8_t kReconcileRsp = 0x84;
constexpr uint8_t kVasError = 0xFF;
}  // namespace vasop

struct ChargerConfig {
    uint64_t seed = 0x0C;
    uint32_t address = (10u << 24) | (0u << 16) | (0u << 8) | 1u;  // 10.0.0.1
    uint16_t port = 15118;
    bool vas_enabled = true;
    uint64_t cache_capacity_bytes = 4ull * 1024 * 1024 * 1024;
    std::optional<std::filesystem::path> cache_dir;
    std::vector<CorrelationRule> siem_rules;
};

/// The charger node: SDP responder, session host, SNP catalog, event bus and
/// the three VASs, wired to cloud endpoints over cellular conduits.
class Charger : public Peer {
public:
    explicit Charger(ChargerConfig config);

    // Out-of-band provisioning.
    void authorize_vehicle(const crypto::PublicKey& vehicle_key);
    void set_repo_key(const crypto::PublicKey& repo_key);
    void set_image_repo(Conduit* conduit) { updates_.set_cloud(conduit); }
    void set_siem_backend(Conduit* conduit) { siem_.set_cloud(conduit); }
    void set_payment_gateway(Conduit* conduit) { gateway_ = conduit; }

    void pump(EmulatedLink& link) override;
    /// Entry point for unsolicited cloud frames (repo / FL notifications).
    void on_cloud_frame(const Frame& frame);

    size_t session_count() const;
    uint64_t sessions_established() const;

    EventBus& bus() { return bus_; }
    UpdateService& updates() { return updates_; }
    SiemService& siem() { return siem_; }
    PaymentEngine& payments() { return payments_; }
    UpdateCache& cache() { return cache_; }
    const crypto::KeyPair& keys() const { return keys_; }
    const std::vector<ServiceDescriptor>& catalog() const { return catalog_; }
    const SdpResponse& sdp_info() const { return sdp_info_; }

private:
    struct UploadState {
        bool active = false;
        uint64_t expected_bytes = 0;
        uint64_t received = 0;
        Bytes real_data;
        std::string vehicle_id;
        uint32_t window_seconds = 0;
    };
    struct Connection {
        enum class Phase { idle, challenged, established };
        Phase phase = Phase::idle;
        Bytes hello_body;
        Bytes challenge_body;
        std::array<uint8_t, 32> eph_secret{};
        handshake::Nonce charger_nonce{};
        handshake::Nonce vehicle_nonce{};
        std::array<uint8_t, 32> vehicle_eph{};
        std::unique_ptr<SecureChannel> channel;
        SessionId session_id{};
        crypto::PublicKey vehicle_key{};
        std::set<uint16_t> selected;
        UploadState upload;
        std::map<SessionId, bool> pay_open;
    };

    Connection& connection(EmulatedLink& link);
    void handle_frame(EmulatedLink& link, Connection& conn, const WireMsg& msg);
    void handle_handshake(EmulatedLink& link, Connection& conn, const Frame& frame);
    void handle_control(EmulatedLink& link, Connection& conn,
                        const SecureChannel::Received& msg);
    void handle_vas(EmulatedLink& link, Connection& conn, const SecureChannel::Received& msg);

    void vas_charging(Connection& conn, ByteSpan payload);
    void vas_updates(EmulatedLink& link, Connection& conn, ByteSpan payload);
    void vas_siem(Connection& conn, ByteSpan payload, uint64_t synthetic);
    void vas_payments(Connection& conn, ByteSpan payload);

    ChargerConfig config_;
    crypto::KeyPair keys_;
    SeededRng rng_;
    SdpResponse sdp_info_;
    EventBus bus_;
    std::vector<ServiceDescriptor> catalog_;
    std::set<crypto::PublicKey> authorized_vehicles_;
    UpdateCache cache_;
    UpdateService updates_;
    SiemService siem_;
    PaymentEngine payments_;
    Conduit* gateway_ = nullptr;

    mutable std::mutex mu_;
    std::map<EmulatedLink*, std::unique_ptr<Connection>> connections_;
    uint64_t sessions_established_ = 0;
};

std::vector<ServiceDescriptor> default_catalog(bool vas_enabled);

}  // namespace evolve
