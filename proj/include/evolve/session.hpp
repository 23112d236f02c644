#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "evolve/bytes.hpp"
#include "evolve/crypto.hpp"
#include "evolve/frame.hpp"
#include "evolve/link.hpp"

namespace evolve {

using SessionId = std::array<uint8_t, 16>;

struct SdpResponse {
    uint32_t charger_address = 0;
    uint16_t port = 0;
    bool security_required = true;
};

std::string address_to_string(uint32_t address);

enum class Criticality : uint8_t { critical = 1, standard = 2 };

struct ServiceDescriptor {
    uint16_t service_id = 0;
    std::string name;
    std::vector<std::pair<std::string, std::string>> parameters;
    Criticality criticality = Criticality::standard;

    bool operator==(const ServiceDescriptor&) const = default;
};

Bytes encode_catalog(const std::vector<ServiceDescriptor>& catalog);
std::vector<ServiceDescriptor> decode_catalog(ByteSpan data);  // throws ProtocolError

// Well-known service ids used by the default charger catalog.
constexpr uint16_t kSvcCharging = 1;
constexpr uint16_t kSvcUpdates = 2;
constexpr uint16_t kSvcSiem = 3;
constexpr uint16_t kSvcPayments = 4;

/// Something that answers traffic on the far end of a link. The simulation
/// is single-threaded per link: after the initiator sends, it pumps the
/// responder, which drains its side and replies on the same virtual
/// timeline.
class Peer {
public:
    virtual ~Peer() = default;
    virtual void pump(EmulatedLink& link) = 0;
};

/// An initiator's handle on one link and the peer that serves it.
class Conduit {
public:
    Conduit(EmulatedLink& link, Peer& peer) : link_(&link), peer_(&peer) {}

    void send(WireMsg msg) {
        link_->send(Side::a, std::move(msg));
        peer_->pump(*link_);
    }
    std::optional<WireMsg> poll() { return link_->recv(Side::a); }
    /// send + poll; throws TransportError when the peer does not answer.
    WireMsg request(WireMsg msg);

    EmulatedLink& link() { return *link_; }
    Peer& peer() { return *peer_; }

private:
    EmulatedLink* link_;
    Peer* peer_;
};

// --- SDP: charger discovery ---

constexpr double kSdpTimeoutMs = 500;

struct SdpRequest {
    std::array<uint8_t, 8> nonce{};
};

Bytes encode_sdp_request(const SdpRequest& req);        // 16-byte body
SdpRequest decode_sdp_request(ByteSpan body);           // throws ProtocolError
Bytes encode_sdp_response(const SdpRequest& req, const SdpResponse& resp);  // 19 bytes
SdpResponse decode_sdp_response(ByteSpan body, const SdpRequest& expect);

/// Broadcast discovery across every conduit in scope; the first responder on
/// the virtual timeline wins. Throws TimeoutError when nobody answers within
/// `timeout_ms` of emulated time.
struct DiscoveryResult {
    SdpResponse response;
    size_t scope_index = 0;
    double elapsed_ms = 0;
};
DiscoveryResult sdp_discover(std::vector<Conduit*> scope, SeededRng& rng,
                             double timeout_ms = kSdpTimeoutMs);

// --- Secure channel ---

/// Per-direction framing crypto. Control bodies are sealed whole; VAS bodies
/// keep a cleartext 2-byte service id prefix for dispatch, then the sealed
/// payload, then optional synthetic bulk that is metered but not
/// materialized.
class SecureChannel {
public:
    SecureChannel(EmulatedLink& link, Side side, crypto::ChannelKey send_key,
                  crypto::ChannelKey recv_key, uint64_t initial_send_counter = 0,
                  uint64_t initial_recv_counter = 0);

    void send_control(MsgType type, ByteSpan plaintext);
    /// pad_frame_to, when nonzero, pads the whole wire frame to exactly that
    /// many bytes (benchmark parity mode).
    void send_vas(uint16_t service_id, ByteSpan plaintext, uint64_t synthetic = 0,
                  uint64_t pad_frame_to = 0);
    void send_error(uint16_t code, std::string_view message);

    struct Received {
        MsgType type;
        uint16_t service_id = 0;
        Bytes plaintext;
        uint64_t synthetic = 0;
        uint16_t error_code = 0;
        std::string error_message;
    };
    /// Decrypts the next pending frame; nullopt when nothing is pending.
    /// Throws ProtocolError on MAC failure or malformed framing.
    std::optional<Received> recv();

    EmulatedLink& link() { return *link_; }
    Side side() const { return side_; }

private:
    EmulatedLink* link_;
    Side side_;
    crypto::ChannelKey send_key_, recv_key_;
    uint8_t send_dir_, recv_dir_;
    uint64_t send_counter_ = 0, recv_counter_ = 0;
};

Bytes encode_error_frame(uint16_t code, std::string_view message);
std::pair<uint16_t, std::string> decode_error_frame(ByteSpan body);

// Error codes carried by 0x7F frames.
constexpr uint16_t kErrAuthentication = 1;
constexpr uint16_t kErrProtocol = 2;
constexpr uint16_t kErrSelectionUnknown = 3;
constexpr uint16_t kErrSelectionOrdering = 4;
constexpr uint16_t kErrService = 5;

// --- Vehicle-side session ---

struct Session {
    SessionId session_id{};
    crypto::Digest peer_identity{};  // charger static key fingerprint
    std::vector<ServiceDescriptor> negotiated_services;
    std::shared_ptr<SecureChannel> channel;
    Conduit* conduit = nullptr;
    std::set<uint16_t> selected;
    bool closed = false;
    double established_at_ms = 0;
};

struct ServiceHandle {
    Session* session = nullptr;
    uint16_t service_id = 0;
};

struct VehicleCredentials {
    crypto::KeyPair keys;
    /// Trusted charger identities (empty set = trust any registered key).
    std::set<std::array<uint8_t, 32>> trusted_chargers;
};

/// Mutual-authentication handshake with ephemeral key agreement, vehicle
/// side. Three messages (hello / challenge / finish) plus an encrypted
/// accept; a replayed transcript fails because the charger's challenge nonce
/// is fresh per attempt. Throws AuthenticationError or TransportError.
Session establish_session(const VehicleCredentials& credentials, const SdpResponse& sdp,
                          Conduit& conduit, SeededRng& rng);

/// SNP: fetch the charger's catalog and store it on the session.
std::vector<ServiceDescriptor> negotiate_services(Session& session);

/// Select a negotiated service. VAS selection requires the charging service
/// to be selected first; violations surface as OrderingError, unknown ids as
/// SelectionError.
ServiceHandle select_service(Session& session,
                             uint16_t service_id,
                             const std::vector<std::pair<std::string, std::string>>& params = {});

/// One encrypted VAS request/response over an established session.
SecureChannel::Received vas_request(Session& session, uint16_t service_id, ByteSpan plaintext,
                                    uint64_t synthetic = 0, uint64_t pad_frame_to = 0);

}  // namespace evolve
