#pragma once

// Handshake message layouts shared by the vehicle and charger session code.

#include <array>

#include "evolve/bytes.hpp"
#include "evolve/crypto.hpp"
#include "evolve/session.hpp"

namespace evolve::handshake {

using Nonce = std::array<uint8_t, 16>;

struct Hello {
    Nonce nonce{};
    std::array<uint8_t, 32> ephemeral{};
};

struct Challenge {
    Nonce nonce{};
    std::array<uint8_t, 32> ephemeral{};
    crypto::PublicKey static_key{};
    Bytes signature;  // 64 bytes over the transcript so far
};

struct Finish {
    crypto::PublicKey static_key{};
    Bytes signature;
};

Bytes encode_hello(const Hello& h);
Hello decode_hello(ByteSpan body);
Bytes encode_challenge(const Challenge& c);
Challenge decode_challenge(ByteSpan body);
Bytes encode_finish(const Finish& f);
Finish decode_finish(ByteSpan body);

/// Transcript the charger signs: binds its fresh nonce and key to the hello.
Bytes challenge_sig_payload(ByteSpan hello_body, const Challenge& c);
/// Transcript the vehicle signs: the full exchanged history including the
/// charger's nonce, which is what makes replayed transcripts fail.
Bytes finish_sig_payload(ByteSpan hello_body, ByteSpan challenge_body,
                         const crypto::PublicKey& vehicle_key);

struct ChannelKeys {
    crypto::ChannelKey vehicle_to_charger{};
    crypto::ChannelKey charger_to_vehicle{};
};
ChannelKeys derive_channel_keys(const std::array<uint8_t, 32>& shared, const Nonce& vehicle_nonce,
                                const Nonce& charger_nonce);

SessionId derive_session_id(const Nonce& charger_nonce, const Nonce& vehicle_nonce);

constexpr uint8_t kDirVehicleToCharger = 1;
constexpr uint8_t kDirChargerToVehicle = 2;

}  // namespace evolve::handshake
