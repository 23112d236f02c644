#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "evolve/bytes.hpp"

namespace evolve::crypto {

using Digest = std::array<uint8_t, 32>;
using PublicKey = std::array<uint8_t, 32>;
using SecretKey = std::array<uint8_t, 32>;

constexpr Digest kZeroDigest{};

Digest sha256(ByteSpan data);
Digest blob_hash(const Blob& blob);
bool constant_time_equal(ByteSpan a, ByteSpan b);

/// Incremental SHA-256 for streamed payloads; feed_zeros lets callers hash
/// synthetic (all-zero) bulk without materializing it.
class Sha256Stream {
public:
    Sha256Stream();
    void feed(ByteSpan data);
    void feed_zeros(uint64_t count);
    Digest finish();

private:
    alignas(16) std::array<uint8_t, 112> state_;  // fits crypto_hash_sha256_state
};

/// Schnorr-style signatures over ristretto255.
///
/// The encoding width is a parameter: a signature of `width` bytes is the
/// first (width - 32) bytes of the SHA-512 challenge followed by the 32-byte
/// response scalar. Wider slots carry longer challenge prefixes; all widths
/// verify with the same public key. Widths between 33 and 96 are accepted;
/// 64 (a full SHA-256-sized challenge) is the default used for session and
/// manifest signatures.
constexpr size_t kDefaultSigWidth = 64;
constexpr size_t kMinSigWidth = 33;
constexpr size_t kMaxSigWidth = 96;

struct KeyPair {
    PublicKey pk{};
    SecretKey sk{};

    /// Deterministic keypair derived from a seed; same seed, same keys.
    static KeyPair from_seed(uint64_t seed);
    static KeyPair from_seed(ByteSpan seed);
};

Bytes sign(const KeyPair& signer, ByteSpan message, size_t width = kDefaultSigWidth);
bool verify(const PublicKey& pk, ByteSpan message, ByteSpan signature);

/// SHA-256 of the public key; the identity exchanged and pinned at session
/// establishment.
Digest fingerprint(const PublicKey& pk);

// --- Ephemeral key agreement (used by the session handshake) ---

struct EphemeralKey {
    std::array<uint8_t, 32> public_point{};
    std::array<uint8_t, 32> secret_scalar{};

    static EphemeralKey from_seed(ByteSpan seed);
};

/// scalar * point on ristretto255; throws on invalid input.
std::array<uint8_t, 32> dh(const std::array<uint8_t, 32>& secret_scalar,
                           const std::array<uint8_t, 32>& peer_point);

// --- Authenticated channel encryption (XSalsa20-Poly1305) ---

constexpr size_t kBoxOverhead = 16;

using ChannelKey = std::array<uint8_t, 32>;

Bytes box_seal(const ChannelKey& key, uint8_t direction, uint64_t counter, ByteSpan plaintext);
std::optional<Bytes> box_open(const ChannelKey& key, uint8_t direction, uint64_t counter,
                              ByteSpan ciphertext);

}  // namespace evolve::crypto
