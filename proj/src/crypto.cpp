#include "evolve/crypto.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstring>
#include <mutex>
#include <stdexcept>

#include "evolve/bytes.hpp"

namespace evolve {

std::string to_hex(ByteSpan data) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (uint8_t b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xF]);
    }
    return out;
}

}  // namespace evolve

namespace evolve::crypto {

namespace {

void ensure_sodium() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw std::runtime_error("sodium_init failed");
    });
}

using Scalar = std::array<uint8_t, 32>;
using Point = std::array<uint8_t, 32>;

std::array<uint8_t, 64> sha512(ByteSpan data) {
    std::array<uint8_t, 64> out;
    crypto_hash_sha512(out.data(), data.data(), data.size());
    return out;
}

Scalar scalar_from_hash(ByteSpan domain, ByteSpan a, ByteSpan b = {}, ByteSpan c = {}) {
    Bytes buf;
    buf.insert(buf.end(), domain.begin(), domain.end());
    buf.insert(buf.end(), a.begin(), a.end());
    buf.insert(buf.end(), b.begin(), b.end());
    buf.insert(buf.end(), c.begin(), c.end());
    auto wide = sha512(buf);
    Scalar s;
    crypto_core_ristretto255_scalar_reduce(s.data(), wide.data());
    return s;
}

bool scalar_is_zero(const Scalar& s) {
    uint8_t acc = 0;
    for (auto b : s) acc |= b;
    return acc == 0;
}

// A scalar is canonical iff reducing it is the identity. Non-canonical
// response scalars must be rejected or high bits become malleable (the
// scalarmult core masks bit 255).
bool scalar_is_canonical(const Scalar& s) {
    std::array<uint8_t, 64> wide{};
    std::copy(s.begin(), s.end(), wide.begin());
    Scalar reduced;
    crypto_core_ristretto255_scalar_reduce(reduced.data(), wide.data());
    return reduced == s;
}

constexpr std::string_view kNonceDomain = "evolve.sig.nonce.v1";
constexpr std::string_view kChallengeDomain = "evolve.sig.challenge.v1";
constexpr std::string_view kKeyDomain = "evolve.sig.key.v1";

ByteSpan sv_span(std::string_view s) {
    return ByteSpan(reinterpret_cast<const uint8_t*>(s.data()), s.size());
}

}  // namespace

Digest sha256(ByteSpan data) {
    ensure_sodium();
    Digest out;
    crypto_hash_sha256(out.data(), data.data(), data.size());
    return out;
}

Digest blob_hash(const Blob& blob) {
    Sha256Stream h;
    h.feed(blob.data);
    h.feed_zeros(blob.synthetic);
    return h.finish();
}

bool constant_time_equal(ByteSpan a, ByteSpan b) {
    if (a.size() != b.size()) return false;
    return sodium_memcmp(a.data(), b.data(), a.size()) == 0;
}

Sha256Stream::Sha256Stream() {
    ensure_sodium();
    static_assert(sizeof(crypto_hash_sha256_state) <= sizeof(state_));
    crypto_hash_sha256_init(reinterpret_cast<crypto_hash_sha256_state*>(state_.data()));
}

void Sha256Stream::feed(ByteSpan data) {
    crypto_hash_sha256_update(reinterpret_cast<crypto_hash_sha256_state*>(state_.data()),
                              data.data(), data.size());
}

void Sha256Stream::feed_zeros(uint64_t count) {
    static const std::array<uint8_t, 65536> zeros{};
    while (count > 0) {
        size_t n = size_t(std::min<uint64_t>(count, zeros.size()));
        feed(ByteSpan(zeros.data(), n));
        count -= n;
    }
}

Digest Sha256Stream::finish() {
    Digest out;
    crypto_hash_sha256_final(reinterpret_cast<crypto_hash_sha256_state*>(state_.data()),
                             out.data());
    return out;
}

KeyPair KeyPair::from_seed(ByteSpan seed) {
    ensure_sodium();
    KeyPair kp;
    Scalar sk = scalar_from_hash(sv_span(kKeyDomain), seed);
    if (scalar_is_zero(sk)) sk[0] = 1;  // unreachable in practice
    kp.sk = sk;
    if (crypto_scalarmult_ristretto255_base(kp.pk.data(), kp.sk.data()) != 0)
        throw std::runtime_error("keygen failed");
    return kp;
}

KeyPair KeyPair::from_seed(uint64_t seed) {
    ByteWriter w;
    w.u64(seed);
    Bytes b = w.take();
    return from_seed(ByteSpan(b));
}

Bytes sign(const KeyPair& signer, ByteSpan message, size_t width) {
    ensure_sodium();
    if (width < kMinSigWidth || width > kMaxSigWidth)
        throw std::invalid_argument("signature width out of range");
    size_t chal_len = width - 32;

    // Deterministic nonce bound to the secret key and message.
    Scalar k = scalar_from_hash(sv_span(kNonceDomain), ByteSpan(signer.sk.data(), 32), message);
    if (scalar_is_zero(k)) k[0] = 1;
    Point commitment;
    if (crypto_scalarmult_ristretto255_base(commitment.data(), k.data()) != 0)
        throw std::runtime_error("sign: commitment failed");

    Bytes chal_input;
    chal_input.insert(chal_input.end(), commitment.begin(), commitment.end());
    chal_input.insert(chal_input.end(), signer.pk.begin(), signer.pk.end());
    chal_input.insert(chal_input.end(), message.begin(), message.end());
    auto chal_full = sha512(chal_input);

    ByteSpan chal_prefix(chal_full.data(), chal_len);
    Scalar e = scalar_from_hash(sv_span(kChallengeDomain), chal_prefix);

    Scalar ex, s;
    crypto_core_ristretto255_scalar_mul(ex.data(), e.data(), signer.sk.data());
    crypto_core_ristretto255_scalar_add(s.data(), k.data(), ex.data());

    Bytes sig;
    sig.reserve(width);
    sig.insert(sig.end(), chal_prefix.begin(), chal_prefix.end());
    sig.insert(sig.end(), s.begin(), s.end());
    return sig;
}

bool verify(const PublicKey& pk, ByteSpan message, ByteSpan signature) {
    ensure_sodium();
    if (signature.size() < kMinSigWidth || signature.size() > kMaxSigWidth) return false;
    size_t chal_len = signature.size() - 32;
    ByteSpan chal_prefix = signature.first(chal_len);
    Scalar s{};
    std::memcpy(s.data(), signature.data() + chal_len, 32);

    Scalar e = scalar_from_hash(sv_span(kChallengeDomain), chal_prefix);
    if (scalar_is_zero(e) || scalar_is_zero(s) || !scalar_is_canonical(s)) return false;

    Point s_base;
    if (crypto_scalarmult_ristretto255_base(s_base.data(), s.data()) != 0) return false;
    Point e_pub;
    if (crypto_scalarmult_ristretto255(e_pub.data(), e.data(), pk.data()) != 0) return false;
    Point commitment;
    if (crypto_core_ristretto255_sub(commitment.data(), s_base.data(), e_pub.data()) != 0)
        return false;

    Bytes chal_input;
    chal_input.insert(chal_input.end(), commitment.begin(), commitment.end());
    chal_input.insert(chal_input.end(), pk.begin(), pk.end());
    chal_input.insert(chal_input.end(), message.begin(), message.end());
    auto chal_full = sha512(chal_input);
    return constant_time_equal(chal_prefix, ByteSpan(chal_full.data(), chal_len));
}

Digest fingerprint(const PublicKey& pk) { return sha256(ByteSpan(pk.data(), pk.size())); }

EphemeralKey EphemeralKey::from_seed(ByteSpan seed) {
    ensure_sodium();
    EphemeralKey ek;
    ek.secret_scalar = scalar_from_hash(sv_span("evolve.eph.v1"), seed);
    if (scalar_is_zero(ek.secret_scalar)) ek.secret_scalar[0] = 1;
    if (crypto_scalarmult_ristretto255_base(ek.public_point.data(), ek.secret_scalar.data()) != 0)
        throw std::runtime_error("ephemeral keygen failed");
    return ek;
}

std::array<uint8_t, 32> dh(const std::array<uint8_t, 32>& secret_scalar,
                           const std::array<uint8_t, 32>& peer_point) {
    ensure_sodium();
    std::array<uint8_t, 32> shared;
    if (crypto_scalarmult_ristretto255(shared.data(), secret_scalar.data(), peer_point.data()) != 0)
        throw std::runtime_error("key agreement failed");
    return shared;
}

Bytes box_seal(const ChannelKey& key, uint8_t direction, uint64_t counter, ByteSpan plaintext) {
    ensure_sodium();
    std::array<uint8_t, crypto_secretbox_NONCEBYTES> nonce{};
    nonce[0] = direction;
    for (int i = 0; i < 8; i++) nonce[1 + i] = uint8_t(counter >> (56 - 8 * i));
    Bytes out(plaintext.size() + crypto_secretbox_MACBYTES);
    crypto_secretbox_easy(out.data(), plaintext.data(), plaintext.size(), nonce.data(),
                          key.data());
    return out;
}

std::optional<Bytes> box_open(const ChannelKey& key, uint8_t direction, uint64_t counter,
                              ByteSpan ciphertext) {
    ensure_sodium();
    if (ciphertext.size() < crypto_secretbox_MACBYTES) return std::nullopt;
    std::array<uint8_t, crypto_secretbox_NONCEBYTES> nonce{};
    nonce[0] = direction;
    for (int i = 0; i < 8; i++) nonce[1 + i] = uint8_t(counter >> (56 - 8 * i));
    Bytes out(ciphertext.size() - crypto_secretbox_MACBYTES);
    if (crypto_secretbox_open_easy(out.data(), ciphertext.data(), ciphertext.size(), nonce.data(),
                                   key.data()) != 0)
        return std::nullopt;
    return out;
}

}  // namespace evolve::crypto
