#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "evolve/crypto.hpp"
#include "evolve/rng.hpp"

using namespace evolve;

TEST_CASE("sha256 known vector") {
    // SHA-256("abc")
    auto d = crypto::sha256(to_bytes("abc"));
    CHECK(to_hex(d) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("streamed hash equals one-shot, zeros included") {
    Bytes data = to_bytes("hello world");
    crypto::Sha256Stream s;
    s.feed(ByteSpan(data.data(), 5));
    s.feed(ByteSpan(data.data() + 5, data.size() - 5));
    CHECK(s.finish() == crypto::sha256(data));

    Blob blob;
    blob.data = to_bytes("head");
    blob.synthetic = 100000;
    Bytes expanded = blob.data;
    expanded.resize(blob.data.size() + blob.synthetic, 0);
    CHECK(crypto::blob_hash(blob) == crypto::sha256(expanded));
}

TEST_CASE("sign/verify round trip at every slot width") {
    auto kp = crypto::KeyPair::from_seed(uint64_t(7));
    Bytes msg = to_bytes("burst 17, 2500 cents");
    for (size_t width : {crypto::kMinSigWidth, size_t(37), size_t(63), size_t(64), size_t(72),
                         crypto::kMaxSigWidth}) {
        auto sig = crypto::sign(kp, msg, width);
        CHECK(sig.size() == width);
        CHECK(crypto::verify(kp.pk, msg, sig));
    }
}

TEST_CASE("signatures are deterministic and key-bound") {
    auto kp = crypto::KeyPair::from_seed(uint64_t(7));
    auto other = crypto::KeyPair::from_seed(uint64_t(8));
    Bytes msg = to_bytes("manifest v1.2.0");
    CHECK(crypto::sign(kp, msg) == crypto::sign(kp, msg));
    CHECK_FALSE(crypto::verify(other.pk, msg, crypto::sign(kp, msg)));
    CHECK_FALSE(crypto::verify(kp.pk, to_bytes("manifest v1.2.1"), crypto::sign(kp, msg)));
}

TEST_CASE("any single bit flip in a signature fails verification") {
    auto kp = crypto::KeyPair::from_seed(uint64_t(9));
    Bytes msg = to_bytes("tamper target");
    auto sig = crypto::sign(kp, msg, 37);
    SeededRng rng(123);
    for (int trial = 0; trial < 200; trial++) {
        Bytes mutated = sig;
        size_t bit = size_t(rng.below(mutated.size() * 8));
        mutated[bit / 8] ^= uint8_t(1u << (bit % 8));
        CHECK_FALSE(crypto::verify(kp.pk, msg, mutated));
    }
}

TEST_CASE("key agreement is symmetric") {
    auto a = crypto::EphemeralKey::from_seed(to_bytes("seed-a"));
    auto b = crypto::EphemeralKey::from_seed(to_bytes("seed-b"));
    CHECK(crypto::dh(a.secret_scalar, b.public_point) ==
          crypto::dh(b.secret_scalar, a.public_point));
}

TEST_CASE("secretbox seals and opens with matching direction and counter") {
    crypto::ChannelKey key{};
    key[0] = 0x42;
    Bytes msg = to_bytes("frame body");
    auto boxed = crypto::box_seal(key, 1, 5, msg);
    CHECK(boxed.size() == msg.size() + crypto::kBoxOverhead);
    auto open = crypto::box_open(key, 1, 5, boxed);
    REQUIRE(open.has_value());
    CHECK(*open == msg);
    CHECK_FALSE(crypto::box_open(key, 2, 5, boxed).has_value());
    CHECK_FALSE(crypto::box_open(key, 1, 6, boxed).has_value());
    boxed[3] ^= 1;
    CHECK_FALSE(crypto::box_open(key, 1, 5, boxed).has_value());
}
