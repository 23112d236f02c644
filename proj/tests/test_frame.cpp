#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "evolve/errors.hpp"
#include "evolve/frame.hpp"
#include "evolve/rng.hpp"

using namespace evolve;

TEST_CASE("known frame layout is bit-exact") {
    Frame f{MsgType::sdp_request, to_bytes("ab"), 0};
    WireMsg wire = encode_frame(f);
    // 4-byte big-endian length (body + type byte), 1-byte type, body
    REQUIRE(wire.head.size() == 7);
    CHECK(wire.head[0] == 0x00);
    CHECK(wire.head[1] == 0x00);
    CHECK(wire.head[2] == 0x00);
    CHECK(wire.head[3] == 0x03);
    CHECK(wire.head[4] == 0x01);
    CHECK(wire.head[5] == 'a');
    CHECK(wire.head[6] == 'b');
}

TEST_CASE("decode(encode(f)) is the identity on random frames") {
    SeededRng rng(2024);
    const uint8_t codes[] = {0x01, 0x02, 0x03, 0x04, 0x05, 0x06,
                             0x10, 0x11, 0x12, 0x13, 0x20, 0x7F};
    for (int trial = 0; trial < 500; trial++) {
        Frame f;
        f.type = MsgType(codes[rng.below(std::size(codes))]);
        f.body.resize(rng.below(4096));
        for (auto& b : f.body) b = uint8_t(rng.next_u64());
        f.synthetic_body = rng.below(3) == 0 ? rng.below(1 << 20) : 0;
        Frame g = decode_frame(encode_frame(f));
        CHECK(g == f);
    }
}

TEST_CASE("length field accounts for synthetic body bytes") {
    Frame f{MsgType::vas_data, to_bytes("xy"), 1000};
    WireMsg wire = encode_frame(f);
    uint32_t len = uint32_t(wire.head[0]) << 24 | uint32_t(wire.head[1]) << 16 |
                   uint32_t(wire.head[2]) << 8 | wire.head[3];
    CHECK(len == 2 + 1000 + 1);
    CHECK(wire.wire_size() == 5 + 2 + 1000);
}

TEST_CASE("malformed frames are rejected") {
    // short header
    CHECK_THROWS_AS(decode_frame(WireMsg{to_bytes("abc"), 0}), ProtocolError);
    // unregistered msg_type
    WireMsg wire = encode_frame({MsgType::vas_data, to_bytes("p"), 0});
    wire.head[4] = 0x55;
    CHECK_THROWS_AS(decode_frame(wire), ProtocolError);
    // length disagreeing with the body
    wire = encode_frame({MsgType::vas_data, to_bytes("p"), 0});
    wire.head[3] += 1;
    CHECK_THROWS_AS(decode_frame(wire), ProtocolError);
}
