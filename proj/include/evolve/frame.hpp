#pragma once

#include <cstdint>

#include "evolve/bytes.hpp"
#include "evolve/link.hpp"

namespace evolve {

/// Registered message type codes. 0x03-0x06 carry the session handshake;
/// everything else is fixed by the platform wire contract.
enum class MsgType : uint8_t {
    sdp_request = 0x01,
    sdp_response = 0x02,
    session_hello = 0x03,
    session_challenge = 0x04,
    session_finish = 0x05,
    session_accept = 0x06,
    snp_catalog_request = 0x10,
    snp_catalog = 0x11,
    service_select = 0x12,
    service_select_ack = 0x13,
    vas_data = 0x20,
    error = 0x7F,
};

bool msg_type_registered(uint8_t code);

/// Length-prefixed frame: 4-byte big-endian length (msg_type byte plus
/// body), 1-byte msg_type, body. `synthetic_body` counts trailing zero bytes
/// accounted in the length but not materialized.
struct Frame {
    MsgType type = MsgType::error;
    Bytes body;
    uint64_t synthetic_body = 0;

    bool operator==(const Frame& other) const = default;
};

constexpr size_t kFrameHeaderBytes = 5;

WireMsg encode_frame(const Frame& frame);
Frame decode_frame(const WireMsg& msg);  // throws ProtocolError

}  // namespace evolve
