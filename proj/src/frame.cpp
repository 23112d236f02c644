#include "evolve/frame.hpp"

#include "evolve/errors.hpp"

namespace evolve {

bool msg_type_registered(uint8_t code) {
    switch (code) {
        case 0x01:
        case 0x02:
        case 0x03:
        case 0x04:
        case 0x05:
        case 0x06:
        case 0x10:
        case 0x11:
        case 0x12:
        case 0x13:
        case 0x20:
        case 0x7F:
            return true;
        default:
            return false;
    }
}

WireMsg encode_frame(const Frame& frame) {
    uint64_t body_len = frame.body.size() + frame.synthetic_body;
    if (body_len + 1 > 0xFFFFFFFFULL) throw ProtocolError("frame body too large");
    ByteWriter w;
    w.u32(uint32_t(body_len + 1));
    w.u8(uint8_t(frame.type));
    w.raw(frame.body);
    return WireMsg{w.take(), frame.synthetic_body};
}

Frame decode_frame(const WireMsg& msg) {
    if (msg.head.size() < kFrameHeaderBytes) throw ProtocolError("short frame");
    ByteReader r(msg.head);
    uint32_t length = r.u32();
    uint8_t code = r.u8();
    if (!msg_type_registered(code)) throw ProtocolError("unregistered msg_type");
    uint64_t body_len = msg.head.size() - kFrameHeaderBytes + msg.synthetic;
    if (uint64_t(length) != body_len + 1) throw ProtocolError("frame length mismatch");
    Frame f;
    f.type = MsgType(code);
    f.body = r.raw(msg.head.size() - kFrameHeaderBytes);
    f.synthetic_body = msg.synthetic;
    return f;
}

}  // namespace evolve
