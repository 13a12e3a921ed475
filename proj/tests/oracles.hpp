#pragma once

// Test-only reference implementations, kept deliberately independent of the
// library code paths they check.

#include <cstdint>
#include <span>
#include <vector>

#include "netdep/packet.hpp"

namespace oracle {

// Reference internet checksum via mod-0xffff arithmetic instead of the
// library's fold loop. Ones-complement sums are congruent mod 0xffff, with
// the convention that a nonzero total congruent to 0 folds to 0xffff.
inline uint16_t checksum(std::span<const uint8_t> bytes) {
    unsigned long long total = 0;
    for (size_t i = 0; i < bytes.size(); i += 2) {
        unsigned hi = bytes[i];
        unsigned lo = (i + 1 < bytes.size()) ? bytes[i + 1] : 0;
        total += (hi << 8) | lo;
    }
    unsigned long long m = total % 0xffff;
    if (m == 0 && total != 0) m = 0xffff;
    return uint16_t(~m & 0xffff);
}

// Rebuilds the IPv4 header bytes by hand and checks its stored checksum.
inline bool ip_header_valid(const netdep::Packet& p) {
    if (p.ip.version == 6) return true;
    std::vector<uint8_t> h;
    h.push_back(0x45);
    h.push_back(p.ip.dscp_ecn);
    h.push_back(uint8_t(p.ip.total_length >> 8));
    h.push_back(uint8_t(p.ip.total_length));
    h.push_back(uint8_t(p.ip.identification >> 8));
    h.push_back(uint8_t(p.ip.identification));
    h.push_back(uint8_t(p.ip.flags_fragment >> 8));
    h.push_back(uint8_t(p.ip.flags_fragment));
    h.push_back(p.ip.ttl);
    h.push_back(p.ip.protocol);
    h.push_back(uint8_t(p.ip.header_checksum >> 8));
    h.push_back(uint8_t(p.ip.header_checksum));
    for (int i = 0; i < 4; ++i) h.push_back(p.ip.src.bytes[i]);
    for (int i = 0; i < 4; ++i) h.push_back(p.ip.dst.bytes[i]);
    return checksum(h) == 0;
}

// Checks the stored TCP checksum over pseudo-header + segment, going through
// the serialized wire bytes rather than the library's field-level routine.
inline bool tcp_valid(const netdep::Packet& p) {
    std::vector<uint8_t> wire = netdep::serialize(p);
    size_t ip_len = p.ip.version == 4 ? 20 : 40;
    std::vector<uint8_t> buf;
    if (p.ip.version == 4) {
        for (int i = 0; i < 4; ++i) buf.push_back(p.ip.src.bytes[i]);
        for (int i = 0; i < 4; ++i) buf.push_back(p.ip.dst.bytes[i]);
        buf.push_back(0);
        buf.push_back(p.ip.protocol);
        size_t seg = wire.size() - ip_len;
        buf.push_back(uint8_t(seg >> 8));
        buf.push_back(uint8_t(seg));
    } else {
        for (int i = 0; i < 16; ++i) buf.push_back(p.ip.src.bytes[i]);
        for (int i = 0; i < 16; ++i) buf.push_back(p.ip.dst.bytes[i]);
        size_t seg = wire.size() - ip_len;
        buf.push_back(uint8_t(seg >> 24));
        buf.push_back(uint8_t(seg >> 16));
        buf.push_back(uint8_t(seg >> 8));
        buf.push_back(uint8_t(seg));
        buf.push_back(0);
        buf.push_back(0);
        buf.push_back(0);
        buf.push_back(p.ip.protocol);
    }
    buf.insert(buf.end(), wire.begin() + ip_len, wire.end());
    // zero the checksum field inside the copied segment
    size_t csum_at = buf.size() - (wire.size() - ip_len) + 16;
    buf[csum_at] = 0;
    buf[csum_at + 1] = 0;
    return checksum(buf) == p.tcp.checksum;
}

inline bool packet_valid(const netdep::Packet& p) {
    return ip_header_valid(p) && tcp_valid(p);
}

}  // namespace oracle
