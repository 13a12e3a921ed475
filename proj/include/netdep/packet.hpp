#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "netdep/addr.hpp"

namespace netdep {

// --- errors -----------------------------------------------------------

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StructureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class InjectError { none, no_room, already_tagged };

// --- wire constants ----------------------------------------------------

namespace tcpflag {
constexpr uint8_t fin = 0x01;
constexpr uint8_t syn = 0x02;
constexpr uint8_t rst = 0x04;
constexpr uint8_t psh = 0x08;
constexpr uint8_t ack = 0x10;
constexpr uint8_t urg = 0x20;
}  // namespace tcpflag

// The discovery option rides in the shared-use experimental TCP option:
// kind 254, then a 2-byte experiment identifier distinguishing us from other
// experiments on the same kind, then the 16-byte identifier.
constexpr uint8_t kDiscoveryOptionKind = 254;
constexpr uint16_t kExperimentMagic = 0xEB9F;
constexpr size_t kDiscoveryIdLen = 16;
constexpr size_t kDiscoveryOptionWireLen = 20;  // kind + len + magic + id

// --- domain types ------------------------------------------------------

struct DiscoveryIdentifier {
    std::array<uint8_t, kDiscoveryIdLen> bytes{};

    std::string to_hex() const;
    auto operator<=>(const DiscoveryIdentifier&) const = default;
};

struct IpHeader {
    uint8_t version = 4;  // 4 or 6
    IpAddr src;
    IpAddr dst;
    uint8_t protocol = 6;  // TCP
    uint8_t ttl = 64;      // hop limit for v6

    // IPv4 only. Kept explicit so parse/serialize round-trips bit-exactly.
    uint8_t dscp_ecn = 0;
    uint16_t identification = 0;
    uint16_t flags_fragment = 0;
    uint16_t total_length = 0;
    uint16_t header_checksum = 0;

    // IPv6 only.
    uint32_t traffic_class_flow = 0;  // 8-bit TC + 20-bit flow label
    uint16_t payload_length = 0;

    auto operator<=>(const IpHeader&) const = default;
};

// kind 0 (end-of-list) is serialization padding, never a member of
// TcpHeader::options; kind 1 (no-op) is a single byte with empty payload.
struct TcpOption {
    uint8_t kind = 0;
    std::vector<uint8_t> payload;

    auto operator<=>(const TcpOption&) const = default;
};

struct TcpHeader {
    uint16_t src_port = 0;
    uint16_t dst_port = 0;
    uint32_t seq = 0;
    uint32_t ack = 0;
    uint8_t data_offset = 5;  // header length in 32-bit words, 5..15
    uint8_t flags = 0;
    uint16_t window = 65535;
    uint16_t checksum = 0;
    uint16_t urgent_ptr = 0;
    std::vector<TcpOption> options;

    auto operator<=>(const TcpHeader&) const = default;
};

struct Packet {
    IpHeader ip;
    TcpHeader tcp;
    std::vector<uint8_t> payload;

    auto operator<=>(const Packet&) const = default;
};

// --- checksums ---------------------------------------------------------

// Ones-complement of the ones-complement 16-bit word sum; odd-length input
// is padded with one zero byte.
uint16_t internet_checksum(std::span<const uint8_t> bytes);

// Checksum over pseudo-header + TCP header (checksum field zeroed) + payload.
uint16_t tcp_checksum(const Packet& p);

bool verify_tcp_checksum(const Packet& p);
bool verify_ip_checksum(const Packet& p);  // true for IPv6 (no checksum)

// --- option helpers ----------------------------------------------------

size_t options_wire_size(const std::vector<TcpOption>& opts);          // unpadded
size_t options_padded_size(const std::vector<TcpOption>& opts);        // 4-byte aligned
uint8_t data_offset_for(const std::vector<TcpOption>& opts);

// --- core operations ---------------------------------------------------

// Recomputes length fields and checksums from the current header/payload
// contents. data_offset is the caller's responsibility and is validated.
void finalize(Packet& p);

// Network byte order; options padded with end-of-list bytes to a 32-bit
// boundary. Throws StructureError if invariants do not hold.
std::vector<uint8_t> serialize(const Packet& p);

// Throws ParseError on truncation, data_offset < 5, or inconsistent length
// fields. Unknown option kinds are preserved verbatim.
Packet parse(std::span<const uint8_t> bytes);

// Appends the discovery option carrying `id`, bumps data_offset by 5 words
// and refreshes both checksums. Fails with no_room when the option cannot
// fit (data_offset*4 + 20 > 60) and already_tagged when a discovery option
// is already present.
std::optional<Packet> inject_identifier(const Packet& p, const DiscoveryIdentifier& id,
                                        InjectError* err = nullptr);

// Returns the identifier iff a well-formed discovery option is present.
// Malformed or unrelated kind-254 options yield nullopt, never an error.
std::optional<DiscoveryIdentifier> extract_identifier(const Packet& p);

bool has_discovery_option(const Packet& p);

// Address/port rewrite used by NAT; refreshes checksums. Null arguments keep
// the current value. TCP options pass through untouched.
void rewrite_addressing(Packet& p, const IpAddr* src, const uint16_t* src_port,
                        const IpAddr* dst, const uint16_t* dst_port);

// Convenience builder producing a checksummed, invariant-satisfying packet.
Packet make_tcp_packet(const IpAddr& src, uint16_t src_port, const IpAddr& dst,
                       uint16_t dst_port, uint32_t seq, uint32_t ack, uint8_t flags,
                       std::vector<uint8_t> payload = {},
                       std::vector<TcpOption> options = {});

}  // namespace netdep
