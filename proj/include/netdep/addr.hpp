#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>

namespace netdep {

// IPv4 or IPv6 address. v4 occupies bytes[0..4), the rest must be zero.
struct IpAddr {
    uint8_t version = 4;  // 4 or 6
    std::array<uint8_t, 16> bytes{};

    static IpAddr v4(uint8_t a, uint8_t b, uint8_t c, uint8_t d);
    static IpAddr v4_from_u32(uint32_t host_order);
    static IpAddr v6(const std::array<uint8_t, 16>& b);

    // Parses dotted-quad or RFC 4291 text (with "::" compression).
    // Throws std::invalid_argument on malformed input.
    static IpAddr parse(const std::string& text);

    uint32_t as_u32() const;  // v4 only, host order
    std::string to_string() const;

    bool is_v4() const { return version == 4; }
    size_t addr_len() const { return version == 4 ? 4 : 16; }

    auto operator<=>(const IpAddr&) const = default;
};

// Prefix match helper for routing and NAT rules.
struct IpPrefix {
    IpAddr base;
    uint8_t prefix_len = 0;

    bool contains(const IpAddr& a) const;
    static IpPrefix parse(const std::string& cidr);  // "10.0.0.0/8"
    std::string to_string() const;

    auto operator<=>(const IpPrefix&) const = default;
};

}  // namespace netdep
