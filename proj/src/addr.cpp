#include "netdep/addr.hpp"

#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace netdep {

IpAddr IpAddr::v4(uint8_t a, uint8_t b, uint8_t c, uint8_t d) {
    IpAddr r;
    r.version = 4;
    r.bytes = {a, b, c, d};
    return r;
}

IpAddr IpAddr::v4_from_u32(uint32_t host_order) {
    return v4(static_cast<uint8_t>(host_order >> 24),
              static_cast<uint8_t>(host_order >> 16),
              static_cast<uint8_t>(host_order >> 8),
              static_cast<uint8_t>(host_order));
}

IpAddr IpAddr::v6(const std::array<uint8_t, 16>& b) {
    IpAddr r;
    r.version = 6;
    r.bytes = b;
    return r;
}

uint32_t IpAddr::as_u32() const {
    return (uint32_t(bytes[0]) << 24) | (uint32_t(bytes[1]) << 16) |
           (uint32_t(bytes[2]) << 8) | uint32_t(bytes[3]);
}

static IpAddr parse_v4(const std::string& text) {
    unsigned a, b, c, d;
    char trailing;
    if (std::sscanf(text.c_str(), "%u.%u.%u.%u%c", &a, &b, &c, &d, &trailing) != 4 ||
        a > 255 || b > 255 || c > 255 || d > 255) {
        throw std::invalid_argument("bad IPv4 address: " + text);
    }
    return IpAddr::v4(uint8_t(a), uint8_t(b), uint8_t(c), uint8_t(d));
}

static IpAddr parse_v6(const std::string& text) {
    // Split on "::" first, then expand.
    std::vector<uint16_t> head, tail;
    bool seen_gap = false;
    size_t i = 0;
    const size_t n = text.size();

    auto read_groups = [&](std::vector<uint16_t>& out, size_t from, size_t to) {
        size_t p = from;
        while (p < to) {
            size_t q = p;
            uint32_t v = 0;
            int digits = 0;
            while (q < to && text[q] != ':') {
                char ch = text[q];
                uint32_t nibble;
                if (ch >= '0' && ch <= '9') nibble = uint32_t(ch - '0');
                else if (ch >= 'a' && ch <= 'f') nibble = uint32_t(ch - 'a' + 10);
                else if (ch >= 'A' && ch <= 'F') nibble = uint32_t(ch - 'A' + 10);
                else throw std::invalid_argument("bad IPv6 address: " + text);
                v = (v << 4) | nibble;
                if (++digits > 4) throw std::invalid_argument("bad IPv6 address: " + text);
                ++q;
            }
            if (digits == 0) throw std::invalid_argument("bad IPv6 address: " + text);
            out.push_back(uint16_t(v));
            p = (q < to) ? q + 1 : q;
        }
    };

    size_t gap = text.find("::");
    if (gap != std::string::npos) {
        seen_gap = true;
        if (gap > 0) read_groups(head, 0, gap);
        if (gap + 2 < n) read_groups(tail, gap + 2, n);
        if (text.find("::", gap + 1) != std::string::npos && gap + 1 < n && text[gap + 1] == ':' &&
            text.find("::", gap + 2) != std::string::npos) {
            throw std::invalid_argument("bad IPv6 address: " + text);
        }
    } else {
        read_groups(head, 0, n);
    }
    (void)i;

    size_t total = head.size() + tail.size();
    if ((seen_gap && total > 7) || (!seen_gap && total != 8)) {
        throw std::invalid_argument("bad IPv6 address: " + text);
    }

    std::array<uint8_t, 16> b{};
    size_t idx = 0;
    for (uint16_t g : head) {
        b[idx++] = uint8_t(g >> 8);
        b[idx++] = uint8_t(g & 0xff);
    }
    idx = 16 - tail.size() * 2;
    for (uint16_t g : tail) {
        b[idx++] = uint8_t(g >> 8);
        b[idx++] = uint8_t(g & 0xff);
    }
    return IpAddr::v6(b);
}

IpAddr IpAddr::parse(const std::string& text) {
    if (text.find(':') != std::string::npos) return parse_v6(text);
    return parse_v4(text);
}

std::string IpAddr::to_string() const {
    char buf[64];
    if (version == 4) {
        std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", bytes[0], bytes[1], bytes[2], bytes[3]);
        return buf;
    }
    // Canonical-ish v6: full groups, lowercase, no compression. Deterministic
    // output matters more here than brevity.
    std::string out;
    for (int g = 0; g < 8; ++g) {
        uint16_t v = uint16_t((bytes[g * 2] << 8) | bytes[g * 2 + 1]);
        std::snprintf(buf, sizeof buf, "%x", v);
        if (g) out += ':';
        out += buf;
    }
    return out;
}

bool IpPrefix::contains(const IpAddr& a) const {
    if (a.version != base.version) return false;
    unsigned bits = prefix_len;
    for (size_t i = 0; i < a.addr_len() && bits > 0; ++i) {
        unsigned take = bits >= 8 ? 8 : bits;
        uint8_t mask = uint8_t(0xff00 >> take);
        if ((a.bytes[i] & mask) != (base.bytes[i] & mask)) return false;
        bits -= take;
    }
    return true;
}

IpPrefix IpPrefix::parse(const std::string& cidr) {
    size_t slash = cidr.find('/');
    if (slash == std::string::npos) throw std::invalid_argument("bad prefix: " + cidr);
    IpPrefix p;
    p.base = IpAddr::parse(cidr.substr(0, slash));
    int len = std::stoi(cidr.substr(slash + 1));
    int max = p.base.is_v4() ? 32 : 128;
    if (len < 0 || len > max) throw std::invalid_argument("bad prefix length: " + cidr);
    p.prefix_len = uint8_t(len);
    return p;
}

std::string IpPrefix::to_string() const {
    return base.to_string() + "/" + std::to_string(prefix_len);
}

}  // namespace netdep
