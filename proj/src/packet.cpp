#include "netdep/packet.hpp"

#include <algorithm>
#include <cstring>

namespace netdep {

namespace {

void put16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v & 0xff));
}

void put32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

uint16_t get16(std::span<const uint8_t> b, size_t at) {
    return uint16_t((b[at] << 8) | b[at + 1]);
}

uint32_t get32(std::span<const uint8_t> b, size_t at) {
    return (uint32_t(b[at]) << 24) | (uint32_t(b[at + 1]) << 16) |
           (uint32_t(b[at + 2]) << 8) | uint32_t(b[at + 3]);
}

size_t tcp_wire_size(const Packet& p) {
    return size_t(p.tcp.data_offset) * 4 + p.payload.size();
}

void serialize_options(std::vector<uint8_t>& out, const std::vector<TcpOption>& opts) {
    size_t start = out.size();
    for (const TcpOption& o : opts) {
        if (o.kind == 0) throw StructureError("end-of-list is padding, not a representable option");
        if (o.kind == 1) {
            if (!o.payload.empty()) throw StructureError("no-op option carries no payload");
            out.push_back(1);
            continue;
        }
        if (o.payload.size() > 253) throw StructureError("tcp option payload too long");
        out.push_back(o.kind);
        out.push_back(uint8_t(o.payload.size() + 2));
        out.insert(out.end(), o.payload.begin(), o.payload.end());
    }
    while ((out.size() - start) % 4 != 0) out.push_back(0);  // end-of-list padding
}

std::vector<uint8_t> pseudo_header(const Packet& p) {
    std::vector<uint8_t> ph;
    size_t tcp_len = tcp_wire_size(p);
    if (p.ip.version == 4) {
        ph.insert(ph.end(), p.ip.src.bytes.begin(), p.ip.src.bytes.begin() + 4);
        ph.insert(ph.end(), p.ip.dst.bytes.begin(), p.ip.dst.bytes.begin() + 4);
        ph.push_back(0);
        ph.push_back(p.ip.protocol);
        put16(ph, uint16_t(tcp_len));
    } else {
        ph.insert(ph.end(), p.ip.src.bytes.begin(), p.ip.src.bytes.end());
        ph.insert(ph.end(), p.ip.dst.bytes.begin(), p.ip.dst.bytes.end());
        put32(ph, uint32_t(tcp_len));
        ph.push_back(0);
        ph.push_back(0);
        ph.push_back(0);
        ph.push_back(p.ip.protocol);
    }
    return ph;
}

void serialize_tcp(std::vector<uint8_t>& out, const Packet& p, bool zero_checksum) {
    const TcpHeader& t = p.tcp;
    put16(out, t.src_port);
    put16(out, t.dst_port);
    put32(out, t.seq);
    put32(out, t.ack);
    out.push_back(uint8_t(t.data_offset << 4));
    out.push_back(t.flags);
    put16(out, t.window);
    put16(out, zero_checksum ? 0 : t.checksum);
    put16(out, t.urgent_ptr);
    serialize_options(out, t.options);
}

void validate_structure(const Packet& p) {
    if (p.ip.version != 4 && p.ip.version != 6) throw StructureError("ip version must be 4 or 6");
    if (p.ip.src.version != p.ip.version || p.ip.dst.version != p.ip.version)
        throw StructureError("address family does not match ip version");
    if (p.tcp.data_offset < 5 || p.tcp.data_offset > 15)
        throw StructureError("tcp data offset out of range");
    size_t padded = options_padded_size(p.tcp.options);
    if (size_t(p.tcp.data_offset) * 4 != 20 + padded)
        throw StructureError("data offset does not match option bytes");
    size_t tcp_len = tcp_wire_size(p);
    if (p.ip.version == 4) {
        if (p.ip.total_length != 20 + tcp_len)
            throw StructureError("ipv4 total length inconsistent");
    } else {
        if (p.ip.payload_length != tcp_len)
            throw StructureError("ipv6 payload length inconsistent");
    }
}

}  // namespace

std::string DiscoveryIdentifier::to_hex() const {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(32);
    for (uint8_t b : bytes) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xf]);
    }
    return s;
}

uint16_t internet_checksum(std::span<const uint8_t> bytes) {
    uint64_t sum = 0;
    size_t i = 0;
    for (; i + 1 < bytes.size(); i += 2) sum += uint16_t((bytes[i] << 8) | bytes[i + 1]);
    if (i < bytes.size()) sum += uint16_t(bytes[i] << 8);  // pad odd byte with zero
    while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
    return uint16_t(~sum & 0xffff);
}

uint16_t tcp_checksum(const Packet& p) {
    std::vector<uint8_t> buf = pseudo_header(p);
    serialize_tcp(buf, p, /*zero_checksum=*/true);
    buf.insert(buf.end(), p.payload.begin(), p.payload.end());
    return internet_checksum(buf);
}

bool verify_tcp_checksum(const Packet& p) {
    return tcp_checksum(p) == p.tcp.checksum;
}

static std::vector<uint8_t> serialize_ipv4_header(const IpHeader& ip, bool zero_checksum) {
    std::vector<uint8_t> out;
    out.push_back(uint8_t((4 << 4) | 5));  // IHL fixed at 5: no IP options
    out.push_back(ip.dscp_ecn);
    put16(out, ip.total_length);
    put16(out, ip.identification);
    put16(out, ip.flags_fragment);
    out.push_back(ip.ttl);
    out.push_back(ip.protocol);
    put16(out, zero_checksum ? 0 : ip.header_checksum);
    out.insert(out.end(), ip.src.bytes.begin(), ip.src.bytes.begin() + 4);
    out.insert(out.end(), ip.dst.bytes.begin(), ip.dst.bytes.begin() + 4);
    return out;
}

bool verify_ip_checksum(const Packet& p) {
    if (p.ip.version == 6) return true;
    std::vector<uint8_t> hdr = serialize_ipv4_header(p.ip, false);
    return internet_checksum(hdr) == 0;
}

size_t options_wire_size(const std::vector<TcpOption>& opts) {
    size_t n = 0;
    for (const TcpOption& o : opts) n += (o.kind == 1) ? 1 : 2 + o.payload.size();
    return n;
}

size_t options_padded_size(const std::vector<TcpOption>& opts) {
    return (options_wire_size(opts) + 3) & ~size_t(3);
}

uint8_t data_offset_for(const std::vector<TcpOption>& opts) {
    return uint8_t(5 + options_padded_size(opts) / 4);
}

void finalize(Packet& p) {
    p.tcp.data_offset = data_offset_for(p.tcp.options);
    size_t tcp_len = tcp_wire_size(p);
    if (p.ip.version == 4) {
        p.ip.total_length = uint16_t(20 + tcp_len);
        std::vector<uint8_t> hdr = serialize_ipv4_header(p.ip, true);
        p.ip.header_checksum = internet_checksum(hdr);
    } else {
        p.ip.payload_length = uint16_t(tcp_len);
    }
    p.tcp.checksum = tcp_checksum(p);
}

std::vector<uint8_t> serialize(const Packet& p) {
    validate_structure(p);
    std::vector<uint8_t> out;
    if (p.ip.version == 4) {
        out = serialize_ipv4_header(p.ip, false);
    } else {
        out.push_back(uint8_t((6 << 4) | ((p.ip.traffic_class_flow >> 24) & 0xf)));
        out.push_back(uint8_t((p.ip.traffic_class_flow >> 16) & 0xff));
        put16(out, uint16_t(p.ip.traffic_class_flow & 0xffff));
        put16(out, p.ip.payload_length);
        out.push_back(p.ip.protocol);  // next header
        out.push_back(p.ip.ttl);       // hop limit
        out.insert(out.end(), p.ip.src.bytes.begin(), p.ip.src.bytes.end());
        out.insert(out.end(), p.ip.dst.bytes.begin(), p.ip.dst.bytes.end());
    }
    serialize_tcp(out, p, false);
    out.insert(out.end(), p.payload.begin(), p.payload.end());
    return out;
}

static std::vector<TcpOption> parse_options(std::span<const uint8_t> region) {
    std::vector<TcpOption> opts;
    size_t i = 0;
    while (i < region.size()) {
        uint8_t kind = region[i];
        if (kind == 0) break;  // end-of-list: remainder is padding
        if (kind == 1) {
            opts.push_back(TcpOption{1, {}});
            ++i;
            continue;
        }
        if (i + 1 >= region.size()) throw ParseError("tcp option truncated");
        uint8_t len = region[i + 1];
        if (len < 2 || i + len > region.size()) throw ParseError("tcp option length inconsistent");
        TcpOption o;
        o.kind = kind;
        o.payload.assign(region.begin() + i + 2, region.begin() + i + len);
        opts.push_back(std::move(o));
        i += len;
    }
    return opts;
}

Packet parse(std::span<const uint8_t> bytes) {
    if (bytes.empty()) throw ParseError("empty input");
    Packet p;
    uint8_t version = bytes[0] >> 4;
    size_t ip_len;
    if (version == 4) {
        if (bytes.size() < 20) throw ParseError("truncated ipv4 header");
        uint8_t ihl = bytes[0] & 0xf;
        if (ihl < 5) throw ParseError("ipv4 header length below minimum");
        if (ihl != 5) throw ParseError("ipv4 options not supported");
        ip_len = 20;
        p.ip.version = 4;
        p.ip.dscp_ecn = bytes[1];
        p.ip.total_length = get16(bytes, 2);
        p.ip.identification = get16(bytes, 4);
        p.ip.flags_fragment = get16(bytes, 6);
        p.ip.ttl = bytes[8];
        p.ip.protocol = bytes[9];
        p.ip.header_checksum = get16(bytes, 10);
        p.ip.src.version = 4;
        p.ip.dst.version = 4;
        std::copy(bytes.begin() + 12, bytes.begin() + 16, p.ip.src.bytes.begin());
        std::copy(bytes.begin() + 16, bytes.begin() + 20, p.ip.dst.bytes.begin());
        if (p.ip.total_length != bytes.size()) throw ParseError("ipv4 total length inconsistent");
    } else if (version == 6) {
        if (bytes.size() < 40) throw ParseError("truncated ipv6 header");
        ip_len = 40;
        p.ip.version = 6;
        p.ip.traffic_class_flow =
            (uint32_t(bytes[0] & 0xf) << 24) | (uint32_t(bytes[1]) << 16) | get16(bytes, 2);
        p.ip.payload_length = get16(bytes, 4);
        p.ip.protocol = bytes[6];
        p.ip.ttl = bytes[7];
        p.ip.src.version = 6;
        p.ip.dst.version = 6;
        std::copy(bytes.begin() + 8, bytes.begin() + 24, p.ip.src.bytes.begin());
        std::copy(bytes.begin() + 24, bytes.begin() + 40, p.ip.dst.bytes.begin());
        if (size_t(p.ip.payload_length) + 40 != bytes.size())
            throw ParseError("ipv6 payload length inconsistent");
    } else {
        throw ParseError("unsupported ip version");
    }
    if (p.ip.protocol != 6) throw ParseError("not a tcp packet");

    std::span<const uint8_t> seg = bytes.subspan(ip_len);
    if (seg.size() < 20) throw ParseError("truncated tcp header");
    p.tcp.src_port = get16(seg, 0);
    p.tcp.dst_port = get16(seg, 2);
    p.tcp.seq = get32(seg, 4);
    p.tcp.ack = get32(seg, 8);
    p.tcp.data_offset = seg[12] >> 4;
    p.tcp.flags = seg[13];
    p.tcp.window = get16(seg, 14);
    p.tcp.checksum = get16(seg, 16);
    p.tcp.urgent_ptr = get16(seg, 18);
    if (p.tcp.data_offset < 5) throw ParseError("tcp data offset below minimum");
    size_t hdr_len = size_t(p.tcp.data_offset) * 4;
    if (hdr_len > seg.size()) throw ParseError("tcp data offset exceeds segment");
    p.tcp.options = parse_options(seg.subspan(20, hdr_len - 20));
    p.payload.assign(seg.begin() + hdr_len, seg.end());
    return p;
}

std::optional<Packet> inject_identifier(const Packet& p, const DiscoveryIdentifier& id,
                                        InjectError* err) {
    auto fail = [&](InjectError e) -> std::optional<Packet> {
        if (err) *err = e;
        return std::nullopt;
    };
    if (has_discovery_option(p)) return fail(InjectError::already_tagged);
    if (size_t(p.tcp.data_offset) * 4 + kDiscoveryOptionWireLen > 60)
        return fail(InjectError::no_room);

    Packet out = p;
    TcpOption opt;
    opt.kind = kDiscoveryOptionKind;
    opt.payload.reserve(2 + kDiscoveryIdLen);
    opt.payload.push_back(uint8_t(kExperimentMagic >> 8));
    opt.payload.push_back(uint8_t(kExperimentMagic & 0xff));
    opt.payload.insert(opt.payload.end(), id.bytes.begin(), id.bytes.end());
    out.tcp.options.push_back(std::move(opt));
    finalize(out);  // data_offset grows by exactly 5 words: the option is 4-byte aligned
    if (err) *err = InjectError::none;
    return out;
}

std::optional<DiscoveryIdentifier> extract_identifier(const Packet& p) {
    for (const TcpOption& o : p.tcp.options) {
        if (o.kind != kDiscoveryOptionKind) continue;
        if (o.payload.size() != 2 + kDiscoveryIdLen) continue;
        uint16_t magic = uint16_t((o.payload[0] << 8) | o.payload[1]);
        if (magic != kExperimentMagic) continue;
        DiscoveryIdentifier id;
        std::copy(o.payload.begin() + 2, o.payload.end(), id.bytes.begin());
        return id;
    }
    return std::nullopt;
}

bool has_discovery_option(const Packet& p) {
    return extract_identifier(p).has_value();
}

void rewrite_addressing(Packet& p, const IpAddr* src, const uint16_t* src_port,
                        const IpAddr* dst, const uint16_t* dst_port) {
    if (src) p.ip.src = *src;
    if (dst) p.ip.dst = *dst;
    if (src_port) p.tcp.src_port = *src_port;
    if (dst_port) p.tcp.dst_port = *dst_port;
    finalize(p);
}

Packet make_tcp_packet(const IpAddr& src, uint16_t src_port, const IpAddr& dst,
                       uint16_t dst_port, uint32_t seq, uint32_t ack, uint8_t flags,
                       std::vector<uint8_t> payload, std::vector<TcpOption> options) {
    Packet p;
    p.ip.version = src.version;
    p.ip.src = src;
    p.ip.dst = dst;
    p.tcp.src_port = src_port;
    p.tcp.dst_port = dst_port;
    p.tcp.seq = seq;
    p.tcp.ack = ack;
    p.tcp.flags = flags;
    p.tcp.options = std::move(options);
    p.payload = std::move(payload);
    finalize(p);
    return p;
}

}  // namespace netdep
