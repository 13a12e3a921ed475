#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "netdep/packet.hpp"
#include "netdep/rng.hpp"
#include "oracles.hpp"

using namespace netdep;

namespace {

DiscoveryIdentifier test_id(uint8_t fill) {
    DiscoveryIdentifier id;
    for (size_t i = 0; i < id.bytes.size(); ++i) id.bytes[i] = uint8_t(fill + i);
    return id;
}

Packet minimal_packet() {
    return make_tcp_packet(IpAddr::v4(192, 168, 2, 1), 40000, IpAddr::v4(192, 168, 2, 2), 80,
                           1000, 0, tcpflag::syn);
}

Packet random_packet(DetRng& rng, bool allow_v6 = true) {
    IpAddr src, dst;
    if (allow_v6 && rng.chance(0.25)) {
        std::array<uint8_t, 16> a{}, b{};
        for (auto& x : a) x = uint8_t(rng.next());
        for (auto& x : b) x = uint8_t(rng.next());
        a[0] = b[0] = 0x20;  // keep them plausible global unicast
        src = IpAddr::v6(a);
        dst = IpAddr::v6(b);
    } else {
        src = IpAddr::v4_from_u32(uint32_t(rng.next()));
        dst = IpAddr::v4_from_u32(uint32_t(rng.next()));
    }
    std::vector<TcpOption> opts;
    size_t budget = rng.below(3) == 0 ? rng.below(20) : 0;
    while (options_wire_size(opts) + 2 < budget) {
        TcpOption o;
        if (rng.chance(0.3)) {
            o.kind = 1;
        } else {
            o.kind = uint8_t(rng.range(2, 253));
            size_t len = rng.below(6);
            for (size_t i = 0; i < len; ++i) o.payload.push_back(uint8_t(rng.next()));
        }
        opts.push_back(std::move(o));
    }
    std::vector<uint8_t> payload;
    size_t plen = rng.below(64);
    for (size_t i = 0; i < plen; ++i) payload.push_back(uint8_t(rng.next()));
    uint8_t flags = uint8_t(rng.next() & 0x3f);
    Packet p = make_tcp_packet(src, uint16_t(rng.range(1, 65535)), dst,
                               uint16_t(rng.range(1, 65535)), uint32_t(rng.next()),
                               uint32_t(rng.next()), flags, std::move(payload), std::move(opts));
    p.ip.ttl = uint8_t(rng.range(1, 255));
    p.tcp.window = uint16_t(rng.next());
    finalize(p);
    return p;
}

}  // namespace

TEST_CASE("internet checksum matches the hand-worked example") {
    std::vector<uint8_t> bytes = {0x00, 0x01, 0xf2, 0x03, 0xf4, 0xf5, 0xf6, 0xf7};
    CHECK(internet_checksum(bytes) == 0x220d);
    CHECK(oracle::checksum(bytes) == 0x220d);
}

TEST_CASE("internet checksum of all-zero input is 0xffff") {
    for (size_t n : {size_t(0), size_t(1), size_t(7), size_t(64)}) {
        std::vector<uint8_t> z(n, 0);
        CHECK(internet_checksum(z) == 0xffff);
    }
}

TEST_CASE("odd-length input is padded with a zero byte") {
    std::vector<uint8_t> odd = {0xab, 0xcd, 0xef};
    std::vector<uint8_t> even = {0xab, 0xcd, 0xef, 0x00};
    CHECK(internet_checksum(odd) == internet_checksum(even));
}

TEST_CASE("minimal packet serializes to 40 bytes with data offset 5") {
    Packet p = minimal_packet();
    auto wire = serialize(p);
    CHECK(wire.size() == 40);
    CHECK(p.tcp.data_offset == 5);
    CHECK(p.ip.total_length == 40);
}

TEST_CASE("a 20-byte option yields data offset 10 and a 40-byte tcp header") {
    TcpOption o;
    o.kind = 77;
    o.payload.assign(18, 0xaa);
    Packet p = make_tcp_packet(IpAddr::v4(10, 0, 0, 1), 1234, IpAddr::v4(10, 0, 0, 2), 80, 1, 0,
                               tcpflag::ack, {}, {o});
    CHECK(p.tcp.data_offset == 10);  // 20 base + 20 option = 40 bytes = 10 words
    auto wire = serialize(p);
    CHECK(wire.size() == 20 + 40);
}

TEST_CASE("roundtrip identity over randomized valid packets") {
    DetRng rng(0x7a31c0de);
    for (int i = 0; i < 1000; ++i) {
        Packet p = random_packet(rng);
        auto wire = serialize(p);
        Packet q = parse(wire);
        CHECK(q == p);
        CHECK(serialize(q) == wire);
    }
}

TEST_CASE("stored checksums verify on freshly built packets") {
    DetRng rng(0xbeef);
    for (int i = 0; i < 100; ++i) {
        Packet p = random_packet(rng);
        CHECK(verify_tcp_checksum(p));
        CHECK(verify_ip_checksum(p));
        CHECK(oracle::packet_valid(p));
    }
}

TEST_CASE("parse rejects truncated input") {
    Packet p = minimal_packet();
    auto wire = serialize(p);
    std::vector<uint8_t> short39(wire.begin(), wire.begin() + 39);
    // restore total length consistency is impossible at 39 bytes: header says 40
    CHECK_THROWS_AS(parse(short39), ParseError);
    CHECK_THROWS_AS(parse(std::vector<uint8_t>{}), ParseError);
}

TEST_CASE("parse rejects data offset below 5") {
    Packet p = minimal_packet();
    auto wire = serialize(p);
    wire[20 + 12] = uint8_t(4 << 4);
    CHECK_THROWS_AS(parse(wire), ParseError);
}

TEST_CASE("parse rejects inconsistent length fields") {
    Packet p = minimal_packet();
    auto wire = serialize(p);
    wire[2] = 0;
    wire[3] = 60;  // total length says 60, buffer is 40
    CHECK_THROWS_AS(parse(wire), ParseError);
}

TEST_CASE("unknown option kinds are preserved verbatim") {
    TcpOption o;
    o.kind = 77;
    o.payload = {1, 2, 3, 4, 5, 6};
    Packet p = make_tcp_packet(IpAddr::v4(10, 0, 0, 1), 1, IpAddr::v4(10, 0, 0, 2), 2, 0, 0,
                               tcpflag::ack, {0xff}, {o});
    Packet q = parse(serialize(p));
    REQUIRE(q.tcp.options.size() == 1);
    CHECK(q.tcp.options[0].kind == 77);
    CHECK(q.tcp.options[0].payload == o.payload);
}

TEST_CASE("option truncation inside the header is a parse error") {
    TcpOption o;
    o.kind = 77;
    o.payload = {1, 2};
    Packet p = make_tcp_packet(IpAddr::v4(10, 0, 0, 1), 1, IpAddr::v4(10, 0, 0, 2), 2, 0, 0,
                               tcpflag::ack, {}, {o});
    auto wire = serialize(p);
    wire[20 + 21] = 9;  // length byte runs past the options region
    CHECK_THROWS_AS(parse(wire), ParseError);
}

TEST_CASE("inject grows data offset by five words and keeps checksums valid") {
    Packet p = make_tcp_packet(IpAddr::v4(172, 17, 0, 2), 40001, IpAddr::v4(192, 168, 2, 2), 80,
                               5000, 600, tcpflag::ack | tcpflag::psh, {'h', 'i'});
    REQUIRE(p.tcp.data_offset == 5);
    auto tagged = inject_identifier(p, test_id(7));
    REQUIRE(tagged.has_value());
    CHECK(tagged->tcp.data_offset == 10);
    CHECK(verify_tcp_checksum(*tagged));
    CHECK(verify_ip_checksum(*tagged));
    CHECK(oracle::packet_valid(*tagged));
    CHECK(tagged->payload == p.payload);
    CHECK(tagged->tcp.seq == p.tcp.seq);
}

TEST_CASE("inject byte diff is confined to ip length/checksum and the tcp option region") {
    Packet p = make_tcp_packet(IpAddr::v4(10, 1, 1, 1), 1111, IpAddr::v4(10, 1, 1, 2), 2222, 42,
                               43, tcpflag::ack | tcpflag::psh, {9, 9, 9});
    auto before = serialize(p);
    auto tagged = inject_identifier(p, test_id(1));
    REQUIRE(tagged.has_value());
    auto after = serialize(*tagged);
    CHECK(after.size() == before.size() + 20);

    // ip header: only total length (2..4) and header checksum (10..12) may move
    for (size_t i = 0; i < 20; ++i) {
        bool may_change = (i >= 2 && i < 4) || (i >= 10 && i < 12);
        if (!may_change) CHECK(after[i] == before[i]);
    }
    // tcp fixed header: only data offset byte (12) and checksum (16..18) may move
    for (size_t i = 0; i < 20; ++i) {
        bool may_change = i == 12 || (i >= 16 && i < 18);
        if (!may_change) CHECK(after[20 + i] == before[20 + i]);
    }
    // payload is byte-identical
    CHECK(std::equal(before.end() - 3, before.end(), after.end() - 3));
}

TEST_CASE("inject fails with no_room at data offset 11") {
    TcpOption stuffer;
    stuffer.kind = 8;
    stuffer.payload.assign(22, 0);  // 24 option bytes -> data offset 11
    Packet p = make_tcp_packet(IpAddr::v4(10, 0, 0, 1), 1, IpAddr::v4(10, 0, 0, 2), 2, 0, 0,
                               tcpflag::ack, {'x'}, {stuffer});
    REQUIRE(p.tcp.data_offset == 11);
    InjectError err;
    auto tagged = inject_identifier(p, test_id(3), &err);
    CHECK_FALSE(tagged.has_value());
    CHECK(err == InjectError::no_room);
}

TEST_CASE("double injection is rejected") {
    Packet p = minimal_packet();
    auto once = inject_identifier(p, test_id(1));
    REQUIRE(once.has_value());
    InjectError err;
    auto twice = inject_identifier(*once, test_id(2), &err);
    CHECK_FALSE(twice.has_value());
    CHECK(err == InjectError::already_tagged);
}

TEST_CASE("extract returns the injected identifier") {
    DetRng rng(0x1d);
    for (int i = 0; i < 200; ++i) {
        Packet p = random_packet(rng);
        if (p.tcp.data_offset * 4 + 20 > 60) continue;
        DiscoveryIdentifier id = test_id(uint8_t(i));
        auto tagged = inject_identifier(p, id);
        REQUIRE(tagged.has_value());
        auto got = extract_identifier(*tagged);
        REQUIRE(got.has_value());
        CHECK(*got == id);
        // and survives a wire roundtrip
        CHECK(extract_identifier(parse(serialize(*tagged))) == id);
    }
}

TEST_CASE("extract is empty for untagged packets") {
    CHECK_FALSE(extract_identifier(minimal_packet()).has_value());
}

TEST_CASE("an unrelated kind-254 option with a different experiment id is ignored") {
    TcpOption o;
    o.kind = kDiscoveryOptionKind;
    o.payload.assign(18, 0);
    o.payload[0] = 0x12;  // foreign experiment magic
    o.payload[1] = 0x34;
    Packet p = make_tcp_packet(IpAddr::v4(10, 0, 0, 1), 1, IpAddr::v4(10, 0, 0, 2), 2, 0, 0,
                               tcpflag::ack, {}, {o});
    CHECK_FALSE(extract_identifier(p).has_value());
    // and a malformed short payload on the right magic is also ignored
    TcpOption bad;
    bad.kind = kDiscoveryOptionKind;
    bad.payload = {uint8_t(kExperimentMagic >> 8), uint8_t(kExperimentMagic & 0xff), 1, 2};
    Packet q = make_tcp_packet(IpAddr::v4(10, 0, 0, 1), 1, IpAddr::v4(10, 0, 0, 2), 2, 0, 0,
                               tcpflag::ack, {}, {bad});
    CHECK_FALSE(extract_identifier(q).has_value());
}

TEST_CASE("ipv6 injection skips the ip checksum and still verifies") {
    std::array<uint8_t, 16> a{}, b{};
    a[0] = 0x20;
    a[15] = 1;
    b[0] = 0x20;
    b[15] = 2;
    Packet p = make_tcp_packet(IpAddr::v6(a), 5000, IpAddr::v6(b), 443, 1, 2,
                               tcpflag::ack | tcpflag::psh, {'v', '6'});
    auto tagged = inject_identifier(p, test_id(9));
    REQUIRE(tagged.has_value());
    CHECK(tagged->ip.payload_length == p.ip.payload_length + 20);
    CHECK(verify_tcp_checksum(*tagged));
    CHECK(oracle::packet_valid(*tagged));
    CHECK(parse(serialize(*tagged)) == *tagged);
}

TEST_CASE("rewrite_addressing refreshes both checksums and leaves options alone") {
    TcpOption o;
    o.kind = 8;
    o.payload.assign(8, 0x5a);
    Packet p = make_tcp_packet(IpAddr::v4(172, 17, 0, 2), 40000, IpAddr::v4(192, 168, 2, 2), 80,
                               77, 88, tcpflag::ack | tcpflag::psh, {1, 2, 3}, {o});
    auto tagged = inject_identifier(p, test_id(4));
    REQUIRE(tagged.has_value());
    Packet q = *tagged;
    IpAddr new_src = IpAddr::v4(192, 168, 2, 1);
    uint16_t new_port = 32768;
    rewrite_addressing(q, &new_src, &new_port, nullptr, nullptr);
    CHECK(q.ip.src == new_src);
    CHECK(q.tcp.src_port == 32768);
    CHECK(q.tcp.options == tagged->tcp.options);
    CHECK(q.payload == tagged->payload);
    CHECK(oracle::packet_valid(q));
    CHECK(extract_identifier(q) == test_id(4));
}

TEST_CASE("serialize rejects a data offset that disagrees with the options") {
    Packet p = minimal_packet();
    p.tcp.data_offset = 6;  // no options to back it
    CHECK_THROWS_AS(serialize(p), StructureError);
}
