#include "netdep/topology.hpp"

#include <algorithm>
#include <stdexcept>

namespace netdep {

std::string to_string(NetTemplate t) {
    switch (t) {
        case NetTemplate::nat_free: return "nat-free";
        case NetTemplate::internal_nat: return "internal-nat";
        case NetTemplate::external_nat: return "external-nat";
    }
    return "?";
}

NetTemplate net_template_from_string(const std::string& s) {
    if (s == "nat-free") return NetTemplate::nat_free;
    if (s == "internal-nat") return NetTemplate::internal_nat;
    if (s == "external-nat") return NetTemplate::external_nat;
    throw TopologyError("unknown network template: " + s);
}

DialAddress Deployment::dial(const std::string& from, const std::string& to) const {
    const ServicePlacement& src = services.at(from);
    const ServicePlacement& dst = services.at(to);
    switch (kind) {
        case NetTemplate::nat_free:
            return {host_lan_ip_.at(dst.host), dst.bind_port};
        case NetTemplate::internal_nat:
            // Everything dials the published host port, co-located callers
            // included; those land on the docker-proxy instead of the DNAT
            // rule (the rule excludes bridge-side arrivals).
            return {host_lan_ip_.at(dst.host), dst.publish_port};
        case NetTemplate::external_nat:
            if (src.host == dst.host) return {lan_host_ip_, dst.bind_port};
            return {gateway_pub_.at(dst.host), dst.bind_port};
    }
    throw TopologyError("bad template");
}

namespace {

IpAddr public_ip_for(int lan_index) {
    // First two match the canonical two-LAN layout; later gateways take a
    // deterministic range of their own.
    if (lan_index == 0) return IpAddr::v4(1, 1, 1, 1);
    if (lan_index == 1) return IpAddr::v4(8, 8, 8, 8);
    return IpAddr::v4(100, 100, 0, uint8_t(lan_index + 1));
}

}  // namespace

Deployment build_deployment(World& w, NetTemplate kind, int host_count,
                            const std::vector<ServiceSpec>& services) {
    if (host_count < 1) throw TopologyError("host count must be >= 1");
    for (const ServiceSpec& s : services) {
        if (s.host < 0 || s.host >= host_count)
            throw TopologyError("service " + s.service + " placed on missing host");
    }

    Deployment d;
    d.kind = kind;
    d.host_count = host_count;

    if (kind == NetTemplate::nat_free) {
        SegmentId lan = w.add_segment("lan");
        for (int i = 0; i < host_count; ++i) {
            std::string host = "host-" + std::to_string(i);
            NodeId n = w.add_node(host, host);
            IpAddr ip = IpAddr::v4(192, 168, 2, uint8_t(1 + i));
            InterfaceId eth = w.add_interface(n, "eth0", ip, lan);
            w.add_route(n, IpPrefix::parse("192.168.2.0/24"), eth);
            d.host_lan_ip_[i] = ip;
            d.machines.push_back(host);
        }
        for (const ServiceSpec& s : services) {
            ServicePlacement p;
            p.service = s.service;
            p.host = s.host;
            p.node = w.node_by_name("host-" + std::to_string(s.host));
            p.cgroup = "system.slice";
            p.bind_port = s.port;
            p.publish_port = s.port;
            d.services[s.service] = p;
        }
    } else if (kind == NetTemplate::internal_nat) {
        SegmentId lan = w.add_segment("lan");
        std::vector<NodeId> hosts;
        std::vector<InterfaceId> host_eth;
        std::vector<SegmentId> bridges;
        for (int i = 0; i < host_count; ++i) {
            std::string host = "host-" + std::to_string(i);
            NodeId n = w.add_node(host, host);
            IpAddr ip = IpAddr::v4(192, 168, 2, uint8_t(1 + i));
            InterfaceId eth = w.add_interface(n, "eth0", ip, lan);
            SegmentId br = w.add_segment("br-" + host);
            InterfaceId br_if = w.add_interface(n, "docker0", IpAddr::v4(172, 17, 0, 1), br);
            w.add_route(n, IpPrefix::parse("192.168.2.0/24"), eth);
            w.add_route(n, IpPrefix::parse("172.17.0.0/16"), br_if);
            // masquerade container traffic leaving the host
            NatRule snat;
            snat.chain = NatChain::snat;
            snat.match.in_interface = "docker0";
            snat.match.src = IpPrefix::parse("172.17.0.0/16");
            snat.translate.ip = ip;
            w.add_nat_rule(n, snat);
            hosts.push_back(n);
            host_eth.push_back(eth);
            bridges.push_back(br);
            d.host_lan_ip_[i] = ip;
            d.machines.push_back(host);
        }
        // one container namespace per service, addresses per-host sequential
        std::map<int, int> next_ctr;
        for (const ServiceSpec& s : services) {
            int i = s.host;
            int k = next_ctr[i]++;
            std::string host = "host-" + std::to_string(i);
            std::string cname = host + "/" + s.service;
            NodeId ctr = w.add_node(cname, host);
            IpAddr cip = IpAddr::v4(172, 17, 0, uint8_t(2 + k));
            InterfaceId ceth = w.add_interface(ctr, "eth0", cip, bridges[i]);
            w.add_route(ctr, IpPrefix::parse("172.17.0.0/16"), ceth);
            w.add_route(ctr, IpPrefix::parse("0.0.0.0/0"), ceth, IpAddr::v4(172, 17, 0, 1));

            // published port: host:<s.port> -> container:80, skipping
            // bridge-side arrivals exactly like the docker-proxy setup
            NatRule dnat;
            dnat.chain = NatChain::dnat;
            dnat.match.in_interface = "docker0";
            dnat.match.in_interface_negate = true;
            dnat.match.dst = IpPrefix{d.host_lan_ip_.at(i), 32};
            dnat.match.dst_port = s.port;
            dnat.translate.ip = cip;
            dnat.translate.port = 80;
            w.add_nat_rule(hosts[i], dnat);

            d.forwarders.push_back(ForwarderPlan{hosts[i], s.port, cip, 80});

            ServicePlacement p;
            p.service = s.service;
            p.host = i;
            p.node = ctr;
            p.cgroup = "docker/" + s.service;
            p.bind_port = 80;
            p.publish_port = s.port;
            d.services[s.service] = p;
        }
    } else {  // external_nat
        SegmentId internet = w.add_segment("internet");
        for (int i = 0; i < host_count; ++i) {
            std::string gw = "gw-" + std::to_string(i);
            std::string host = "host-" + std::to_string(i);
            SegmentId lan = w.add_segment("lan-" + std::to_string(i));
            IpAddr pub = public_ip_for(i);
            IpAddr gw_lan = IpAddr::v4(192, 168, 2, 1);
            IpAddr host_ip = IpAddr::v4(192, 168, 2, 2);

            NodeId g = w.add_node(gw, gw);
            InterfaceId wan_if = w.add_interface(g, "wan", pub, internet);
            InterfaceId lan_if = w.add_interface(g, "lan", gw_lan, lan);
            w.add_route(g, IpPrefix::parse("192.168.2.0/24"), lan_if);
            w.add_route(g, IpPrefix::parse("0.0.0.0/0"), wan_if);

            NatRule snat;
            snat.chain = NatChain::snat;
            snat.match.in_interface = "lan";
            snat.translate.ip = pub;
            w.add_nat_rule(g, snat);

            NodeId h = w.add_node(host, host);
            InterfaceId eth = w.add_interface(h, "eth0", host_ip, lan);
            w.add_route(h, IpPrefix::parse("192.168.2.0/24"), eth);
            w.add_route(h, IpPrefix::parse("0.0.0.0/0"), eth, gw_lan);

            d.gateway_pub_[i] = pub;
            d.host_lan_ip_[i] = host_ip;
            d.machines.push_back(host);
        }
        d.lan_host_ip_ = IpAddr::v4(192, 168, 2, 2);
        for (const ServiceSpec& s : services) {
            std::string gw = "gw-" + std::to_string(s.host);
            NatRule fwd;
            fwd.chain = NatChain::dnat;
            fwd.match.dst = IpPrefix{d.gateway_pub_.at(s.host), 32};
            fwd.match.dst_port = s.port;
            fwd.translate.ip = d.lan_host_ip_;
            fwd.translate.port = s.port;
            w.add_nat_rule(w.node_by_name(gw), fwd);

            ServicePlacement p;
            p.service = s.service;
            p.host = s.host;
            p.node = w.node_by_name("host-" + std::to_string(s.host));
            p.cgroup = "system.slice";
            p.bind_port = s.port;
            p.publish_port = s.port;
            d.services[s.service] = p;
        }
    }

    w.validate_topology();
    return d;
}

void build_topology(World& w, const ExplicitTopology& spec) {
    std::map<std::string, SegmentId> segs;
    for (const auto& s : spec.segments) segs[s.name] = w.add_segment(s.name, s.latency);
    for (const auto& n : spec.nodes) {
        NodeId id = w.add_node(n.name, n.machine.empty() ? n.name : n.machine);
        w.node(id).strip_unknown_options = n.strip_unknown_options;
    }
    std::map<std::pair<std::string, std::string>, InterfaceId> ifaces;
    for (const auto& i : spec.interfaces) {
        auto seg = segs.find(i.segment);
        if (seg == segs.end()) throw TopologyError("interface on unknown segment " + i.segment);
        InterfaceId id =
            w.add_interface(w.node_by_name(i.node), i.name, IpAddr::parse(i.ip), seg->second);
        ifaces[{i.node, i.name}] = id;
    }
    for (const auto& r : spec.routes) {
        auto via = ifaces.find({r.node, r.via});
        if (via == ifaces.end())
            throw TopologyError("route via unknown interface " + r.node + "/" + r.via);
        std::optional<IpAddr> hop;
        if (!r.next_hop.empty()) hop = IpAddr::parse(r.next_hop);
        w.add_route(w.node_by_name(r.node), IpPrefix::parse(r.prefix), via->second, hop);
    }
    for (const auto& ru : spec.nat_rules) {
        NatRule rule;
        if (ru.chain == "dnat") rule.chain = NatChain::dnat;
        else if (ru.chain == "snat") rule.chain = NatChain::snat;
        else throw TopologyError("unknown nat chain " + ru.chain);
        if (!ru.in_interface.empty()) {
            rule.match.in_interface = ru.in_interface;
            rule.match.in_interface_negate = ru.in_interface_negate;
        }
        if (!ru.src.empty()) rule.match.src = IpPrefix::parse(ru.src);
        if (!ru.dst.empty()) rule.match.dst = IpPrefix::parse(ru.dst);
        if (ru.dst_port >= 0) rule.match.dst_port = uint16_t(ru.dst_port);
        rule.translate.ip = IpAddr::parse(ru.to_ip);
        if (ru.to_port >= 0) rule.translate.port = uint16_t(ru.to_port);
        w.add_nat_rule(w.node_by_name(ru.node), rule);
    }
    w.validate_topology();
}

}  // namespace netdep
