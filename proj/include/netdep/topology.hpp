#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "netdep/netsim.hpp"

namespace netdep {

enum class NetTemplate { nat_free, internal_nat, external_nat };

std::string to_string(NetTemplate t);
NetTemplate net_template_from_string(const std::string& s);

// A service as the deployment layer sees it: a name, a host slot, and the
// port it is reachable on (bind port on bare hosts, published host port in
// the container template).
struct ServiceSpec {
    std::string service;
    int host = 0;
    uint16_t port = 0;
};

struct DialAddress {
    IpAddr ip;
    uint16_t port = 0;
};

struct ServicePlacement {
    std::string service;
    int host = 0;
    NodeId node = kNoNode;
    std::string cgroup;
    uint16_t bind_port = 0;     // port the process listens on in its namespace
    uint16_t publish_port = 0;  // port peers dial (differs under the container template)
};

// A docker-proxy style relay the deployment requires on a host namespace.
struct ForwarderPlan {
    NodeId node = kNoNode;
    uint16_t listen_port = 0;
    IpAddr target_ip;
    uint16_t target_port = 0;
};

struct Deployment {
    NetTemplate kind{};
    int host_count = 0;
    std::map<std::string, ServicePlacement> services;
    std::vector<ForwarderPlan> forwarders;
    std::vector<std::string> machines;  // administrable hosts (agents attach here)

    // Address service `from` uses to reach service `to`.
    DialAddress dial(const std::string& from, const std::string& to) const;

  private:
    friend Deployment build_deployment(World&, NetTemplate, int, const std::vector<ServiceSpec>&);
    std::map<int, IpAddr> host_lan_ip_;   // nat-free / internal-nat host addresses
    std::map<int, IpAddr> gateway_pub_;   // external-nat public addresses
    IpAddr lan_host_ip_;                  // external-nat in-LAN host address
};

// Builds the network for one of the three templates into `w` and returns the
// deployment plan. Host/LAN count must cover every placement.
Deployment build_deployment(World& w, NetTemplate kind, int host_count,
                            const std::vector<ServiceSpec>& services);

// Declarative topology for scenarios that do not use a template.
struct ExplicitTopology {
    struct Seg {
        std::string name;
        uint64_t latency = 1;
    };
    struct Node {
        std::string name;
        std::string machine;
        bool strip_unknown_options = false;
    };
    struct Iface {
        std::string node, name, ip, segment;
    };
    struct Route {
        std::string node, prefix, via;
        std::string next_hop;  // empty: on-link
    };
    struct Rule {
        std::string node;
        std::string chain;  // "dnat" | "snat"
        std::string in_interface;
        bool in_interface_negate = false;
        std::string src, dst;  // CIDR, empty = any
        int dst_port = -1;     // -1 = any
        std::string to_ip;
        int to_port = -1;  // -1 = keep
    };
    std::vector<Seg> segments;
    std::vector<Node> nodes;
    std::vector<Iface> interfaces;
    std::vector<Route> routes;
    std::vector<Rule> nat_rules;
};

// Throws TopologyError on dangling references or duplicate addresses.
void build_topology(World& w, const ExplicitTopology& spec);

}  // namespace netdep
