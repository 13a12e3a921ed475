#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>

#include "netdep/agent.hpp"
#include "netdep/topology.hpp"

using namespace netdep;

namespace {

std::vector<uint8_t> bytes(const std::string& s) { return {s.begin(), s.end()}; }

// Three bare hosts with one service process each and a ripple agent per
// host; connections and sends are driven by hand.
struct Rig {
    World w;
    Deployment d;
    Collector collector;
    std::map<std::string, std::unique_ptr<RippleAgent>> agents;
    std::map<std::string, ProcessId> pids;

    explicit Rig(int hosts = 3, bool agent_on_last = true)
        : d(build_deployment(w, NetTemplate::nat_free, hosts, services_for(hosts))) {
        for (int i = 0; i < hosts; ++i) {
            std::string name(1, char('a' + i));
            std::string machine = "host-" + std::to_string(i);
            ProcessId pid = spawn_process(w, d.services.at(name).node, name, "system.slice");
            pids[name] = pid;
            listen_on(w, pid, IpAddr::v4(0, 0, 0, 0), d.services.at(name).bind_port);
            if (i + 1 == hosts && !agent_on_last) continue;
            agents[machine] = std::make_unique<RippleAgent>(w, machine, collector, 0x1000 + i);
            agents[machine]->install();
        }
    }

    static std::vector<ServiceSpec> services_for(int hosts) {
        std::vector<ServiceSpec> out;
        for (int i = 0; i < hosts; ++i)
            out.push_back({std::string(1, char('a' + i)), i, uint16_t(5000 + i)});
        return out;
    }

    RippleAgent& agent_of(const std::string& service) {
        return *agents.at(w.processes.at(pids.at(service)).ref.machine);
    }

    SocketId connect_and_send(const std::string& from, const std::string& to,
                              const std::string& payload) {
        SocketId out = kNoSocket;
        DialAddress addr = d.dial(from, to);
        connect_to(w, pids.at(from), addr.ip, addr.port,
                   [&out, payload](World& w2, SocketId sid, bool ok) {
                       REQUIRE(ok);
                       out = sid;
                       send_on(w2, sid, bytes(payload));
                   });
        w.run();
        return out;
    }

    size_t tagged_deliveries() const {
        size_t n = 0;
        for (const WireTraceEntry& e : w.wire_trace) n += e.has_discovery_option;
        return n;
    }
};

}  // namespace

TEST_CASE("register_target bootstraps, is idempotent, and rejects foreign processes") {
    Rig r;
    RippleAgent& a0 = r.agent_of("a");
    a0.register_target(r.pids["a"]);
    a0.register_target(r.pids["a"]);
    CHECK(a0.targets().size() == 1);
    CHECK(a0.targets().at(r.pids["a"]) == RippleAgent::Origin::manual);
    CHECK_THROWS_AS(a0.register_target(r.pids["b"]), EndpointError);
}

TEST_CASE("the first data packet of a target connection is tagged, later ones are not") {
    Rig r;
    r.agent_of("a").register_target(r.pids["a"]);
    SocketId sock = r.connect_and_send("a", "b", "first");
    CHECK(r.tagged_deliveries() == 1);
    REQUIRE(r.collector.graph().edges.size() == 1);
    CHECK(r.collector.graph().edges[0].src.name == "a");
    CHECK(r.collector.graph().edges[0].dst.name == "b");

    send_on(r.w, sock, bytes("second"));
    send_on(r.w, sock, bytes("third"));
    r.w.run();
    CHECK(r.tagged_deliveries() == 1);  // still only the first
    CHECK(r.collector.graph().edges[0].connections == 1);
}

TEST_CASE("non-target traffic is never tagged") {
    Rig r;
    r.connect_and_send("a", "b", "hello");
    CHECK(r.tagged_deliveries() == 0);
    CHECK(r.collector.graph().edges.empty());
    CHECK(r.collector.diagnostics().unpaired_senders == 0);
}

TEST_CASE("no option room defers tagging to the next spacious packet") {
    Rig r;
    r.agent_of("a").register_target(r.pids["a"]);
    SocketId sock = kNoSocket;
    DialAddress addr = r.d.dial("a", "b");
    connect_to(r.w, r.pids["a"], addr.ip, addr.port, [&](World& w2, SocketId sid, bool ok) {
        REQUIRE(ok);
        sock = sid;
        // stacks can keep the option region nearly full; 24 option bytes
        // leave no room for a 20-byte addition
        TcpOption stuffer;
        stuffer.kind = 77;
        stuffer.payload.assign(22, 0x55);
        w2.sockets.at(sid).fixed_options = {stuffer};
        send_on(w2, sid, bytes("cramped"));
    });
    r.w.run();
    CHECK(r.tagged_deliveries() == 0);
    CHECK(r.collector.graph().edges.empty());

    r.w.sockets.at(sock).fixed_options.clear();
    send_on(r.w, sock, bytes("roomy"));
    r.w.run();
    CHECK(r.tagged_deliveries() == 1);
    REQUIRE(r.collector.graph().edges.size() == 1);
    CHECK(r.collector.graph().edges[0].src.name == "a");
}

TEST_CASE("receiving a tagged packet recruits the reader and its other connections") {
    Rig r;
    // b already talks to c before anyone is targeted
    SocketId b_to_c = r.connect_and_send("b", "c", "pre-existing");
    CHECK(r.tagged_deliveries() == 0);

    r.agent_of("a").register_target(r.pids["a"]);
    r.connect_and_send("a", "b", "recruit");
    CHECK(r.agent_of("b").targets().count(r.pids["b"]) == 1);
    CHECK(r.agent_of("b").targets().at(r.pids["b"]) == RippleAgent::Origin::discovered);

    // the already-established b->c connection gets tagged on its next send
    send_on(r.w, b_to_c, bytes("now-tagged"));
    r.w.run();
    bool found_bc = false;
    for (const GraphEdge& e : r.collector.graph().edges) {
        if (e.src.name == "b" && e.dst.name == "c" && !e.reverse) found_bc = true;
    }
    CHECK(found_bc);
}

TEST_CASE("reads with no pending identifier do nothing") {
    Rig r;
    r.connect_and_send("a", "b", "plain");
    CHECK(r.agent_of("b").targets().empty());
    CHECK(r.collector.graph().edges.empty());
}

TEST_CASE("tagged packets reaching an agentless host leave the connection unaffected") {
    Rig with_agents(2, /*agent_on_last=*/true);
    Rig agentless(2, /*agent_on_last=*/false);
    for (Rig* r : {&with_agents, &agentless}) {
        r->agent_of("a").register_target(r->pids["a"]);
        std::vector<uint8_t> got;
        r->w.processes.at(r->pids["b"]).on_data =
            [&got](World&, ProcessId, SocketId, std::span<const uint8_t> b) {
                got.assign(b.begin(), b.end());
            };
        r->connect_and_send("a", "b", "payload-unchanged");
        CHECK(got == bytes("payload-unchanged"));
        CHECK(r->tagged_deliveries() == 1);  // tag rides the wire either way
    }
    // receiver side never attributed without an agent there
    CHECK(agentless.collector.diagnostics().unpaired_senders == 1);
    CHECK(agentless.collector.graph().edges.empty());
    CHECK_FALSE(with_agents.collector.graph().edges.empty());
}

TEST_CASE("at most one discovery option per socket and direction over a run") {
    Rig r;
    r.agent_of("a").register_target(r.pids["a"]);
    // request/response traffic on one connection, repeated
    r.w.processes.at(r.pids["b"]).on_data = [](World& w2, ProcessId, SocketId sid,
                                               std::span<const uint8_t>) {
        const Socket& s = w2.sockets.at(sid);
        if (!s.initiator) send_on(w2, sid, bytes("resp"));
    };
    SocketId sock = r.connect_and_send("a", "b", "req-0");
    for (int i = 1; i < 4; ++i) {
        send_on(r.w, sock, bytes("req-" + std::to_string(i)));
        r.w.run();
    }
    // one tag a->b, one tag b->a (the response direction), never more
    CHECK(r.tagged_deliveries() == 2);
    // and the reverse edge is flagged
    bool has_fwd = false, has_rev = false;
    for (const GraphEdge& e : r.collector.graph().edges) {
        if (e.src.name == "a" && e.dst.name == "b") has_fwd = !e.reverse;
        if (e.src.name == "b" && e.dst.name == "a") has_rev = e.reverse;
    }
    CHECK(has_fwd);
    CHECK(has_rev);
}

TEST_CASE("every discovered target is backed by a receiver-side edge endpoint") {
    Rig r;
    r.agent_of("a").register_target(r.pids["a"]);
    r.w.processes.at(r.pids["b"]).on_data = [](World& w2, ProcessId, SocketId sid,
                                               std::span<const uint8_t>) {
        const Socket& s = w2.sockets.at(sid);
        if (!s.initiator) send_on(w2, sid, bytes("resp"));
    };
    r.connect_and_send("a", "b", "req");
    r.connect_and_send("b", "c", "chain");

    std::set<std::string> discovered;
    for (const auto& [machine, agent] : r.agents) {
        for (const auto& [pid, origin] : agent->targets()) {
            if (origin == RippleAgent::Origin::discovered)
                discovered.insert(r.w.processes.at(pid).ref.name);
        }
    }
    std::set<std::string> receiver_endpoints;
    for (const GraphEdge& e : r.collector.graph().edges) receiver_endpoints.insert(e.dst.name);
    for (const std::string& name : discovered) {
        CHECK(receiver_endpoints.count(name) == 1);
    }
    CHECK(discovered.count("b") == 1);
    CHECK(discovered.count("c") == 1);
}

TEST_CASE("an option-stripping middlebox blinds discovery but never traffic") {
    // two LANs behind gateways; the egress gateway strips unknown options
    auto build = [](bool strip) {
        auto w = std::make_unique<World>();
        Deployment d = build_deployment(*w, NetTemplate::external_nat, 2,
                                        {{"a", 0, 5000}, {"b", 1, 5001}});
        if (strip) w->node(w->node_by_name("gw-0")).strip_unknown_options = true;
        return std::make_pair(std::move(w), d);
    };
    for (bool strip : {false, true}) {
        auto [w, d] = build(strip);
        Collector collector;
        RippleAgent a0(*w, "host-0", collector, 1);
        RippleAgent a1(*w, "host-1", collector, 2);
        a0.install();
        a1.install();
        ProcessId pa = spawn_process(*w, d.services.at("a").node, "a", "system.slice");
        ProcessId pb = spawn_process(*w, d.services.at("b").node, "b", "system.slice");
        listen_on(*w, pb, IpAddr::v4(0, 0, 0, 0), 5001);
        a0.register_target(pa);
        std::vector<uint8_t> got;
        w->processes.at(pb).on_data = [&got](World&, ProcessId, SocketId,
                                             std::span<const uint8_t> bs) {
            got.assign(bs.begin(), bs.end());
        };
        DialAddress addr = d.dial("a", "b");
        connect_to(*w, pa, addr.ip, addr.port, [](World& w2, SocketId sid, bool ok) {
            REQUIRE(ok);
            send_on(w2, sid, bytes("survives"));
        });
        w->run();
        CHECK(got == bytes("survives"));  // payload unaffected either way
        if (strip) {
            CHECK(collector.graph().edges.empty());
            CHECK(collector.diagnostics().unpaired_senders == 1);
        } else {
            CHECK(collector.graph().edges.size() == 1);
        }
    }
}

TEST_CASE("identifiers are unique across agents and connections") {
    Rig r;
    r.agent_of("a").register_target(r.pids["a"]);
    r.agent_of("b").register_target(r.pids["b"]);
    r.connect_and_send("a", "b", "x");
    r.connect_and_send("a", "c", "y");
    r.connect_and_send("b", "c", "z");
    // three sender events -> three distinct identifiers; if any collided the
    // collector would have thrown a protocol violation on ingest
    CHECK(r.collector.graph().edges.size() +
              r.collector.diagnostics().unpaired_senders ==
          3);
}
