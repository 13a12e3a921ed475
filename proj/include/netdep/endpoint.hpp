#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "netdep/packet.hpp"

namespace netdep {

class World;

using NodeId = uint32_t;
using ProcessId = uint32_t;
using SocketId = uint32_t;

constexpr NodeId kNoNode = UINT32_MAX;
constexpr SocketId kNoSocket = UINT32_MAX;

struct EndpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Host-scoped process identity. `machine` is the physical host label used
// for graph clustering and agent scope; processes in container namespaces
// keep their host's machine label and carry the container in `cgroup`.
struct ProcessRef {
    std::string machine;
    uint32_t pid = 0;
    std::string cgroup;
    std::string name;

    auto operator<=>(const ProcessRef&) const = default;
};

struct Process {
    ProcessRef ref;
    NodeId node = kNoNode;  // network namespace the process lives in

    // Behaviors, wired by the harness or by spawn_forwarder.
    std::function<void(World&, ProcessId, SocketId)> on_accept;
    std::function<void(World&, ProcessId, SocketId, std::span<const uint8_t>)> on_data;
    std::function<void(World&, ProcessId, SocketId)> on_peer_closed;
};

enum class SockState { listening, connecting, established, closed };

struct Socket {
    SocketId id = kNoSocket;
    ProcessId owner = 0;
    NodeId node = kNoNode;
    SockState state = SockState::closed;
    bool initiator = false;  // created by connect (true) or accept (false)
    IpAddr local_ip;
    uint16_t local_port = 0;
    IpAddr remote_ip;
    uint16_t remote_port = 0;
    uint32_t snd_next = 0;
    uint32_t rcv_next = 0;
    SocketId listener = kNoSocket;  // for accepted sockets

    // Options carried on every data packet from this socket (models stacks
    // that attach timestamps etc.); lets tests create option-space pressure.
    std::vector<TcpOption> fixed_options;

    std::function<void(World&, SocketId, bool ok)> on_connected;
};

// The agent attachment surface. All callbacks are optional; on_transmit may
// return a replacement packet and is the only hook allowed to modify
// traffic. Hooks fire for every namespace on their machine.
struct HookSet {
    std::function<void(World&, ProcessId, SocketId, const Packet&)> on_send;
    std::function<std::optional<Packet>(World&, const Packet&, SocketId)> on_transmit;
    std::function<void(World&, SocketId, const Packet&)> on_data_queued;
    std::function<void(World&, ProcessId, SocketId)> on_recv;
};

// Application-visible events; the graceful-deployment check compares these
// traces across runs, so nothing agent-dependent may ever land here.
struct AppEvent {
    enum class Kind { established, refused, read, closed };
    uint64_t tick = 0;
    Kind kind{};
    std::string process;  // "machine/name/pid"
    std::string endpoint;  // "local -> remote"
    std::vector<uint8_t> payload;  // read events only

    auto operator<=>(const AppEvent&) const = default;
};

// Payload transmission/consumption log, rich enough for a propagation
// oracle that is independent of any agent state.
struct MsgEvent {
    enum class Kind { send, read };
    Kind kind{};
    uint64_t order = 0;  // total order across the run
    uint64_t tick = 0;
    uint64_t msg = 0;      // message instance id
    ProcessId process = 0;  // sender for send, reader for read
};

// In-flight bookkeeping that rides along with a routed packet.
struct FlightCtx {
    uint64_t msg = 0;  // nonzero for payload-bearing packets
    ProcessId sender = 0;
};

// --- endpoint operations (implemented in endpoint.cpp) ------------------

ProcessId spawn_process(World& w, NodeId node, const std::string& name,
                        const std::string& cgroup);

// Binds a listener. addr may be the wildcard 0.0.0.0 / ::. Throws
// EndpointError if the port is taken in that namespace.
SocketId listen_on(World& w, ProcessId pid, const IpAddr& addr, uint16_t port);

// Starts a three-segment handshake toward dst. Source address comes from the
// route's outgoing interface; the ephemeral port from the namespace
// allocator. on_connected fires with ok=false on connection-refused.
SocketId connect_to(World& w, ProcessId pid, const IpAddr& dst, uint16_t port,
                    std::function<void(World&, SocketId, bool)> on_connected = {});

// Sends one payload-bearing data packet. Throws on non-established sockets.
void send_on(World& w, SocketId sid, std::vector<uint8_t> payload);

void close_socket(World& w, SocketId sid);

// Userspace L7 forwarder: accepts on (0.0.0.0, listen_port) in `node` and
// relays byte streams to target, one onward connection per accepted one.
ProcessId spawn_forwarder(World& w, NodeId node, uint16_t listen_port,
                          const IpAddr& target_ip, uint16_t target_port);

// Called by the routing layer when a packet lands on a node that owns its
// destination address.
void endpoint_local_deliver(World& w, NodeId node, const Packet& p, const FlightCtx& ctx);

}  // namespace netdep
