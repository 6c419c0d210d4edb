#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "fluxshard/cache.hpp"
#include "fluxshard/pipeline.hpp"
#include "fluxshard/refnet.hpp"
#include "fluxshard/reuse.hpp"
#include "fluxshard/wire.hpp"

namespace fluxshard {

// Fingerprint binding both endpoints to the same network and thresholds; a
// mismatch rejects the handshake before any state can diverge.
uint64_t session_hash(const NetworkSpec& net, const ThresholdVector& tau);

// Inference state shared by the TCP server and the in-process loopback
// transport: one isolated cache per client id.
//
// Recovery rules:
//   - a full-mask payload always re-seeds the session (carries complete state);
//   - a sparse payload onto an unseeded session, or with a non-increasing
//     frame id, is answered with a desync status and leaves state untouched.
class ServerCore {
  public:
    ServerCore(NetworkSpec net, ThresholdVector tau, PipelineOptions opt);

    uint64_t hash() const { return hash_; }

    // session_known reports whether this client already holds server-side state.
    WireStatus hello(uint64_t client_id, uint64_t net_hash, bool& session_known);

    OffloadResponse process(uint64_t client_id, const OffloadPayload& payload);

    // Byte-level entry used by transports: decode, process, encode. Malformed
    // payload bytes produce a bad-request response instead of throwing.
    std::vector<uint8_t> process_bytes(uint64_t client_id, const std::vector<uint8_t>& frame_bytes);

    void drop_session(uint64_t client_id);
    bool has_session(uint64_t client_id);

  private:
    NetworkSpec net_;
    ThresholdVector tau_;
    PipelineOptions opt_;
    uint64_t hash_;
    std::mutex mu_;
    std::map<uint64_t, EndpointCache> sessions_;
};

// Round-trip interface the frame driver offloads through; implementations
// surface transport/handshake failures as ProtocolError.
struct OffloadTransport {
    virtual ~OffloadTransport() = default;
    virtual OffloadResponse offload(const OffloadPayload& payload) = 0;
};

// In-process transport. Still routes through encode/decode so the byte path
// is exercised identically to TCP.
class LoopbackTransport : public OffloadTransport {
  public:
    LoopbackTransport(ServerCore& core, uint64_t client_id);
    OffloadResponse offload(const OffloadPayload& payload) override;

  private:
    ServerCore& core_;
    uint64_t client_id_;
};

// Blocking TCP server: one handler thread per connection, length-prefixed
// frames (u32 LE byte count, then the encoded message).
class TcpServer {
  public:
    TcpServer(NetworkSpec net, ThresholdVector tau, PipelineOptions opt);
    ~TcpServer();

    // Binds and starts accepting; port 0 picks an ephemeral port. Returns the
    // bound port.
    int start(const std::string& host, int port);
    void stop();
    int port() const { return port_; }
    ServerCore& core() { return core_; }

  private:
    void accept_loop();
    void handle_connection(int fd);

    ServerCore core_;
    int listen_fd_ = -1;
    int port_ = 0;
    std::atomic<bool> running_{false};
    std::thread accept_thread_;
    std::mutex conn_mu_;
    std::vector<int> conn_fds_;
    std::vector<std::thread> handlers_;
};

// Blocking TCP client; the constructor connects and completes the handshake.
class TcpClient : public OffloadTransport {
  public:
    TcpClient(const std::string& host, int port, uint64_t client_id, uint64_t net_hash);
    ~TcpClient();

    OffloadResponse offload(const OffloadPayload& payload) override;

    // Whether the server already held state for this client at handshake time.
    bool session_known() const { return session_known_; }

  private:
    int fd_ = -1;
    bool session_known_ = false;
};

}  // namespace fluxshard
