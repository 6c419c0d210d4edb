#include "fluxshard/server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <utility>

#include "fluxshard/common.hpp"

namespace fluxshard {

namespace {

constexpr size_t kMaxFrameBytes = size_t(1) << 28;  // 256 MiB sanity bound

void send_all(int fd, const uint8_t* p, size_t n) {
    while (n > 0) {
        const ssize_t k = ::send(fd, p, n, 0);
        if (k < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError(std::string("send failed: ") + std::strerror(errno));
        }
        p += k;
        n -= size_t(k);
    }
}

// Reads exactly n bytes; returns false on clean EOF at a message boundary.
bool recv_all(int fd, uint8_t* p, size_t n, bool eof_ok) {
    size_t got = 0;
    while (got < n) {
        const ssize_t k = ::recv(fd, p + got, n - got, 0);
        if (k < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError(std::string("recv failed: ") + std::strerror(errno));
        }
        if (k == 0) {
            if (got == 0 && eof_ok) return false;
            throw ProtocolError("connection closed mid-message");
        }
        got += size_t(k);
    }
    return true;
}

void send_frame(int fd, const std::vector<uint8_t>& msg) {
    uint8_t hdr[4];
    const uint32_t n = uint32_t(msg.size());
    for (int i = 0; i < 4; ++i) hdr[i] = uint8_t(n >> (8 * i));
    send_all(fd, hdr, 4);
    send_all(fd, msg.data(), msg.size());
}

bool recv_frame(int fd, std::vector<uint8_t>& msg, bool eof_ok) {
    uint8_t hdr[4];
    if (!recv_all(fd, hdr, 4, eof_ok)) return false;
    uint32_t n = 0;
    for (int i = 0; i < 4; ++i) n |= uint32_t(hdr[i]) << (8 * i);
    if (n > kMaxFrameBytes) throw ProtocolError("frame length exceeds sanity bound");
    msg.resize(n);
    if (n > 0 && !recv_all(fd, msg.data(), n, false)) return false;
    return true;
}

bool mask_is_full(const std::vector<uint8_t>& mask_bytes, int h, int w) {
    const RecomputeMask m = unpack_mask(mask_bytes, h, w);
    return mask_count(m) == h * w;
}

OffloadResponse error_response(WireStatus status, uint64_t frame_id) {
    OffloadResponse r;
    r.status = status;
    r.frame_id = frame_id;
    return r;
}

}  // namespace

uint64_t session_hash(const NetworkSpec& net, const ThresholdVector& tau) {
    std::string text = net.canonical_text();
    char buf[64];
    std::snprintf(buf, sizeof(buf), "tau0=%.9g\n", double(tau.tau0));
    text += buf;
    for (size_t l = 0; l < tau.layer.size(); ++l) {
        std::snprintf(buf, sizeof(buf), "tau[%zu]=%.9g\n", l, double(tau.layer[l]));
        text += buf;
    }
    return fnv1a64(text);
}

ServerCore::ServerCore(NetworkSpec net, ThresholdVector tau, PipelineOptions opt)
    : net_(std::move(net)), tau_(std::move(tau)), opt_(opt),
      hash_(session_hash(net_, tau_)) {}

WireStatus ServerCore::hello(uint64_t client_id, uint64_t net_hash, bool& session_known) {
    std::lock_guard<std::mutex> lock(mu_);
    session_known = sessions_.count(client_id) > 0;
    if (net_hash != hash_) {
        FS_LOG(kWarn, "handshake rejected for client %llu: config hash mismatch",
               (unsigned long long)client_id);
        return WireStatus::kHashMismatch;
    }
    return WireStatus::kOk;
}

OffloadResponse ServerCore::process(uint64_t client_id, const OffloadPayload& payload) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = sessions_.find(client_id);

    bool full = false;
    try {
        full = mask_is_full(payload.mask_bytes, payload.h, payload.w);
    } catch (const std::exception&) {
        return error_response(WireStatus::kBadRequest, payload.frame_id);
    }

    if (full) {
        // Complete state arrived: unconditional re-seed resolves any drift or
        // restart on either side.
        if (it == sessions_.end())
            it = sessions_.emplace(client_id, EndpointCache::make(net_)).first;
        else
            it->second = EndpointCache::make(net_);
    } else {
        // A refused sparse frame must not leave a phantom session behind:
        // session_known at the next handshake has to reflect usable state.
        if (it == sessions_.end() || !it->second.seeded) {
            FS_LOG(kWarn, "client %llu: sparse frame %llu onto an unseeded session",
                   (unsigned long long)client_id, (unsigned long long)payload.frame_id);
            return error_response(WireStatus::kDesync, payload.frame_id);
        }
        if (payload.frame_id <= it->second.last_update_frame) {
            FS_LOG(kWarn, "client %llu: frame %llu does not advance past %llu",
                   (unsigned long long)client_id, (unsigned long long)payload.frame_id,
                   (unsigned long long)it->second.last_update_frame);
            return error_response(WireStatus::kDesync, payload.frame_id);
        }
    }
    EndpointCache& cache = it->second;

    try {
        FrameResult r = apply_offload(net_, tau_, opt_, cache, payload);
        OffloadResponse resp;
        resp.status = WireStatus::kOk;
        resp.frame_id = payload.frame_id;
        resp.output = std::move(r.output);
        resp.compute_ratio = r.stats.compute_ratio;
        resp.rfap_count = uint64_t(r.stats.rfap_flagged);
        resp.cache_crc = cache.crc();
        return resp;
    } catch (const DesyncError&) {
        return error_response(WireStatus::kDesync, payload.frame_id);
    } catch (const std::exception& e) {
        FS_LOG(kError, "client %llu frame %llu rejected: %s", (unsigned long long)client_id,
               (unsigned long long)payload.frame_id, e.what());
        return error_response(WireStatus::kBadRequest, payload.frame_id);
    }
}

std::vector<uint8_t> ServerCore::process_bytes(uint64_t client_id,
                                               const std::vector<uint8_t>& frame_bytes) {
    OffloadPayload payload;
    try {
        payload = decode_offload(frame_bytes);
    } catch (const ProtocolError& e) {
        FS_LOG(kWarn, "client %llu: undecodable payload: %s", (unsigned long long)client_id,
               e.what());
        return encode_response(error_response(WireStatus::kBadRequest, 0));
    }
    return encode_response(process(client_id, payload));
}

void ServerCore::drop_session(uint64_t client_id) {
    std::lock_guard<std::mutex> lock(mu_);
    sessions_.erase(client_id);
}

bool ServerCore::has_session(uint64_t client_id) {
    std::lock_guard<std::mutex> lock(mu_);
    return sessions_.count(client_id) > 0;
}

LoopbackTransport::LoopbackTransport(ServerCore& core, uint64_t client_id)
    : core_(core), client_id_(client_id) {
    bool known = false;
    const WireStatus st = core_.hello(client_id, core_.hash(), known);
    if (st != WireStatus::kOk) throw ProtocolError("loopback handshake rejected");
}

OffloadResponse LoopbackTransport::offload(const OffloadPayload& payload) {
    return decode_response(core_.process_bytes(client_id_, encode_offload(payload)));
}

TcpServer::TcpServer(NetworkSpec net, ThresholdVector tau, PipelineOptions opt)
    : core_(std::move(net), std::move(tau), opt) {}

TcpServer::~TcpServer() { stop(); }

int TcpServer::start(const std::string& host, int port) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw ProtocolError(std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(uint16_t(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        throw ProtocolError("bad listen address: " + host);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0)
        throw ProtocolError(std::string("bind: ") + std::strerror(errno));
    if (::listen(listen_fd_, 16) < 0)
        throw ProtocolError(std::string("listen: ") + std::strerror(errno));

    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);

    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
    FS_LOG(kInfo, "listening on %s:%d", host.c_str(), port_);
    return port_;
}

void TcpServer::stop() {
    if (!running_.exchange(false)) {
        if (listen_fd_ >= 0) {
            ::close(listen_fd_);
            listen_fd_ = -1;
        }
        return;
    }
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
    {
        std::lock_guard<std::mutex> lock(conn_mu_);
        for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    std::vector<std::thread> handlers;
    {
        std::lock_guard<std::mutex> lock(conn_mu_);
        handlers.swap(handlers_);
    }
    for (std::thread& t : handlers)
        if (t.joinable()) t.join();
}

void TcpServer::accept_loop() {
    while (running_) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (running_ && errno == EINTR) continue;
            break;
        }
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        std::lock_guard<std::mutex> lock(conn_mu_);
        conn_fds_.push_back(fd);
        handlers_.emplace_back([this, fd] { handle_connection(fd); });
    }
}

void TcpServer::handle_connection(int fd) {
    uint64_t client_id = 0;
    try {
        std::vector<uint8_t> msg;
        if (!recv_frame(fd, msg, true)) {
            ::close(fd);
            return;
        }
        uint64_t net_hash = 0;
        decode_hello(msg, client_id, net_hash);
        bool known = false;
        const WireStatus st = core_.hello(client_id, net_hash, known);
        send_frame(fd, encode_hello_ack(st, known));
        if (st != WireStatus::kOk) {
            ::close(fd);
            return;
        }
        while (recv_frame(fd, msg, true))
            send_frame(fd, core_.process_bytes(client_id, msg));
    } catch (const std::exception& e) {
        FS_LOG(kInfo, "connection for client %llu dropped: %s", (unsigned long long)client_id,
               e.what());
    }
    ::close(fd);
}

TcpClient::TcpClient(const std::string& host, int port, uint64_t client_id, uint64_t net_hash) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw ProtocolError(std::string("socket: ") + std::strerror(errno));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(uint16_t(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd_);
        fd_ = -1;
        throw ProtocolError("bad server address: " + host);
    }
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
        const int err = errno;
        ::close(fd_);
        fd_ = -1;
        throw ProtocolError(std::string("connect: ") + std::strerror(err));
    }
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));

    try {
        send_frame(fd_, encode_hello(client_id, net_hash));
        std::vector<uint8_t> msg;
        if (!recv_frame(fd_, msg, false)) throw ProtocolError("handshake: no ack");
        WireStatus st;
        bool known = false;
        decode_hello_ack(msg, st, known);
        if (st != WireStatus::kOk)
            throw ProtocolError(st == WireStatus::kHashMismatch
                                    ? "handshake rejected: config hash mismatch"
                                    : "handshake rejected");
        session_known_ = known;
    } catch (...) {
        ::close(fd_);
        fd_ = -1;
        throw;
    }
}

TcpClient::~TcpClient() {
    if (fd_ >= 0) ::close(fd_);
}

OffloadResponse TcpClient::offload(const OffloadPayload& payload) {
    if (fd_ < 0) throw ProtocolError("client not connected");
    send_frame(fd_, encode_offload(payload));
    std::vector<uint8_t> msg;
    if (!recv_frame(fd_, msg, false)) throw ProtocolError("server closed the connection");
    return decode_response(msg);
}

}  // namespace fluxshard
