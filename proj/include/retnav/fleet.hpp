#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "retnav/embed_store.hpp"
#include "retnav/remb.hpp"

namespace retnav {

/// Newline-delimited JSON over TCP, one request object per line:
///   {"op": "ingest", "request_id": ..., "records": [...]}
///   {"op": "query",  "request_id": ..., "scene": ..., "vector": [...], "k": n}
///   {"op": "stats",  "request_id": ...}
/// Responses echo request_id and carry ok plus op-specific fields. Ingest is
/// atomic per batch and acked only after the append log is durable.
class FleetServer {
public:
    /// The server owns neither store nor appender. Pass a null appender to
    /// run without a durability log (tests mostly do).
    FleetServer(EmbedStore& store, RembAppender* appender = nullptr);
    ~FleetServer();

    /// Binds and starts serving; port 0 picks an ephemeral port.
    void start(const std::string& host = "127.0.0.1", std::uint16_t port = 0);
    void stop();

    std::uint16_t port() const { return port_; }

    /// Handles one request line; exposed for direct testing of the protocol
    /// logic without sockets.
    std::string handle_line(const std::string& line);

private:
    void accept_loop();
    void serve_connection(int fd);

    EmbedStore& store_;
    RembAppender* appender_;
    std::mutex write_mutex_;  // one logical writer over the append log

    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> running_{false};
    std::thread accept_thread_;
    std::mutex clients_mutex_;
    std::vector<int> client_fds_;
    std::vector<std::thread> client_threads_;
};

/// Minimal blocking client for tests and tooling.
class FleetClient {
public:
    FleetClient(const std::string& host, std::uint16_t port);
    ~FleetClient();

    /// Sends one request line and returns the response line.
    std::string request(const std::string& line);

private:
    int fd_ = -1;
    std::string buffer_;
};

}  // namespace retnav
