#include "retnav/fleet.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <stdexcept>

#include <json.hpp>

namespace retnav {

namespace {

using nlohmann::json;

json error_response(const json& request, const std::string& message) {
    json out;
    if (request.is_object() && request.contains("request_id")) {
        out["request_id"] = request["request_id"];
    }
    out["ok"] = false;
    out["error"] = message;
    return out;
}

EmbeddingRecord parse_record(const json& j) {
    EmbeddingRecord rec;
    rec.frame_id = j.at("frame_id").get<std::uint64_t>();
    rec.scene_id = j.at("scene").get<std::string>();
    rec.vector = j.at("vector").get<std::vector<float>>();
    if (j.contains("pose")) {
        rec.pose = Pose2{j["pose"].at(0).get<double>(), j["pose"].at(1).get<double>()};
    }
    if (j.contains("category_scores")) {
        rec.category_scores = j["category_scores"].get<std::map<std::string, double>>();
    }
    return rec;
}

bool send_all(int fd, const std::string& data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
        const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, 0);
        if (n <= 0) return false;
        sent += static_cast<std::size_t>(n);
    }
    return true;
}

}  // namespace

FleetServer::FleetServer(EmbedStore& store, RembAppender* appender)
    : store_(store), appender_(appender) {}

FleetServer::~FleetServer() { stop(); }

void FleetServer::start(const std::string& host, std::uint16_t port) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw std::runtime_error("fleet: socket() failed");
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        throw std::runtime_error("fleet: bad listen address " + host);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        throw std::runtime_error("fleet: bind failed on " + host);
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    if (::listen(listen_fd_, 64) != 0) {
        throw std::runtime_error("fleet: listen failed");
    }
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
}

void FleetServer::stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (accept_thread_.joinable()) accept_thread_.join();
    {
        std::lock_guard lock(clients_mutex_);
        for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    for (auto& t : client_threads_) {
        if (t.joinable()) t.join();
    }
    {
        std::lock_guard lock(clients_mutex_);
        for (int fd : client_fds_) ::close(fd);
        client_fds_.clear();
    }
    client_threads_.clear();
}

void FleetServer::accept_loop() {
    while (running_) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (running_) continue;
            break;
        }
        std::lock_guard lock(clients_mutex_);
        client_fds_.push_back(fd);
        client_threads_.emplace_back([this, fd] { serve_connection(fd); });
    }
}

void FleetServer::serve_connection(int fd) {
    std::string buffer;
    char chunk[4096];
    while (running_) {
        const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
        if (n <= 0) break;
        buffer.append(chunk, static_cast<std::size_t>(n));
        std::size_t pos;
        while ((pos = buffer.find('\n')) != std::string::npos) {
            const std::string line = buffer.substr(0, pos);
            buffer.erase(0, pos + 1);
            if (line.empty()) continue;
            if (!send_all(fd, handle_line(line) + "\n")) return;
        }
    }
}

std::string FleetServer::handle_line(const std::string& line) {
    json request = json::parse(line, nullptr, false);
    if (request.is_discarded() || !request.is_object()) {
        return error_response(json{}, "malformed request line").dump();
    }
    try {
        const std::string op = request.at("op").get<std::string>();
        json response;
        if (request.contains("request_id")) {
            response["request_id"] = request["request_id"];
        }
        if (op == "ingest") {
            std::vector<EmbeddingRecord> records;
            for (const auto& j : request.at("records")) {
                records.push_back(parse_record(j));
            }
            // Validate the whole batch before anything becomes visible.
            std::lock_guard lock(write_mutex_);
            for (std::size_t i = 0; i < records.size(); ++i) {
                if (records[i].vector.size() != store_.dimension()) {
                    return error_response(request, "dimension mismatch in batch").dump();
                }
                double sq = 0.0;
                for (float x : records[i].vector) sq += static_cast<double>(x) * x;
                if (sq <= 0.0) {
                    return error_response(request, "zero vector in batch").dump();
                }
                if (store_.find_frame(records[i].frame_id)) {
                    return error_response(request, "duplicate frame_id").dump();
                }
                for (std::size_t j = i + 1; j < records.size(); ++j) {
                    if (records[i].frame_id == records[j].frame_id) {
                        return error_response(request, "duplicate frame_id").dump();
                    }
                }
            }
            if (appender_) {
                appender_->append(records);  // durability before ack
            }
            for (auto& rec : records) {
                store_.add_record(std::move(rec));
            }
            response["ok"] = true;
            response["accepted_count"] = request.at("records").size();
            return response.dump();
        }
        if (op == "query") {
            const auto vector = request.at("vector").get<std::vector<float>>();
            const auto k = request.value("k", std::size_t{1});
            auto hits = store_.topk(request.at("scene").get<std::string>(), vector, k);
            auto& results = response["results"] = json::array();
            for (const auto& h : hits) {
                results.push_back({store_.record(h.index).frame_id, h.score});
            }
            response["ok"] = true;
            return response.dump();
        }
        if (op == "stats") {
            json scenes = json::object();
            std::size_t total = 0;
            for (const auto& id : store_.scene_ids()) {
                const std::size_t n = store_.scene_size(id);
                scenes[id] = n;
                total += n;
            }
            response["ok"] = true;
            response["scenes"] = std::move(scenes);
            response["total"] = total;
            return response.dump();
        }
        return error_response(request, "unknown op: " + op).dump();
    } catch (const std::exception& e) {
        return error_response(request, e.what()).dump();
    }
}

FleetClient::FleetClient(const std::string& host, std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw std::runtime_error("fleet client: socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1 ||
        ::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd_);
        throw std::runtime_error("fleet client: cannot connect to " + host);
    }
}

FleetClient::~FleetClient() {
    if (fd_ >= 0) ::close(fd_);
}

std::string FleetClient::request(const std::string& line) {
    if (!send_all(fd_, line + "\n")) {
        throw std::runtime_error("fleet client: send failed");
    }
    char chunk[4096];
    std::size_t pos;
    while ((pos = buffer_.find('\n')) == std::string::npos) {
        const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
        if (n <= 0) throw std::runtime_error("fleet client: connection closed");
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
    const std::string response = buffer_.substr(0, pos);
    buffer_.erase(0, pos + 1);
    return response;
}

}  // namespace retnav
