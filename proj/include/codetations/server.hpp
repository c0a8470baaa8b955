#pragma once

// Local transports for HostService:
//  - TcpServer: newline-delimited JSON on 127.0.0.1. A connection that sends
//    {"op":"subscribe"} additionally receives every event as its own line.
//  - HttpShim: POST /rpc with one request object, answered with one response
//    object; GET /health.
//  - ChangeWatcher: polls held documents for out-of-band changes.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "httplib.h"

#include "codetations/host_service.hpp"

namespace codetations {

class TcpServer {
 public:
  explicit TcpServer(HostService& service) : service_(service) {}
  ~TcpServer() { stop(); }

  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  /// Binds 127.0.0.1:`port` (0 picks a free port) and starts accepting.
  /// Returns the bound port.
  int start(int port) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (listen_fd_ < 0) throw Error("socket() failed");
    int yes = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
        ::listen(listen_fd_, 16) != 0) {
      ::close(listen_fd_);
      listen_fd_ = -1;
      throw Error("cannot listen on 127.0.0.1:" + std::to_string(port));
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
    return port_;
  }

  void stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (accept_thread_.joinable()) accept_thread_.join();
    std::list<std::shared_ptr<Connection>> conns;
    {
      std::lock_guard lock(conns_mu_);
      conns.swap(connections_);
    }
    for (auto& c : conns) ::shutdown(c->fd, SHUT_RDWR);
    for (auto& c : conns) {
      if (c->thread.joinable()) c->thread.join();
      ::close(c->fd);
    }
  }

  [[nodiscard]] int port() const { return port_; }

 private:
  struct Connection {
    int fd = -1;
    std::mutex write_mu;
    std::thread thread;
  };

  static void write_line(Connection& c, const json& msg) {
    std::string line = msg.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
    std::lock_guard lock(c.write_mu);
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
      const ssize_t n = ::send(c.fd, p, left, MSG_NOSIGNAL);
      if (n <= 0) return;
      p += n;
      left -= static_cast<std::size_t>(n);
    }
  }

  void accept_loop() {
    while (running_) {
      const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
      if (fd < 0) {
        if (!running_) return;
        continue;
      }
      auto conn = std::make_shared<Connection>();
      conn->fd = fd;
      std::lock_guard lock(conns_mu_);
      connections_.push_back(conn);
      conn->thread = std::thread([this, conn] { serve(conn); });
    }
  }

  void serve(const std::shared_ptr<Connection>& conn) {
    std::optional<HostService::SubscriberId> sub;
    std::string buffer;
    char chunk[4096];
    while (true) {
      const ssize_t n = ::recv(conn->fd, chunk, sizeof chunk, 0);
      if (n <= 0) break;
      buffer.append(chunk, static_cast<std::size_t>(n));
      std::size_t nl;
      while ((nl = buffer.find('\n')) != std::string::npos) {
        std::string line = buffer.substr(0, nl);
        buffer.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        json request = json::parse(line, nullptr, false);
        if (request.is_discarded()) {
          write_line(*conn, {{"requestId", nullptr},
                             {"ok", false},
                             {"error", {{"code", "bad_request"}, {"message", "invalid JSON"}}}});
          continue;
        }
        if (request.is_object() && request.value("op", "") == "subscribe") {
          if (!sub) {
            std::weak_ptr<Connection> weak = conn;
            sub = service_.subscribe([weak](const json& event) {
              if (auto c = weak.lock()) write_line(*c, event);
            });
          }
          write_line(*conn, {{"requestId", request.value("requestId", json(nullptr))},
                             {"ok", true},
                             {"result", json::object()}});
          continue;
        }
        write_line(*conn, service_.handle(request));
      }
    }
    if (sub) service_.unsubscribe(*sub);
    // Reap this connection unless stop() already took ownership of it.
    std::lock_guard lock(conns_mu_);
    auto it = std::find(connections_.begin(), connections_.end(), conn);
    if (it != connections_.end()) {
      connections_.erase(it);
      conn->thread.detach();
      ::close(conn->fd);
    }
  }

  HostService& service_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::mutex conns_mu_;
  std::list<std::shared_ptr<Connection>> connections_;
};

class HttpShim {
 public:
  explicit HttpShim(HostService& service) : service_(service) {
    server_.Post("/rpc", [this](const httplib::Request& req, httplib::Response& res) {
      json request = json::parse(req.body, nullptr, false);
      json response = request.is_discarded()
                          ? json{{"requestId", nullptr},
                                 {"ok", false},
                                 {"error", {{"code", "bad_request"}, {"message", "invalid JSON"}}}}
                          : service_.handle(request);
      res.set_content(response.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
    });
    server_.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"ok":true})", "application/json");
    });
  }
  ~HttpShim() { stop(); }

  /// Binds 127.0.0.1:`port` (0 picks a free port); returns the bound port.
  int start(int port) {
    port_ = port == 0 ? server_.bind_to_any_port("127.0.0.1") : (server_.bind_to_port("127.0.0.1", port) ? port : -1);
    if (port_ < 0) throw Error("cannot bind HTTP shim to 127.0.0.1:" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  [[nodiscard]] int port() const { return port_; }

 private:
  HostService& service_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

class ChangeWatcher {
 public:
  ChangeWatcher(HostService& service, std::chrono::milliseconds interval)
      : service_(service), interval_(interval) {
    thread_ = std::thread([this] { run(); });
  }
  ~ChangeWatcher() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
  }

  ChangeWatcher(const ChangeWatcher&) = delete;
  ChangeWatcher& operator=(const ChangeWatcher&) = delete;

 private:
  void run() {
    std::unique_lock lock(mu_);
    while (!cv_.wait_for(lock, interval_, [this] { return stopping_; })) {
      lock.unlock();
      service_.poll_external_changes();
      lock.lock();
    }
  }

  HostService& service_;
  std::chrono::milliseconds interval_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stopping_ = false;
  std::thread thread_;
};

}  // namespace codetations
