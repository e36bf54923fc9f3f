#pragma once

// HTTP and WebSocket transport for the gateway on one port. Plain HTTP
// requests go to the ApiRouter; an upgrade on /ws subscribes to the hub.

#include <atomic>
#include <cstdint>
#include <list>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <utility>

#include "netagent/gateway.hpp"

namespace netagent::server {

/// "host:port", "host" or ":port"; defaults 127.0.0.1 and 8080.
std::pair<std::string, std::uint16_t> parse_bind(std::string_view spec);

class GatewayServer {
 public:
  GatewayServer(gateway::ApiRouter& router, gateway::MessageHub& hub, std::string host, std::uint16_t port);
  ~GatewayServer();
  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;

  /// Binds and starts accepting. Port 0 picks a free port.
  void start();
  void stop();
  std::uint16_t port() const { return port_; }
  const std::string& host() const { return host_; }

 private:
  struct Impl;
  void accept_loop();
  void serve(int fd);

  gateway::ApiRouter& router_;
  gateway::MessageHub& hub_;
  std::string host_;
  std::uint16_t port_;
  std::unique_ptr<Impl> impl_;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex conn_mu_;
  std::set<int> open_fds_;
  std::list<std::thread> workers_;
};

}  // namespace netagent::server
