#include "netagent/server.hpp"

#include <poll.h>
#include <sys/socket.h>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace netagent::server {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

std::pair<std::string, std::uint16_t> parse_bind(std::string_view spec) {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8080;
  const auto colon = spec.rfind(':');
  const auto host_part = colon == std::string_view::npos ? spec : spec.substr(0, colon);
  if (!host_part.empty()) host = std::string(host_part);
  if (colon != std::string_view::npos) {
    const auto p = spec.substr(colon + 1);
    if (p.empty() || p.size() > 5 || p.find_first_not_of("0123456789") != std::string_view::npos) {
      throw std::invalid_argument("bad port in bind address: " + std::string(spec));
    }
    const auto v = std::stoul(std::string(p));
    if (v > 65535) throw std::invalid_argument("bad port in bind address: " + std::string(spec));
    port = static_cast<std::uint16_t>(v);
  }
  return {host, port};
}

struct GatewayServer::Impl {
  asio::io_context ioc;
  tcp::acceptor acceptor{ioc};
};

GatewayServer::GatewayServer(gateway::ApiRouter& router, gateway::MessageHub& hub, std::string host,
                             std::uint16_t port)
    : router_(router), hub_(hub), host_(std::move(host)), port_(port), impl_(std::make_unique<Impl>()) {}

GatewayServer::~GatewayServer() { stop(); }

void GatewayServer::start() {
  const tcp::endpoint ep(asio::ip::make_address(host_), port_);
  impl_->acceptor.open(ep.protocol());
  impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
  impl_->acceptor.bind(ep);
  impl_->acceptor.listen();
  port_ = impl_->acceptor.local_endpoint().port();
  acceptor_ = std::thread([this] { accept_loop(); });
}

void GatewayServer::stop() {
  if (stopping_.exchange(true) || !acceptor_.joinable()) return;
  // Wake the blocking accept with a throwaway connection.
  try {
    asio::io_context ioc;
    tcp::socket s(ioc);
    s.connect({asio::ip::make_address(host_ == "0.0.0.0" ? "127.0.0.1" : host_), port_});
  } catch (const std::exception&) {
  }
  acceptor_.join();
  {
    std::lock_guard lock(conn_mu_);
    for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  for (auto& w : workers_) w.join();
  workers_.clear();
  beast::error_code ec;
  impl_->acceptor.close(ec);
}

void GatewayServer::accept_loop() {
  while (!stopping_) {
    beast::error_code ec;
    tcp::socket sock(impl_->ioc);
    impl_->acceptor.accept(sock, ec);
    if (ec) continue;
    if (stopping_) break;
    const int fd = sock.release(ec);
    if (ec) continue;
    std::lock_guard lock(conn_mu_);
    open_fds_.insert(fd);
    workers_.emplace_back([this, fd] { serve(fd); });
  }
}

namespace {

std::string bearer_of(const http::request<http::string_body>& req) {
  const std::string_view auth(req[http::field::authorization].data(), req[http::field::authorization].size());
  constexpr std::string_view prefix = "Bearer ";
  if (auth.size() > prefix.size() && auth.substr(0, prefix.size()) == prefix) {
    return std::string(auth.substr(prefix.size()));
  }
  return {};
}

std::string query_token(std::string_view target) {
  const auto q = target.find('?');
  if (q == std::string_view::npos) return {};
  auto query = target.substr(q + 1);
  while (!query.empty()) {
    const auto amp = query.find('&');
    const auto part = query.substr(0, amp);
    if (part.substr(0, 6) == "token=") return std::string(part.substr(6));
    if (amp == std::string_view::npos) break;
    query = query.substr(amp + 1);
  }
  return {};
}

}  // namespace

void GatewayServer::serve(int fd) {
  tcp::socket sock(impl_->ioc);
  beast::error_code ec;
  sock.assign(tcp::v4(), fd, ec);
  try {
    beast::flat_buffer buffer;
    for (;;) {
      http::request<http::string_body> req;
      http::read(sock, buffer, req);

      const std::string target(req.target());
      const auto path = target.substr(0, target.find('?'));
      if (websocket::is_upgrade(req)) {
        auto token = bearer_of(req);
        if (token.empty()) token = query_token(target);
        auto sub = path == "/ws" ? hub_.subscribe(token) : nullptr;
        if (!sub) {
          http::response<http::string_body> res{path == "/ws" ? http::status::unauthorized : http::status::not_found,
                                                req.version()};
          res.set(http::field::content_type, "application/json");
          res.body() = path == "/ws" ? R"({"error":"missing or invalid bearer token","status":401})"
                                     : R"({"error":"no websocket endpoint here","status":404})";
          res.prepare_payload();
          http::write(sock, res);
          break;
        }
        websocket::stream<tcp::socket&> ws(sock);
        ws.accept(req);
        ws.text(true);
        bool peer_closed = false;
        while (!stopping_) {
          auto msg = sub->pop(std::chrono::milliseconds(50));
          if (msg) {
            ws.write(asio::buffer(gateway::to_json(*msg).dump()));
          } else if (sub->closed()) {
            break;
          }
          // The stream is push-only; reading just services close and ping
          // frames and notices a peer that went away.
          pollfd pfd{fd, POLLIN, 0};
          if (::poll(&pfd, 1, 0) > 0) {
            beast::flat_buffer in;
            ws.read(in, ec);
            if (ec) {
              peer_closed = true;
              break;
            }
          }
        }
        hub_.unsubscribe(sub);
        if (!peer_closed) ws.close(websocket::close_code::going_away, ec);
        break;
      }

      const auto out = router_.handle({std::string(req.method_string()), target, bearer_of(req), req.body()});
      http::response<http::string_body> res{static_cast<http::status>(out.status), req.version()};
      res.set(http::field::content_type, out.content_type);
      res.keep_alive(req.keep_alive());
      res.body() = out.body;
      res.prepare_payload();
      http::write(sock, res);
      if (!req.keep_alive() || stopping_) break;
    }
  } catch (const std::exception&) {
    // Peer went away or sent garbage; the connection just ends.
  }
  sock.shutdown(tcp::socket::shutdown_both, ec);
  std::lock_guard lock(conn_mu_);
  open_fds_.erase(fd);
  sock.close(ec);
}

}  // namespace netagent::server
