#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "weaklearn/protocol.hpp"

namespace weaklearn {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

struct BindAddress {
  std::string host = "127.0.0.1";
  unsigned short port = 8080;
};

// "host:port", ":port" or "port"
inline BindAddress parse_bind(const std::string& s) {
  BindAddress b;
  const auto colon = s.rfind(':');
  std::string host = colon == std::string::npos ? "" : s.substr(0, colon);
  std::string port = colon == std::string::npos ? s : s.substr(colon + 1);
  if (!host.empty()) b.host = host;
  try {
    std::size_t used = 0;
    const long p = std::stol(port, &used);
    if (used != port.size() || p < 0 || p > 65535) throw std::invalid_argument("range");
    b.port = static_cast<unsigned short>(p);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad bind address: " + s);
  }
  return b;
}

inline BindAddress default_bind() {
  const char* env = std::getenv("WEAKLEARN_BIND");
  return env && *env ? parse_bind(env) : BindAddress{};
}

using SessionFactory = std::function<ProtocolSession(std::uint64_t connection)>;

// Blocking accept loop on its own thread; one handler thread per connection.
class SessionServer {
 public:
  SessionServer(SessionFactory factory, const BindAddress& bind) : factory_(std::move(factory)), acceptor_(ioc_) {
    tcp::endpoint ep(net::ip::make_address(bind.host), bind.port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
  }

  ~SessionServer() { stop(); }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void start() {
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  void run() { accept_loop(); }

  void stop() {
    if (stopped_.exchange(true)) return;
    beast::error_code ec;
    if (accept_thread_.joinable()) {
      // wake the blocking accept
      net::io_context tmp;
      tcp::socket poke(tmp);
      auto addr = acceptor_.local_endpoint(ec).address();
      if (addr.is_unspecified()) addr = net::ip::make_address(addr.is_v6() ? "::1" : "127.0.0.1");
      poke.connect(tcp::endpoint(addr, port()), ec);
      accept_thread_.join();
    }
    acceptor_.close(ec);
    {
      std::lock_guard<std::mutex> lock(mu_);
      for (auto& s : sockets_) s->shutdown(tcp::socket::shutdown_both, ec);
    }
    for (auto& t : workers_)
      if (t.joinable()) t.join();
  }

 private:
  void accept_loop() {
    std::uint64_t count = 0;
    while (!stopped_) {
      auto sock = std::make_shared<tcp::socket>(ioc_);
      beast::error_code ec;
      acceptor_.accept(*sock, ec);
      if (stopped_) break;
      if (ec) continue;
      std::lock_guard<std::mutex> lock(mu_);
      sockets_.push_back(sock);
      workers_.emplace_back([this, sock, id = count++] { serve(*sock, id); });
    }
  }

  void serve(tcp::socket& sock, std::uint64_t id) {
    beast::error_code ec;
    beast::flat_buffer buf;
    http::request<http::string_body> req;
    http::read(sock, buf, req, ec);
    if (ec) return;
    if (websocket::is_upgrade(req)) {
      if (req.target() != "/session") {
        respond(sock, req, http::status::not_found, "not found\n");
        return;
      }
      websocket_session(sock, req, id);
      return;
    }
    if (req.method() == http::verb::get && req.target() == "/healthz") respond(sock, req, http::status::ok, "ok");
    else respond(sock, req, http::status::not_found, "not found\n");
  }

  static void respond(tcp::socket& sock, const http::request<http::string_body>& req, http::status st,
                      const std::string& body) {
    http::response<http::string_body> res{st, req.version()};
    res.set(http::field::content_type, "text/plain");
    res.keep_alive(false);
    res.body() = body;
    res.prepare_payload();
    beast::error_code ec;
    http::write(sock, res, ec);
    sock.shutdown(tcp::socket::shutdown_send, ec);
  }

  void websocket_session(tcp::socket& sock, const http::request<http::string_body>& req, std::uint64_t id) {
    websocket::stream<tcp::socket&> ws(sock);
    beast::error_code ec;
    ws.accept(req, ec);
    if (ec) return;
    ws.text(true);
    std::unique_ptr<ProtocolSession> session;
    try {
      session = std::make_unique<ProtocolSession>(factory_(id));
    } catch (const std::exception& e) {
      ws.write(net::buffer(error_message("session-failed", e.what()).dump()), ec);
      ws.close(websocket::close_code::internal_error, ec);
      return;
    }
    auto send = [&](const std::vector<Json>& msgs) {
      for (const auto& m : msgs) {
        ws.write(net::buffer(m.dump()), ec);
        if (ec) return false;
      }
      return true;
    };
    if (!send(session->open())) return;
    while (!session->closed()) {
      beast::flat_buffer in;
      ws.read(in, ec);
      if (ec) return;  // client went away; the log so far stays with the session
      if (!send(session->handle(beast::buffers_to_string(in.data())))) return;
    }
    ws.close(websocket::close_code::normal, ec);
  }

  SessionFactory factory_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  std::atomic<bool> stopped_{false};
  std::thread accept_thread_;
  std::mutex mu_;
  std::vector<std::shared_ptr<tcp::socket>> sockets_;
  std::vector<std::thread> workers_;
};

// ---- small synchronous clients ----

inline std::pair<int, std::string> http_get(const std::string& host, unsigned short port, const std::string& target) {
  net::io_context ioc;
  tcp::resolver resolver(ioc);
  tcp::socket sock(ioc);
  net::connect(sock, resolver.resolve(host, std::to_string(port)));
  http::request<http::empty_body> req{http::verb::get, target, 11};
  req.set(http::field::host, host);
  http::write(sock, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(sock, buf, res);
  beast::error_code ec;
  sock.shutdown(tcp::socket::shutdown_both, ec);
  return {static_cast<int>(res.result_int()), res.body()};
}

class SessionClient {
 public:
  SessionClient(const std::string& host, unsigned short port, const std::string& target = "/session")
      : resolver_(ioc_), ws_(ioc_) {
    net::connect(ws_.next_layer(), resolver_.resolve(host, std::to_string(port)));
    ws_.handshake(host + ":" + std::to_string(port), target);
    ws_.text(true);
  }

  Json receive() {
    beast::flat_buffer buf;
    ws_.read(buf);
    return Json::parse(beast::buffers_to_string(buf.data()));
  }

  void send(const Json& j) { ws_.write(net::buffer(j.dump())); }
  void send_raw(const std::string& s) { ws_.write(net::buffer(s)); }

  void close() {
    beast::error_code ec;
    ws_.close(websocket::close_code::normal, ec);
  }

 private:
  net::io_context ioc_;
  tcp::resolver resolver_;
  websocket::stream<tcp::socket> ws_;
};

}  // namespace weaklearn
