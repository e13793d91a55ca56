#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <deque>
#include <thread>

#include "psda/bridge.hpp"
#include "psda/error.hpp"

namespace psda::bridge {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

http::status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kConfig: return http::status::bad_request;
    case ErrorCode::kNotFound: return http::status::not_found;
    case ErrorCode::kState: return http::status::conflict;
    default: return http::status::internal_server_error;
  }
}

std::vector<std::string> split_path(std::string_view target) {
  target = target.substr(0, target.find('?'));
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos < target.size()) {
    const std::size_t next = target.find('/', pos);
    const std::size_t end = next == std::string_view::npos ? target.size() : next;
    if (end > pos) parts.emplace_back(target.substr(pos, end - pos));
    pos = end + 1;
  }
  return parts;
}

Response reply(const Request& req, http::status status, const std::string& body) {
  Response res{status, req.version()};
  res.set(http::field::content_type, "application/json");
  res.set(http::field::access_control_allow_origin, "*");
  res.set(http::field::access_control_allow_headers, "Content-Type");
  res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
  res.keep_alive(req.keep_alive());
  res.body() = body;
  res.prepare_payload();
  return res;
}

io::Json body_json(const Request& req) {
  if (req.body().empty()) return io::Json::object();
  return io::parse(req.body());
}

Response route(SessionManager& manager, const Request& req) {
  const auto parts = split_path(std::string_view(req.target().data(), req.target().size()));
  const auto method = req.method();
  try {
    if (method == http::verb::options) return reply(req, http::status::no_content, "");
    if (parts.size() == 1 && parts[0] == "dictionary" && method == http::verb::get) {
      return reply(req, http::status::ok, SessionManager::dictionary().dump());
    }
    if (parts.size() == 1 && parts[0] == "sessions" && method == http::verb::post) {
      return reply(req, http::status::created, manager.create(body_json(req)).dump());
    }
    if (parts.size() == 3 && parts[0] == "sessions") {
      auto session = manager.find(parts[1]);
      const std::string& what = parts[2];
      if (what == "state" && method == http::verb::get) return reply(req, http::status::ok, session->state().dump());
      if (what == "log" && method == http::verb::get) return reply(req, http::status::ok, session->command_log().dump());
      if (what == "observations" && method == http::verb::post) return reply(req, http::status::ok, session->observe(body_json(req)).dump());
      if (what == "step" && method == http::verb::post) {
        const io::Json body = body_json(req);
        int n = 1;
        if (body.contains("n")) {
          if (!body["n"].is_number_integer()) fail(ErrorCode::kInvalidArgument, "n must be an integer");
          n = body["n"].get<int>();
        }
        return reply(req, http::status::ok, session->step(n).dump());
      }
    }
    return reply(req, http::status::not_found, io::Json{{"error", "no route for " + std::string(req.target())}, {"code", 3}}.dump());
  } catch (const Error& e) {
    return reply(req, status_of(e.code()), io::Json{{"error", e.what()}, {"code", static_cast<int>(e.code())}}.dump());
  } catch (const std::exception& e) {
    return reply(req, http::status::internal_server_error, io::Json{{"error", e.what()}, {"code", 7}}.dump());
  }
}

/// Streams one session's event frames to a WebSocket client.
class EventStream : public std::enable_shared_from_this<EventStream> {
 public:
  EventStream(tcp::socket&& socket, std::shared_ptr<Session> session) : ws_(std::move(socket)), session_(std::move(session)) {}

  void run(Request req) {
    // Subscribe before the handshake so no frame produced after it can be missed;
    // frames queue up until the upgrade completes.
    std::weak_ptr<EventStream> weak = shared_from_this();
    auto executor = ws_.get_executor();
    token_ = session_->subscribe([weak, executor](const std::string& frame) {
      net::post(executor, [weak, text = std::make_shared<const std::string>(frame)] {
        if (auto self = weak.lock()) self->send(text);
      });
    });
    subscribed_ = true;
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&EventStream::on_accept, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) {
      close();
      return;
    }
    accepted_ = true;
    if (!queue_.empty()) write();
    read();
  }

  void read() { ws_.async_read(inbound_, beast::bind_front_handler(&EventStream::on_read, shared_from_this())); }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      close();
      return;
    }
    inbound_.consume(inbound_.size());  // clients have nothing to say on this channel
    read();
  }

  void send(std::shared_ptr<const std::string> text) {
    if (closed_) return;
    queue_.push_back(std::move(text));
    if (accepted_ && queue_.size() == 1) write();
  }

  void write() {
    ws_.text(true);
    ws_.async_write(net::buffer(*queue_.front()), beast::bind_front_handler(&EventStream::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      close();
      return;
    }
    queue_.pop_front();
    if (!queue_.empty()) write();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    queue_.clear();
    if (subscribed_) session_->unsubscribe(token_);
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<Session> session_;
  beast::flat_buffer inbound_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  int token_ = 0;
  bool subscribed_ = false;
  bool accepted_ = false;
  bool closed_ = false;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket&& socket, SessionManager& manager) : stream_(std::move(socket)), manager_(manager) {}

  void run() {
    net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpConnection::read, shared_from_this()));
  }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) {
      beast::error_code ignored;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    if (ec) return;
    if (websocket::is_upgrade(req_)) {
      upgrade();
      return;
    }
    auto res = std::make_shared<Response>(route(manager_, req_));
    const bool keep = res->keep_alive();
    http::async_write(stream_, *res, [self = shared_from_this(), res, keep](beast::error_code wec, std::size_t) {
      if (wec) return;
      if (!keep) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        return;
      }
      self->read();
    });
  }

  void upgrade() {
    const auto parts = split_path(std::string_view(req_.target().data(), req_.target().size()));
    std::shared_ptr<Session> session;
    if (parts.size() == 3 && parts[0] == "sessions" && parts[2] == "events") {
      try {
        session = manager_.find(parts[1]);
      } catch (const Error&) {
      }
    }
    if (!session) {
      auto res = std::make_shared<Response>(reply(req_, http::status::not_found, io::Json{{"error", "no event stream here"}, {"code", 3}}.dump()));
      res->keep_alive(false);
      http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      });
      return;
    }
    stream_.expires_never();
    std::make_shared<EventStream>(stream_.release_socket(), std::move(session))->run(std::move(req_));
  }

  beast::tcp_stream stream_;
  SessionManager& manager_;
  beast::flat_buffer buffer_;
  Request req_;
};

}  // namespace

struct Server::Impl {
  explicit Impl(int threads) : threads_wanted(std::max(1, threads)), ioc(threads_wanted) {}

  void accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (!ec) std::make_shared<HttpConnection>(std::move(socket), manager)->run();
      if (acceptor.is_open()) accept();
    });
  }

  void join_all() {
    std::lock_guard lock(join_mutex);
    for (auto& t : threads) {
      if (t.joinable()) t.join();
    }
  }

  int threads_wanted;
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  SessionManager manager;
  std::vector<std::thread> threads;
  std::mutex join_mutex;
};

Server::Server(const std::string& address, std::uint16_t port, int threads) : impl_(std::make_unique<Impl>(threads)) {
  beast::error_code ec;
  const auto addr = net::ip::make_address(address, ec);
  if (ec) fail(ErrorCode::kConfig, "invalid bind address '" + address + "'");
  const tcp::endpoint endpoint{addr, port};
  impl_->acceptor.open(endpoint.protocol(), ec);
  if (!ec) impl_->acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) impl_->acceptor.bind(endpoint, ec);
  if (!ec) impl_->acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) fail(ErrorCode::kIo, "cannot listen on " + address + ":" + std::to_string(port) + ": " + ec.message());
}

Server::~Server() { stop(); }

std::uint16_t Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::start() {
  impl_->accept();
  for (int i = 0; i < impl_->threads_wanted; ++i) impl_->threads.emplace_back([this] { impl_->ioc.run(); });
}

void Server::stop() {
  impl_->ioc.stop();
  impl_->join_all();
}

void Server::wait() { impl_->join_all(); }

SessionManager& Server::sessions() { return impl_->manager; }

}  // namespace psda::bridge
