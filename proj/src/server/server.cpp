#include "koopshare/server.hpp"

#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/asio/thread_pool.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "koopshare/error.hpp"
#include "koopshare/session.hpp"

namespace koopshare::server {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

struct Shared {
  ServerConfig config;
  std::shared_ptr<ModelRegistry> registry;
  net::thread_pool offload_pool{1};

  std::mutex live_mutex;
  std::set<std::string> live;

  std::vector<std::string> live_sessions() {
    std::lock_guard lock(live_mutex);
    return {live.begin(), live.end()};
  }
};

std::string_view mime_type(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".html") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  if (ext == ".map") return "application/json";
  return "application/octet-stream";
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

io::json models_listing(const ModelRegistry& registry) {
  io::json out = io::json::array();
  for (const auto& m : registry.models()) {
    io::json e = {{"id", m->id}, {"stabilizable", m->lqr.has_value()}, {"sources", m->sources},
                  {"n_samples", m->model.n_samples}};
    if (!m->error.empty()) e["error"] = m->error;
    out.push_back(std::move(e));
  }
  return out;
}

http::response<http::string_body> handle_http(const http::request<http::string_body>& req, Shared& shared) {
  auto reply = [&](http::status status, std::string body, std::string_view type) {
    http::response<http::string_body> res{status, req.version()};
    res.set(http::field::server, "koopshare");
    res.set(http::field::content_type, beast::string_view(type.data(), type.size()));
    res.keep_alive(req.keep_alive());
    res.body() = req.method() == http::verb::head ? std::string() : std::move(body);
    res.prepare_payload();
    return res;
  };
  auto json_reply = [&](const io::json& j) { return reply(http::status::ok, j.dump(), "application/json"); };
  auto not_found = [&] { return reply(http::status::not_found, "not found\n", "text/plain"); };

  if (req.method() != http::verb::get && req.method() != http::verb::head)
    return reply(http::status::method_not_allowed, "method not allowed\n", "text/plain");

  std::string target(req.target());
  if (auto q = target.find('?'); q != std::string::npos) target.resize(q);

  if (target == "/api/models") return json_reply(models_listing(*shared.registry));
  if (target == "/api/sessions") {
    io::json recorded = io::json::array();
    for (const auto& s : shared.registry->recorded_sessions())
      recorded.push_back({{"session_id", s.session_id}, {"trials", s.trials}});
    return json_reply({{"recorded", recorded}, {"live", shared.live_sessions()}});
  }
  if (target.rfind("/api/", 0) == 0) return not_found();

  if (target.empty() || target.front() != '/' || target.find("..") != std::string::npos ||
      target.find('\\') != std::string::npos)
    return reply(http::status::bad_request, "bad path\n", "text/plain");
  if (target.back() == '/') target += "index.html";
  const std::filesystem::path file = shared.config.web_root / target.substr(1);
  std::error_code ec;
  if (!std::filesystem::is_regular_file(file, ec)) return not_found();
  std::ifstream in(file, std::ios::binary);
  std::ostringstream body;
  body << in.rdbuf();
  return reply(http::status::ok, body.str(), mime_type(file));
}

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, std::shared_ptr<Shared> shared)
      : ws_(std::move(socket)),
        timer_(ws_.get_executor()),
        shared_(std::move(shared)),
        outbound_(shared_->config.outbound_capacity) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<WsSession> weak = weak_from_this();
    auto emit = [weak](const io::json& frame) {
      if (auto self = weak.lock()) self->send(frame.dump());
    };
    auto offload = [shared = shared_](std::function<void()> job) { net::post(shared->offload_pool, std::move(job)); };
    SessionSettings settings;
    const std::string id = shared_->registry->next_session_id();
    settings.seed = mix_seed(shared_->config.seed, fnv1a(id));
    core_ = std::make_unique<SessionCore>(id, shared_->registry, settings, emit, offload);
    {
      std::lock_guard lock(shared_->live_mutex);
      shared_->live.insert(id);
    }
    next_tick_ = Clock::now() + kTickPeriod;
    schedule_tick();
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      shutdown();
      return;
    }
    if (ws_.got_text()) {
      core_->on_message(beast::buffers_to_string(buffer_.data()), Clock::now());
    } else {
      send(error_frame("binary frames are not supported").dump());
    }
    buffer_.consume(buffer_.size());
    do_read();
  }

  void schedule_tick() {
    timer_.expires_at(next_tick_);
    timer_.async_wait(beast::bind_front_handler(&WsSession::on_tick, shared_from_this()));
  }

  void on_tick(beast::error_code ec) {
    if (ec || closed_) return;
    const auto now = Clock::now();
    core_->tick(now);
    next_tick_ += kTickPeriod;
    // After a long stall, resume the cadence from now instead of bursting.
    if (now - next_tick_ > 5 * kTickPeriod) next_tick_ = now + kTickPeriod;
    schedule_tick();
  }

  // Safe from any thread.
  void send(std::string frame) {
    outbound_.push(std::move(frame));
    net::post(ws_.get_executor(), [self = shared_from_this()] { self->flush(); });
  }

  void flush() {
    if (writing_ || closed_) return;
    auto next = outbound_.pop();
    if (!next) return;
    writing_ = true;
    in_flight_ = std::move(*next);
    ws_.text(true);
    ws_.async_write(net::buffer(in_flight_), beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    writing_ = false;
    if (ec) {
      shutdown();
      return;
    }
    flush();
  }

  void shutdown() {
    if (closed_) return;
    closed_ = true;
    timer_.cancel();
    if (core_) {
      core_->close();
      std::lock_guard lock(shared_->live_mutex);
      shared_->live.erase(core_->id());
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  net::steady_timer timer_;
  std::shared_ptr<Shared> shared_;
  OutboundQueue outbound_;
  beast::flat_buffer buffer_;
  std::string in_flight_;
  std::unique_ptr<SessionCore> core_;
  Clock::time_point next_tick_;
  bool writing_ = false;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, std::shared_ptr<Shared> shared)
      : stream_(std::move(socket)), shared_(std::move(shared)) {}

  void run() {
    net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::do_read, shared_from_this()));
  }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      beast::error_code ignored;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    if (websocket::is_upgrade(req_)) {
      if (req_.target() == "/ws") {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), shared_)->run(std::move(req_));
        return;
      }
    }
    res_ = std::make_shared<http::response<http::string_body>>(handle_http(req_, *shared_));
    http::async_write(stream_, *res_, beast::bind_front_handler(&HttpSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) return;
    if (!res_->keep_alive()) {
      beast::error_code ignored;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    do_read();
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  std::shared_ptr<http::response<http::string_body>> res_;
  std::shared_ptr<Shared> shared_;
};

}  // namespace

struct Server::Impl {
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::shared_ptr<Shared> shared = std::make_shared<Shared>();
  std::optional<net::signal_set> signals;

  void accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) {
        if (ec == net::error::operation_aborted) return;
      } else {
        std::make_shared<HttpSession>(std::move(socket), shared)->run();
      }
      accept();
    });
  }
};

Server::Server(ServerConfig config) : impl_(std::make_unique<Impl>()) {
  if (config.threads < 1) throw ConfigError("server: threads must be >= 1");
  impl_->shared->registry =
      std::make_shared<ModelRegistry>(config.world, config.cost, config.model_dir, config.log_dir);
  for (const auto& msg : impl_->shared->registry->load_existing()) std::cerr << "skipping model " << msg << "\n";

  beast::error_code ec;
  const auto address = net::ip::make_address(config.bind_address, ec);
  if (ec) throw ConfigError("server: invalid bind address '" + config.bind_address + "'");
  const tcp::endpoint endpoint{address, config.port};
  auto& acc = impl_->acceptor;
  acc.open(endpoint.protocol(), ec);
  if (!ec) acc.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) acc.bind(endpoint, ec);
  if (!ec) acc.listen(net::socket_base::max_listen_connections, ec);
  if (ec)
    throw Error("server: cannot listen on " + config.bind_address + ":" + std::to_string(config.port) + ": " +
                ec.message());
  impl_->shared->config = std::move(config);
}

Server::~Server() {
  stop();
  impl_->shared->offload_pool.join();
}

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

ModelRegistry& Server::registry() { return *impl_->shared->registry; }

void Server::run() {
  if (impl_->shared->config.handle_signals) {
    impl_->signals.emplace(impl_->ioc, SIGINT, SIGTERM);
    impl_->signals->async_wait([this](beast::error_code, int) { stop(); });
  }
  impl_->accept();
  std::vector<std::jthread> workers;
  for (int i = 1; i < impl_->shared->config.threads; ++i) workers.emplace_back([this] { impl_->ioc.run(); });
  impl_->ioc.run();
}

void Server::stop() { impl_->ioc.stop(); }

}  // namespace koopshare::server
