#include <doctest.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "fixtures.hpp"
#include "koopshare/error.hpp"
#include "koopshare/server.hpp"

using namespace koopshare;
using namespace koopshare::server;
namespace fs = std::filesystem;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

struct RunningServer {
  fs::path root;
  std::unique_ptr<Server> server;
  std::thread thread;

  explicit RunningServer(const std::string& name) {
    root = fs::temp_directory_path() / ("koopshare_server_" + name);
    fs::remove_all(root);
    fs::create_directories(root / "web");
    std::ofstream(root / "web" / "index.html") << "<html>cockpit</html>";
    ServerConfig config;
    config.port = 0;
    config.web_root = root / "web";
    config.log_dir = root / "sessions";
    config.model_dir = root / "models";
    server = std::make_unique<Server>(config);
    server->registry().publish("good", fixtures::lander_fit().model, {"fixture"});
    thread = std::thread([this] { server->run(); });
  }
  ~RunningServer() {
    server->stop();
    thread.join();
  }
};

http::response<http::string_body> get(unsigned short port, const std::string& target) {
  net::io_context ioc;
  tcp::resolver resolver(ioc);
  beast::tcp_stream stream(ioc);
  stream.connect(resolver.resolve("127.0.0.1", std::to_string(port)));
  http::request<http::string_body> req{http::verb::get, target, 11};
  req.set(http::field::host, "127.0.0.1");
  http::write(stream, req);
  beast::flat_buffer buffer;
  http::response<http::string_body> res;
  http::read(stream, buffer, res);
  return res;
}

class Client {
 public:
  explicit Client(unsigned short port) : ws_(ioc_) {
    tcp::resolver resolver(ioc_);
    net::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", "/ws");
  }
  void send(const io::json& j) { ws_.write(net::buffer(j.dump())); }
  io::json read() {
    beast::flat_buffer buffer;
    ws_.read(buffer);
    return io::json::parse(beast::buffers_to_string(buffer.data()));
  }
  // Reads until a frame of the given type; other frames are collected.
  io::json read_until(const std::string& type, std::vector<io::json>* seen = nullptr) {
    for (;;) {
      io::json f = read();
      if (f["type"] == type) return f;
      if (seen) seen->push_back(f);
    }
  }

 private:
  net::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
};

fs::path wait_for_file(const fs::path& p) {
  for (int i = 0; i < 200 && !fs::exists(p); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  return p;
}

}  // namespace

TEST_CASE("http endpoints") {
  RunningServer s("http");
  const auto models = get(s.server->port(), "/api/models");
  CHECK(models.result() == http::status::ok);
  const io::json list = io::json::parse(models.body());
  REQUIRE(list.size() == 1u);
  CHECK(list[0]["id"] == "good");
  CHECK(list[0]["stabilizable"] == true);

  CHECK(get(s.server->port(), "/").body() == "<html>cockpit</html>");
  CHECK(get(s.server->port(), "/missing.js").result() == http::status::not_found);
  CHECK(get(s.server->port(), "/../secret").result() == http::status::bad_request);
  const io::json sessions = io::json::parse(get(s.server->port(), "/api/sessions").body());
  CHECK(sessions["recorded"].empty());
}

TEST_CASE("busy port is a startup error") {
  RunningServer s("busy");
  ServerConfig config;
  config.port = s.server->port();
  config.log_dir = s.root / "other_sessions";
  config.model_dir = s.root / "other_models";
  CHECK_THROWS_AS(Server{config}, Error);
}

TEST_CASE("silent pilot free-falls to a crash and the log is written") {
  RunningServer s("silent");
  Client c(s.server->port());
  c.send({{"type", "hello"}, {"name", "test"}});
  const io::json hello = c.read_until("hello");
  const std::string sid = hello["session_id"];
  c.send({{"type", "start"}, {"paradigm", "user_only"}, {"seed", 4}});
  const io::json end = c.read_until("trial_end");
  CHECK(end["outcome"]["status"] == "crash");

  const TrialLog log = io::read_trial_log(wait_for_file(s.root / "sessions" / sid / "trial_00.json"));
  CHECK(log.outcome.status == TrialStatus::crash);
  for (const auto& sample : log.samples) CHECK(sample.u_user == ControlInput{0.0, 0.0});

  // Errors leave the session usable.
  c.send({{"type", "bogus"}});
  CHECK(c.read_until("error")["message"].get<std::string>().find("bogus") != std::string::npos);
  c.send({{"type", "start"}, {"paradigm", "shared"}, {"model_id", "missing"}});
  CHECK(c.read_until("error")["type"] == "error");
}

TEST_CASE("live session log equals the offline replay of its inputs") {
  RunningServer s("replay");
  Client c(s.server->port());
  c.send({{"type", "hello"}});
  const std::string sid = c.read_until("hello")["session_id"];
  c.send({{"type", "start"}, {"paradigm", "shared_individual"}, {"model_id", "good"}, {"seed", 99}});
  std::uint64_t seq = 0;
  std::vector<io::json> frames;
  for (;;) {
    const double phase = 0.05 * static_cast<double>(seq);
    c.send({{"type", "input"}, {"seq", ++seq}, {"u_main", 0.5 + 0.3 * std::sin(phase)}, {"u_rot", 0.5 * std::cos(phase)}});
    const io::json f = c.read();
    if (f["type"] == "trial_end") break;
    if (f["type"] == "state") frames.push_back(f);
    REQUIRE(seq < 5000);
  }
  const fs::path live = wait_for_file(s.root / "sessions" / sid / "trial_00.json");
  const TrialLog online = io::read_trial_log(live);
  CHECK(online.samples.size() >= frames.size());

  io::json inputs = io::json::array();
  for (const auto& sample : online.samples) inputs.push_back({sample.u_user.main, sample.u_user.rot});
  io::write_json_file(s.root / "inputs.json", inputs);
  const std::string cmd = std::string(KOOPSHARE_BIN) + " run --paradigm shared_individual --seed 99 --model " +
                          (s.root / "models" / "good.json").string() + " --inputs " +
                          (s.root / "inputs.json").string() + " --out " + (s.root / "offline.json").string() +
                          " > /dev/null";
  REQUIRE(std::system(cmd.c_str()) == 0);
  const TrialLog offline = io::read_trial_log(s.root / "offline.json");
  CHECK(offline == online);
}
