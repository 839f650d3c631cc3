#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "koopshare/controller.hpp"
#include "koopshare/lander.hpp"
#include "koopshare/registry.hpp"

namespace koopshare::server {

struct ServerConfig {
  std::string bind_address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  std::filesystem::path web_root = "web";
  std::filesystem::path log_dir = "sessions";
  std::filesystem::path model_dir = "models";
  WorldParams world;
  CostSpec cost = CostSpec::defaults(WorldParams{});
  std::uint64_t seed = 1;
  int threads = 2;
  std::size_t outbound_capacity = 64;  // frames queued per client before the oldest is dropped
  bool handle_signals = false;         // stop on SIGINT/SIGTERM
};

// HTTP + WebSocket front end. GET /api/models and /api/sessions list what the
// registry knows, /ws upgrades to the session protocol, anything else is served
// from web_root.
class Server {
 public:
  // Binds immediately; throws Error when the address is unavailable.
  explicit Server(ServerConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const;
  ModelRegistry& registry();

  // Blocks until stop() is called (from any thread) or a signal arrives.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace koopshare::server
