#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "koopshare/io.hpp"
#include "koopshare/registry.hpp"
#include "koopshare/trial.hpp"

namespace koopshare::server {

using Clock = std::chrono::steady_clock;

inline constexpr std::chrono::milliseconds kTickPeriod{20};
inline constexpr std::chrono::milliseconds kInputStaleness{200};

struct InputMessage {
  std::uint64_t seq = 0;
  ControlInput input;
  Clock::time_point received;
};

// Single-slot exchange between the network reader and the tick loop. The
// writer replaces whatever is pending; the reader takes the newest.
class InputMailbox {
 public:
  InputMailbox() = default;
  InputMailbox(const InputMailbox&) = delete;
  InputMailbox& operator=(const InputMailbox&) = delete;
  ~InputMailbox();

  void post(const InputMessage& message);
  std::optional<InputMessage> take();

 private:
  std::atomic<InputMessage*> slot_{nullptr};
};

// Bounded frame queue; pushing into a full queue discards the oldest frame.
class OutboundQueue {
 public:
  explicit OutboundQueue(std::size_t capacity) : capacity_(capacity) {}

  // Returns false when a frame had to be dropped.
  bool push(std::string frame);
  std::optional<std::string> pop();
  std::size_t size() const;
  std::uint64_t dropped() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::deque<std::string> frames_;
  std::uint64_t dropped_ = 0;
};

struct SessionSettings {
  std::uint64_t seed = 1;  // trials without an explicit seed derive theirs from this
  Clock::duration staleness = kInputStaleness;
};

// One client's session, independent of the transport. on_message may be called
// from the network thread while tick runs on the tick thread; emitted frames go
// through `emit`, which must be thread-safe.
class SessionCore {
 public:
  using Emit = std::function<void(const io::json& frame)>;
  // Runs a job away from the tick loop (model fitting, log files).
  using Offload = std::function<void(std::function<void()> job)>;

  SessionCore(std::string session_id, std::shared_ptr<ModelRegistry> registry, SessionSettings settings, Emit emit,
              Offload offload);

  const std::string& id() const { return id_; }

  void on_message(std::string_view text, Clock::time_point now);
  // One simulation step if a trial is live.
  void tick(Clock::time_point now);
  // Connection closed: a live trial is aborted and recorded.
  void close();

  bool trial_running() const;
  // Path of the last recorded trial log.
  std::optional<std::filesystem::path> last_log() const;

 private:
  void handle(const io::json& msg, Clock::time_point now);
  void start(const io::json& msg);
  void train(const io::json& msg);
  void finish_locked();
  void error(const std::string& message);

  std::string id_;
  std::shared_ptr<ModelRegistry> registry_;
  SessionSettings settings_;
  Emit emit_;
  Offload offload_;
  InputMailbox mailbox_;

  mutable std::mutex mutex_;  // guards the fields below
  std::string name_;
  std::optional<TrialRunner> runner_;
  std::optional<InputMessage> current_;
  std::uint64_t last_seq_posted_ = 0;
  bool any_input_posted_ = false;
  int trial_counter_ = 0;
  std::size_t agree_dims_ = 0;
  std::optional<std::filesystem::path> last_log_;
};

// Frame builders, shared with tests.
io::json state_frame(const LogSample& sample, TrialStatus status, double agreement_so_far);
io::json trial_end_frame(const TrialLog& log, const CostSpec& cost);
io::json error_frame(const std::string& message);

}  // namespace koopshare::server
