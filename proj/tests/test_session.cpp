#include <doctest.h>

#include <filesystem>

#include "fixtures.hpp"
#include "koopshare/session.hpp"

using namespace koopshare;
using namespace koopshare::server;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

struct Harness {
  fs::path root;
  std::shared_ptr<ModelRegistry> registry;
  std::vector<io::json> frames;
  std::unique_ptr<SessionCore> core;
  Clock::time_point now = Clock::time_point{} + 1h;

  explicit Harness(const std::string& name) {
    root = fs::temp_directory_path() / ("koopshare_session_" + name);
    fs::remove_all(root);
    const auto& fit = fixtures::lander_fit();
    registry = std::make_shared<ModelRegistry>(fit.world, fit.cost, root / "models", root / "sessions");
    registry->publish("good", fit.model, {});
    KoopmanModel bad;
    bad.K = Eigen::MatrixXd::Identity(9, 9);
    bad.K.block<6, 6>(1, 1) *= 1.05;  // unstable drift, no input authority
    registry->publish("bad", bad, {});
    SessionSettings settings;
    settings.seed = 5;
    core = std::make_unique<SessionCore>(
        "session_0001", registry, settings, [this](const io::json& f) { frames.push_back(f); },
        [](std::function<void()> job) { job(); });
  }

  void send(const io::json& msg) { core->on_message(msg.dump(), now); }
  void input(std::uint64_t seq, double m, double r) {
    send({{"type", "input"}, {"seq", seq}, {"u_main", m}, {"u_rot", r}});
  }
  void tick() {
    now += kTickPeriod;
    core->tick(now);
  }
  std::vector<io::json> of_type(const std::string& type) const {
    std::vector<io::json> out;
    for (const auto& f : frames)
      if (f["type"] == type) out.push_back(f);
    return out;
  }
};

}  // namespace

TEST_CASE("mailbox keeps only the newest message") {
  InputMailbox box;
  CHECK_FALSE(box.take().has_value());
  box.post({1, {0.1, 0.0}, {}});
  box.post({2, {0.2, 0.0}, {}});
  const auto m = box.take();
  REQUIRE(m.has_value());
  CHECK(m->seq == 2u);
  CHECK_FALSE(box.take().has_value());
}

TEST_CASE("outbound queue drops the oldest frame") {
  OutboundQueue q(2);
  CHECK(q.push("a"));
  CHECK(q.push("b"));
  CHECK_FALSE(q.push("c"));
  CHECK(q.size() == 2u);
  CHECK(q.dropped() == 1u);
  CHECK(q.pop() == "b");
  CHECK(q.pop() == "c");
  CHECK_FALSE(q.pop().has_value());
}

TEST_CASE("hello, unknown types and malformed messages") {
  Harness h("protocol");
  h.send({{"type", "hello"}, {"name", "pilot"}});
  REQUIRE(h.frames.size() == 1u);
  CHECK(h.frames[0] == io::json{{"type", "hello"}, {"session_id", "session_0001"}});

  h.send({{"type", "dance"}});
  h.core->on_message("{not json", h.now);
  h.send({{"type", "input"}, {"seq", 1}, {"u_main", "fast"}, {"u_rot", 0}});
  h.send({{"type", "abort"}});
  CHECK(h.of_type("error").size() == 4u);

  // The session survives its errors.
  h.send({{"type", "start"}, {"paradigm", "user_only"}});
  CHECK(h.core->trial_running());
}

TEST_CASE("shared start needs a stabilizable model") {
  Harness h("start");
  h.send({{"type", "start"}, {"paradigm", "shared"}, {"model_id", "bad"}});
  REQUIRE(h.of_type("error").size() == 1u);
  CHECK(h.of_type("error")[0]["message"] == "model not stabilizable");
  CHECK_FALSE(h.core->trial_running());

  h.send({{"type", "start"}, {"paradigm", "shared_general"}, {"model_id", "nope"}});
  h.send({{"type", "start"}, {"paradigm", "shared_general"}});
  h.send({{"type", "start"}, {"paradigm", "sideways"}});
  CHECK(h.of_type("error").size() == 4u);
  CHECK_FALSE(h.core->trial_running());

  h.send({{"type", "start"}, {"paradigm", "shared"}, {"model_id", "good"}});
  CHECK(h.core->trial_running());
  h.send({{"type", "start"}, {"paradigm", "user_only"}});
  CHECK(h.of_type("error").size() == 5u);  // already running
}

TEST_CASE("silence for a second gives zero inputs") {
  Harness h("stale");
  h.send({{"type", "start"}, {"paradigm", "user_only"}, {"seed", 11}});
  h.input(1, 0.6, 0.2);
  for (int i = 0; i < 60; ++i) h.tick();
  const auto states = h.of_type("state");
  REQUIRE(states.size() == 60u);
  int zeros = 0, run = 0;
  for (const auto& f : states) {
    run = f["u_user"] == io::json{0.0, 0.0} ? run + 1 : 0;
    zeros = std::max(zeros, run);
  }
  CHECK(zeros >= 40);
  // Fresh for the first 200 ms.
  CHECK(states[0]["u_user"] == io::json{0.6, 0.2});
  CHECK(states[9]["u_user"] == io::json{0.6, 0.2});
  CHECK(states[10]["u_user"] == io::json{0.0, 0.0});
}

TEST_CASE("each tick consumes only the newest input") {
  Harness h("latest");
  h.send({{"type", "start"}, {"paradigm", "user_only"}, {"seed", 3}});
  std::uint64_t seq = 0;
  std::vector<double> expect;
  for (int t = 0; t < 30; ++t) {
    // 200 Hz against a 50 Hz tick: four inputs per tick.
    for (int k = 0; k < 4; ++k) {
      ++seq;
      h.input(seq, 0.01 * static_cast<double>(seq), 0.0);
    }
    h.input(seq - 2, 0.99, 0.99);  // stale sequence number, ignored
    expect.push_back(0.01 * static_cast<double>(seq));
    h.tick();
  }
  const auto states = h.of_type("state");
  REQUIRE(states.size() == expect.size());
  for (std::size_t i = 0; i < states.size(); ++i) CHECK(states[i]["u_user"][0] == expect[i]);
}

TEST_CASE("shared frames follow the filter and match the recorded log") {
  Harness h("replay");
  h.send({{"type", "start"}, {"paradigm", "shared_individual"}, {"model_id", "good"}, {"seed", 21}});
  std::uint64_t seq = 0;
  while (h.core->trial_running()) {
    const double phase = static_cast<double>(seq) * 0.05;
    h.input(++seq, 0.45 + 0.3 * std::sin(phase), 0.6 * std::cos(0.7 * phase));
    h.tick();
    REQUIRE(seq < 2000);
  }
  const auto states = h.of_type("state");
  const auto ends = h.of_type("trial_end");
  REQUIRE(ends.size() == 1u);
  REQUIRE(h.core->last_log().has_value());
  const TrialLog log = io::read_trial_log(*h.core->last_log());
  REQUIRE(log.samples.size() == states.size());
  CHECK(ends[0]["outcome"]["steps"] == log.outcome.steps);
  CHECK(ends[0]["outcome"]["status"] == std::string(to_string(log.outcome.status)));
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& f = states[i];
    const LogSample& s = log.samples[i];
    CHECK(f["t"] == s.t);
    CHECK(f["state"] == io::json(s.state.to_vector()));
    CHECK(f["u_user"] == io::json{s.u_user.main, s.u_user.rot});
    CHECK(f["u_opt"] == io::json{s.u_opt->main, s.u_opt->rot});
    CHECK(f["u_applied"] == io::json{s.u_applied.main, s.u_applied.rot});
    CHECK(s.u_applied == half_plane_filter(clamp_input(s.u_user), *s.u_opt));
  }
  const double agree = agreement(log);
  CHECK(states.back()["agreement_so_far"].get<double>() == doctest::Approx(agree).epsilon(1e-12));
}

TEST_CASE("abort and disconnect record the trial") {
  Harness h("abort");
  h.send({{"type", "start"}, {"paradigm", "user_only"}});
  for (int i = 0; i < 5; ++i) h.tick();
  h.send({{"type", "abort"}});
  CHECK_FALSE(h.core->trial_running());
  REQUIRE(h.of_type("trial_end").size() == 1u);
  const TrialLog first = io::read_trial_log(*h.core->last_log());
  CHECK(first.samples.size() == 5u);
  CHECK(first.outcome.status == TrialStatus::timeout);

  h.send({{"type", "start"}, {"paradigm", "user_only"}});
  for (int i = 0; i < 3; ++i) h.tick();
  h.core->close();
  const TrialLog second = io::read_trial_log(*h.core->last_log());
  CHECK(second.samples.size() == 3u);
  CHECK(h.registry->recorded_sessions().at(0).trials == 2);
}

TEST_CASE("train publishes a model from recorded sessions") {
  Harness h("train");
  for (int trial = 0; trial < 2; ++trial) {
    h.send({{"type", "start"}, {"paradigm", "user_only"}});
    std::uint64_t seq = 100 * static_cast<std::uint64_t>(trial);
    while (h.core->trial_running()) {
      ++seq;
      h.input(seq, 0.3 + 0.2 * std::sin(0.1 * static_cast<double>(seq)), 0.3 * std::cos(0.13 * static_cast<double>(seq)));
      h.tick();
    }
  }
  h.send({{"type", "train"}, {"session_ids", {"session_0001"}}});
  const auto ready = h.of_type("model_ready");
  const auto errors = h.of_type("error");
  CHECK(ready.size() + errors.size() == 1u);
  if (!ready.empty()) CHECK(h.registry->find(ready[0]["model_id"]) != nullptr);

  h.send({{"type", "train"}, {"session_ids", {"../etc"}}});
  CHECK(h.of_type("error").size() == errors.size() + 1);
}
