#include "koopshare/session.hpp"

#include <cmath>

#include "koopshare/error.hpp"
#include "koopshare/metrics.hpp"

namespace koopshare::server {

InputMailbox::~InputMailbox() { delete slot_.exchange(nullptr); }

void InputMailbox::post(const InputMessage& message) {
  delete slot_.exchange(new InputMessage(message), std::memory_order_acq_rel);
}

std::optional<InputMessage> InputMailbox::take() {
  std::unique_ptr<InputMessage> m(slot_.exchange(nullptr, std::memory_order_acq_rel));
  if (!m) return std::nullopt;
  return *m;
}

bool OutboundQueue::push(std::string frame) {
  std::lock_guard lock(mutex_);
  bool kept_all = true;
  while (capacity_ > 0 && frames_.size() >= capacity_) {
    frames_.pop_front();
    ++dropped_;
    kept_all = false;
  }
  frames_.push_back(std::move(frame));
  return kept_all;
}

std::optional<std::string> OutboundQueue::pop() {
  std::lock_guard lock(mutex_);
  if (frames_.empty()) return std::nullopt;
  std::string f = std::move(frames_.front());
  frames_.pop_front();
  return f;
}

std::size_t OutboundQueue::size() const {
  std::lock_guard lock(mutex_);
  return frames_.size();
}

std::uint64_t OutboundQueue::dropped() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

io::json state_frame(const LogSample& sample, TrialStatus status, double agreement_so_far) {
  io::json f = {{"type", "state"},
                {"t", sample.t},
                {"state", sample.state.to_vector()},
                {"u_user", {sample.u_user.main, sample.u_user.rot}},
                {"u_applied", {sample.u_applied.main, sample.u_applied.rot}},
                {"agreement_so_far", agreement_so_far},
                {"status", to_string(status)}};
  if (sample.u_opt) f["u_opt"] = {sample.u_opt->main, sample.u_opt->rot};
  return f;
}

io::json trial_end_frame(const TrialLog& log, const CostSpec& cost) {
  const TrialMetrics m = trial_metrics(log, cost);
  return {{"type", "trial_end"},
          {"outcome", {{"status", to_string(log.outcome.status)}, {"steps", log.outcome.steps}}},
          {"metrics", {{"time", m.time_s}, {"path_length", m.path_length}, {"total_cost", m.total_cost}}}};
}

io::json error_frame(const std::string& message) { return {{"type", "error"}, {"message", message}}; }

namespace {

double finite_number(const io::json& msg, const char* key) {
  auto it = msg.find(key);
  if (it == msg.end() || !it->is_number()) throw InvalidInput(std::string("'") + key + "' must be a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw InvalidInput(std::string("'") + key + "' must be finite");
  return v;
}

std::uint64_t unsigned_number(const io::json& msg, const char* key) {
  auto it = msg.find(key);
  if (it == msg.end() || !it->is_number_unsigned())
    throw InvalidInput(std::string("'") + key + "' must be a non-negative integer");
  return it->get<std::uint64_t>();
}

}  // namespace

SessionCore::SessionCore(std::string session_id, std::shared_ptr<ModelRegistry> registry, SessionSettings settings,
                         Emit emit, Offload offload)
    : id_(std::move(session_id)),
      registry_(std::move(registry)),
      settings_(settings),
      emit_(std::move(emit)),
      offload_(std::move(offload)) {}

void SessionCore::error(const std::string& message) { emit_(error_frame(message)); }

void SessionCore::on_message(std::string_view text, Clock::time_point now) {
  io::json msg;
  try {
    msg = io::json::parse(text);
  } catch (const io::json::exception&) {
    error("malformed message: not JSON");
    return;
  }
  try {
    handle(msg, now);
  } catch (const Error& e) {
    error(e.what());
  } catch (const io::json::exception& e) {
    error(std::string("malformed message: ") + e.what());
  }
}

void SessionCore::handle(const io::json& msg, Clock::time_point now) {
  if (!msg.is_object()) throw InvalidInput("malformed message: expected an object");
  auto type_it = msg.find("type");
  if (type_it == msg.end() || !type_it->is_string()) throw InvalidInput("malformed message: missing 'type'");
  const std::string type = type_it->get<std::string>();

  if (type == "input") {
    InputMessage m{unsigned_number(msg, "seq"), {finite_number(msg, "u_main"), finite_number(msg, "u_rot")}, now};
    {
      std::lock_guard lock(mutex_);
      if (any_input_posted_ && m.seq <= last_seq_posted_) return;  // out of order
      any_input_posted_ = true;
      last_seq_posted_ = m.seq;
    }
    mailbox_.post(m);
  } else if (type == "hello") {
    auto it = msg.find("name");
    if (it != msg.end() && !it->is_string()) throw InvalidInput("'name' must be a string");
    {
      std::lock_guard lock(mutex_);
      name_ = it == msg.end() ? "" : it->get<std::string>();
    }
    emit_({{"type", "hello"}, {"session_id", id_}});
  } else if (type == "start") {
    start(msg);
  } else if (type == "abort") {
    std::lock_guard lock(mutex_);
    if (!runner_ || !runner_->running()) throw InvalidInput("no trial running");
    runner_->abort();
    finish_locked();
  } else if (type == "train") {
    train(msg);
  } else {
    throw InvalidInput("unknown message type '" + type + "'");
  }
}

void SessionCore::start(const io::json& msg) {
  auto p = msg.find("paradigm");
  if (p == msg.end() || !p->is_string()) throw InvalidInput("start: 'paradigm' must be a string");
  Paradigm paradigm;
  try {
    paradigm = paradigm_from_string(p->get<std::string>());
  } catch (const Error&) {
    throw InvalidInput("start: unknown paradigm '" + p->get<std::string>() + "'");
  }

  std::optional<LqrSolution> solution;
  auto mid = msg.find("model_id");
  if (is_shared(paradigm)) {
    if (mid == msg.end() || !mid->is_string()) throw InvalidInput("start: shared paradigms need a 'model_id'");
    auto entry = registry_->find(mid->get<std::string>());
    if (!entry) throw InvalidInput("start: unknown model '" + mid->get<std::string>() + "'");
    if (!entry->lqr) throw InvalidInput("model not stabilizable");
    solution = entry->lqr;
  } else if (mid != msg.end() && !mid->is_null() && !mid->is_string()) {
    throw InvalidInput("start: 'model_id' must be a string");
  }

  std::lock_guard lock(mutex_);
  if (runner_ && runner_->running()) throw InvalidInput("start: a trial is already running");
  const std::uint64_t seed = msg.contains("seed") ? unsigned_number(msg, "seed")
                                                  : mix_seed(settings_.seed, static_cast<std::uint64_t>(trial_counter_));
  ++trial_counter_;
  runner_.emplace(paradigm, 0, seed, registry_->world(), registry_->cost(), std::move(solution));
  current_.reset();
  agree_dims_ = 0;
  // Inputs sent before the start belong to no trial.
  mailbox_.take();
  if (!runner_->running()) finish_locked();
}

void SessionCore::train(const io::json& msg) {
  auto it = msg.find("session_ids");
  if (it == msg.end() || !it->is_array()) throw InvalidInput("train: 'session_ids' must be an array");
  std::vector<std::string> ids;
  for (const auto& v : *it) {
    if (!v.is_string()) throw InvalidInput("train: session ids must be strings");
    ids.push_back(v.get<std::string>());
  }
  if (ids.empty()) throw InvalidInput("train: 'session_ids' is empty");
  offload_([registry = registry_, ids = std::move(ids), emit = emit_] {
    try {
      auto entry = registry->train(ids);
      if (!entry->lqr) {
        emit(error_frame("model " + entry->id + ": " + entry->error));
        return;
      }
      emit({{"type", "model_ready"}, {"model_id", entry->id}});
    } catch (const Error& e) {
      emit(error_frame(e.what()));
    }
  });
}

void SessionCore::tick(Clock::time_point now) {
  std::lock_guard lock(mutex_);
  if (!runner_ || !runner_->running()) return;
  if (auto m = mailbox_.take(); m && (!current_ || m->seq > current_->seq)) current_ = *m;
  ControlInput u{0.0, 0.0};
  if (current_ && now - current_->received <= settings_.staleness) u = current_->input;

  const LogSample& sample = runner_->advance(u);
  if (sample.u_opt) {
    agree_dims_ += (sample.u_user.main * sample.u_opt->main >= 0.0) + (sample.u_user.rot * sample.u_opt->rot >= 0.0);
  }
  const double agreement_so_far =
      sample.u_opt ? static_cast<double>(agree_dims_) / (2.0 * runner_->steps()) : 1.0;
  emit_(state_frame(sample, runner_->status(), agreement_so_far));
  if (!runner_->running()) finish_locked();
}

void SessionCore::finish_locked() {
  const int index = trial_counter_ - 1;
  last_log_ = registry_->log_path(id_, index);
  emit_(trial_end_frame(runner_->log(), registry_->cost()));
  // The file write stays off the tick path; a failure can only be reported.
  offload_([registry = registry_, id = id_, index, log = runner_->log(), emit = emit_] {
    try {
      registry->record(id, index, log);
    } catch (const std::exception& e) {
      emit(error_frame(std::string("recording failed: ") + e.what()));
    }
  });
}

void SessionCore::close() {
  std::lock_guard lock(mutex_);
  if (runner_ && runner_->running()) {
    runner_->abort();
    const int index = trial_counter_ - 1;
    last_log_ = registry_->log_path(id_, index);
    offload_([registry = registry_, id = id_, index, log = runner_->log()] {
      try {
        registry->record(id, index, log);
      } catch (const std::exception&) {
        // nobody left to tell
      }
    });
  }
}

bool SessionCore::trial_running() const {
  std::lock_guard lock(mutex_);
  return runner_ && runner_->running();
}

std::optional<std::filesystem::path> SessionCore::last_log() const {
  std::lock_guard lock(mutex_);
  return last_log_;
}

}  // namespace koopshare::server
