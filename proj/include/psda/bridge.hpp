#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "psda/json_io.hpp"
#include "psda/scenario.hpp"
#include "psda/survey.hpp"

namespace psda::bridge {

/// Raster resolution of belief frames.
inline constexpr int kRasterResolution = 64;

/// Receives serialized event frames in the order they were produced.
using EventSink = std::function<void(const std::string& frame)>;

/// One interactive mission. The simulated astronaut is disabled; human data arrive
/// through observe(). All commands are applied under the session lock, and event
/// frames reach subscribers in command order.
class Session {
 public:
  /// origin records how the scenario was given ({"scenario": name} or {"scenario_toml": text}).
  Session(std::string id, Scenario scenario, std::uint64_t seed, io::Json origin);

  const std::string& id() const { return id_; }

  /// Fuses a datum at the current step; returns the association summary.
  io::Json observe(const io::Json& observation);
  /// Advances up to n steps; stepping a finished mission is a kState error.
  io::Json step(int n);
  io::Json state() const;
  /// {"scenario" | "scenario_toml", "modality", "seed", "commands": [...]}; enough to replay the session.
  io::Json command_log() const;
  /// The offline record of the mission so far.
  MissionRecord record() const;

  int subscribe(EventSink sink);
  void unsubscribe(int token);

 private:
  io::Json state_locked() const;
  io::Json raster_frame() const;
  void emit(const io::Json& frame);

  mutable std::mutex mutex_;
  std::string id_;
  Scenario scenario_;
  std::uint64_t seed_;
  Mission mission_;
  io::Json origin_;
  io::Json commands_ = io::Json::array();
  std::map<int, EventSink> sinks_;
  int next_token_ = 0;
};

/// Session registry. Request bodies and replies are JSON; failures throw psda::Error.
class SessionManager {
 public:
  /// Body: {"scenario": "<built-in name>" | "scenario_toml": "...", "modality": "psda", "seed": 7}.
  /// Every field is optional.
  io::Json create(const io::Json& body);
  std::shared_ptr<Session> find(const std::string& id) const;
  static io::Json dictionary();

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

/// Replays a command log offline, without a session.
MissionRecord replay_command_log(const io::Json& log);

/// HTTP + WebSocket front end:
///   POST /sessions, POST /sessions/{id}/observations, POST /sessions/{id}/step,
///   GET /sessions/{id}/state, GET /sessions/{id}/log, GET /dictionary,
///   WS /sessions/{id}/events.
class Server {
 public:
  /// Binds immediately; port 0 picks a free port.
  Server(const std::string& address, std::uint16_t port, int threads = 2);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t port() const;
  /// Serves on background threads until stop().
  void start();
  void stop();
  /// Blocks until stop() is called from another thread.
  void wait();

  SessionManager& sessions();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace psda::bridge
