#include <algorithm>

#include "psda/bridge.hpp"
#include "psda/error.hpp"

namespace psda::bridge {

namespace {

MissionConfig session_config(const Scenario& sc) {
  MissionConfig cfg = sc.mission;
  cfg.human.enabled = false;
  return cfg;
}

std::vector<std::string> rover_labels() {
  std::vector<std::string> l = spatial_labels();
  l.emplace_back(labels::kInView);
  return l;
}

io::Json pose(const Pose& p) { return {{"x", p.position.x()}, {"y", p.position.y()}, {"heading", p.heading}}; }

Scenario scenario_from(const io::Json& body) {
  if (body.contains("scenario_toml")) {
    if (!body["scenario_toml"].is_string()) fail(ErrorCode::kConfig, "scenario_toml must be a string");
    return parse_scenario(body["scenario_toml"].get<std::string>(), "scenario_toml");
  }
  std::string name = "default";
  if (body.contains("scenario")) {
    if (!body["scenario"].is_string()) fail(ErrorCode::kConfig, "scenario must be a string");
    name = body["scenario"].get<std::string>();
  }
  return builtin_scenario(name);
}

}  // namespace

Session::Session(std::string id, Scenario scenario, std::uint64_t seed, io::Json origin)
    : id_(std::move(id)), scenario_(std::move(scenario)), seed_(seed), mission_(session_config(scenario_), seed), origin_(std::move(origin)) {}

io::Json Session::observe(const io::Json& observation) {
  std::lock_guard lock(mutex_);
  const SemanticObservation obs = io::observation_from_json(observation);
  const ObservationEvent ev = mission_.inject(obs);
  commands_.push_back({{"op", "observe"}, {"observation", io::to_json(ev.obs)}});

  io::Json reply = {{"k", ev.obs.k},
                    {"gamma", ev.gamma},
                    {"candidates", ev.candidates},
                    {"normalizers", ev.normalizers},
                    {"discarded", ev.discarded}};
  emit({{"type", "observation"}, {"k", ev.obs.k}, {"observation", io::to_json(ev.obs)}, {"discarded", ev.discarded}});
  if (ev.obs.polarity == Polarity::kPositive) emit({{"type", "association"}, {"k", ev.obs.k}, {"gamma", ev.gamma}, {"candidates", ev.candidates}});
  emit(raster_frame());
  if (mission_.finished()) emit({{"type", "mission_end"}, {"k", mission_.state().k}, {"termination", mission_.state().termination}});
  return reply;
}

io::Json Session::step(int n) {
  std::lock_guard lock(mutex_);
  if (n < 0) fail(ErrorCode::kInvalidArgument, "step count must be >= 0");
  if (n > 0 && mission_.finished()) fail(ErrorCode::kState, "mission already finished (" + mission_.state().termination + ")");
  io::Json events = io::Json::array();
  int done = 0;
  while (done < n && !mission_.finished()) {
    const StepEvents ev = mission_.advance();
    ++done;
    for (int id : ev.detections) {
      const Vec2& p = mission_.config().world.targets[static_cast<std::size_t>(id)].position;
      events.push_back({{"type", "detection"}, {"k", ev.k}, {"target", id}, {"position", {p.x(), p.y()}}});
    }
    events.push_back({{"type", "step"},
                      {"k", ev.k},
                      {"rover", pose(mission_.state().rover)},
                      {"drone", pose(mission_.state().drone)},
                      {"replanned", ev.replanned}});
    events.push_back(raster_frame());
    if (ev.finished) events.push_back({{"type", "mission_end"}, {"k", ev.k}, {"termination", mission_.state().termination}});
  }
  if (done > 0) commands_.push_back({{"op", "step"}, {"n", done}});
  for (const auto& e : events) emit(e);
  return {{"k", mission_.state().k}, {"steps", done}, {"finished", mission_.finished()}, {"events", std::move(events)}};
}

io::Json Session::state() const {
  std::lock_guard lock(mutex_);
  return state_locked();
}

io::Json Session::state_locked() const {
  const MissionState& s = mission_.state();
  io::Json beliefs = io::Json::array();
  for (const auto& b : s.beliefs) beliefs.push_back(io::to_json(b));
  io::Json path = io::Json::array();
  for (const auto& c : s.path) {
    const Vec2 p = Grid{mission_.config().world.extent, 1.0, {}}.center(c);
    path.push_back({p.x(), p.y()});
  }
  io::Json landmarks = io::Json::array();
  for (const auto& lm : mission_.config().world.landmarks) landmarks.push_back({{"id", lm.id}, {"pose", pose(lm.pose)}});
  return {{"id", id_},
          {"scenario", scenario_.name},
          {"modality", to_string(mission_.config().modality)},
          {"seed", seed_},
          {"k", s.k},
          {"finished", s.finished},
          {"termination", s.termination},
          {"rover", pose(s.rover)},
          {"drone", pose(s.drone)},
          {"goal", {s.goal.x(), s.goal.y()}},
          {"path", std::move(path)},
          {"distance", s.distance},
          {"detected", s.detected},
          {"landmarks", std::move(landmarks)},
          {"extent", {0.0, 0.0, mission_.config().world.extent, mission_.config().world.extent}},
          {"beliefs", std::move(beliefs)}};
}

io::Json Session::command_log() const {
  std::lock_guard lock(mutex_);
  io::Json log = origin_;
  log["modality"] = to_string(mission_.config().modality);
  log["seed"] = seed_;
  log["commands"] = commands_;
  return log;
}

MissionRecord Session::record() const {
  std::lock_guard lock(mutex_);
  return mission_.record();
}

io::Json Session::raster_frame() const {
  const MissionState& s = mission_.state();
  const double extent = mission_.config().world.extent;
  std::vector<double> grid(static_cast<std::size_t>(kRasterResolution * kRasterResolution), 0.0);
  if (std::find(s.detected.begin(), s.detected.end(), false) != s.detected.end()) {
    grid = belief_raster(mission_.average_belief(), extent, kRasterResolution);
  }
  return {{"type", "belief_raster"}, {"k", s.k}, {"grid", std::move(grid)}, {"extent", {0.0, 0.0, extent, extent}}};
}

void Session::emit(const io::Json& frame) {
  if (sinks_.empty()) return;
  const std::string text = frame.dump();
  for (auto& [token, sink] : sinks_) sink(text);
}

int Session::subscribe(EventSink sink) {
  std::lock_guard lock(mutex_);
  const int token = next_token_++;
  sinks_.emplace(token, std::move(sink));
  return token;
}

void Session::unsubscribe(int token) {
  std::lock_guard lock(mutex_);
  sinks_.erase(token);
}

io::Json SessionManager::create(const io::Json& body) {
  if (!body.is_object()) fail(ErrorCode::kInvalidArgument, "session request must be a JSON object");
  Scenario sc = scenario_from(body);
  if (body.contains("modality")) {
    if (!body["modality"].is_string()) fail(ErrorCode::kConfig, "modality must be a string");
    sc.mission.modality = modality_from_string(body["modality"].get<std::string>());
  }
  std::uint64_t seed = 7;
  if (body.contains("seed")) {
    const auto& v = body["seed"];
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) fail(ErrorCode::kConfig, "seed must be a nonnegative integer");
    seed = body["seed"].get<std::uint64_t>();
  }
  std::string id;
  {
    std::lock_guard lock(mutex_);
    id = "s" + std::to_string(next_id_++);
  }
  io::Json origin = body.contains("scenario_toml") ? io::Json{{"scenario_toml", body["scenario_toml"]}} : io::Json{{"scenario", sc.name}};
  auto session = std::make_shared<Session>(id, std::move(sc), seed, std::move(origin));
  io::Json state = session->state();
  std::lock_guard lock(mutex_);
  sessions_.emplace(id, std::move(session));
  return {{"id", id}, {"state", std::move(state)}};
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(ErrorCode::kNotFound, "unknown session '" + id + "'");
  return it->second;
}

io::Json SessionManager::dictionary() {
  io::Json modalities = io::Json::array();
  for (Modality m : all_modalities()) modalities.push_back(to_string(m));
  return {{"polarity", {"positive", "negative"}},
          {"mineral", {"calcite", "pyroxene"}},
          {"frame", {"rover", "landmark", "drone_fov"}},
          {"labels",
           {{"rover", rover_labels()},
            {"landmark", spatial_labels()},
            {"drone_fov", {std::string(labels::kInView)}},
            {"negative", {std::string(labels::kNoneVisible), std::string(labels::kInView)}}}},
          {"modalities", std::move(modalities)}};
}

MissionRecord replay_command_log(const io::Json& log) {
  io::Json body = {{"modality", log.at("modality")}, {"seed", log.at("seed")}};
  if (log.contains("scenario_toml")) body["scenario_toml"] = log["scenario_toml"];
  if (log.contains("scenario")) body["scenario"] = log["scenario"];
  SessionManager manager;
  auto session = manager.find(manager.create(body)["id"].get<std::string>());
  for (const auto& cmd : log.at("commands")) {
    const std::string op = cmd.at("op").get<std::string>();
    if (op == "observe") {
      session->observe(cmd.at("observation"));
    } else if (op == "step") {
      session->step(cmd.at("n").get<int>());
    } else {
      fail(ErrorCode::kInvalidArgument, "unknown command '" + op + "'");
    }
  }
  return session->record();
}

}  // namespace psda::bridge
