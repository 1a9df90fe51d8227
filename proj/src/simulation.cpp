#include "trajkit/simulation.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "trajkit/bytes.hpp"
#include "trajkit/ingest.hpp"
#include "trajkit/kinematics.hpp"

namespace trajkit {

namespace fs = std::filesystem;
using nlohmann::json;

double wasserstein1(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return 0.0;
  std::vector<double> xs(a.begin(), a.end());
  std::vector<double> ys(b.begin(), b.end());
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  if (xs.size() == ys.size()) {
    double sum = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) sum += std::abs(xs[i] - ys[i]);
    return sum / static_cast<double>(xs.size());
  }
  // Sweep the merged support, integrating |F - G| between breakpoints.
  const double na = static_cast<double>(xs.size());
  const double nb = static_cast<double>(ys.size());
  std::size_t i = 0, j = 0;
  double prev = std::min(xs.front(), ys.front());
  double total = 0.0;
  while (i < xs.size() || j < ys.size()) {
    const double next = (j >= ys.size() || (i < xs.size() && xs[i] <= ys[j])) ? xs[i] : ys[j];
    total += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - prev);
    prev = next;
    while (i < xs.size() && xs[i] == next) ++i;
    while (j < ys.size() && ys[j] == next) ++j;
  }
  return total;
}

std::string sim_metrics_to_json(const SimMetrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j = {{"collision_rate", opt(m.collision_rate)},
            {"real_collision_rate", opt(m.real_collision_rate)},
            {"offroad_rate", opt(m.offroad_rate)},
            {"real_offroad_rate", opt(m.real_offroad_rate)},
            {"speed_distance", m.speed_distance},
            {"accel_distance", m.accel_distance},
            {"n_samples", m.n_samples}};
  return j.dump(2) + "\n";
}

namespace {

// Velocity and acceleration from positions, the estimator used for both
// rollouts and their real reference.
void derive_xy(std::vector<StateRow>& rows, double dt) {
  std::vector<double> xs, ys;
  for (const auto& r : rows) {
    xs.push_back(r.x);
    ys.push_back(r.y);
  }
  const auto vx = derive_derivative(xs, dt).values;
  const auto vy = derive_derivative(ys, dt).values;
  const auto ax = derive_derivative(vx, dt).values;
  const auto ay = derive_derivative(vy, dt).values;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].vx = vx[i];
    rows[i].vy = vy[i];
    rows[i].ax = ax[i];
    rows[i].ay = ay[i];
  }
}

std::vector<StateRow> rows_between(const SceneFrame& s, std::size_t agent, std::int64_t lo, std::int64_t hi) {
  std::vector<StateRow> out;
  const RowRange r = s.agent_rows(agent);
  for (std::size_t i = r.begin; i < r.end; ++i) {
    if (s.columns.ts[i] >= lo && s.columns.ts[i] <= hi) out.push_back(s.columns.row(i));
  }
  return out;
}

}  // namespace

SimulationScene SimulationScene::reset(SceneFrame scene, std::int64_t init_ts, const std::set<std::string>& controlled) {
  if (init_ts < 0 || init_ts >= scene.n_timesteps) {
    throw Error(ErrorKind::kArgument, "init_ts " + std::to_string(init_ts) + " outside scene frames [0, " +
                                          std::to_string(scene.n_timesteps) + ")");
  }
  SimulationScene sim;
  sim.init_ts_ = init_ts;
  sim.current_ts_ = init_ts;
  sim.controlled_ids_ = controlled;
  std::vector<std::size_t> agents;
  for (const auto& id : controlled) {
    const auto a = scene.find_agent(id);
    if (!a) throw Error(ErrorKind::kNotFound, "unknown agent '" + id + "' in scene " + scene.scene_id);
    if (!scene.row_at(*a, init_ts)) {
      throw Error(ErrorKind::kArgument, "controlled agent '" + id + "' is not alive at ts " + std::to_string(init_ts));
    }
    agents.push_back(*a);
  }
  std::sort(agents.begin(), agents.end());
  for (std::size_t a : agents) {
    sim.controlled_.push_back({a, rows_between(scene, a, scene.agents[a].first_ts, init_ts), {}});
  }
  sim.scene_ = std::move(scene);
  return sim;
}

void SimulationScene::rederive(Controlled& c) const {
  std::vector<StateRow> all = c.prefix;
  all.insert(all.end(), c.rollout.begin(), c.rollout.end());
  derive_xy(all, scene_.dt);
  std::copy(all.end() - static_cast<std::ptrdiff_t>(c.rollout.size()), all.end(), c.rollout.begin());
}

Observation SimulationScene::step(const std::map<std::string, Pose>& poses) {
  for (const auto& [id, pose] : poses) {
    if (!controlled_ids_.contains(id)) throw Error(ErrorKind::kArgument, "agent '" + id + "' is not controlled");
    if (!std::isfinite(pose.x) || !std::isfinite(pose.y) || !std::isfinite(pose.heading)) {
      throw Error(ErrorKind::kArgument, "non-finite pose for agent '" + id + "'");
    }
  }
  for (const auto& id : controlled_ids_) {
    if (!poses.contains(id)) throw Error(ErrorKind::kArgument, "missing pose for controlled agent '" + id + "'");
  }
  ++current_ts_;
  for (auto& c : controlled_) {
    const Pose& p = poses.at(scene_.agents[c.agent].id);
    const double z = c.rollout.empty() ? c.prefix.back().z : c.rollout.back().z;
    c.rollout.push_back({current_ts_, p.x, p.y, z, 0.0, 0.0, 0.0, 0.0, wrap_angle(p.heading), true});
    rederive(c);
  }
  return observation();
}

StateRow SimulationScene::replay_state(std::size_t agent, std::int64_t ts, bool& valid) const {
  const auto& meta = scene_.agents[agent];
  valid = false;
  if (ts < meta.first_ts) return StateRow{ts, 0, 0, 0, 0, 0, 0, 0, 0, false};
  if (ts > meta.last_ts) {
    StateRow held = scene_.columns.row(scene_.agent_rows(agent).end - 1);
    held.ts = ts;
    return held;
  }
  const auto row = scene_.row_at(agent, ts);
  if (!row) return StateRow{ts, 0, 0, 0, 0, 0, 0, 0, 0, false};
  valid = true;
  return scene_.columns.row(*row);
}

Observation SimulationScene::observation() const {
  Observation obs;
  obs.ts = current_ts_;
  std::size_t next_controlled = 0;
  for (std::size_t a = 0; a < scene_.agents.size(); ++a) {
    const auto& meta = scene_.agents[a];
    const bool is_controlled = next_controlled < controlled_.size() && controlled_[next_controlled].agent == a;
    if (is_controlled) {
      const Controlled& c = controlled_[next_controlled++];
      obs.agents.push_back({meta.id, meta.type, true, true, c.rollout.empty() ? c.prefix.back() : c.rollout.back()});
      continue;
    }
    if (meta.last_ts < init_ts_) continue;
    ObservedAgent o{meta.id, meta.type, false, false, {}};
    o.state = replay_state(a, current_ts_, o.valid);
    obs.agents.push_back(std::move(o));
  }
  return obs;
}

std::vector<AgentTrack> SimulationScene::rollout() const {
  std::vector<AgentTrack> out;
  for (const auto& c : controlled_) out.push_back({scene_.agents[c.agent], c.rollout});
  return out;
}

SceneFrame SimulationScene::simulated_scene() const {
  std::vector<AgentTrack> tracks;
  std::size_t next_controlled = 0;
  for (std::size_t a = 0; a < scene_.agents.size(); ++a) {
    AgentTrack t{scene_.agents[a], {}};
    if (next_controlled < controlled_.size() && controlled_[next_controlled].agent == a) {
      const Controlled& c = controlled_[next_controlled++];
      t.rows.push_back(c.prefix.back());
      t.rows.insert(t.rows.end(), c.rollout.begin(), c.rollout.end());
    } else {
      t.rows = rows_between(scene_, a, init_ts_, current_ts_);
    }
    if (!t.rows.empty()) tracks.push_back(std::move(t));
  }
  return make_scene(meta_of(scene_).info(), std::move(tracks));
}

SimMetrics SimulationScene::score(std::span<const VectorMap> maps) const {
  SimMetrics m;
  std::vector<double> sim_speed, sim_accel, real_speed, real_accel;
  for (const auto& c : controlled_) {
    for (const auto& r : c.rollout) {
      sim_speed.push_back(std::hypot(r.vx, r.vy));
      sim_accel.push_back(std::hypot(r.ax, r.ay));
    }
    auto real = rows_between(scene_, c.agent, scene_.agents[c.agent].first_ts, current_ts_);
    derive_xy(real, scene_.dt);
    for (const auto& r : real) {
      if (r.ts <= init_ts_) continue;
      real_speed.push_back(std::hypot(r.vx, r.vy));
      real_accel.push_back(std::hypot(r.ax, r.ay));
    }
  }
  m.n_samples = sim_speed.size();
  m.speed_distance = wasserstein1(sim_speed, real_speed);
  m.accel_distance = wasserstein1(sim_accel, real_accel);

  std::vector<AgentTrack> real_tracks;
  for (std::size_t a = 0; a < scene_.agents.size(); ++a) {
    AgentTrack t{scene_.agents[a], rows_between(scene_, a, init_ts_, current_ts_)};
    if (!t.rows.empty()) real_tracks.push_back(std::move(t));
  }
  const std::vector<SceneFrame> sim{simulated_scene()};
  const std::vector<SceneFrame> real{make_scene(meta_of(scene_).info(), std::move(real_tracks))};
  std::vector<std::string> metrics = {"collision"};
  if (!maps.empty()) metrics.push_back("offroad");
  const AnalysisConfig cfg;
  const auto sim_report = analyze(sim, metrics, cfg, maps);
  const auto real_report = analyze(real, metrics, cfg, maps);
  auto rate_of = [&](const MetricReport& r, const std::string& metric) -> std::optional<double> {
    if (r.unavailable.contains(metric)) return std::nullopt;
    auto it = r.rates.find({metric, scene_.dataset, std::string(kAllTypes)});
    if (it == r.rates.end()) return std::nullopt;
    return it->second.value();
  };
  m.collision_rate = rate_of(sim_report, "collision");
  m.real_collision_rate = rate_of(real_report, "collision");
  if (!maps.empty()) {
    m.offroad_rate = rate_of(sim_report, "offroad");
    m.real_offroad_rate = rate_of(real_report, "offroad");
  }
  return m;
}

void SimulationScene::export_csv(const fs::path& out_path) const {
  std::string text;
  if (steps() == 0 || controlled_.empty()) {
    text = std::string(kCanonicalCsvHeader) + "\n";
  } else {
    std::vector<AgentTrack> tracks;
    for (const auto& c : controlled_) {
      AgentTrack t{scene_.agents[c.agent], {c.prefix.back()}};
      t.rows.insert(t.rows.end(), c.rollout.begin(), c.rollout.end());
      tracks.push_back(std::move(t));
    }
    text = to_canonical_csv(make_scene(meta_of(scene_).info(), std::move(tracks)));
  }
  write_file_atomic(out_path.string(), text);
  fs::path meta_path = out_path;
  meta_path.replace_extension(".meta.json");
  write_file_atomic(meta_path.string(), meta_to_json(meta_of(scene_)));
}

}  // namespace trajkit
