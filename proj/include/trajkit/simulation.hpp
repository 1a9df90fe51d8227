#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "trajkit/analysis.hpp"
#include "trajkit/core.hpp"
#include "trajkit/vecmap.hpp"

namespace trajkit {

/// First Wasserstein distance between two empirical 1-D samples, the
/// integral of |F - G|. Zero when either sample is empty.
double wasserstein1(std::span<const double> a, std::span<const double> b);

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

struct ObservedAgent {
  std::string agent_id;
  AgentType type = AgentType::kUnknown;
  bool controlled = false;
  bool valid = false;  // false before birth and after death
  StateRow state;      // zeros before birth, last state after death
};

struct Observation {
  std::int64_t ts = 0;
  std::vector<ObservedAgent> agents;  // scene agent order
};

struct SimMetrics {
  std::optional<double> collision_rate;  // nullopt without eligible agents
  std::optional<double> real_collision_rate;
  std::optional<double> offroad_rate;  // nullopt without a usable map
  std::optional<double> real_offroad_rate;
  double speed_distance = 0.0;  // W1, m/s
  double accel_distance = 0.0;  // W1, m/s^2
  std::size_t n_samples = 0;
};

std::string sim_metrics_to_json(const SimMetrics& m);

/// Log-replay environment over one scene. Controlled agents take poses from
/// the caller; every other agent replays its recorded rows.
class SimulationScene {
 public:
  /// Throws Error(kArgument) when init_ts is outside the scene or a
  /// controlled agent is not alive at init_ts, Error(kNotFound) for an
  /// unknown agent id.
  static SimulationScene reset(SceneFrame scene, std::int64_t init_ts, const std::set<std::string>& controlled);

  /// Advances one frame. `poses` must cover exactly the controlled agents
  /// with finite values, otherwise Error(kArgument).
  Observation step(const std::map<std::string, Pose>& poses);

  Observation observation() const;
  std::int64_t init_ts() const { return init_ts_; }
  std::int64_t current_ts() const { return current_ts_; }
  std::int64_t steps() const { return current_ts_ - init_ts_; }
  const SceneFrame& scene() const { return scene_; }
  const std::set<std::string>& controlled() const { return controlled_ids_; }

  /// Simulated rows after init_ts, per controlled agent.
  std::vector<AgentTrack> rollout() const;
  /// Every agent over [init_ts, current_ts] with controlled agents replaced
  /// by their rollout.
  SceneFrame simulated_scene() const;

  /// Collision and off-road rates on the simulated window next to the real
  /// window's, plus W1 distances of controlled-agent speed and |accel|. The
  /// real reference re-derives kinematics from positions over the same
  /// window with the same estimator as the rollout.
  SimMetrics score(std::span<const VectorMap> maps = {}) const;

  /// Canonical CSV of the controlled agents over [init_ts, current_ts] plus
  /// `<stem>.meta.json` next to it. Header only without steps or controlled
  /// agents.
  void export_csv(const std::filesystem::path& out_path) const;

 private:
  struct Controlled {
    std::size_t agent = 0;
    std::vector<StateRow> prefix;   // real rows up to and including init_ts
    std::vector<StateRow> rollout;  // after init_ts
  };

  StateRow replay_state(std::size_t agent, std::int64_t ts, bool& valid) const;
  void rederive(Controlled& c) const;

  SceneFrame scene_;
  std::int64_t init_ts_ = 0;
  std::int64_t current_ts_ = 0;
  std::set<std::string> controlled_ids_;
  std::vector<Controlled> controlled_;  // scene agent order
};

}  // namespace trajkit
