#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trajkit/error.hpp"

namespace trajkit {

inline constexpr double kPi = 3.14159265358979323846;

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point2&) const = default;
};

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Point2 xy() const { return {x, y}; }
  bool operator==(const Point3&) const = default;
};

/// Wraps an angle in radians into (-pi, pi].
double wrap_angle(double radians);

enum class AgentType : std::uint8_t { kVehicle, kPedestrian, kBicycle, kMotorcycle, kUnknown };

inline constexpr std::array<AgentType, 5> kAllAgentTypes = {
    AgentType::kVehicle, AgentType::kPedestrian, AgentType::kBicycle,
    AgentType::kMotorcycle, AgentType::kUnknown};

std::string_view to_string(AgentType type);
std::optional<AgentType> try_parse_agent_type(std::string_view text);
/// Throws Error(kParse) for anything outside the closed set.
AgentType parse_agent_type(std::string_view text);

struct Extent {
  double length = 0.0;
  double width = 0.0;
  std::optional<double> height;

  bool operator==(const Extent&) const = default;
};

struct AgentMetadata {
  std::string id;
  AgentType type = AgentType::kUnknown;
  std::optional<Extent> extent;
  std::int64_t first_ts = 0;
  std::int64_t last_ts = 0;
  // True when headings came from the source data rather than being derived
  // from velocity. Derived headings are recomputed after resampling.
  bool heading_from_data = false;

  bool operator==(const AgentMetadata&) const = default;
};

/// Wall-clock span covered by an agent's frames, (last - first + 1) * dt.
double agent_lifetime_seconds(const AgentMetadata& meta, double dt);

/// One agent's kinematic state at one frame.
struct StateRow {
  std::int64_t ts = 0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double ax = 0.0;
  double ay = 0.0;
  double heading = 0.0;
  bool observed = true;

  bool operator==(const StateRow&) const = default;
};

/// Parallel arrays over rows, sorted by (agent_index, ts).
struct TrajectoryColumns {
  std::vector<std::int32_t> agent_index;
  std::vector<std::int64_t> ts;
  std::vector<double> x, y, z;
  std::vector<double> vx, vy;
  std::vector<double> ax, ay;
  std::vector<double> heading;
  std::vector<std::uint8_t> observed;

  std::size_t size() const { return ts.size(); }
  void reserve(std::size_t n);
  void push_back(std::int32_t agent, const StateRow& row);
  StateRow row(std::size_t i) const;

  bool operator==(const TrajectoryColumns&) const = default;
};

struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
};

/// Renders as "dataset[-split][-location]". Dataset names may not contain
/// '-', and a split must be one of known_splits(), which keeps parsing the
/// rendering unambiguous even when locations contain dashes.
struct SceneTag {
  std::string dataset;
  std::optional<std::string> split;
  std::optional<std::string> location;

  std::string render() const;
  static SceneTag parse(std::string_view text);
  static const std::vector<std::string>& known_splits();

  /// True when every component present in the tag equals the scene's.
  bool matches(std::string_view scene_dataset, std::string_view scene_split,
               std::string_view scene_location) const;

  bool operator==(const SceneTag&) const = default;
};

/// Columnar per-scene trajectory table. Treated as immutable once built.
struct SceneFrame {
  std::string scene_id;
  std::string dataset;
  std::string split;
  std::string location;
  double dt = 0.1;
  std::int64_t n_timesteps = 0;
  std::vector<AgentMetadata> agents;
  TrajectoryColumns columns;

  RowRange agent_rows(std::size_t agent) const;
  std::optional<std::size_t> row_at(std::size_t agent, std::int64_t ts) const;
  std::optional<std::size_t> find_agent(std::string_view agent_id) const;
  SceneTag tag() const;

  bool operator==(const SceneFrame&) const = default;
};

/// Per-agent row list, the row-oriented view of a SceneFrame.
struct AgentTrack {
  AgentMetadata meta;
  std::vector<StateRow> rows;

  bool operator==(const AgentTrack&) const = default;
};

struct SceneInfo {
  std::string scene_id;
  std::string dataset;
  std::string split;
  std::string location;
  double dt = 0.1;
};

/// Builds a SceneFrame from per-agent rows. Rows are sorted by ts, agent
/// first/last frames are taken from the rows, and n_timesteps covers the
/// latest frame. No imputation happens here.
SceneFrame make_scene(const SceneInfo& info, std::vector<AgentTrack> tracks);
std::vector<AgentTrack> extract_tracks(const SceneFrame& scene);
AgentTrack extract_track(const SceneFrame& scene, std::size_t agent);

struct Violation {
  std::string agent_id;  // empty for scene-level rules
  std::int64_t ts = -1;  // -1 when the rule is not tied to a frame
  std::string rule;
  std::string message;

  std::string describe() const;
};

/// Checks every SceneFrame invariant. Never throws; an empty result means
/// the scene is well-formed.
std::vector<Violation> scene_validate(const SceneFrame& scene);

}  // namespace trajkit
