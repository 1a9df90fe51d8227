#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "trajkit/core.hpp"
#include "trajkit/ingest.hpp"
#include "trajkit/vecmap.hpp"

namespace trajkit {

/// `bins` equal-width bins over [lo, hi].
struct BinSpec {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t bins = 1;

  static BinSpec with_step(double lo, double hi, double step);
  std::vector<double> edges() const;
  bool operator==(const BinSpec&) const = default;
};

/// Samples outside [edges.front(), edges.back()] land in the edge bins, so
/// total() always equals the number of add() calls.
struct Histogram {
  std::string metric;
  std::string dataset;
  std::string agent_type;  // "all" when pooled over types
  std::vector<double> edges;
  std::vector<std::int64_t> counts;

  static Histogram make(std::string metric, std::string dataset, std::string agent_type, const BinSpec& spec);
  void add(double value);
  std::int64_t total() const;
  /// Throws Error(kArgument) when the edges differ.
  void merge(const Histogram& other);

  bool operator==(const Histogram&) const = default;
};

struct AnalysisConfig {
  double stationary_threshold = 1.0;   // m
  double harsh_accel_threshold = 3.924;  // m/s^2
  std::int64_t density_min_agents = 2;
  /// Count events per agent-timestep instead of once per agent.
  bool per_timestep_events = false;
  /// Accumulate heading increments instead of wrapping h(t) - h(first).
  bool cumulative_heading = false;
  std::string ego_agent_id = "ego";
  std::set<AgentType> offroad_types = {AgentType::kVehicle, AgentType::kMotorcycle};
  /// Datasets whose boxes are axis-aligned (heading ignored for collisions).
  std::set<std::string> axis_aligned_datasets;
  std::map<std::string, BinSpec> bins;

  AnalysisConfig();
  const BinSpec& bins_for(const std::string& metric) const;
  void validate() const;
  bool operator==(const AnalysisConfig&) const = default;
};

/// Throws Error(kParse) on malformed JSON and Error(kValidation) on bad values.
AnalysisConfig parse_analysis_config(std::string_view json_text);
std::string analysis_config_to_json(const AnalysisConfig& cfg);

struct Rate {
  std::int64_t numerator = 0;
  std::int64_t denominator = 0;

  std::optional<double> value() const;
  bool operator==(const Rate&) const = default;
};

/// (metric, dataset, agent type)
using MetricKey = std::tuple<std::string, std::string, std::string>;

struct MetricReport {
  AnalysisConfig config;
  std::map<MetricKey, Histogram> histograms;
  std::map<MetricKey, Rate> rates;
  std::map<MetricKey, double> scalars;  // summed on merge
  std::map<std::string, std::int64_t> tallies;  // skipped samples, excluded agents
  std::map<std::string, std::string> unavailable;  // metric -> reason
  std::set<std::string> notes;
  std::int64_t scenes = 0;

  Histogram& histogram(const std::string& metric, const std::string& dataset, const std::string& type);
  Rate& rate(const std::string& metric, const std::string& dataset, const std::string& type);
  void tally(const std::string& name, std::int64_t n = 1) { tallies[name] += n; }
  /// Order-independent: counts and tallies add, notes union.
  void merge(const MetricReport& other);
};

inline constexpr std::string_view kAllTypes = "all";

/// Names accepted by analyze(), in a fixed order.
const std::vector<std::string>& metric_names();

/// Runs the named metrics over every scene. Maps are matched to scenes by
/// "dataset:location"; a single map is used for every scene. Throws
/// Error(kArgument) for an unknown metric name.
MetricReport analyze(std::span<const SceneFrame> scenes, const std::vector<std::string>& metrics,
                     const AnalysisConfig& cfg, std::span<const VectorMap> maps = {});
/// Same, loading scenes from the cache (in parallel, one scene per task).
MetricReport analyze(const SceneCache& cache, const std::vector<SceneTag>& tags,
                     const std::vector<std::string>& metrics, const AnalysisConfig& cfg,
                     std::span<const VectorMap> maps = {});

// Single-metric entry points.
MetricReport agent_population(std::span<const SceneFrame> scenes);
MetricReport simultaneous_agents(std::span<const SceneFrame> scenes, const AnalysisConfig& cfg = {});
MetricReport agent_density(std::span<const SceneFrame> scenes, const AnalysisConfig& cfg = {});
MetricReport ego_agent_distances(std::span<const SceneFrame> scenes, const AnalysisConfig& cfg = {});
MetricReport dynamics_distributions(std::span<const SceneFrame> scenes, const AnalysisConfig& cfg = {});
MetricReport stationary_fraction(std::span<const SceneFrame> scenes, const AnalysisConfig& cfg = {});
MetricReport heading_deltas(std::span<const SceneFrame> scenes, const AnalysisConfig& cfg = {});
MetricReport path_efficiency(std::span<const SceneFrame> scenes, const AnalysisConfig& cfg = {});
MetricReport collision_rate(std::span<const SceneFrame> scenes, const AnalysisConfig& cfg = {});
MetricReport harsh_accel_rate(std::span<const SceneFrame> scenes, const AnalysisConfig& cfg = {});
MetricReport offroad_rate(std::span<const SceneFrame> scenes, std::span<const VectorMap> maps,
                          const AnalysisConfig& cfg = {});

// ---------------------------------------------------------------------------
// Per-agent building blocks

/// 100 * |p_last - p_first| / path length over observed rows. Nullopt with
/// fewer than two observed rows; 100 when the path is shorter than 1e-6 m.
std::optional<double> path_efficiency_percent(std::span<const StateRow> rows);

/// Largest distance of any observed row from the first observed position.
double max_displacement(std::span<const StateRow> rows);

/// Heading change relative to the first observed row, one value per
/// observed row.
std::vector<double> heading_changes(std::span<const StateRow> rows, bool cumulative);

struct OrientedBox {
  double cx = 0.0;
  double cy = 0.0;
  double heading = 0.0;
  double length = 0.0;
  double width = 0.0;

  std::array<Point2, 4> corners() const;
};

/// Separating-axis test. Touching boxes intersect.
bool boxes_intersect(const OrientedBox& a, const OrientedBox& b);

/// Writes `<metric>__<dataset>__<type>.csv` per histogram and report.json.
void emit_report(const MetricReport& report, const std::filesystem::path& out_dir);
std::string report_to_json(const MetricReport& report);

}  // namespace trajkit
