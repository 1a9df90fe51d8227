#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "trajkit/core.hpp"
#include "trajkit/ingest.hpp"

namespace trajkit {

/// Seconds to steps, rounding half up.
std::int64_t seconds_to_steps(double seconds, double dt);

struct WindowSpec {
  double history_min = 0.0;
  double history_max = 0.0;
  double future_min = 0.0;
  double future_max = 0.0;

  void validate() const;
};

struct FilterSpec {
  std::set<AgentType> allowed_types{kAllAgentTypes.begin(), kAllAgentTypes.end()};
  std::optional<double> max_neighbor_distance;
  std::set<std::string> datasets;  // empty: no restriction

  void validate() const;
};

enum class Centric { kAgent, kScene };

/// State layout of every batch array row.
inline constexpr std::size_t kStateDim = 8;
inline constexpr std::array<std::string_view, kStateDim> kStateNames = {"x", "y", "vx", "vy", "ax", "ay", "sin_heading",
                                                                         "cos_heading"};
using StateVector = std::array<double, kStateDim>;

/// World <- local is rotate by `rotation`, then translate by (tx, ty).
struct FrameTransform {
  double tx = 0.0;
  double ty = 0.0;
  double rotation = 0.0;

  Point2 to_local(double x, double y) const;
  Point2 to_world(double x, double y) const;
  bool operator==(const FrameTransform&) const = default;
};

struct TrajectoryWindow {
  std::vector<StateVector> states;  // zero-filled where mask is 0
  std::vector<std::uint8_t> mask;

  std::size_t valid_count() const;
  bool operator==(const TrajectoryWindow&) const = default;
};

struct NeighborHistory {
  std::string agent_id;
  AgentType type = AgentType::kUnknown;
  TrajectoryWindow history;

  bool operator==(const NeighborHistory&) const = default;
};

struct AgentBatchElement {
  std::string dataset;
  std::string scene_id;
  std::string agent_id;
  AgentType agent_type = AgentType::kUnknown;
  std::int64_t current_ts = 0;
  double dt = 0.0;
  TrajectoryWindow history;  // H + 1 slots, the last one is current_ts
  TrajectoryWindow future;   // F slots, current_ts + 1 .. current_ts + F
  std::vector<NeighborHistory> neighbors;
  FrameTransform frame;

  bool operator==(const AgentBatchElement&) const = default;
};

struct SceneAgentSlot {
  std::string agent_id;
  AgentType type = AgentType::kUnknown;
  TrajectoryWindow history;
  TrajectoryWindow future;

  bool operator==(const SceneAgentSlot&) const = default;
};

/// All qualifying agents at one scene timestep, in the frame of the first
/// of them (by agent id).
struct SceneBatchElement {
  std::string dataset;
  std::string scene_id;
  std::int64_t current_ts = 0;
  double dt = 0.0;
  std::vector<SceneAgentSlot> agents;
  FrameTransform frame;

  bool operator==(const SceneBatchElement&) const = default;
};

struct IndexEntry {
  std::size_t scene = 0;
  std::int64_t ts = 0;
  std::vector<std::size_t> agents;  // one agent for agent-centric entries
};

class BatchIndex {
 public:
  /// Agent-centric: one entry per qualifying (scene, agent, ts), ordered by
  /// (dataset, scene, agent id, ts). Scene-centric: one entry per (scene, ts)
  /// with at least one qualifying agent. Throws Error(kEmpty) when nothing
  /// qualifies.
  static BatchIndex build(std::vector<SceneFrame> scenes, Centric centric, const WindowSpec& window,
                          const FilterSpec& filter, std::optional<double> desired_dt = std::nullopt);

  static BatchIndex build(const SceneCache& cache, const std::vector<SceneTag>& tags, Centric centric,
                          const WindowSpec& window, const FilterSpec& filter,
                          std::optional<double> desired_dt = std::nullopt);

  std::size_t size() const { return entries_.size(); }
  Centric centric() const { return centric_; }
  const std::vector<IndexEntry>& entries() const { return entries_; }
  const SceneFrame& scene(std::size_t i) const { return scenes_->at(i); }
  std::size_t scene_count() const { return scenes_->size(); }
  const WindowSpec& window() const { return window_; }

  std::int64_t history_steps(std::size_t scene) const;
  std::int64_t future_steps(std::size_t scene) const;

  /// Agent-centric element i (for scene-centric indices, the first agent of
  /// entry i). Throws Error(kArgument) when i is out of range.
  AgentBatchElement get_element(std::size_t i) const;
  SceneBatchElement get_scene_element(std::size_t i) const;

 private:
  AgentBatchElement make_agent_element(std::size_t scene, std::size_t agent, std::int64_t ts) const;

  std::shared_ptr<const std::vector<SceneFrame>> scenes_;
  std::vector<IndexEntry> entries_;
  Centric centric_ = Centric::kAgent;
  WindowSpec window_;
  FilterSpec filter_;
};

/// Agent-centric elements stacked into dense arrays, padded over neighbors.
struct AgentBatch {
  std::size_t batch_size = 0;
  std::size_t history_len = 0;  // H + 1
  std::size_t future_len = 0;   // F
  std::size_t max_neighbors = 0;

  std::vector<double> ego_history;           // [B, H+1, 8]
  std::vector<std::uint8_t> ego_history_mask;  // [B, H+1]
  std::vector<double> ego_future;            // [B, F, 8]
  std::vector<std::uint8_t> ego_future_mask;   // [B, F]
  std::vector<double> neighbor_history;      // [B, N, H+1, 8]
  std::vector<std::uint8_t> neighbor_history_mask;  // [B, N, H+1]
  std::vector<std::int32_t> neighbor_type;   // [B, N], -1 for padding
  std::vector<std::int32_t> neighbor_count;  // [B]
  std::vector<std::vector<std::string>> neighbor_ids;

  struct ElementInfo {
    std::string dataset;
    std::string scene_id;
    std::string agent_id;
    AgentType agent_type = AgentType::kUnknown;
    std::int64_t current_ts = 0;
    double dt = 0.0;
    FrameTransform frame;
  };
  std::vector<ElementInfo> info;
};

/// Throws Error(kArgument) for an empty input or mixed window shapes.
AgentBatch collate(std::span<const AgentBatchElement> elements);
std::vector<AgentBatchElement> unpad(const AgentBatch& batch);

/// Adds N(0, sigma^2) noise to the x/y of valid history slots, current step
/// included. Deterministic for a given seed.
AgentBatchElement augment_noise(const AgentBatchElement& element, double sigma, std::uint64_t seed);

struct ExportSummary {
  std::size_t num_elements = 0;
  std::size_t num_batches = 0;
  std::filesystem::path manifest;
};

inline constexpr std::size_t kDefaultExportBatchSize = 64;

/// Writes batch_NNNNN.bin files (f32 little-endian arrays back to back) and
/// manifest.json describing names, shapes, dimension names, byte offsets and
/// per-element provenance.
ExportSummary export_batches(const BatchIndex& index, const std::filesystem::path& out_dir,
                             std::size_t batch_size = kDefaultExportBatchSize);

}  // namespace trajkit
