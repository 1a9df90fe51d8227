#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "trajkit/core.hpp"

namespace trajkit {

// ---------------------------------------------------------------------------
// Scene metadata sidecar

struct SceneMetaRecord {
  std::string scene_id;
  double dt = 0.1;
  std::string location;
  std::string dataset;
  std::string split;

  SceneInfo info() const { return SceneInfo{scene_id, dataset, split, location, dt}; }
};

SceneMetaRecord parse_meta_json(std::string_view json_text);
std::string meta_to_json(const SceneMetaRecord& meta);
SceneMetaRecord meta_of(const SceneFrame& scene);

// ---------------------------------------------------------------------------
// Text formats

inline constexpr std::string_view kCanonicalCsvHeader =
    "scene_id,agent_id,agent_type,frame,x,y,z,heading,length,width,height";

/// Parses the canonical interchange CSV. Rows may come in any order; frames
/// are renumbered so the scene starts at 0, gaps are imputed, and all
/// kinematics are derived. Every row's scene_id must equal meta.scene_id.
SceneFrame parse_canonical_csv(std::string_view text, const SceneMetaRecord& meta);

/// Renders a scene as canonical CSV (positions, headings, extents). With
/// `observed_only`, imputed rows are left out.
std::string to_canonical_csv(const SceneFrame& scene, bool observed_only = false);

/// Whitespace-separated "frame id x y" lines (ETH/UCY style, already in
/// meters). Frame numbers are divided by their common step so the scene
/// starts at 0 with unit spacing; every agent is a pedestrian.
SceneFrame parse_frame_text(std::string_view text, const SceneMetaRecord& meta);

// ---------------------------------------------------------------------------
// Synthetic scenes with closed-form kinematics

struct StraightMotion {
  double speed = 10.0;  // m/s along +x
};

struct CircleMotion {
  double radius = 10.0;       // m
  double angular_rate = 0.1;  // rad/s, counter-clockwise
};

struct AccelPhase {
  std::int64_t start = 0;  // first frame of the phase
  std::int64_t steps = 0;  // frames in the phase
  double accel = 0.0;      // m/s^2 along +x
};

struct StopAndGoMotion {
  double initial_speed = 0.0;
  std::vector<AccelPhase> phases;

  /// Cruise, brake at `accel` for `plateau_steps` frames to a standstill,
  /// hold, then accelerate back at `accel` for `plateau_steps` frames.
  static StopAndGoMotion symmetric(double accel, std::int64_t plateau_steps, std::int64_t lead_steps,
                                   std::int64_t hold_steps, double dt);

  double accel_at(std::int64_t ts) const;
};

using SynthMotion = std::variant<StraightMotion, CircleMotion, StopAndGoMotion>;

struct SynthLayout {
  std::string scene_id = "synth_0";
  std::string dataset = "synth";
  std::string split = "train";
  std::string location = "lab";
  AgentType type = AgentType::kVehicle;
  std::optional<Extent> extent = Extent{4.5, 2.0, 1.5};
  double spacing = 20.0;  // lateral gap between agents, m
};

/// Analytic positions, velocities, accelerations and headings for
/// `n_agents` agents all alive over [0, n_timesteps).
SceneFrame synth_scene(const SynthMotion& motion, int n_agents, std::int64_t n_timesteps, double dt,
                       const SynthLayout& layout = {});

// ---------------------------------------------------------------------------
// Binary scene cache

inline constexpr std::string_view kSceneMagic{"TKSC1\0", 6};
inline constexpr std::uint32_t kSceneFormatVersion = 1;

std::vector<std::uint8_t> encode_scene(const SceneFrame& scene);
SceneFrame decode_scene(std::span<const std::uint8_t> bytes);

struct CacheEntry {
  std::string scene_id;
  std::string relative_path;  // relative to the cache root
  std::int64_t n_agents = 0;
  std::int64_t n_timesteps = 0;
  std::string dataset;
  std::string split;
  std::string location;
  double dt = 0.0;

  std::string tag() const;
  bool operator==(const CacheEntry&) const = default;
};

/// Scene entries keyed by rendered SceneTag (dataset-split-location).
struct CacheIndex {
  std::map<std::string, std::vector<CacheEntry>> by_tag;

  std::vector<CacheEntry> entries() const;
  bool operator==(const CacheIndex&) const = default;
};

/// Writes <cache>/<dataset>/<scene>.tksc and refreshes that dataset's
/// index.json. Both files are replaced atomically. Returns the scene path.
std::filesystem::path cache_write(const SceneFrame& scene, const std::filesystem::path& cache_dir);
SceneFrame cache_load(const std::filesystem::path& path);

CacheIndex read_cache_index(const std::filesystem::path& cache_dir, const std::string& dataset);
/// Rescans a dataset directory and rewrites its index.
CacheIndex rebuild_cache_index(const std::filesystem::path& cache_dir, const std::string& dataset);

class SceneCache {
 public:
  explicit SceneCache(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::vector<std::string> datasets() const;
  std::vector<CacheEntry> all() const;
  /// Entries matching any tag, deduplicated and ordered by (dataset, scene).
  /// Throws Error(kNotFound) for a tag that matches nothing.
  std::vector<CacheEntry> resolve(const std::vector<SceneTag>& tags) const;
  SceneFrame load(const CacheEntry& entry) const;
  std::optional<CacheEntry> find_scene(std::string_view scene_ref) const;

 private:
  std::filesystem::path root_;
};

std::vector<SceneTag> parse_tag_list(std::string_view comma_separated);

}  // namespace trajkit
