#include "trajkit/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_set>

namespace trajkit {

double wrap_angle(double radians) {
  double r = std::remainder(radians, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  if (r > kPi) r -= 2.0 * kPi;
  return r;
}

std::string_view to_string(AgentType type) {
  switch (type) {
    case AgentType::kVehicle: return "vehicle";
    case AgentType::kPedestrian: return "pedestrian";
    case AgentType::kBicycle: return "bicycle";
    case AgentType::kMotorcycle: return "motorcycle";
    case AgentType::kUnknown: return "unknown";
  }
  return "unknown";
}

std::optional<AgentType> try_parse_agent_type(std::string_view text) {
  for (AgentType t : kAllAgentTypes) {
    if (to_string(t) == text) return t;
  }
  return std::nullopt;
}

AgentType parse_agent_type(std::string_view text) {
  if (auto t = try_parse_agent_type(text)) return *t;
  throw Error(ErrorKind::kParse, "unknown agent type '" + std::string(text) + "'");
}

double agent_lifetime_seconds(const AgentMetadata& meta, double dt) {
  return static_cast<double>(meta.last_ts - meta.first_ts + 1) * dt;
}

void TrajectoryColumns::reserve(std::size_t n) {
  agent_index.reserve(n);
  ts.reserve(n);
  for (auto* col : {&x, &y, &z, &vx, &vy, &ax, &ay, &heading}) col->reserve(n);
  observed.reserve(n);
}

void TrajectoryColumns::push_back(std::int32_t agent, const StateRow& row) {
  agent_index.push_back(agent);
  ts.push_back(row.ts);
  x.push_back(row.x);
  y.push_back(row.y);
  z.push_back(row.z);
  vx.push_back(row.vx);
  vy.push_back(row.vy);
  ax.push_back(row.ax);
  ay.push_back(row.ay);
  heading.push_back(row.heading);
  observed.push_back(row.observed ? 1 : 0);
}

StateRow TrajectoryColumns::row(std::size_t i) const {
  return StateRow{ts[i], x[i], y[i], z[i], vx[i], vy[i], ax[i], ay[i], heading[i], observed[i] != 0};
}

// ---------------------------------------------------------------------------
// SceneTag

const std::vector<std::string>& SceneTag::known_splits() {
  static const std::vector<std::string> splits = {
      "train", "val", "test", "trainval", "mini_train", "mini_val", "all"};
  return splits;
}

namespace {

bool is_known_split(std::string_view s) {
  const auto& splits = SceneTag::known_splits();
  return std::find(splits.begin(), splits.end(), s) != splits.end();
}

}  // namespace

std::string SceneTag::render() const {
  std::string out = dataset;
  if (split) out += "-" + *split;
  if (location) out += "-" + *location;
  return out;
}

SceneTag SceneTag::parse(std::string_view text) {
  if (text.empty()) throw Error(ErrorKind::kParse, "empty scene tag");
  SceneTag tag;
  const auto dash = text.find('-');
  tag.dataset = std::string(text.substr(0, dash));
  if (tag.dataset.empty()) throw Error(ErrorKind::kParse, "scene tag '" + std::string(text) + "' has no dataset");
  if (dash == std::string_view::npos) return tag;

  std::string_view rest = text.substr(dash + 1);
  if (rest.empty()) throw Error(ErrorKind::kParse, "scene tag '" + std::string(text) + "' ends with '-'");
  const auto next = rest.find('-');
  std::string_view head = rest.substr(0, next);
  if (is_known_split(head)) {
    tag.split = std::string(head);
    if (next != std::string_view::npos) {
      std::string_view loc = rest.substr(next + 1);
      if (loc.empty()) throw Error(ErrorKind::kParse, "scene tag '" + std::string(text) + "' ends with '-'");
      tag.location = std::string(loc);
    }
  } else {
    tag.location = std::string(rest);
  }
  return tag;
}

bool SceneTag::matches(std::string_view scene_dataset, std::string_view scene_split,
                       std::string_view scene_location) const {
  if (dataset != scene_dataset) return false;
  if (split && *split != scene_split) return false;
  if (location && *location != scene_location) return false;
  return true;
}

// ---------------------------------------------------------------------------
// SceneFrame

RowRange SceneFrame::agent_rows(std::size_t agent) const {
  const auto& idx = columns.agent_index;
  const auto a = static_cast<std::int32_t>(agent);
  auto [lo, hi] = std::equal_range(idx.begin(), idx.end(), a);
  return RowRange{static_cast<std::size_t>(lo - idx.begin()), static_cast<std::size_t>(hi - idx.begin())};
}

std::optional<std::size_t> SceneFrame::row_at(std::size_t agent, std::int64_t t) const {
  const RowRange r = agent_rows(agent);
  auto first = columns.ts.begin() + static_cast<std::ptrdiff_t>(r.begin);
  auto last = columns.ts.begin() + static_cast<std::ptrdiff_t>(r.end);
  auto it = std::lower_bound(first, last, t);
  if (it == last || *it != t) return std::nullopt;
  return static_cast<std::size_t>(it - columns.ts.begin());
}

std::optional<std::size_t> SceneFrame::find_agent(std::string_view agent_id) const {
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (agents[i].id == agent_id) return i;
  }
  return std::nullopt;
}

SceneTag SceneFrame::tag() const {
  SceneTag t;
  t.dataset = dataset;
  if (!split.empty()) t.split = split;
  if (!location.empty()) t.location = location;
  return t;
}

SceneFrame make_scene(const SceneInfo& info, std::vector<AgentTrack> tracks) {
  SceneFrame scene;
  scene.scene_id = info.scene_id;
  scene.dataset = info.dataset;
  scene.split = info.split;
  scene.location = info.location;
  scene.dt = info.dt;

  std::size_t total = 0;
  for (const auto& t : tracks) total += t.rows.size();
  scene.columns.reserve(total);

  std::int64_t last_frame = -1;
  scene.agents.reserve(tracks.size());
  for (std::size_t a = 0; a < tracks.size(); ++a) {
    AgentTrack& track = tracks[a];
    std::stable_sort(track.rows.begin(), track.rows.end(),
                     [](const StateRow& l, const StateRow& r) { return l.ts < r.ts; });
    if (!track.rows.empty()) {
      track.meta.first_ts = track.rows.front().ts;
      track.meta.last_ts = track.rows.back().ts;
    }
    last_frame = std::max(last_frame, track.meta.last_ts);
    for (const auto& row : track.rows) scene.columns.push_back(static_cast<std::int32_t>(a), row);
    scene.agents.push_back(std::move(track.meta));
  }
  scene.n_timesteps = last_frame + 1;
  return scene;
}

AgentTrack extract_track(const SceneFrame& scene, std::size_t agent) {
  AgentTrack track;
  track.meta = scene.agents.at(agent);
  const RowRange r = scene.agent_rows(agent);
  track.rows.reserve(r.size());
  for (std::size_t i = r.begin; i < r.end; ++i) track.rows.push_back(scene.columns.row(i));
  return track;
}

std::vector<AgentTrack> extract_tracks(const SceneFrame& scene) {
  std::vector<AgentTrack> tracks;
  tracks.reserve(scene.agents.size());
  for (std::size_t a = 0; a < scene.agents.size(); ++a) tracks.push_back(extract_track(scene, a));
  return tracks;
}

// ---------------------------------------------------------------------------
// Validation

std::string Violation::describe() const {
  std::ostringstream os;
  os << rule << ": " << message;
  if (!agent_id.empty()) os << " [agent " << agent_id << "]";
  if (ts >= 0) os << " [ts " << ts << "]";
  return os.str();
}

std::vector<Violation> scene_validate(const SceneFrame& scene) {
  std::vector<Violation> out;
  auto add = [&out](std::string agent, std::int64_t ts, std::string rule, std::string msg) {
    out.push_back(Violation{std::move(agent), ts, std::move(rule), std::move(msg)});
  };

  if (!(scene.dt > 0.0) || !std::isfinite(scene.dt)) add("", -1, "dt", "dt must be positive and finite");

  const auto& c = scene.columns;
  const std::size_t n = c.ts.size();
  for (std::size_t len : {c.agent_index.size(), c.x.size(), c.y.size(), c.z.size(), c.vx.size(),
                          c.vy.size(), c.ax.size(), c.ay.size(), c.heading.size(), c.observed.size()}) {
    if (len != n) {
      add("", -1, "columns", "column lengths differ");
      return out;
    }
  }

  std::unordered_set<std::string> ids;
  for (const auto& meta : scene.agents) {
    if (meta.id.empty()) add("", -1, "agent_id", "empty agent id");
    if (!ids.insert(meta.id).second) add(meta.id, -1, "agent_id", "agent id is not unique");
    if (meta.first_ts > meta.last_ts) add(meta.id, meta.first_ts, "lifetime", "first_ts after last_ts");
    if (meta.first_ts < 0) add(meta.id, meta.first_ts, "lifetime", "negative first_ts");
    if (meta.last_ts >= scene.n_timesteps) add(meta.id, meta.last_ts, "lifetime", "last_ts beyond n_timesteps");
    if (meta.extent) {
      if (!(meta.extent->length > 0.0) || !(meta.extent->width > 0.0)) {
        add(meta.id, -1, "extent", "extent length and width must be positive");
      }
    }
  }

  auto agent_name = [&scene](std::int32_t a) {
    return (a >= 0 && static_cast<std::size_t>(a) < scene.agents.size()) ? scene.agents[a].id
                                                                          : "#" + std::to_string(a);
  };

  std::vector<std::set<std::int64_t>> frames(scene.agents.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t a = c.agent_index[i];
    if (a < 0 || static_cast<std::size_t>(a) >= scene.agents.size()) {
      add(agent_name(a), c.ts[i], "agent_index", "row references a missing agent");
      continue;
    }
    if (i > 0) {
      const auto prev = std::pair{c.agent_index[i - 1], c.ts[i - 1]};
      const auto cur = std::pair{a, c.ts[i]};
      if (cur < prev) add(agent_name(a), c.ts[i], "order", "rows not sorted by (agent, ts)");
    }
    if (!frames[a].insert(c.ts[i]).second) {
      add(agent_name(a), c.ts[i], "duplicate", "duplicate (agent, ts) row");
    }
    const double h = c.heading[i];
    if (!(h > -kPi && h <= kPi)) add(agent_name(a), c.ts[i], "heading", "heading outside (-pi, pi]");
    for (double v : {c.x[i], c.y[i], c.z[i], c.vx[i], c.vy[i], c.ax[i], c.ay[i]}) {
      if (!std::isfinite(v)) {
        add(agent_name(a), c.ts[i], "finite", "non-finite state value");
        break;
      }
    }
  }

  for (std::size_t a = 0; a < scene.agents.size(); ++a) {
    const auto& meta = scene.agents[a];
    const auto& fs = frames[a];
    if (fs.empty()) {
      add(meta.id, -1, "gap", "agent has no rows");
      continue;
    }
    for (std::int64_t t : fs) {
      if (t < meta.first_ts || t > meta.last_ts) add(meta.id, t, "range", "row outside agent lifetime");
    }
    // One violation per run of missing frames.
    std::int64_t t = meta.first_ts;
    while (t <= meta.last_ts) {
      if (fs.count(t)) {
        ++t;
        continue;
      }
      const std::int64_t gap_start = t;
      while (t <= meta.last_ts && !fs.count(t)) ++t;
      add(meta.id, gap_start, "gap",
          "missing frames " + std::to_string(gap_start) + ".." + std::to_string(t - 1));
    }
  }
  return out;
}

}  // namespace trajkit
