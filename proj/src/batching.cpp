#include "trajkit/batching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <tuple>

#include <nlohmann/json.hpp>

#include "trajkit/bytes.hpp"
#include "trajkit/kinematics.hpp"

namespace trajkit {

namespace fs = std::filesystem;
using nlohmann::json;

std::int64_t seconds_to_steps(double seconds, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::kArgument, "dt must be positive");
  // The small slack absorbs representation error in s/dt (0.3 / 0.1 etc).
  return static_cast<std::int64_t>(std::floor(seconds / dt + 0.5 + 1e-9));
}

void WindowSpec::validate() const {
  auto check = [](double lo, double hi, const char* name) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo < 0.0 || lo > hi) {
      throw Error(ErrorKind::kArgument, std::string(name) + " window needs 0 <= min <= max");
    }
  };
  check(history_min, history_max, "history");
  check(future_min, future_max, "future");
}

void FilterSpec::validate() const {
  if (allowed_types.empty()) throw Error(ErrorKind::kArgument, "filter allows no agent types");
  if (max_neighbor_distance && !(*max_neighbor_distance >= 0.0)) {
    throw Error(ErrorKind::kArgument, "max neighbor distance must be non-negative");
  }
}

Point2 FrameTransform::to_local(double x, double y) const {
  const double dx = x - tx;
  const double dy = y - ty;
  const double c = std::cos(rotation);
  const double s = std::sin(rotation);
  return {c * dx + s * dy, -s * dx + c * dy};
}

Point2 FrameTransform::to_world(double x, double y) const {
  const double c = std::cos(rotation);
  const double s = std::sin(rotation);
  return {c * x - s * y + tx, s * x + c * y + ty};
}

std::size_t TrajectoryWindow::valid_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

namespace {

StateVector to_state(const StateRow& r, const FrameTransform& f) {
  const double c = std::cos(f.rotation);
  const double s = std::sin(f.rotation);
  const double dx = r.x - f.tx;
  const double dy = r.y - f.ty;
  const double h = r.heading - f.rotation;
  return {c * dx + s * dy, -s * dx + c * dy, c * r.vx + s * r.vy, -s * r.vx + c * r.vy,
          c * r.ax + s * r.ay, -s * r.ax + c * r.ay, std::sin(h), std::cos(h)};
}

TrajectoryWindow extract_window(const SceneFrame& scene, std::size_t agent, std::int64_t from, std::int64_t count,
                                const FrameTransform& frame) {
  TrajectoryWindow w;
  w.states.assign(static_cast<std::size_t>(count), StateVector{});
  w.mask.assign(static_cast<std::size_t>(count), 0);
  const RowRange rows = scene.agent_rows(agent);
  const auto& ts = scene.columns.ts;
  auto it = std::lower_bound(ts.begin() + static_cast<std::ptrdiff_t>(rows.begin),
                             ts.begin() + static_cast<std::ptrdiff_t>(rows.end), from);
  for (auto i = static_cast<std::size_t>(it - ts.begin()); i < rows.end && ts[i] < from + count; ++i) {
    const auto slot = static_cast<std::size_t>(ts[i] - from);
    w.states[slot] = to_state(scene.columns.row(i), frame);
    w.mask[slot] = 1;
  }
  return w;
}

FrameTransform frame_of(const SceneFrame& scene, std::size_t agent, std::int64_t ts) {
  const auto row = scene.row_at(agent, ts);
  if (!row) throw Error(ErrorKind::kArgument, "agent has no state at the current timestep");
  return {scene.columns.x[*row], scene.columns.y[*row], scene.columns.heading[*row]};
}

// Agent indices of a scene in id order.
std::vector<std::size_t> agents_by_id(const SceneFrame& scene) {
  std::vector<std::size_t> order(scene.agents.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scene.agents[a].id < scene.agents[b].id; });
  return order;
}

struct StepCounts {
  std::int64_t h_min, h_max, f_min, f_max;
};

StepCounts steps_for(const WindowSpec& w, double dt) {
  return {seconds_to_steps(w.history_min, dt), seconds_to_steps(w.history_max, dt),
          seconds_to_steps(w.future_min, dt), seconds_to_steps(w.future_max, dt)};
}

// Timesteps at which `agent` qualifies as a predicted agent.
std::vector<std::int64_t> qualifying_steps(const SceneFrame& scene, std::size_t agent, const StepCounts& steps) {
  const RowRange rows = scene.agent_rows(agent);
  if (rows.empty()) return {};
  const std::int64_t first = scene.agents[agent].first_ts;
  const std::int64_t last = scene.agents[agent].last_ts;
  // prefix[k] = observed rows with ts < first + k
  std::vector<std::int64_t> prefix(static_cast<std::size_t>(last - first + 2), 0);
  std::vector<std::uint8_t> obs(static_cast<std::size_t>(last - first + 1), 0);
  for (std::size_t i = rows.begin; i < rows.end; ++i) {
    if (scene.columns.observed[i]) obs[static_cast<std::size_t>(scene.columns.ts[i] - first)] = 1;
  }
  for (std::size_t k = 0; k < obs.size(); ++k) prefix[k + 1] = prefix[k] + obs[k];
  auto count = [&](std::int64_t lo, std::int64_t hi) {  // observed in [lo, hi]
    lo = std::max(lo, first);
    hi = std::min(hi, last);
    if (lo > hi) return std::int64_t{0};
    return prefix[static_cast<std::size_t>(hi - first + 1)] - prefix[static_cast<std::size_t>(lo - first)];
  };
  std::vector<std::int64_t> out;
  for (std::int64_t t = first; t <= last; ++t) {
    if (!obs[static_cast<std::size_t>(t - first)]) continue;
    if (count(t - steps.h_max, t - 1) < steps.h_min) continue;
    if (count(t + 1, t + steps.f_max) < steps.f_min) continue;
    out.push_back(t);
  }
  return out;
}

}  // namespace

BatchIndex BatchIndex::build(std::vector<SceneFrame> scenes, Centric centric, const WindowSpec& window,
                             const FilterSpec& filter, std::optional<double> desired_dt) {
  window.validate();
  filter.validate();

  if (!filter.datasets.empty()) {
    std::erase_if(scenes, [&](const SceneFrame& s) { return !filter.datasets.contains(s.dataset); });
  }
  if (desired_dt) {
    for (auto& s : scenes) s = resample_scene(s, *desired_dt);
  }
  std::sort(scenes.begin(), scenes.end(), [](const SceneFrame& a, const SceneFrame& b) {
    return std::tie(a.dataset, a.scene_id) < std::tie(b.dataset, b.scene_id);
  });

  BatchIndex index;
  index.centric_ = centric;
  index.window_ = window;
  index.filter_ = filter;

  for (std::size_t si = 0; si < scenes.size(); ++si) {
    const SceneFrame& scene = scenes[si];
    const StepCounts steps = steps_for(window, scene.dt);
    std::map<std::int64_t, std::vector<std::size_t>> by_ts;  // scene-centric only
    for (std::size_t a : agents_by_id(scene)) {
      if (!filter.allowed_types.contains(scene.agents[a].type)) continue;
      for (std::int64_t t : qualifying_steps(scene, a, steps)) {
        if (centric == Centric::kAgent) {
          index.entries_.push_back({si, t, {a}});
        } else {
          by_ts[t].push_back(a);
        }
      }
    }
    for (auto& [t, agents] : by_ts) index.entries_.push_back({si, t, std::move(agents)});
  }

  if (index.entries_.empty()) {
    throw Error(ErrorKind::kEmpty, "no elements satisfy history >= " + format_double(window.history_min) +
                                       " s, future >= " + format_double(window.future_min) +
                                       " s and the agent filter");
  }
  index.scenes_ = std::make_shared<const std::vector<SceneFrame>>(std::move(scenes));
  return index;
}

BatchIndex BatchIndex::build(const SceneCache& cache, const std::vector<SceneTag>& tags, Centric centric,
                             const WindowSpec& window, const FilterSpec& filter, std::optional<double> desired_dt) {
  std::vector<SceneFrame> scenes;
  for (const auto& entry : cache.resolve(tags)) scenes.push_back(cache.load(entry));
  return build(std::move(scenes), centric, window, filter, desired_dt);
}

std::int64_t BatchIndex::history_steps(std::size_t scene) const {
  return seconds_to_steps(window_.history_max, scenes_->at(scene).dt);
}

std::int64_t BatchIndex::future_steps(std::size_t scene) const {
  return seconds_to_steps(window_.future_max, scenes_->at(scene).dt);
}

AgentBatchElement BatchIndex::make_agent_element(std::size_t si, std::size_t agent, std::int64_t ts) const {
  const SceneFrame& scene = scenes_->at(si);
  const std::int64_t h = history_steps(si);
  const std::int64_t f = future_steps(si);

  AgentBatchElement e;
  e.dataset = scene.dataset;
  e.scene_id = scene.scene_id;
  e.agent_id = scene.agents[agent].id;
  e.agent_type = scene.agents[agent].type;
  e.current_ts = ts;
  e.dt = scene.dt;
  e.frame = frame_of(scene, agent, ts);
  e.history = extract_window(scene, agent, ts - h, h + 1, e.frame);
  e.future = extract_window(scene, agent, ts + 1, f, e.frame);

  const Point2 ego{e.frame.tx, e.frame.ty};
  struct Candidate {
    double distance;
    std::size_t agent;
  };
  std::vector<Candidate> candidates;
  for (std::size_t other = 0; other < scene.agents.size(); ++other) {
    if (other == agent) continue;
    const auto row = scene.row_at(other, ts);
    if (!row || !scene.columns.observed[*row]) continue;
    const double d = std::hypot(scene.columns.x[*row] - ego.x, scene.columns.y[*row] - ego.y);
    if (filter_.max_neighbor_distance && d > *filter_.max_neighbor_distance) continue;
    candidates.push_back({d, other});
  }
  std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return scene.agents[a.agent].id < scene.agents[b.agent].id;
  });
  for (const auto& c : candidates) {
    e.neighbors.push_back(
        {scene.agents[c.agent].id, scene.agents[c.agent].type, extract_window(scene, c.agent, ts - h, h + 1, e.frame)});
  }
  return e;
}

AgentBatchElement BatchIndex::get_element(std::size_t i) const {
  if (i >= entries_.size()) {
    throw Error(ErrorKind::kArgument,
                "element " + std::to_string(i) + " out of range for index of size " + std::to_string(entries_.size()));
  }
  const IndexEntry& entry = entries_[i];
  return make_agent_element(entry.scene, entry.agents.front(), entry.ts);
}

SceneBatchElement BatchIndex::get_scene_element(std::size_t i) const {
  if (i >= entries_.size()) {
    throw Error(ErrorKind::kArgument,
                "element " + std::to_string(i) + " out of range for index of size " + std::to_string(entries_.size()));
  }
  const IndexEntry& entry = entries_[i];
  const SceneFrame& scene = scenes_->at(entry.scene);
  const std::int64_t h = history_steps(entry.scene);
  const std::int64_t f = future_steps(entry.scene);

  SceneBatchElement e;
  e.dataset = scene.dataset;
  e.scene_id = scene.scene_id;
  e.current_ts = entry.ts;
  e.dt = scene.dt;
  e.frame = frame_of(scene, entry.agents.front(), entry.ts);
  for (std::size_t a : entry.agents) {
    e.agents.push_back({scene.agents[a].id, scene.agents[a].type,
                        extract_window(scene, a, entry.ts - h, h + 1, e.frame),
                        extract_window(scene, a, entry.ts + 1, f, e.frame)});
  }
  return e;
}

// ---------------------------------------------------------------------------
// Collation

namespace {

template <typename T>
void append_window(std::vector<double>& states, std::vector<T>& mask, const TrajectoryWindow& w) {
  for (const auto& s : w.states) states.insert(states.end(), s.begin(), s.end());
  mask.insert(mask.end(), w.mask.begin(), w.mask.end());
}

TrajectoryWindow read_window(const std::vector<double>& states, const std::vector<std::uint8_t>& mask,
                             std::size_t offset, std::size_t len) {
  TrajectoryWindow w;
  w.states.resize(len);
  w.mask.assign(mask.begin() + static_cast<std::ptrdiff_t>(offset),
                mask.begin() + static_cast<std::ptrdiff_t>(offset + len));
  for (std::size_t k = 0; k < len; ++k) {
    std::copy_n(states.begin() + static_cast<std::ptrdiff_t>((offset + k) * kStateDim), kStateDim,
                w.states[k].begin());
  }
  return w;
}

}  // namespace

AgentBatch collate(std::span<const AgentBatchElement> elements) {
  if (elements.empty()) throw Error(ErrorKind::kArgument, "cannot collate an empty element list");
  AgentBatch b;
  b.batch_size = elements.size();
  b.history_len = elements.front().history.states.size();
  b.future_len = elements.front().future.states.size();
  for (const auto& e : elements) {
    bool same = e.history.states.size() == b.history_len && e.future.states.size() == b.future_len;
    for (const auto& n : e.neighbors) same = same && n.history.states.size() == b.history_len;
    if (!same) throw Error(ErrorKind::kArgument, "elements have mixed window shapes");
    b.max_neighbors = std::max(b.max_neighbors, e.neighbors.size());
  }

  const TrajectoryWindow empty{std::vector<StateVector>(b.history_len), std::vector<std::uint8_t>(b.history_len, 0)};
  for (const auto& e : elements) {
    append_window(b.ego_history, b.ego_history_mask, e.history);
    append_window(b.ego_future, b.ego_future_mask, e.future);
    std::vector<std::string> ids;
    for (std::size_t k = 0; k < b.max_neighbors; ++k) {
      if (k < e.neighbors.size()) {
        append_window(b.neighbor_history, b.neighbor_history_mask, e.neighbors[k].history);
        b.neighbor_type.push_back(static_cast<std::int32_t>(e.neighbors[k].type));
        ids.push_back(e.neighbors[k].agent_id);
      } else {
        append_window(b.neighbor_history, b.neighbor_history_mask, empty);
        b.neighbor_type.push_back(-1);
      }
    }
    b.neighbor_count.push_back(static_cast<std::int32_t>(e.neighbors.size()));
    b.neighbor_ids.push_back(std::move(ids));
    b.info.push_back({e.dataset, e.scene_id, e.agent_id, e.agent_type, e.current_ts, e.dt, e.frame});
  }
  return b;
}

std::vector<AgentBatchElement> unpad(const AgentBatch& b) {
  std::vector<AgentBatchElement> out;
  out.reserve(b.batch_size);
  for (std::size_t i = 0; i < b.batch_size; ++i) {
    const auto& info = b.info[i];
    AgentBatchElement e;
    e.dataset = info.dataset;
    e.scene_id = info.scene_id;
    e.agent_id = info.agent_id;
    e.agent_type = info.agent_type;
    e.current_ts = info.current_ts;
    e.dt = info.dt;
    e.frame = info.frame;
    e.history = read_window(b.ego_history, b.ego_history_mask, i * b.history_len, b.history_len);
    e.future = read_window(b.ego_future, b.ego_future_mask, i * b.future_len, b.future_len);
    const auto count = static_cast<std::size_t>(b.neighbor_count[i]);
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t slot = i * b.max_neighbors + k;
      e.neighbors.push_back({b.neighbor_ids[i][k], static_cast<AgentType>(b.neighbor_type[slot]),
                             read_window(b.neighbor_history, b.neighbor_history_mask, slot * b.history_len,
                                         b.history_len)});
    }
    out.push_back(std::move(e));
  }
  return out;
}

AgentBatchElement augment_noise(const AgentBatchElement& element, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw Error(ErrorKind::kArgument, "noise sigma must be >= 0");
  AgentBatchElement out = element;
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (std::size_t k = 0; k < out.history.states.size(); ++k) {
    if (!out.history.mask[k]) continue;
    out.history.states[k][0] += noise(rng);
    out.history.states[k][1] += noise(rng);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Export

namespace {

struct ArrayWriter {
  ByteWriter bytes;
  json arrays = json::array();

  template <typename T>
  void add(std::string name, const std::vector<T>& values, std::vector<std::size_t> shape,
           std::vector<std::string> dims) {
    const std::size_t offset = bytes.size();
    for (T v : values) bytes.f32(static_cast<float>(v));
    arrays.push_back({{"name", std::move(name)},
                      {"shape", std::move(shape)},
                      {"dims", std::move(dims)},
                      {"offset", offset},
                      {"nbytes", bytes.size() - offset}});
  }
};

std::string batch_file_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "batch_%05zu.bin", k);
  return buf;
}

json frame_json(const FrameTransform& f) { return {{"tx", f.tx}, {"ty", f.ty}, {"rotation", f.rotation}}; }

json agent_batch_json(const AgentBatch& b, ArrayWriter& w) {
  const std::size_t n = b.batch_size, h = b.history_len, f = b.future_len, m = b.max_neighbors, d = kStateDim;
  w.add("ego_history", b.ego_history, {n, h, d}, {"batch", "time", "state"});
  w.add("ego_history_mask", b.ego_history_mask, {n, h}, {"batch", "time"});
  w.add("ego_future", b.ego_future, {n, f, d}, {"batch", "time", "state"});
  w.add("ego_future_mask", b.ego_future_mask, {n, f}, {"batch", "time"});
  w.add("neighbor_history", b.neighbor_history, {n, m, h, d}, {"batch", "neighbor", "time", "state"});
  w.add("neighbor_history_mask", b.neighbor_history_mask, {n, m, h}, {"batch", "neighbor", "time"});
  w.add("neighbor_type", b.neighbor_type, {n, m}, {"batch", "neighbor"});
  w.add("neighbor_count", b.neighbor_count, {n}, {"batch"});
  json elements = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& info = b.info[i];
    elements.push_back({{"dataset", info.dataset},
                        {"scene_id", info.scene_id},
                        {"agent_id", info.agent_id},
                        {"agent_type", std::string(to_string(info.agent_type))},
                        {"ts", info.current_ts},
                        {"dt", info.dt},
                        {"frame", frame_json(info.frame)},
                        {"neighbor_ids", b.neighbor_ids[i]}});
  }
  return elements;
}

json scene_batch_json(std::span<const SceneBatchElement> elements, ArrayWriter& w) {
  const std::size_t n = elements.size();
  const std::size_t h = elements.front().agents.front().history.states.size();
  const std::size_t f = elements.front().agents.front().future.states.size();
  std::size_t m = 0;
  for (const auto& e : elements) m = std::max(m, e.agents.size());

  std::vector<double> hist, fut;
  std::vector<std::uint8_t> hist_mask, fut_mask;
  std::vector<std::int32_t> types, counts;
  const TrajectoryWindow empty_h{std::vector<StateVector>(h), std::vector<std::uint8_t>(h, 0)};
  const TrajectoryWindow empty_f{std::vector<StateVector>(f), std::vector<std::uint8_t>(f, 0)};
  json out = json::array();
  for (const auto& e : elements) {
    std::vector<std::string> ids;
    for (std::size_t k = 0; k < m; ++k) {
      if (k < e.agents.size()) {
        append_window(hist, hist_mask, e.agents[k].history);
        append_window(fut, fut_mask, e.agents[k].future);
        types.push_back(static_cast<std::int32_t>(e.agents[k].type));
        ids.push_back(e.agents[k].agent_id);
      } else {
        append_window(hist, hist_mask, empty_h);
        append_window(fut, fut_mask, empty_f);
        types.push_back(-1);
      }
    }
    counts.push_back(static_cast<std::int32_t>(e.agents.size()));
    out.push_back({{"dataset", e.dataset},
                   {"scene_id", e.scene_id},
                   {"ts", e.current_ts},
                   {"dt", e.dt},
                   {"frame", frame_json(e.frame)},
                   {"agent_ids", ids}});
  }
  w.add("agent_history", hist, {n, m, h, kStateDim}, {"batch", "agent", "time", "state"});
  w.add("agent_history_mask", hist_mask, {n, m, h}, {"batch", "agent", "time"});
  w.add("agent_future", fut, {n, m, f, kStateDim}, {"batch", "agent", "time", "state"});
  w.add("agent_future_mask", fut_mask, {n, m, f}, {"batch", "agent", "time"});
  w.add("agent_type", types, {n, m}, {"batch", "agent"});
  w.add("agent_count", counts, {n}, {"batch"});
  return out;
}

}  // namespace

ExportSummary export_batches(const BatchIndex& index, const fs::path& out_dir, std::size_t batch_size) {
  if (batch_size == 0) throw Error(ErrorKind::kArgument, "batch size must be positive");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + out_dir.string() + ": " + ec.message());

  json batches = json::array();
  ExportSummary summary;
  for (std::size_t start = 0; start < index.size(); start += batch_size) {
    const std::size_t end = std::min(index.size(), start + batch_size);
    ArrayWriter w;
    json elements;
    if (index.centric() == Centric::kAgent) {
      std::vector<AgentBatchElement> group;
      for (std::size_t i = start; i < end; ++i) group.push_back(index.get_element(i));
      elements = agent_batch_json(collate(group), w);
    } else {
      std::vector<SceneBatchElement> group;
      for (std::size_t i = start; i < end; ++i) group.push_back(index.get_scene_element(i));
      elements = scene_batch_json(group, w);
    }
    const std::string file = batch_file_name(summary.num_batches);
    write_file_atomic((out_dir / file).string(), std::span<const std::uint8_t>(w.bytes.data()));
    batches.push_back({{"file", file}, {"size", end - start}, {"arrays", w.arrays}, {"elements", elements}});
    ++summary.num_batches;
  }
  summary.num_elements = index.size();

  json state_names = json::array();
  for (auto s : kStateNames) state_names.push_back(std::string(s));
  const json manifest = {{"format", "trajkit-batches"},
                         {"version", 1},
                         {"centric", index.centric() == Centric::kAgent ? "agent" : "scene"},
                         {"dtype", "f32"},
                         {"byte_order", "little"},
                         {"state_names", state_names},
                         {"num_elements", summary.num_elements},
                         {"num_batches", summary.num_batches},
                         {"batch_size", batch_size},
                         {"batches", batches}};
  summary.manifest = out_dir / "manifest.json";
  write_file_atomic(summary.manifest.string(), manifest.dump(2) + "\n");
  return summary;
}

}  // namespace trajkit
