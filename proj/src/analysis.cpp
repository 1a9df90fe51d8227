#include "trajkit/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include <nlohmann/json.hpp>

#include "trajkit/bytes.hpp"
#include "trajkit/kinematics.hpp"

namespace trajkit {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Histograms and config

BinSpec BinSpec::with_step(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi > lo)) throw Error(ErrorKind::kArgument, "bin spec needs lo < hi and step > 0");
  const double n = std::round((hi - lo) / step);
  return {lo, hi, static_cast<std::size_t>(std::max(1.0, n))};
}

std::vector<double> BinSpec::edges() const {
  std::vector<double> e(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  e.back() = hi;
  return e;
}

Histogram Histogram::make(std::string metric, std::string dataset, std::string agent_type, const BinSpec& spec) {
  Histogram h{std::move(metric), std::move(dataset), std::move(agent_type), spec.edges(), {}};
  h.counts.assign(spec.bins, 0);
  return h;
}

void Histogram::add(double value) {
  auto it = std::upper_bound(edges.begin(), edges.end(), value);
  std::ptrdiff_t bin = (it - edges.begin()) - 1;
  bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(counts.size()) - 1);
  ++counts[static_cast<std::size_t>(bin)];
}

std::int64_t Histogram::total() const {
  std::int64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

void Histogram::merge(const Histogram& other) {
  if (edges != other.edges) throw Error(ErrorKind::kArgument, "cannot merge histograms with different edges");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

AnalysisConfig::AnalysisConfig() {
  bins["speed"] = BinSpec::with_step(0.0, 40.0, 0.5);
  bins["accel"] = BinSpec::with_step(0.0, 20.0, 0.25);
  bins["jerk"] = BinSpec::with_step(0.0, 50.0, 0.5);
  bins["heading"] = {-kPi, kPi, 64};
  bins["heading_delta"] = {-kPi, kPi, 64};
  bins["path_efficiency"] = BinSpec::with_step(0.0, 100.0, 1.0);
  bins["simultaneous"] = BinSpec::with_step(0.0, 400.0, 1.0);
  bins["simultaneous_max"] = BinSpec::with_step(0.0, 400.0, 1.0);
  bins["density"] = BinSpec::with_step(0.0, 2.0, 0.01);
  bins["ego_distance"] = BinSpec::with_step(0.0, 300.0, 2.0);
}

const BinSpec& AnalysisConfig::bins_for(const std::string& metric) const {
  auto it = bins.find(metric);
  if (it == bins.end()) throw Error(ErrorKind::kArgument, "no bin spec for metric " + metric);
  return it->second;
}

void AnalysisConfig::validate() const {
  if (!(stationary_threshold > 0.0)) throw Error(ErrorKind::kValidation, "stationary_threshold must be > 0");
  if (!(harsh_accel_threshold > 0.0)) throw Error(ErrorKind::kValidation, "harsh_accel_threshold must be > 0");
  if (density_min_agents < 1) throw Error(ErrorKind::kValidation, "density_min_agents must be >= 1");
  for (const auto& [name, spec] : bins) {
    if (spec.bins == 0 || !(spec.hi > spec.lo) || !std::isfinite(spec.lo) || !std::isfinite(spec.hi)) {
      throw Error(ErrorKind::kValidation, "invalid bin spec for " + name);
    }
  }
}

namespace {

json bin_json(const BinSpec& b) { return {{"lo", b.lo}, {"hi", b.hi}, {"bins", b.bins}}; }

json config_json(const AnalysisConfig& cfg) {
  json j;
  j["stationary_threshold"] = cfg.stationary_threshold;
  j["harsh_accel_threshold"] = cfg.harsh_accel_threshold;
  j["density_min_agents"] = cfg.density_min_agents;
  j["per_timestep_events"] = cfg.per_timestep_events;
  j["cumulative_heading"] = cfg.cumulative_heading;
  j["ego_agent_id"] = cfg.ego_agent_id;
  json types = json::array();
  for (auto t : cfg.offroad_types) types.push_back(std::string(to_string(t)));
  j["offroad_types"] = types;
  j["axis_aligned_datasets"] = cfg.axis_aligned_datasets;
  json bins = json::object();
  for (const auto& [name, spec] : cfg.bins) bins[name] = bin_json(spec);
  j["bins"] = bins;
  return j;
}

}  // namespace

AnalysisConfig parse_analysis_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kParse, std::string("analysis config: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::kParse, "analysis config must be a JSON object");
  AnalysisConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "stationary_threshold") {
        cfg.stationary_threshold = value.get<double>();
      } else if (key == "harsh_accel_threshold") {
        cfg.harsh_accel_threshold = value.get<double>();
      } else if (key == "density_min_agents") {
        cfg.density_min_agents = value.get<std::int64_t>();
      } else if (key == "per_timestep_events") {
        cfg.per_timestep_events = value.get<bool>();
      } else if (key == "cumulative_heading") {
        cfg.cumulative_heading = value.get<bool>();
      } else if (key == "ego_agent_id") {
        cfg.ego_agent_id = value.get<std::string>();
      } else if (key == "offroad_types") {
        cfg.offroad_types.clear();
        for (const auto& t : value) cfg.offroad_types.insert(parse_agent_type(t.get<std::string>()));
      } else if (key == "axis_aligned_datasets") {
        cfg.axis_aligned_datasets = value.get<std::set<std::string>>();
      } else if (key == "bins") {
        for (const auto& [name, b] : value.items()) {
          const double lo = b.at("lo").get<double>();
          const double hi = b.at("hi").get<double>();
          if (b.contains("step")) {
            cfg.bins[name] = BinSpec::with_step(lo, hi, b.at("step").get<double>());
          } else {
            cfg.bins[name] = {lo, hi, b.at("bins").get<std::size_t>()};
          }
        }
      } else {
        throw Error(ErrorKind::kValidation, "unknown analysis config key: " + key);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kValidation, std::string("analysis config: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kValidation) throw;
    throw Error(ErrorKind::kValidation, std::string("analysis config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string analysis_config_to_json(const AnalysisConfig& cfg) { return config_json(cfg).dump(2) + "\n"; }

std::optional<double> Rate::value() const {
  if (denominator == 0) return std::nullopt;
  return static_cast<double>(numerator) / static_cast<double>(denominator);
}

Histogram& MetricReport::histogram(const std::string& metric, const std::string& dataset, const std::string& type) {
  MetricKey key{metric, dataset, type};
  auto it = histograms.find(key);
  if (it == histograms.end()) {
    it = histograms.emplace(key, Histogram::make(metric, dataset, type, config.bins_for(metric))).first;
  }
  return it->second;
}

Rate& MetricReport::rate(const std::string& metric, const std::string& dataset, const std::string& type) {
  return rates[{metric, dataset, type}];
}

void MetricReport::merge(const MetricReport& other) {
  for (const auto& [key, h] : other.histograms) {
    auto it = histograms.find(key);
    if (it == histograms.end()) {
      histograms.emplace(key, h);
    } else {
      it->second.merge(h);
    }
  }
  for (const auto& [key, r] : other.rates) {
    rates[key].numerator += r.numerator;
    rates[key].denominator += r.denominator;
  }
  for (const auto& [key, v] : other.scalars) scalars[key] += v;
  for (const auto& [key, n] : other.tallies) tallies[key] += n;
  for (const auto& [key, reason] : other.unavailable) unavailable.emplace(key, reason);
  notes.insert(other.notes.begin(), other.notes.end());
  scenes += other.scenes;
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"population", "simultaneous", "density",   "ego_distance",
                                                 "speed",      "accel",        "jerk",      "stationary",
                                                 "heading",    "path_efficiency", "collision", "harsh_accel",
                                                 "offroad"};
  return names;
}

// ---------------------------------------------------------------------------
// Per-agent building blocks

namespace {

std::vector<StateRow> observed_rows(std::span<const StateRow> rows) {
  std::vector<StateRow> out;
  for (const auto& r : rows) {
    if (r.observed) out.push_back(r);
  }
  return out;
}

}  // namespace

std::optional<double> path_efficiency_percent(std::span<const StateRow> rows) {
  const auto obs = observed_rows(rows);
  if (obs.size() < 2) return std::nullopt;
  double path = 0.0;
  for (std::size_t i = 1; i < obs.size(); ++i) path += std::hypot(obs[i].x - obs[i - 1].x, obs[i].y - obs[i - 1].y);
  if (path < 1e-6) return 100.0;
  const double chord = std::hypot(obs.back().x - obs.front().x, obs.back().y - obs.front().y);
  return std::min(100.0, 100.0 * chord / path);
}

double max_displacement(std::span<const StateRow> rows) {
  const auto obs = observed_rows(rows);
  double best = 0.0;
  for (const auto& r : obs) best = std::max(best, std::hypot(r.x - obs.front().x, r.y - obs.front().y));
  return best;
}

std::vector<double> heading_changes(std::span<const StateRow> rows, bool cumulative) {
  const auto obs = observed_rows(rows);
  std::vector<double> out;
  out.reserve(obs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (cumulative) {
      if (i > 0) total += wrap_angle(obs[i].heading - obs[i - 1].heading);
      out.push_back(total);
    } else {
      out.push_back(wrap_angle(obs[i].heading - obs.front().heading));
    }
  }
  return out;
}

std::array<Point2, 4> OrientedBox::corners() const {
  const double c = std::cos(heading), s = std::sin(heading);
  const double hl = 0.5 * length, hw = 0.5 * width;
  auto at = [&](double u, double v) { return Point2{cx + c * u - s * v, cy + s * u + c * v}; };
  return {at(hl, hw), at(-hl, hw), at(-hl, -hw), at(hl, -hw)};
}

bool boxes_intersect(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const std::array<double, 4> angles = {a.heading, a.heading + kPi / 2, b.heading, b.heading + kPi / 2};
  for (double angle : angles) {
    const double ux = std::cos(angle), uy = std::sin(angle);
    auto project = [&](const std::array<Point2, 4>& pts) {
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& p : pts) {
        const double d = p.x * ux + p.y * uy;
        lo = std::min(lo, d);
        hi = std::max(hi, d);
      }
      return std::pair{lo, hi};
    };
    const auto [alo, ahi] = project(ca);
    const auto [blo, bhi] = project(cb);
    if (ahi < blo || bhi < alo) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Scene passes

namespace {

struct MetricSet {
  std::set<std::string> names;
  bool has(std::string_view n) const { return names.contains(std::string(n)); }
};

std::string type_name(AgentType t) { return std::string(to_string(t)); }

// Observed row indices grouped by timestep.
std::vector<std::vector<std::size_t>> rows_by_ts(const SceneFrame& s, bool observed_only) {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(std::max<std::int64_t>(s.n_timesteps, 0)));
  for (std::size_t i = 0; i < s.columns.size(); ++i) {
    if (observed_only && !s.columns.observed[i]) continue;
    const auto t = static_cast<std::size_t>(s.columns.ts[i]);
    if (t >= out.size()) out.resize(t + 1);
    out[t].push_back(i);
  }
  return out;
}

void population_pass(const SceneFrame& s, MetricReport& r) {
  std::map<AgentType, std::int64_t> counts;
  for (const auto& a : s.agents) ++counts[a.type];
  const auto n = static_cast<std::int64_t>(s.agents.size());
  for (auto t : kAllAgentTypes) {
    Rate& rate = r.rate("population", s.dataset, type_name(t));
    rate.numerator += counts[t];
    rate.denominator += n;
  }
  r.scalars[{"population", s.dataset, std::string(kAllTypes)}] += static_cast<double>(n);
}

void simultaneous_pass(const SceneFrame& s, MetricReport& r) {
  if (s.n_timesteps <= 0) return;
  std::vector<std::int64_t> diff(static_cast<std::size_t>(s.n_timesteps) + 1, 0);
  for (const auto& a : s.agents) {
    ++diff[static_cast<std::size_t>(a.first_ts)];
    --diff[static_cast<std::size_t>(a.last_ts) + 1];
  }
  Histogram& per_ts = r.histogram("simultaneous", s.dataset, std::string(kAllTypes));
  std::int64_t alive = 0, best = 0;
  for (std::int64_t t = 0; t < s.n_timesteps; ++t) {
    alive += diff[static_cast<std::size_t>(t)];
    per_ts.add(static_cast<double>(alive));
    best = std::max(best, alive);
  }
  r.histogram("simultaneous_max", s.dataset, std::string(kAllTypes)).add(static_cast<double>(best));
}

void density_pass(const SceneFrame& s, const AnalysisConfig& cfg, MetricReport& r) {
  Histogram& h = r.histogram("density", s.dataset, std::string(kAllTypes));
  for (const auto& rows : rows_by_ts(s, false)) {
    if (rows.empty()) continue;
    if (static_cast<std::int64_t>(rows.size()) < cfg.density_min_agents) {
      r.tally("density.skipped_too_few_agents");
      continue;
    }
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (auto i : rows) {
      x0 = std::min(x0, s.columns.x[i]);
      x1 = std::max(x1, s.columns.x[i]);
      y0 = std::min(y0, s.columns.y[i]);
      y1 = std::max(y1, s.columns.y[i]);
    }
    const double area = (x1 - x0) * (y1 - y0);
    if (!(area > 0.0)) {
      r.tally("density.skipped_zero_area");
      continue;
    }
    h.add(static_cast<double>(rows.size()) / area);
  }
}

void ego_distance_pass(const SceneFrame& s, const AnalysisConfig& cfg, MetricReport& r) {
  const auto ego = s.find_agent(cfg.ego_agent_id);
  if (!ego) {
    r.tally("ego_distance.scenes_without_ego");
    return;
  }
  Histogram& h = r.histogram("ego_distance", s.dataset, std::string(kAllTypes));
  for (std::size_t i = 0; i < s.columns.size(); ++i) {
    const auto agent = static_cast<std::size_t>(s.columns.agent_index[i]);
    if (agent == *ego || !s.columns.observed[i]) continue;
    const auto e = s.row_at(*ego, s.columns.ts[i]);
    if (!e || !s.columns.observed[*e]) continue;
    h.add(std::hypot(s.columns.x[i] - s.columns.x[*e], s.columns.y[i] - s.columns.y[*e]));
  }
}

void dynamics_pass(const SceneFrame& s, const MetricSet& m, MetricReport& r) {
  for (std::size_t a = 0; a < s.agents.size(); ++a) {
    const RowRange rows = s.agent_rows(a);
    if (rows.empty()) continue;
    const std::string type = type_name(s.agents[a].type);
    const auto& c = s.columns;
    if (m.has("speed")) {
      Histogram& h = r.histogram("speed", s.dataset, type);
      for (auto i = rows.begin; i < rows.end; ++i) {
        if (c.observed[i]) h.add(std::hypot(c.vx[i], c.vy[i]));
      }
    }
    if (m.has("accel")) {
      Histogram& h = r.histogram("accel", s.dataset, type);
      for (auto i = rows.begin; i < rows.end; ++i) {
        if (c.observed[i]) h.add(std::hypot(c.ax[i], c.ay[i]));
      }
    }
    if (m.has("jerk")) {
      const std::span<const double> ax(c.ax.data() + rows.begin, rows.size());
      const std::span<const double> ay(c.ay.data() + rows.begin, rows.size());
      const auto jx = derive_derivative(ax, s.dt);
      const auto jy = derive_derivative(ay, s.dt);
      Histogram& h = r.histogram("jerk", s.dataset, type);
      for (std::size_t k = 0; k < rows.size(); ++k) {
        if (c.observed[rows.begin + k]) h.add(std::hypot(jx.values[k], jy.values[k]));
      }
    }
  }
}

void stationary_pass(const SceneFrame& s, const AnalysisConfig& cfg, MetricReport& r) {
  for (std::size_t a = 0; a < s.agents.size(); ++a) {
    const auto track = extract_track(s, a);
    if (observed_rows(track.rows).empty()) continue;
    const bool still = max_displacement(track.rows) < cfg.stationary_threshold;
    for (const auto& type : {type_name(s.agents[a].type), std::string(kAllTypes)}) {
      Rate& rate = r.rate("stationary", s.dataset, type);
      rate.numerator += still ? 1 : 0;
      rate.denominator += 1;
    }
  }
}

void heading_pass(const SceneFrame& s, const AnalysisConfig& cfg, MetricReport& r) {
  for (std::size_t a = 0; a < s.agents.size(); ++a) {
    const auto track = extract_track(s, a);
    const std::string type = type_name(s.agents[a].type);
    Histogram& raw = r.histogram("heading", s.dataset, type);
    for (const auto& row : track.rows) {
      if (row.observed) raw.add(row.heading);
    }
    Histogram& delta = r.histogram("heading_delta", s.dataset, type);
    for (double d : heading_changes(track.rows, cfg.cumulative_heading)) delta.add(d);
  }
}

void efficiency_pass(const SceneFrame& s, MetricReport& r) {
  for (std::size_t a = 0; a < s.agents.size(); ++a) {
    const auto track = extract_track(s, a);
    const auto eff = path_efficiency_percent(track.rows);
    if (!eff) {
      r.tally("path_efficiency.too_few_observed");
      continue;
    }
    const auto obs = observed_rows(track.rows);
    double path = 0.0;
    for (std::size_t i = 1; i < obs.size(); ++i) path += std::hypot(obs[i].x - obs[i - 1].x, obs[i].y - obs[i - 1].y);
    if (path < 1e-6) r.tally("path_efficiency.zero_length_paths");
    r.histogram("path_efficiency", s.dataset, type_name(s.agents[a].type)).add(*eff);
  }
}

// Counts agents (or agent-timesteps) with at least one flagged observed row.
struct EventCounter {
  std::vector<std::uint8_t> any;
  std::vector<std::int64_t> steps, flagged;

  explicit EventCounter(std::size_t n) : any(n, 0), steps(n, 0), flagged(n, 0) {}
  void record(std::size_t agent, bool event) {
    ++steps[agent];
    if (event) {
      any[agent] = 1;
      ++flagged[agent];
    }
  }
  void emit(const SceneFrame& s, const std::string& metric, bool per_timestep, MetricReport& r,
            const std::vector<std::uint8_t>& eligible) const {
    for (std::size_t a = 0; a < any.size(); ++a) {
      if (!eligible[a] || steps[a] == 0) continue;
      for (const auto& type : {type_name(s.agents[a].type), std::string(kAllTypes)}) {
        Rate& rate = r.rate(metric, s.dataset, type);
        rate.numerator += per_timestep ? flagged[a] : any[a];
        rate.denominator += per_timestep ? steps[a] : 1;
      }
    }
  }
};

void collision_pass(const SceneFrame& s, const AnalysisConfig& cfg, MetricReport& r) {
  const bool axis_aligned = cfg.axis_aligned_datasets.contains(s.dataset);
  if (axis_aligned) r.notes.insert("collision: boxes treated as axis-aligned for dataset " + s.dataset);
  std::vector<std::uint8_t> eligible(s.agents.size(), 0);
  for (std::size_t a = 0; a < s.agents.size(); ++a) {
    eligible[a] = s.agents[a].extent.has_value();
    if (!eligible[a]) r.tally("collision.agents_without_extent");
  }
  EventCounter events(s.agents.size());
  const auto& c = s.columns;
  for (const auto& rows : rows_by_ts(s, true)) {
    std::vector<std::size_t> boxed;
    for (auto i : rows) {
      if (eligible[static_cast<std::size_t>(c.agent_index[i])]) boxed.push_back(i);
    }
    std::vector<OrientedBox> boxes;
    std::vector<double> radius;
    for (auto i : boxed) {
      const Extent& e = *s.agents[static_cast<std::size_t>(c.agent_index[i])].extent;
      boxes.push_back({c.x[i], c.y[i], axis_aligned ? 0.0 : c.heading[i], e.length, e.width});
      radius.push_back(0.5 * std::hypot(e.length, e.width));
    }
    std::vector<std::uint8_t> hit(boxed.size(), 0);
    for (std::size_t p = 0; p < boxed.size(); ++p) {
      for (std::size_t q = p + 1; q < boxed.size(); ++q) {
        const double d = std::hypot(boxes[p].cx - boxes[q].cx, boxes[p].cy - boxes[q].cy);
        if (d > radius[p] + radius[q]) continue;
        if (boxes_intersect(boxes[p], boxes[q])) hit[p] = hit[q] = 1;
      }
    }
    for (std::size_t p = 0; p < boxed.size(); ++p) {
      events.record(static_cast<std::size_t>(c.agent_index[boxed[p]]), hit[p] != 0);
    }
  }
  events.emit(s, "collision", cfg.per_timestep_events, r, eligible);
}

void harsh_pass(const SceneFrame& s, const AnalysisConfig& cfg, MetricReport& r) {
  EventCounter events(s.agents.size());
  const auto& c = s.columns;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (!c.observed[i]) continue;
    events.record(static_cast<std::size_t>(c.agent_index[i]),
                  std::hypot(c.ax[i], c.ay[i]) > cfg.harsh_accel_threshold);
  }
  events.emit(s, "harsh_accel", cfg.per_timestep_events, r, std::vector<std::uint8_t>(s.agents.size(), 1));
}

const VectorMap* map_for(const SceneFrame& s, std::span<const VectorMap> maps) {
  if (maps.size() == 1) return &maps.front();
  const std::string id = s.dataset + ":" + s.location;
  for (const auto& m : maps) {
    if (m.map_id() == id) return &m;
  }
  return nullptr;
}

void offroad_pass(const SceneFrame& s, const AnalysisConfig& cfg, std::span<const VectorMap> maps,
                  MetricReport& r) {
  if (maps.empty()) {
    r.unavailable.emplace("offroad", "no map given");
    return;
  }
  const VectorMap* map = map_for(s, maps);
  if (!map) {
    r.tally("offroad.scenes_without_map");
    return;
  }
  if (map->drivable_polygons().empty()) {
    r.unavailable.emplace("offroad", "map " + map->map_id() + " has no drivable-area geometry");
    return;
  }
  std::vector<std::uint8_t> eligible(s.agents.size(), 0);
  for (std::size_t a = 0; a < s.agents.size(); ++a) eligible[a] = cfg.offroad_types.contains(s.agents[a].type);
  EventCounter events(s.agents.size());
  const auto& c = s.columns;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto a = static_cast<std::size_t>(c.agent_index[i]);
    if (!c.observed[i] || !eligible[a]) continue;
    events.record(a, map->point_in_drivable_area({c.x[i], c.y[i]}) == DrivableQuery::kOutside);
  }
  events.emit(s, "offroad", cfg.per_timestep_events, r, eligible);
}

MetricSet checked_metrics(const std::vector<std::string>& metrics) {
  MetricSet set;
  for (const auto& m : metrics) {
    const auto& known = metric_names();
    if (std::find(known.begin(), known.end(), m) == known.end()) {
      std::string all;
      for (const auto& k : known) all += (all.empty() ? "" : ", ") + k;
      throw Error(ErrorKind::kArgument, "unknown metric '" + m + "' (valid: " + all + ")");
    }
    set.names.insert(m);
  }
  return set;
}

MetricReport scene_report(const SceneFrame& s, const MetricSet& m, const AnalysisConfig& cfg,
                          std::span<const VectorMap> maps) {
  MetricReport r;
  r.config = cfg;
  r.scenes = 1;
  if (m.has("population")) population_pass(s, r);
  if (m.has("simultaneous")) simultaneous_pass(s, r);
  if (m.has("density")) density_pass(s, cfg, r);
  if (m.has("ego_distance")) ego_distance_pass(s, cfg, r);
  if (m.has("speed") || m.has("accel") || m.has("jerk")) dynamics_pass(s, m, r);
  if (m.has("stationary")) stationary_pass(s, cfg, r);
  if (m.has("heading")) heading_pass(s, cfg, r);
  if (m.has("path_efficiency")) efficiency_pass(s, r);
  if (m.has("collision")) collision_pass(s, cfg, r);
  if (m.has("harsh_accel")) harsh_pass(s, cfg, r);
  if (m.has("offroad")) offroad_pass(s, cfg, maps, r);
  return r;
}

// Runs `task(i)` for i in [0, n) on a small worker pool and merges the
// per-scene reports in index order.
template <typename Task>
MetricReport run_parallel(std::size_t n, const AnalysisConfig& cfg, Task task) {
  std::vector<MetricReport> parts(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        parts[i] = task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), n);
  std::vector<std::jthread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  MetricReport total;
  total.config = cfg;
  for (const auto& p : parts) total.merge(p);
  return total;
}

void finish(MetricReport& r, const MetricSet& m, std::span<const VectorMap> maps) {
  if (m.has("offroad") && maps.empty()) r.unavailable.emplace("offroad", "no map given");
  if (m.has("offroad") && r.unavailable.contains("offroad")) {
    std::erase_if(r.rates, [](const auto& kv) { return std::get<0>(kv.first) == "offroad"; });
  }
}

}  // namespace

MetricReport analyze(std::span<const SceneFrame> scenes, const std::vector<std::string>& metrics,
                     const AnalysisConfig& cfg, std::span<const VectorMap> maps) {
  cfg.validate();
  const MetricSet m = checked_metrics(metrics);
  MetricReport r = run_parallel(scenes.size(), cfg, [&](std::size_t i) { return scene_report(scenes[i], m, cfg, maps); });
  finish(r, m, maps);
  return r;
}

MetricReport analyze(const SceneCache& cache, const std::vector<SceneTag>& tags,
                     const std::vector<std::string>& metrics, const AnalysisConfig& cfg,
                     std::span<const VectorMap> maps) {
  cfg.validate();
  const MetricSet m = checked_metrics(metrics);
  const auto entries = cache.resolve(tags);
  MetricReport r = run_parallel(entries.size(), cfg, [&](std::size_t i) {
    return scene_report(cache.load(entries[i]), m, cfg, maps);
  });
  finish(r, m, maps);
  return r;
}

MetricReport agent_population(std::span<const SceneFrame> scenes) {
  return analyze(scenes, {"population"}, AnalysisConfig{});
}
MetricReport simultaneous_agents(std::span<const SceneFrame> scenes, const AnalysisConfig& cfg) {
  return analyze(scenes, {"simultaneous"}, cfg);
}
MetricReport agent_density(std::span<const SceneFrame> scenes, const AnalysisConfig& cfg) {
  return analyze(scenes, {"density"}, cfg);
}
MetricReport ego_agent_distances(std::span<const SceneFrame> scenes, const AnalysisConfig& cfg) {
  return analyze(scenes, {"ego_distance"}, cfg);
}
MetricReport dynamics_distributions(std::span<const SceneFrame> scenes, const AnalysisConfig& cfg) {
  return analyze(scenes, {"speed", "accel", "jerk"}, cfg);
}
MetricReport stationary_fraction(std::span<const SceneFrame> scenes, const AnalysisConfig& cfg) {
  return analyze(scenes, {"stationary"}, cfg);
}
MetricReport heading_deltas(std::span<const SceneFrame> scenes, const AnalysisConfig& cfg) {
  return analyze(scenes, {"heading"}, cfg);
}
MetricReport path_efficiency(std::span<const SceneFrame> scenes, const AnalysisConfig& cfg) {
  return analyze(scenes, {"path_efficiency"}, cfg);
}
MetricReport collision_rate(std::span<const SceneFrame> scenes, const AnalysisConfig& cfg) {
  return analyze(scenes, {"collision"}, cfg);
}
MetricReport harsh_accel_rate(std::span<const SceneFrame> scenes, const AnalysisConfig& cfg) {
  return analyze(scenes, {"harsh_accel"}, cfg);
}
MetricReport offroad_rate(std::span<const SceneFrame> scenes, std::span<const VectorMap> maps,
                          const AnalysisConfig& cfg) {
  return analyze(scenes, {"offroad"}, cfg, maps);
}

// ---------------------------------------------------------------------------
// Report emission

namespace {

std::string histogram_file(const Histogram& h) {
  return h.metric + "__" + h.dataset + "__" + h.agent_type + ".csv";
}

std::string histogram_csv(const Histogram& h) {
  std::string out = "edge_lo,edge_hi,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    out += format_double(h.edges[i]) + "," + format_double(h.edges[i + 1]) + "," + std::to_string(h.counts[i]) + "\n";
  }
  return out;
}

}  // namespace

std::string report_to_json(const MetricReport& report) {
  json j;
  j["config"] = config_json(report.config);
  j["provenance"] = {{"scenes", report.scenes},
                     {"scene_cache_format_version", kSceneFormatVersion},
                     {"notes", report.notes}};
  json rates = json::array();
  for (const auto& [key, r] : report.rates) {
    const auto v = r.value();
    rates.push_back({{"metric", std::get<0>(key)},
                     {"dataset", std::get<1>(key)},
                     {"agent_type", std::get<2>(key)},
                     {"numerator", r.numerator},
                     {"denominator", r.denominator},
                     {"rate", v ? json(*v) : json(nullptr)}});
  }
  json scalars = json::array();
  for (const auto& [key, v] : report.scalars) {
    scalars.push_back(
        {{"metric", std::get<0>(key)}, {"dataset", std::get<1>(key)}, {"agent_type", std::get<2>(key)}, {"value", v}});
  }
  json hists = json::array();
  for (const auto& [key, h] : report.histograms) {
    hists.push_back({{"metric", h.metric},
                     {"dataset", h.dataset},
                     {"agent_type", h.agent_type},
                     {"file", histogram_file(h)},
                     {"total", h.total()}});
  }
  json unavailable = json::object();
  for (const auto& [metric, reason] : report.unavailable) unavailable[metric] = {{"status", "unavailable"}, {"reason", reason}};
  j["rates"] = rates;
  j["scalars"] = scalars;
  j["histograms"] = hists;
  j["tallies"] = report.tallies;
  j["unavailable"] = unavailable;
  return j.dump(2) + "\n";
}

void emit_report(const MetricReport& report, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + out_dir.string() + ": " + ec.message());
  for (const auto& [key, h] : report.histograms) {
    write_file_atomic((out_dir / histogram_file(h)).string(), histogram_csv(h));
  }
  write_file_atomic((out_dir / "report.json").string(), report_to_json(report));
}

}  // namespace trajkit
