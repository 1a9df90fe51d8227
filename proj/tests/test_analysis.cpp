#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "trajkit/analysis.hpp"
#include "trajkit/kinematics.hpp"

using namespace trajkit;
namespace fs = std::filesystem;

namespace {

struct Pos {
  double x, y;
};

// Agent with the given per-frame positions starting at `first`.
AgentTrack track(const std::string& id, AgentType type, std::int64_t first, const std::vector<Pos>& pts,
                 std::optional<Extent> extent = Extent{4.0, 2.0, std::nullopt}) {
  AgentTrack t;
  t.meta.id = id;
  t.meta.type = type;
  t.meta.extent = extent;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    StateRow r;
    r.ts = first + static_cast<std::int64_t>(i);
    r.x = pts[i].x;
    r.y = pts[i].y;
    t.rows.push_back(r);
  }
  return complete_track(t, 0.1);
}

std::vector<Pos> still(double x, double y, int n) { return std::vector<Pos>(static_cast<std::size_t>(n), Pos{x, y}); }

SceneFrame scene(std::vector<AgentTrack> tracks, const std::string& dataset = "ds", const std::string& id = "s0") {
  return make_scene({id, dataset, "train", "loc", 0.1}, std::move(tracks));
}

const std::string kVeh{to_string(AgentType::kVehicle)};
const std::string kPed{to_string(AgentType::kPedestrian)};
const std::string kAll{kAllTypes};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("trajkit_an_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

double rate_of(const MetricReport& r, const std::string& metric, const std::string& type, const std::string& ds = "ds") {
  return r.rates.at({metric, ds, type}).value().value();
}

}  // namespace

TEST(Histogram, ClampsAndMerges) {
  auto h = Histogram::make("m", "d", "all", BinSpec::with_step(0, 10, 1));
  EXPECT_EQ(h.counts.size(), 10u);
  h.add(-5);
  h.add(0);
  h.add(9.99);
  h.add(10);
  h.add(50);
  EXPECT_EQ(h.total(), 5);
  EXPECT_EQ(h.counts.front(), 2);
  EXPECT_EQ(h.counts.back(), 3);
  auto other = Histogram::make("m", "d", "all", BinSpec::with_step(0, 10, 1));
  other.add(4.5);
  h.merge(other);
  EXPECT_EQ(h.counts[4], 1);
  EXPECT_THROW(h.merge(Histogram::make("m", "d", "all", BinSpec::with_step(0, 10, 2))), Error);
}

TEST(Population, Proportions) {
  const std::vector<SceneFrame> one{scene({track("a", AgentType::kVehicle, 0, still(0, 0, 2)),
                                           track("b", AgentType::kVehicle, 0, still(9, 0, 2)),
                                           track("c", AgentType::kVehicle, 0, still(18, 0, 2)),
                                           track("d", AgentType::kPedestrian, 0, still(0, 9, 2))})};
  const auto r = agent_population(one);
  EXPECT_DOUBLE_EQ(rate_of(r, "population", kVeh), 0.75);
  EXPECT_DOUBLE_EQ(rate_of(r, "population", kPed), 0.25);
  double sum = 0;
  for (auto t : kAllAgentTypes) sum += rate_of(r, "population", std::string(to_string(t)));
  EXPECT_DOUBLE_EQ(sum, 1.0);

  auto two = one;
  two.push_back(scene({track("z", AgentType::kBicycle, 0, still(0, 0, 2))}, "ds", "s1"));
  EXPECT_EQ((agent_population(two).scalars.at({"population", "ds", kAll})), 5.0);
}

TEST(Simultaneous, Examples) {
  const std::vector<SceneFrame> apart{scene({track("a", AgentType::kVehicle, 0, still(0, 0, 5)),
                                             track("b", AgentType::kVehicle, 5, still(0, 0, 5))})};
  const auto r = simultaneous_agents(apart);
  const auto& per_ts = r.histograms.at({"simultaneous", "ds", kAll});
  EXPECT_EQ(per_ts.total(), 10);
  EXPECT_EQ(per_ts.counts[1], 10);
  EXPECT_EQ(r.histograms.at({"simultaneous_max", "ds", kAll}).counts[1], 1);

  const std::vector<SceneFrame> overlap{scene({track("a", AgentType::kVehicle, 0, still(0, 0, 5)),
                                               track("b", AgentType::kVehicle, 3, still(0, 0, 7))})};
  EXPECT_EQ(simultaneous_agents(overlap).histograms.at({"simultaneous_max", "ds", kAll}).counts[2], 1);
}

TEST(Simultaneous, MatchesBruteForceSweep) {
  std::mt19937_64 rng(301);
  const AnalysisConfig cfg;
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<SceneFrame> scenes{oracle::random_scene(rng, 30, 100, 0.1)};
    const auto& s = scenes[0];
    auto want = Histogram::make("simultaneous", s.dataset, kAll, cfg.bins_for("simultaneous"));
    for (std::int64_t t = 0; t < s.n_timesteps; ++t) {
      int n = 0;
      for (const auto& a : s.agents) n += a.first_ts <= t && t <= a.last_ts;
      want.add(n);
    }
    EXPECT_EQ(simultaneous_agents(scenes).histograms.at({"simultaneous", s.dataset, kAll}), want);
  }
}

TEST(Density, Examples) {
  AnalysisConfig cfg;
  cfg.bins["density"] = BinSpec{0.0385, 0.0415, 3};
  const std::vector<SceneFrame> square{scene({track("a", AgentType::kVehicle, 0, still(0, 0, 1)),
                                              track("b", AgentType::kVehicle, 0, still(10, 0, 1)),
                                              track("c", AgentType::kVehicle, 0, still(10, 10, 1)),
                                              track("d", AgentType::kVehicle, 0, still(0, 10, 1))})};
  const auto dense = agent_density(square, cfg);
  const auto& h = dense.histograms.at({"density", "ds", kAll});
  EXPECT_EQ(h.counts, (std::vector<std::int64_t>{0, 1, 0}));

  const std::vector<SceneFrame> line{scene({track("a", AgentType::kVehicle, 0, still(0, 0, 1)),
                                            track("b", AgentType::kVehicle, 0, still(10, 0, 1))})};
  const auto r = agent_density(line, cfg);
  EXPECT_EQ(r.tallies.at("density.skipped_zero_area"), 1);
  EXPECT_EQ(r.histograms.at({"density", "ds", kAll}).total(), 0);
}

TEST(Density, MatchesDirectRecompute) {
  std::mt19937_64 rng(303);
  const AnalysisConfig cfg;
  const std::vector<SceneFrame> scenes{oracle::random_scene(rng, 12, 80, 0.1)};
  const auto& s = scenes[0];
  auto want = Histogram::make("density", s.dataset, kAll, cfg.bins_for("density"));
  std::int64_t skipped = 0;
  for (std::int64_t t = 0; t < s.n_timesteps; ++t) {
    double lx = 1e300, ly = 1e300, hx = -1e300, hy = -1e300;
    int n = 0;
    for (std::size_t a = 0; a < s.agents.size(); ++a) {
      const auto row = s.row_at(a, t);
      if (!row) continue;
      ++n;
      lx = std::min(lx, s.columns.x[*row]);
      hx = std::max(hx, s.columns.x[*row]);
      ly = std::min(ly, s.columns.y[*row]);
      hy = std::max(hy, s.columns.y[*row]);
    }
    if (n == 0) continue;
    if (n < 2) {
      ++skipped;
      continue;
    }
    want.add(n / ((hx - lx) * (hy - ly)));
  }
  const auto r = agent_density(scenes, cfg);
  EXPECT_EQ(r.histograms.at({"density", s.dataset, kAll}), want);
  const auto it = r.tallies.find("density.skipped_too_few_agents");
  EXPECT_EQ(it == r.tallies.end() ? 0 : it->second, skipped);
}

TEST(EgoDistance, Examples) {
  const std::vector<SceneFrame> s{scene({track("ego", AgentType::kVehicle, 0, still(0, 0, 5)),
                                         track("a", AgentType::kPedestrian, 0, still(6, 8, 5))})};
  const auto report = ego_agent_distances(s);
  const auto& h = report.histograms.at({"ego_distance", "ds", kAll});
  EXPECT_EQ(h.total(), 5);
  EXPECT_EQ(h.counts[5], 5);  // [10, 12)

  const std::vector<SceneFrame> alone{scene({track("ego", AgentType::kVehicle, 0, still(0, 0, 5))})};
  const auto r = ego_agent_distances(alone);
  EXPECT_EQ(r.histograms.count({"ego_distance", "ds", kAll}) ? r.histograms.at({"ego_distance", "ds", kAll}).total() : 0,
            0);

  const std::vector<SceneFrame> no_ego{scene({track("a", AgentType::kVehicle, 0, still(0, 0, 5))})};
  EXPECT_EQ(ego_agent_distances(no_ego).tallies.at("ego_distance.scenes_without_ego"), 1);
}

TEST(EgoDistance, MatchesDirectRecompute) {
  std::mt19937_64 rng(305);
  auto s = oracle::random_scene(rng, 10, 60, 0.1);
  AnalysisConfig cfg;
  cfg.ego_agent_id = s.agents[0].id;
  cfg.bins["ego_distance"] = BinSpec{0, 100, 50};
  auto want = Histogram::make("ego_distance", s.dataset, kAll, cfg.bins_for("ego_distance"));
  for (std::int64_t t = 0; t < s.n_timesteps; ++t) {
    // Only observed rows on both sides count.
    const auto e = s.row_at(0, t);
    if (!e || !s.columns.observed[*e]) continue;
    for (std::size_t a = 1; a < s.agents.size(); ++a) {
      const auto row = s.row_at(a, t);
      if (row && s.columns.observed[*row]) want.add(std::hypot(s.columns.x[*row] - s.columns.x[*e], s.columns.y[*row] - s.columns.y[*e]));
    }
  }
  const std::vector<SceneFrame> scenes{s};
  EXPECT_EQ(ego_agent_distances(scenes, cfg).histograms.at({"ego_distance", s.dataset, kAll}), want);
}

TEST(Dynamics, ClosedForms) {
  const std::vector<SceneFrame> straight{synth_scene(StraightMotion{10.0}, 2, 50, 0.1)};
  AnalysisConfig cfg;
  cfg.bins["speed"] = BinSpec{10 - 1e-9, 10 + 1e-9, 1};
  cfg.bins["accel"] = BinSpec{0.1 * (1 - 1e-6), 0.1 * (1 + 1e-6), 1};
  const auto r = dynamics_distributions(straight, cfg);
  EXPECT_EQ(r.histograms.at({"speed", "synth", kVeh}).total(), 100);
  for (std::size_t i = 0; i < straight[0].columns.size(); ++i) {
    ASSERT_NEAR(std::hypot(straight[0].columns.vx[i], straight[0].columns.vy[i]), 10.0, 1e-9);
  }
  const std::vector<SceneFrame> circle{synth_scene(CircleMotion{10.0, 0.1}, 1, 100, 0.1)};
  for (std::size_t i = 0; i < circle[0].columns.size(); ++i) {
    ASSERT_NEAR(std::hypot(circle[0].columns.ax[i], circle[0].columns.ay[i]), 0.1, 1e-7);
  }
  const auto still_scene = std::vector<SceneFrame>{scene({track("a", AgentType::kPedestrian, 0, still(3, 3, 10))})};
  const auto rs = dynamics_distributions(still_scene);
  EXPECT_EQ(rs.histograms.at({"speed", "ds", kPed}).counts[0], 10);
}

TEST(Dynamics, HistogramTotalsCountObservedRows) {
  std::mt19937_64 rng(307);
  const std::vector<SceneFrame> scenes{oracle::random_scene(rng, 10, 60, 0.1)};
  const auto r = dynamics_distributions(scenes);
  std::map<std::string, std::int64_t> observed;
  const auto& s = scenes[0];
  for (std::size_t i = 0; i < s.columns.size(); ++i) {
    if (s.columns.observed[i]) ++observed[std::string(to_string(s.agents[s.columns.agent_index[i]].type))];
  }
  for (const auto& [type, n] : observed) {
    EXPECT_EQ(r.histograms.at({"speed", s.dataset, type}).total(), n);
    EXPECT_EQ(r.histograms.at({"accel", s.dataset, type}).total(), n);
    EXPECT_EQ(r.histograms.at({"jerk", s.dataset, type}).total(), n);
  }
}

TEST(Stationary, Examples) {
  const std::vector<SceneFrame> statics{scene({track("a", AgentType::kVehicle, 0, still(0, 0, 10)),
                                               track("b", AgentType::kPedestrian, 0, still(5, 5, 10))})};
  EXPECT_DOUBLE_EQ(rate_of(stationary_fraction(statics), "stationary", kAll), 1.0);
  const std::vector<SceneFrame> movers{synth_scene(StraightMotion{10.0}, 3, 20, 0.1)};
  EXPECT_DOUBLE_EQ(rate_of(stationary_fraction(movers), "stationary", kAll, "synth"), 0.0);
}

TEST(Heading, Deltas) {
  const std::vector<SceneFrame> straight{synth_scene(StraightMotion{5.0}, 1, 20, 0.1)};
  for (double d : heading_changes(extract_track(straight[0], 0).rows, false)) EXPECT_EQ(d, 0.0);

  const auto quarter = synth_scene(CircleMotion{10.0, kPi / 2 / 10.0}, 1, 101, 0.1);
  EXPECT_NEAR(heading_changes(extract_track(quarter, 0).rows, false).back(), kPi / 2, 1e-9);

  const auto uturn = synth_scene(CircleMotion{10.0, kPi / 10.0}, 1, 101, 0.1);
  const auto d = heading_changes(extract_track(uturn, 0).rows, false);
  EXPECT_NEAR(std::abs(d.back()), kPi, 1e-9);
  EXPECT_GT(d.back(), -kPi);
  EXPECT_LE(d.back(), kPi);

  // A full loop wraps back to zero; the cumulative variant keeps 2*pi.
  const auto loop = synth_scene(CircleMotion{10.0, kPi / 5.0}, 1, 101, 0.1);
  EXPECT_NEAR(heading_changes(extract_track(loop, 0).rows, false).back(), 0.0, 1e-9);
  EXPECT_NEAR(heading_changes(extract_track(loop, 0).rows, true).back(), 2 * kPi, 1e-9);

  const std::vector<SceneFrame> scenes{quarter};
  const auto r = heading_deltas(scenes);
  EXPECT_EQ(r.histograms.at({"heading_delta", "synth", kVeh}).total(), 101);
  EXPECT_EQ(r.histograms.at({"heading", "synth", kVeh}).total(), 101);
}

TEST(PathEfficiency, ClosedForms) {
  const auto straight = synth_scene(StraightMotion{5.0}, 1, 20, 0.1);
  EXPECT_NEAR(*path_efficiency_percent(extract_track(straight, 0).rows), 100.0, 1e-9);

  const int n = 2001;
  const auto half = synth_scene(CircleMotion{10.0, kPi / (0.1 * (n - 1))}, 1, n, 0.1);
  const double want = 200.0 / kPi;
  EXPECT_NEAR(*path_efficiency_percent(extract_track(half, 0).rows), want, 1e-6 * want);

  const auto loop = synth_scene(CircleMotion{10.0, 2 * kPi / 10.0}, 1, 101, 0.1);
  EXPECT_NEAR(*path_efficiency_percent(extract_track(loop, 0).rows), 0.0, 1e-9);

  const auto parked = extract_track(scene({track("p", AgentType::kVehicle, 0, still(1, 1, 5))}), 0);
  EXPECT_EQ(*path_efficiency_percent(parked.rows), 100.0);
  const auto single = extract_track(scene({track("p", AgentType::kVehicle, 0, still(1, 1, 1))}), 0);
  EXPECT_FALSE(path_efficiency_percent(single.rows));
}

TEST(PathEfficiency, NeverExceedsHundred) {
  std::mt19937_64 rng(309);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = oracle::random_scene(rng, 10, 60, 0.1);
    for (std::size_t a = 0; a < s.agents.size(); ++a) {
      const auto e = path_efficiency_percent(extract_track(s, a).rows);
      if (e) {
        ASSERT_LE(*e, 100.0 + 1e-9);
        ASSERT_GE(*e, 0.0);
      }
    }
  }
  const std::vector<SceneFrame> tallied{scene({track("p", AgentType::kVehicle, 0, still(1, 1, 5)),
                                               track("q", AgentType::kVehicle, 0, still(9, 1, 1))})};
  const auto r = path_efficiency(tallied);
  EXPECT_EQ(r.tallies.at("path_efficiency.zero_length_paths"), 1);
  EXPECT_EQ(r.tallies.at("path_efficiency.too_few_observed"), 1);
}

TEST(Collision, Examples) {
  const Extent box{4.0, 2.0, std::nullopt};
  const std::vector<SceneFrame> close{scene({track("a", AgentType::kVehicle, 0, still(0, 0, 3), box),
                                             track("b", AgentType::kVehicle, 0, still(1, 0, 3), box),
                                             track("c", AgentType::kVehicle, 0, still(0, 10, 3), box),
                                             track("d", AgentType::kPedestrian, 0, still(50, 50, 3), std::nullopt)})};
  const auto r = collision_rate(close);
  EXPECT_EQ(r.rates.at({"collision", "ds", kVeh}), (Rate{2, 3}));
  EXPECT_EQ(r.tallies.at("collision.agents_without_extent"), 1);
  EXPECT_FALSE(r.rates.count({"collision", "ds", kPed}));

  AnalysisConfig per_ts;
  per_ts.per_timestep_events = true;
  EXPECT_EQ(collision_rate(close, per_ts).rates.at({"collision", "ds", kVeh}), (Rate{6, 9}));
}

TEST(Collision, SeparatingAxisMatchesSamplingOracle) {
  std::mt19937_64 rng(311);
  std::uniform_real_distribution<double> pos(-6, 6), ang(-kPi, kPi), len(0.5, 6), wid(0.3, 3);
  int checked = 0, hits = 0;
  for (int i = 0; i < 3000; ++i) {
    const oracle::Box a{0, 0, ang(rng), len(rng), wid(rng)};
    const oracle::Box b{pos(rng), pos(rng), ang(rng), len(rng), wid(rng)};
    const auto verdict = oracle::sampled_overlap(a, b);
    if (verdict.margin < 0.01) continue;
    const OrientedBox oa{a.cx, a.cy, a.heading, a.length, a.width};
    const OrientedBox ob{b.cx, b.cy, b.heading, b.length, b.width};
    ASSERT_EQ(boxes_intersect(oa, ob), verdict.overlap) << i;
    ASSERT_EQ(boxes_intersect(ob, oa), boxes_intersect(oa, ob));
    ++checked;
    hits += verdict.overlap;
  }
  EXPECT_GT(checked, 2500);
  EXPECT_GT(hits, 300);
  EXPECT_LT(hits, checked - 300);
}

TEST(Collision, RelationIsSymmetric) {
  std::mt19937_64 rng(313);
  std::uniform_real_distribution<double> pos(-5, 5), ang(-kPi, kPi), len(0.5, 6);
  for (int i = 0; i < 5000; ++i) {
    const OrientedBox a{pos(rng), pos(rng), ang(rng), len(rng), len(rng)};
    const OrientedBox b{pos(rng), pos(rng), ang(rng), len(rng), len(rng)};
    ASSERT_EQ(boxes_intersect(a, b), boxes_intersect(b, a));
  }
  // A lone colliding agent is impossible: two agents that touch are both flagged.
  const Extent box{4.0, 2.0, std::nullopt};
  const std::vector<SceneFrame> pair{scene({track("a", AgentType::kVehicle, 0, still(0, 0, 3), box),
                                            track("b", AgentType::kPedestrian, 0, still(3.5, 1.5, 3), box)})};
  const auto r = collision_rate(pair);
  EXPECT_EQ(r.rates.at({"collision", "ds", kVeh}), (Rate{1, 1}));
  EXPECT_EQ(r.rates.at({"collision", "ds", kPed}), (Rate{1, 1}));
  const OrientedBox a{0, 0, 0.3, 4, 2};
  const OrientedBox b{3.9, 0.5, -1.0, 4, 2};
  EXPECT_EQ(boxes_intersect(a, b), boxes_intersect(b, a));
  // Edge contact counts as intersection.
  EXPECT_TRUE(boxes_intersect({0, 0, 0, 2, 2}, {2, 0, 0, 2, 2}));
  EXPECT_FALSE(boxes_intersect({0, 0, 0, 2, 2}, {2.001, 0, 0, 2, 2}));
}

TEST(HarshAccel, Examples) {
  const double g = 9.81;
  const std::vector<SceneFrame> braking{synth_scene(StopAndGoMotion::symmetric(0.5 * g, 20, 10, 10, 0.1), 1, 80, 0.1)};
  EXPECT_DOUBLE_EQ(rate_of(harsh_accel_rate(braking), "harsh_accel", kVeh, "synth"), 1.0);
  const std::vector<SceneFrame> cruising{synth_scene(StraightMotion{20.0}, 2, 50, 0.1)};
  EXPECT_DOUBLE_EQ(rate_of(harsh_accel_rate(cruising), "harsh_accel", kVeh, "synth"), 0.0);
  const std::vector<SceneFrame> boundary{synth_scene(StopAndGoMotion::symmetric(3.924, 20, 10, 10, 0.1), 1, 80, 0.1)};
  EXPECT_DOUBLE_EQ(rate_of(harsh_accel_rate(boundary), "harsh_accel", kVeh, "synth"), 0.0);
}

TEST(Offroad, Examples) {
  MapData d;
  d.map_id = "ds:loc";
  d.road_areas.push_back(PolygonArea{"r", {{0, 0}, {100, 0}, {100, 20}, {0, 20}}, {}});
  const std::vector<VectorMap> maps{VectorMap::build(d)};
  std::vector<Pos> inside, outside;
  for (int i = 0; i < 20; ++i) {
    inside.push_back({5.0 + i, 10});
    outside.push_back({150.0 + i, 80});
  }
  const std::vector<SceneFrame> s{scene({track("a", AgentType::kVehicle, 0, inside), track("b", AgentType::kVehicle, 0, outside),
                                         track("p", AgentType::kPedestrian, 0, outside)})};
  const auto r = offroad_rate(s, maps);
  EXPECT_EQ(r.rates.at({"offroad", "ds", kVeh}), (Rate{1, 2}));
  EXPECT_FALSE(r.rates.count({"offroad", "ds", kPed}));

  const auto none = offroad_rate(s, {});
  EXPECT_TRUE(none.unavailable.count("offroad"));
  EXPECT_TRUE(none.rates.empty());

  MapData lanes_only;
  lanes_only.map_id = "ds:loc";
  RoadLane l;
  l.id = "L";
  l.centerline.points = {{0, 0, 0}, {10, 0, 0}};
  lanes_only.lanes["L"] = l;
  const std::vector<VectorMap> unsupported{VectorMap::build(lanes_only)};
  EXPECT_TRUE(offroad_rate(s, unsupported).unavailable.count("offroad"));
}

TEST(Offroad, CornerClippingMatchesOracle) {
  MapData d;
  d.map_id = "ds:loc";
  d.road_areas.push_back(PolygonArea{"r", {{0, 0}, {30, 0}, {30, 30}, {0, 30}}, {}});
  const std::vector<VectorMap> maps{VectorMap::build(d)};
  std::vector<Pos> path;
  for (int i = 0; i < 40; ++i) path.push_back({20.0 + 0.37 * i, 42.0 - 0.91 * i});
  const std::vector<SceneFrame> s{scene({track("v", AgentType::kVehicle, 0, path)})};
  AnalysisConfig cfg;
  cfg.per_timestep_events = true;
  std::int64_t want = 0;
  for (const auto& p : path) {
    double margin = 0;
    want += !oracle::in_drivable(d, {p.x, p.y}, &margin);
    ASSERT_GT(margin, 1e-7);
  }
  ASSERT_GT(want, 0);
  ASSERT_LT(want, 40);
  EXPECT_EQ(offroad_rate(s, maps, cfg).rates.at({"offroad", "ds", kVeh}), (Rate{want, 40}));
}

TEST(Analyze, MergeIsOrderIndependent) {
  std::mt19937_64 rng(317);
  std::vector<SceneFrame> scenes;
  for (int k = 0; k < 6; ++k) {
    scenes.push_back(oracle::random_scene(rng, 8, 50, 0.1, "s" + std::to_string(k), k % 2 ? "aa" : "bb"));
  }
  const auto a = analyze(scenes, metric_names(), AnalysisConfig{});
  std::reverse(scenes.begin(), scenes.end());
  const auto b = analyze(scenes, metric_names(), AnalysisConfig{});
  EXPECT_EQ(a.histograms, b.histograms);
  EXPECT_EQ(a.rates, b.rates);
  EXPECT_EQ(a.tallies, b.tallies);
  EXPECT_EQ(report_to_json(a), report_to_json(b));
  for (const auto& [key, rate] : a.rates) {
    const auto v = rate.value();
    ASSERT_TRUE(v);
    ASSERT_GE(*v, 0.0);
    ASSERT_LE(*v, 1.0);
  }
  EXPECT_THROW(analyze(scenes, {"nonsense"}, AnalysisConfig{}), Error);
}

TEST(Analyze, CacheMatchesInMemory) {
  std::mt19937_64 rng(319);
  const auto dir = temp_dir("cache");
  std::vector<SceneFrame> scenes;
  for (int k = 0; k < 5; ++k) {
    scenes.push_back(oracle::random_scene(rng, 8, 50, 0.1, "s" + std::to_string(k), "randds"));
    cache_write(scenes.back(), dir);
  }
  const auto mem = analyze(scenes, metric_names(), AnalysisConfig{});
  const auto disk = analyze(SceneCache(dir), {SceneTag::parse("randds")}, metric_names(), AnalysisConfig{});
  EXPECT_EQ(report_to_json(mem), report_to_json(disk));
  fs::remove_all(dir);
}

TEST(EmitReport, FilesAndDeterminism) {
  const auto empty_dir = temp_dir("empty");
  emit_report(MetricReport{}, empty_dir);
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(empty_dir)) ++files;
  EXPECT_EQ(files, 1u);
  const auto j = nlohmann::json::parse(slurp(empty_dir / "report.json"));
  EXPECT_TRUE(j.contains("config"));

  const std::vector<SceneFrame> s{synth_scene(StraightMotion{10.0}, 2, 20, 0.1)};
  const auto r = analyze(s, {"speed"}, AnalysisConfig{});
  const auto dir = temp_dir("one");
  emit_report(r, dir);
  const auto csv = slurp(dir / ("speed__synth__" + kVeh + ".csv"));
  std::size_t lines = std::count(csv.begin(), csv.end(), '\n');
  EXPECT_EQ(lines, 1 + r.histograms.at({"speed", "synth", kVeh}).counts.size());
  const auto again = temp_dir("again");
  emit_report(r, again);
  for (const auto& e : fs::directory_iterator(dir)) {
    EXPECT_EQ(slurp(e.path()), slurp(again / e.path().filename()));
  }
  for (const auto& p : {empty_dir, dir, again}) fs::remove_all(p);
}

TEST(AnalysisConfig, ParseAndValidate) {
  const auto cfg = parse_analysis_config(
      R"({"stationary_threshold":2.5,"per_timestep_events":true,"bins":{"speed":{"lo":0,"hi":10,"step":0.5}}})");
  EXPECT_EQ(cfg.stationary_threshold, 2.5);
  EXPECT_TRUE(cfg.per_timestep_events);
  EXPECT_EQ(cfg.bins_for("speed").bins, 20u);
  EXPECT_EQ(parse_analysis_config(analysis_config_to_json(cfg)), cfg);
  auto kind = [](const std::string& text) {
    try {
      parse_analysis_config(text);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kArgument;
  };
  EXPECT_EQ(kind("{"), ErrorKind::kParse);
  EXPECT_EQ(kind(R"({"bogus":1})"), ErrorKind::kValidation);
  EXPECT_EQ(kind(R"({"harsh_accel_threshold":0})"), ErrorKind::kValidation);
  EXPECT_EQ(kind(R"({"offroad_types":["truck"]})"), ErrorKind::kValidation);
  const AnalysisConfig defaults;
  EXPECT_EQ(defaults.harsh_accel_threshold, 3.924);
  EXPECT_EQ(defaults.density_min_agents, 2);
  EXPECT_EQ(defaults.bins_for("heading_delta").bins, 64u);
}
