#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "trajkit/analysis.hpp"
#include "trajkit/bytes.hpp"
#include "trajkit/kinematics.hpp"
#include "trajkit/simulation.hpp"

using namespace trajkit;
namespace fs = std::filesystem;

namespace {

std::map<std::string, Pose> real_poses(const SceneFrame& s, const std::set<std::string>& ids, std::int64_t ts) {
  std::map<std::string, Pose> out;
  for (const auto& id : ids) {
    const auto a = *s.find_agent(id);
    const auto row = *s.row_at(a, ts);
    out[id] = Pose{s.columns.x[row], s.columns.y[row], s.columns.heading[row]};
  }
  return out;
}

// Agents alive over the whole [init, init + steps] window.
std::set<std::string> alive_over(const SceneFrame& s, std::int64_t init, std::int64_t steps) {
  std::set<std::string> out;
  for (const auto& a : s.agents) {
    if (a.first_ts <= init && a.last_ts >= init + steps) out.insert(a.id);
  }
  return out;
}

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("trajkit_sim_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Wasserstein, SmallSamples) {
  const std::vector<double> a{3, 0, 1}, b{5, 8, 6};
  EXPECT_DOUBLE_EQ(wasserstein1(a, b), 5.0);
  EXPECT_DOUBLE_EQ(wasserstein1(a, a), 0.0);
  const std::vector<double> one{0}, two{0, 2};
  EXPECT_DOUBLE_EQ(wasserstein1(one, two), 1.0);
  EXPECT_DOUBLE_EQ(wasserstein1(two, one), 1.0);
  EXPECT_EQ(wasserstein1({}, two), 0.0);
}

TEST(Wasserstein, UnequalSizesMatchQuantileIntegral) {
  // Equal-size samples repeated k times describe the same distribution.
  std::mt19937_64 rng(401);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(7), b(5);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng) + 1;
    std::vector<double> a5, b7;
    for (int k = 0; k < 5; ++k) a5.insert(a5.end(), a.begin(), a.end());
    for (int k = 0; k < 7; ++k) b7.insert(b7.end(), b.begin(), b.end());
    ASSERT_NEAR(wasserstein1(a, b), wasserstein1(a5, b7), 1e-12);
  }
}

TEST(SimReset, ObservationMatchesRows) {
  const auto s = synth_scene(CircleMotion{}, 3, 50, 0.1);
  for (std::int64_t ts : {0, 20}) {
    const auto sim = SimulationScene::reset(s, ts, {"agent_0"});
    const auto obs = sim.observation();
    EXPECT_EQ(obs.ts, ts);
    ASSERT_EQ(obs.agents.size(), 3u);
    for (std::size_t a = 0; a < 3; ++a) {
      EXPECT_TRUE(obs.agents[a].valid);
      EXPECT_EQ(obs.agents[a].state, s.columns.row(*s.row_at(a, ts)));
    }
    EXPECT_TRUE(obs.agents[0].controlled);
    EXPECT_FALSE(obs.agents[1].controlled);
  }
}

TEST(SimReset, Errors) {
  auto s = synth_scene(StraightMotion{}, 2, 50, 0.1);
  auto kind = [&](std::int64_t ts, const std::set<std::string>& ids) {
    try {
      SimulationScene::reset(s, ts, ids);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kEmpty;
  };
  EXPECT_EQ(kind(50, {}), ErrorKind::kArgument);
  EXPECT_EQ(kind(-1, {}), ErrorKind::kArgument);
  EXPECT_EQ(kind(0, {"ghost"}), ErrorKind::kNotFound);

  std::mt19937_64 rng(403);
  const auto r = oracle::random_scene(rng, 6, 60, 0.1);
  for (const auto& a : r.agents) {
    if (a.first_ts > 0) {
      EXPECT_THROW(SimulationScene::reset(r, a.first_ts - 1, {a.id}), Error);
      break;
    }
  }
}

TEST(SimStep, ReplayIsIdentity) {
  std::mt19937_64 rng(405);
  int checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = oracle::random_scene(rng, 10, 80, 0.1);
    const std::int64_t init = 20, steps = 30;
    const auto ids = alive_over(s, init, steps);
    if (ids.empty()) continue;
    auto sim = SimulationScene::reset(s, init, ids);
    for (std::int64_t k = 1; k <= steps; ++k) {
      const auto obs = sim.step(real_poses(s, ids, init + k));
      ASSERT_EQ(obs.ts, init + k);
      ASSERT_EQ(sim.current_ts(), init + k);
    }
    for (const auto& t : sim.rollout()) {
      ASSERT_EQ(t.rows.size(), static_cast<std::size_t>(steps));
      const auto a = *s.find_agent(t.meta.id);
      // The last row has no successor yet, so only interior rows match the
      // recorded central differences.
      for (std::size_t k = 0; k + 1 < t.rows.size(); ++k) {
        const auto row = s.columns.row(*s.row_at(a, t.rows[k].ts));
        ASSERT_EQ(t.rows[k].x, row.x);
        ASSERT_NEAR(t.rows[k].vx, row.vx, 1e-9);
        ASSERT_NEAR(t.rows[k].vy, row.vy, 1e-9);
      }
    }
    const auto m = sim.score();
    EXPECT_LE(m.speed_distance, 1e-12);
    EXPECT_LE(m.accel_distance, 1e-12);
    EXPECT_EQ(m.collision_rate, m.real_collision_rate);
    EXPECT_EQ(m.n_samples, ids.size() * static_cast<std::size_t>(steps));
    ++checked;
  }
  EXPECT_GT(checked, 5);
}

TEST(SimStep, SpeedShiftGivesFive) {
  const double dt = 0.1;
  const auto s = synth_scene(StraightMotion{10.0}, 2, 60, dt);
  const std::set<std::string> ids{"agent_0", "agent_1"};
  auto sim = SimulationScene::reset(s, 10, ids);
  const auto start = sim.observation();
  for (std::int64_t k = 1; k <= 30; ++k) {
    std::map<std::string, Pose> poses;
    for (const auto& o : start.agents) {
      poses[o.agent_id] = Pose{o.state.x + 15.0 * dt * static_cast<double>(k), o.state.y, 0.0};
    }
    sim.step(poses);
  }
  EXPECT_NEAR(sim.score().speed_distance, 5.0, 1e-9);
}

TEST(SimStep, ConstantPoseHasZeroSpeed) {
  const auto s = synth_scene(StraightMotion{10.0}, 1, 60, 0.1);
  auto sim = SimulationScene::reset(s, 5, {"agent_0"});
  const auto here = sim.observation().agents[0].state;
  for (int k = 0; k < 10; ++k) sim.step({{"agent_0", Pose{here.x, here.y, 0.0}}});
  const auto rows = sim.rollout()[0].rows;
  for (std::size_t k = 1; k < rows.size(); ++k) EXPECT_EQ(std::hypot(rows[k].vx, rows[k].vy), 0.0);
}

TEST(SimStep, TeleportIsFlaggedAsHarsh) {
  const auto s = synth_scene(StraightMotion{10.0}, 1, 60, 0.1);
  auto sim = SimulationScene::reset(s, 5, {"agent_0"});
  const auto here = sim.observation().agents[0].state;
  sim.step({{"agent_0", Pose{here.x + 100.0, here.y, 0.0}}});
  sim.step({{"agent_0", Pose{here.x + 101.0, here.y, 0.0}}});
  const std::vector<SceneFrame> simulated{sim.simulated_scene()};
  const auto r = harsh_accel_rate(simulated);
  EXPECT_EQ(r.rates.at({"harsh_accel", "synth", std::string(kAllTypes)}), (Rate{1, 1}));
}

TEST(SimStep, PoseContract) {
  const auto s = synth_scene(StraightMotion{10.0}, 2, 60, 0.1);
  auto sim = SimulationScene::reset(s, 5, {"agent_0"});
  EXPECT_THROW(sim.step({}), Error);
  EXPECT_THROW(sim.step({{"agent_0", Pose{0, 0, 0}}, {"agent_1", Pose{0, 0, 0}}}), Error);
  EXPECT_THROW(sim.step({{"agent_0", Pose{NAN, 0, 0}}}), Error);
  EXPECT_THROW(sim.step({{"agent_0", Pose{0, INFINITY, 0}}}), Error);
  EXPECT_EQ(sim.current_ts(), 5);
  sim.step({{"agent_0", Pose{1, 2, 7.0}}});
  EXPECT_EQ(sim.current_ts(), 6);
  EXPECT_NEAR(sim.rollout()[0].rows[0].heading, wrap_angle(7.0), 1e-15);
}

TEST(SimStep, DeadAgentsAreHeldAndMasked) {
  const double dt = 0.1;
  std::vector<AgentTrack> tracks;
  for (int a = 0; a < 2; ++a) {
    AgentTrack t;
    t.meta.id = a == 0 ? "long" : "short";
    t.meta.type = AgentType::kVehicle;
    for (std::int64_t f = 0; f < (a == 0 ? 30 : 8); ++f) {
      StateRow r;
      r.ts = f;
      r.x = static_cast<double>(f);
      r.y = 5.0 * a;
      t.rows.push_back(r);
    }
    tracks.push_back(complete_track(t, dt));
  }
  const auto s = make_scene({"s", "ds", "train", "loc", dt}, tracks);
  auto sim = SimulationScene::reset(s, 5, {"long"});
  Observation obs;
  for (std::int64_t k = 6; k <= 10; ++k) obs = sim.step(real_poses(s, {"long"}, k));
  const auto& shorty = obs.agents[1];
  EXPECT_EQ(shorty.agent_id, "short");
  EXPECT_FALSE(shorty.valid);
  EXPECT_EQ(shorty.state.x, 7.0);
  EXPECT_EQ(obs.agents.size(), 2u);
}

TEST(SimScore, EmptyControlledSet) {
  const auto s = synth_scene(StraightMotion{10.0}, 2, 60, 0.1);
  auto sim = SimulationScene::reset(s, 5, {});
  for (int k = 0; k < 5; ++k) sim.step({});
  const auto m = sim.score();
  EXPECT_EQ(m.speed_distance, 0.0);
  EXPECT_EQ(m.accel_distance, 0.0);
  EXPECT_EQ(m.n_samples, 0u);
}

TEST(SimScore, OffroadNeedsMap) {
  const auto s = synth_scene(StraightMotion{10.0}, 1, 60, 0.1);
  auto sim = SimulationScene::reset(s, 0, {"agent_0"});
  for (std::int64_t k = 1; k <= 5; ++k) sim.step(real_poses(s, {"agent_0"}, k));
  EXPECT_FALSE(sim.score().offroad_rate);
  MapData d;
  d.map_id = "synth:lab";
  d.road_areas.push_back(PolygonArea{"r", {{-10, -10}, {3, -10}, {3, 10}, {-10, 10}}, {}});
  const std::vector<VectorMap> maps{VectorMap::build(d)};
  const auto m = sim.score(maps);
  ASSERT_TRUE(m.offroad_rate);
  EXPECT_EQ(*m.offroad_rate, 1.0);
  EXPECT_EQ(m.real_offroad_rate, m.offroad_rate);
}

TEST(SimExport, RoundTripAndDeterminism) {
  std::mt19937_64 rng(407);
  const auto dir = temp_dir("export");
  int checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = oracle::random_scene(rng, 8, 60, 0.1, "rt" + std::to_string(trial));
    const auto ids = alive_over(s, 10, 20);
    if (ids.empty()) continue;
    auto sim = SimulationScene::reset(s, 10, ids);
    for (std::int64_t k = 1; k <= 20; ++k) {
      auto poses = real_poses(s, ids, 10 + k);
      for (auto& [id, p] : poses) p.x += 0.1 * static_cast<double>(k);
      sim.step(poses);
    }
    const auto path = dir / "rollout.csv";
    sim.export_csv(path);
    const auto bytes = read_file_bytes(path.string());
    const auto meta = parse_meta_json(read_file_text((dir / "rollout.meta.json").string()));
    const auto back = parse_canonical_csv(read_file_text(path.string()), meta);
    ASSERT_EQ(back.agents.size(), ids.size());
    for (const auto& t : sim.rollout()) {
      const auto a = *back.find_agent(t.meta.id);
      for (const auto& row : t.rows) {
        const auto r = back.row_at(a, row.ts - 10);
        ASSERT_TRUE(r);
        ASSERT_EQ(back.columns.x[*r], row.x);
        ASSERT_EQ(back.columns.y[*r], row.y);
        ASSERT_EQ(back.columns.heading[*r], row.heading);
      }
    }
    sim.export_csv(path);
    ASSERT_EQ(read_file_bytes(path.string()), bytes);
    ++checked;
  }
  EXPECT_GT(checked, 5);

  const auto s = synth_scene(StraightMotion{}, 1, 20, 0.1);
  const auto fresh = SimulationScene::reset(s, 3, {"agent_0"});
  fresh.export_csv(dir / "empty.csv");
  EXPECT_EQ(read_file_text((dir / "empty.csv").string()), std::string(kCanonicalCsvHeader) + "\n");
  EXPECT_THROW(fresh.export_csv(dir / "missing_dir" / "x.csv"), Error);
  fs::remove_all(dir);
}
