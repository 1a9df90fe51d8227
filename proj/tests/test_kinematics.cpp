#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "trajkit/ingest.hpp"
#include "trajkit/kinematics.hpp"

using namespace trajkit;

namespace {

// Derivative of the interpolating polynomial through the neighbouring
// samples: quadratic in the interior, linear at the ends.
std::vector<double> lagrange_derivative(const std::vector<double>& s, double dt) {
  const std::size_t n = s.size();
  std::vector<double> out(n, 0.0);
  if (n < 2) return out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0) {
      out[i] = (s[1] - s[0]) / dt;
    } else if (i + 1 == n) {
      out[i] = (s[n - 1] - s[n - 2]) / dt;
    } else {
      // p(t) through (-dt, s[i-1]), (0, s[i]), (dt, s[i+1]); p'(0).
      const double l_minus = -1.0 / (2 * dt);
      const double l_plus = 1.0 / (2 * dt);
      out[i] = l_minus * s[i - 1] + l_plus * s[i + 1];
    }
  }
  return out;
}

std::vector<StateRow> rows_from_x(const std::vector<std::pair<std::int64_t, double>>& pts) {
  std::vector<StateRow> rows;
  for (auto [t, x] : pts) {
    StateRow r;
    r.ts = t;
    r.x = x;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

TEST(DeriveDerivative, LinearMotion) {
  const std::vector<double> s = {0, 1, 2, 3};
  EXPECT_EQ(derive_derivative(s, 1.0).values, (std::vector<double>{1, 1, 1, 1}));
}

TEST(DeriveDerivative, QuadraticMotion) {
  const std::vector<double> s = {0, 1, 4, 9};
  const auto v = derive_derivative(s, 1.0).values;
  EXPECT_EQ(v, (std::vector<double>{1, 2, 4, 5}));
  const auto a = derive_derivative(v, 1.0).values;
  EXPECT_DOUBLE_EQ(a[1], 1.5);
  EXPECT_DOUBLE_EQ(a[2], 1.5);
}

TEST(DeriveDerivative, ConstantSeriesIsZero) {
  const std::vector<double> s = {5, 5, 5};
  for (double v : derive_derivative(s, 0.1).values) EXPECT_EQ(v, 0.0);
}

TEST(DeriveDerivative, SingleSampleIsDegenerate) {
  const std::vector<double> s = {3.0};
  const auto d = derive_derivative(s, 0.1);
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.values, std::vector<double>{0.0});
  EXPECT_THROW(derive_derivative(s, 0.0), Error);
}

TEST(DeriveDerivative, MatchesInterpolatingPolynomialOracle) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(2 + trial % 30);
    for (auto& v : s) v = n(rng);
    const double dt = 0.05 + 0.01 * (trial % 7);
    const auto got = derive_derivative(s, dt).values;
    const auto want = lagrange_derivative(s, dt);
    for (std::size_t i = 0; i < s.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-9 * (1 + std::abs(want[i])));
  }
}

TEST(DeriveHeading, SpecExamples) {
  {
    const std::vector<double> vx = {1, 1}, vy = {0, 0};
    EXPECT_EQ(derive_heading(vx, vy, 0.1).values, (std::vector<double>{0, 0}));
  }
  {
    const std::vector<double> vx = {0, 0, 1}, vy = {0, 0, 1};
    for (double h : derive_heading(vx, vy, 0.1).values) EXPECT_DOUBLE_EQ(h, kPi / 4);
  }
  {
    const std::vector<double> vx = {1, 0, -1}, vy = {0, 0, 0};
    const auto h = derive_heading(vx, vy, 0.1).values;
    EXPECT_DOUBLE_EQ(h[0], 0.0);
    EXPECT_DOUBLE_EQ(h[1], 0.0);
    EXPECT_DOUBLE_EQ(h[2], kPi);
  }
  {
    const std::vector<double> vx = {0, 0.01}, vy = {0, 0};
    const auto h = derive_heading(vx, vy, 0.1);
    EXPECT_TRUE(h.degenerate);
    EXPECT_EQ(h.values, (std::vector<double>{0, 0}));
  }
}

TEST(DeriveHeading, AlwaysInHalfOpenRange) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> vx(5000), vy(5000);
  for (std::size_t i = 0; i < vx.size(); ++i) {
    vx[i] = n(rng);
    vy[i] = i % 50 == 0 ? -0.0 : n(rng);
  }
  vx[7] = -1.0;
  vy[7] = -0.0;
  for (double h : derive_heading(vx, vy).values) {
    ASSERT_GT(h, -kPi);
    ASSERT_LE(h, kPi);
  }
}

TEST(ImputeLinear, FillsGapsUnobserved) {
  const auto out = impute_linear(rows_from_x({{0, 0.0}, {2, 2.0}}));
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[1].ts, 1);
  EXPECT_DOUBLE_EQ(out[1].x, 1.0);
  EXPECT_FALSE(out[1].observed);
  EXPECT_TRUE(out[0].observed);

  const auto wide = impute_linear(rows_from_x({{0, 0.0}, {4, 8.0}}));
  ASSERT_EQ(wide.size(), 5u);
  EXPECT_DOUBLE_EQ(wide[1].x, 2.0);
  EXPECT_DOUBLE_EQ(wide[2].x, 4.0);
  EXPECT_DOUBLE_EQ(wide[3].x, 6.0);
}

TEST(ImputeLinear, NoGapsIsIdentity) {
  const auto rows = rows_from_x({{3, 1.0}, {4, 2.5}, {5, -1.0}});
  EXPECT_EQ(impute_linear(rows), rows);
}

TEST(ImputeLinear, LinearDataKeepsConstantSlope) {
  std::vector<std::pair<std::int64_t, double>> pts;
  for (std::int64_t t : {0, 1, 4, 5, 9, 10, 11, 17}) pts.push_back({t, 2.5 * static_cast<double>(t) - 7.0});
  auto rows = impute_linear(rows_from_x(pts));
  derive_kinematics(rows, 0.5, false);
  for (const auto& r : rows) ASSERT_NEAR(r.vx, 5.0, 5.0 * 1e-12);
}

TEST(ResamplePlan, Modes) {
  EXPECT_EQ(make_resample_plan(0.1, 0.1).mode, ResampleMode::kIdentity);
  const auto up = make_resample_plan(0.5, 0.1);
  EXPECT_EQ(up.mode, ResampleMode::kUpsample);
  EXPECT_EQ(up.factor, 5);
  const auto down = make_resample_plan(0.1, 0.3);
  EXPECT_EQ(down.mode, ResampleMode::kDownsample);
  EXPECT_EQ(down.factor, 3);
}

TEST(ResamplePlan, NonIntegerRatioNamesBothDts) {
  try {
    make_resample_plan(0.1, 0.25);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kRatio);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("0.1"), std::string::npos);
    EXPECT_NE(msg.find("0.25"), std::string::npos);
  }
}

TEST(ResampleScene, UpsampleFillsLinearly) {
  AgentTrack t;
  t.meta.id = "a";
  t.rows = rows_from_x({{0, 0.0}, {1, 5.0}});
  const auto scene = make_scene({"s", "d", "train", "l", 0.5}, {complete_track(t, 0.5)});
  const auto up = resample_scene(scene, 0.1);
  EXPECT_DOUBLE_EQ(up.dt, 0.1);
  ASSERT_EQ(up.columns.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_NEAR(up.columns.x[i], static_cast<double>(i), 1e-12);
    EXPECT_EQ(up.columns.observed[i] != 0, i == 0 || i == 5);
  }
  EXPECT_EQ(up.n_timesteps, 6);
}

TEST(ResampleScene, IdentityKeepsRows) {
  const auto s = synth_scene(StraightMotion{3.0}, 2, 20, 0.1);
  EXPECT_EQ(resample_scene(s, 0.1), s);
}

TEST(ResampleScene, UpThenDownRestoresObservedRows) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-20, 20);
  std::vector<AgentTrack> tracks;
  for (int a = 0; a < 4; ++a) {
    AgentTrack t;
    t.meta.id = "a" + std::to_string(a);
    for (std::int64_t f = a; f < 12 + a; ++f) {
      StateRow r;
      r.ts = f;
      r.x = u(rng);
      r.y = u(rng);
      t.rows.push_back(r);
    }
    tracks.push_back(complete_track(t, 0.2));
  }
  const auto scene = make_scene({"s", "d", "train", "l", 0.2}, tracks);
  const auto round = resample_scene(resample_scene(scene, 0.05), 0.2);
  ASSERT_EQ(round.columns.size(), scene.columns.size());
  EXPECT_EQ(round.columns.ts, scene.columns.ts);
  EXPECT_EQ(round.columns.x, scene.columns.x);
  EXPECT_EQ(round.columns.y, scene.columns.y);
  EXPECT_EQ(round.columns.observed, scene.columns.observed);
}

TEST(ResampleScene, DownsampleKeepsCoarseGrid) {
  const auto s = synth_scene(StraightMotion{1.0}, 1, 10, 0.1);
  const auto d = resample_scene(s, 0.2);
  EXPECT_DOUBLE_EQ(d.dt, 0.2);
  ASSERT_EQ(d.columns.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(d.columns.ts[i], static_cast<std::int64_t>(i));
    EXPECT_NEAR(d.columns.x[i], 0.2 * static_cast<double>(i), 1e-12);
    EXPECT_NEAR(d.columns.vx[i], 1.0, 1e-12);
  }
}

TEST(DeriveKinematics, CircleChordFormula) {
  // Central differences on a circle sampled at dt give speed
  // r * sin(w dt) / dt exactly.
  const double r = 10.0, w = 0.1, dt = 0.1;
  const auto s = synth_scene(CircleMotion{r, w}, 1, 200, dt);
  auto track = extract_track(s, 0);
  derive_kinematics(track.rows, dt, false);
  const double chord_speed = r * std::sin(w * dt) / dt;
  for (std::size_t i = 1; i + 1 < track.rows.size(); ++i) {
    const auto& row = track.rows[i];
    ASSERT_NEAR(std::hypot(row.vx, row.vy), chord_speed, 1e-9);
    ASSERT_NEAR(wrap_angle(row.heading - w * dt * static_cast<double>(row.ts)), 0.0, 1e-9);
  }
}
