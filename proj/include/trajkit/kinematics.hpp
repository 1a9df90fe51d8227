#pragma once

#include <span>
#include <vector>

#include "trajkit/core.hpp"

namespace trajkit {

inline constexpr double kDefaultSpeedFloor = 0.05;  // m/s

struct Derivative {
  std::vector<double> values;
  bool degenerate = false;  // single-sample input, derivative defined as 0
};

/// Central differences at interior samples, one-sided differences at both
/// ends. A single sample yields {0} with `degenerate` set.
Derivative derive_derivative(std::span<const double> series, double dt);

struct HeadingSeries {
  std::vector<double> values;
  bool degenerate = false;  // no sample reached the speed floor
};

/// atan2(vy, vx) wherever speed >= speed_floor. Slower samples hold the last
/// defined heading; a slow prefix takes the first defined heading.
HeadingSeries derive_heading(std::span<const double> vx, std::span<const double> vy,
                             double speed_floor = kDefaultSpeedFloor);

/// Fills every missing frame strictly between the given rows by per-axis
/// linear interpolation. Filled rows are flagged unobserved and carry zero
/// derivatives until derive_kinematics runs. With `interpolate_heading` the
/// heading is interpolated along the shorter arc, otherwise it is left 0.
std::vector<StateRow> impute_linear(std::span<const StateRow> rows, bool interpolate_heading = false);

/// Recomputes velocity and acceleration from positions (and heading from
/// velocity unless headings came from data). Rows must be frame-contiguous.
void derive_kinematics(std::vector<StateRow>& rows, double dt, bool heading_from_data,
                       double speed_floor = kDefaultSpeedFloor);

/// impute_linear followed by derive_kinematics.
AgentTrack complete_track(AgentTrack track, double dt, double speed_floor = kDefaultSpeedFloor);

enum class ResampleMode { kIdentity, kUpsample, kDownsample };

struct ResamplePlan {
  double native_dt = 0.0;
  double desired_dt = 0.0;
  ResampleMode mode = ResampleMode::kIdentity;
  int factor = 1;
};

/// Throws Error(kRatio) unless one dt is an integer multiple of the other
/// (within 1e-9 s).
ResamplePlan make_resample_plan(double native_dt, double desired_dt);

/// Upsampling inserts factor-1 interpolated, unobserved rows between frames.
/// Downsampling keeps frames on the coarse grid (ts divisible by factor) and
/// drops agents that never land on it. Derivatives are recomputed at the new
/// dt in both cases.
SceneFrame resample_scene(const SceneFrame& scene, double desired_dt);

}  // namespace trajkit
