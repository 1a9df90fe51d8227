#include "trajkit/kinematics.hpp"

#include <cmath>
#include <sstream>

namespace trajkit {

Derivative derive_derivative(std::span<const double> s, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::kArgument, "derivative requires dt > 0");
  Derivative d;
  const std::size_t n = s.size();
  if (n == 0) return d;
  if (n == 1) {
    d.values = {0.0};
    d.degenerate = true;
    return d;
  }
  d.values.resize(n);
  d.values[0] = (s[1] - s[0]) / dt;
  d.values[n - 1] = (s[n - 1] - s[n - 2]) / dt;
  for (std::size_t i = 1; i + 1 < n; ++i) d.values[i] = (s[i + 1] - s[i - 1]) / (2.0 * dt);
  return d;
}

HeadingSeries derive_heading(std::span<const double> vx, std::span<const double> vy, double speed_floor) {
  if (vx.size() != vy.size()) throw Error(ErrorKind::kArgument, "heading derivation needs equal-length arrays");
  HeadingSeries out;
  const std::size_t n = vx.size();
  out.values.assign(n, 0.0);

  std::optional<double> held;
  std::size_t first_defined = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::hypot(vx[i], vy[i]) >= speed_floor) {
      held = wrap_angle(std::atan2(vy[i], vx[i]));
      if (first_defined == n) first_defined = i;
    }
    if (held) out.values[i] = *held;
  }
  if (first_defined == n) {
    out.degenerate = n > 0;
    return out;
  }
  for (std::size_t i = 0; i < first_defined; ++i) out.values[i] = out.values[first_defined];
  return out;
}

std::vector<StateRow> impute_linear(std::span<const StateRow> rows, bool interpolate_heading) {
  std::vector<StateRow> out;
  if (rows.empty()) return out;
  out.reserve(static_cast<std::size_t>(rows.back().ts - rows.front().ts + 1));
  out.push_back(rows.front());
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const StateRow& a = rows[k - 1];
    const StateRow& b = rows[k];
    const std::int64_t span = b.ts - a.ts;
    for (std::int64_t t = a.ts + 1; t < b.ts; ++t) {
      const double u = static_cast<double>(t - a.ts) / static_cast<double>(span);
      StateRow r;
      r.ts = t;
      r.x = a.x + u * (b.x - a.x);
      r.y = a.y + u * (b.y - a.y);
      r.z = a.z + u * (b.z - a.z);
      if (interpolate_heading) r.heading = wrap_angle(a.heading + u * wrap_angle(b.heading - a.heading));
      r.observed = false;
      out.push_back(r);
    }
    out.push_back(b);
  }
  return out;
}

void derive_kinematics(std::vector<StateRow>& rows, double dt, bool heading_from_data, double speed_floor) {
  const std::size_t n = rows.size();
  if (n == 0) return;
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = rows[i].x;
    ys[i] = rows[i].y;
  }
  const auto vx = derive_derivative(xs, dt).values;
  const auto vy = derive_derivative(ys, dt).values;
  const auto ax = derive_derivative(vx, dt).values;
  const auto ay = derive_derivative(vy, dt).values;
  for (std::size_t i = 0; i < n; ++i) {
    rows[i].vx = vx[i];
    rows[i].vy = vy[i];
    rows[i].ax = ax[i];
    rows[i].ay = ay[i];
  }
  if (heading_from_data) {
    for (auto& r : rows) r.heading = wrap_angle(r.heading);
    return;
  }
  const auto heading = derive_heading(vx, vy, speed_floor).values;
  for (std::size_t i = 0; i < n; ++i) rows[i].heading = heading[i];
}

AgentTrack complete_track(AgentTrack track, double dt, double speed_floor) {
  track.rows = impute_linear(track.rows, track.meta.heading_from_data);
  derive_kinematics(track.rows, dt, track.meta.heading_from_data, speed_floor);
  if (!track.rows.empty()) {
    track.meta.first_ts = track.rows.front().ts;
    track.meta.last_ts = track.rows.back().ts;
  }
  return track;
}

ResamplePlan make_resample_plan(double native_dt, double desired_dt) {
  constexpr double kTol = 1e-9;
  auto ratio_error = [&] {
    std::ostringstream os;
    os.precision(17);
    os << "cannot resample from dt=" << native_dt << " s to dt=" << desired_dt
       << " s: ratio is not an integer";
    return Error(ErrorKind::kRatio, os.str());
  };
  if (!(native_dt > 0.0) || !(desired_dt > 0.0)) throw ratio_error();

  ResamplePlan plan{native_dt, desired_dt, ResampleMode::kIdentity, 1};
  if (std::abs(native_dt - desired_dt) <= kTol) return plan;

  if (native_dt > desired_dt) {
    const double f = std::round(native_dt / desired_dt);
    if (f < 2.0 || std::abs(native_dt - f * desired_dt) > kTol) throw ratio_error();
    plan.mode = ResampleMode::kUpsample;
    plan.factor = static_cast<int>(f);
  } else {
    const double f = std::round(desired_dt / native_dt);
    if (f < 2.0 || std::abs(desired_dt - f * native_dt) > kTol) throw ratio_error();
    plan.mode = ResampleMode::kDownsample;
    plan.factor = static_cast<int>(f);
  }
  return plan;
}

namespace {

std::vector<StateRow> upsample_rows(const std::vector<StateRow>& rows, int factor, bool heading_from_data) {
  std::vector<StateRow> out;
  if (rows.empty()) return out;
  out.reserve((rows.size() - 1) * static_cast<std::size_t>(factor) + 1);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    StateRow base = rows[k];
    base.ts *= factor;
    out.push_back(base);
    if (k + 1 == rows.size()) break;
    const StateRow& a = rows[k];
    const StateRow& b = rows[k + 1];
    for (int j = 1; j < factor; ++j) {
      const double u = static_cast<double>(j) / factor;
      StateRow r;
      r.ts = base.ts + j;
      r.x = a.x + u * (b.x - a.x);
      r.y = a.y + u * (b.y - a.y);
      r.z = a.z + u * (b.z - a.z);
      if (heading_from_data) r.heading = wrap_angle(a.heading + u * wrap_angle(b.heading - a.heading));
      r.observed = false;
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace

SceneFrame resample_scene(const SceneFrame& scene, double desired_dt) {
  const ResamplePlan plan = make_resample_plan(scene.dt, desired_dt);
  if (plan.mode == ResampleMode::kIdentity) return scene;

  SceneInfo info{scene.scene_id, scene.dataset, scene.split, scene.location, desired_dt};
  std::vector<AgentTrack> tracks;
  tracks.reserve(scene.agents.size());
  for (AgentTrack& track : extract_tracks(scene)) {
    if (plan.mode == ResampleMode::kUpsample) {
      track.rows = upsample_rows(track.rows, plan.factor, track.meta.heading_from_data);
    } else {
      std::vector<StateRow> kept;
      for (const StateRow& r : track.rows) {
        if (r.ts % plan.factor == 0) {
          StateRow k = r;
          k.ts /= plan.factor;
          kept.push_back(k);
        }
      }
      track.rows = std::move(kept);
    }
    if (track.rows.empty()) continue;
    derive_kinematics(track.rows, desired_dt, track.meta.heading_from_data);
    tracks.push_back(std::move(track));
  }

  SceneFrame out = make_scene(info, std::move(tracks));
  if (plan.mode == ResampleMode::kUpsample) {
    out.n_timesteps = std::max(out.n_timesteps, (scene.n_timesteps - 1) * plan.factor + 1);
  } else {
    out.n_timesteps = std::max(out.n_timesteps, (scene.n_timesteps - 1) / plan.factor + 1);
  }
  return out;
}

}  // namespace trajkit
