#include <cmath>

#include "trajkit/ingest.hpp"

namespace trajkit {

StopAndGoMotion StopAndGoMotion::symmetric(double accel, std::int64_t plateau_steps, std::int64_t lead_steps,
                                           std::int64_t hold_steps, double dt) {
  StopAndGoMotion m;
  m.initial_speed = accel * static_cast<double>(plateau_steps) * dt;
  m.phases.push_back(AccelPhase{lead_steps, plateau_steps, -accel});
  m.phases.push_back(AccelPhase{lead_steps + plateau_steps + hold_steps, plateau_steps, accel});
  return m;
}

double StopAndGoMotion::accel_at(std::int64_t ts) const {
  for (const auto& p : phases) {
    if (ts >= p.start && ts < p.start + p.steps) return p.accel;
  }
  return 0.0;
}

namespace {

struct TrackGenerator {
  const SynthLayout& layout;
  std::int64_t n;
  double dt;
  int agent;

  std::vector<StateRow> operator()(const StraightMotion& m) const {
    if (!(m.speed >= 0.0)) throw Error(ErrorKind::kArgument, "straight motion needs speed >= 0");
    std::vector<StateRow> rows;
    const double y0 = agent * layout.spacing;
    for (std::int64_t t = 0; t < n; ++t) {
      StateRow r;
      r.ts = t;
      r.x = m.speed * static_cast<double>(t) * dt;
      r.y = y0;
      r.vx = m.speed;
      rows.push_back(r);
    }
    return rows;
  }

  std::vector<StateRow> operator()(const CircleMotion& m) const {
    if (!(m.radius > 0.0) || !(m.angular_rate > 0.0)) {
      throw Error(ErrorKind::kArgument, "circle motion needs positive radius and angular rate");
    }
    // Starts at the bottom of the circle heading +x, turning left.
    std::vector<StateRow> rows;
    const double r = m.radius;
    const double w = m.angular_rate;
    const double y0 = agent * (2.0 * r + layout.spacing);
    for (std::int64_t t = 0; t < n; ++t) {
      const double th = w * static_cast<double>(t) * dt;
      StateRow s;
      s.ts = t;
      s.x = r * std::sin(th);
      s.y = y0 + r * (1.0 - std::cos(th));
      s.vx = r * w * std::cos(th);
      s.vy = r * w * std::sin(th);
      s.ax = -r * w * w * std::sin(th);
      s.ay = r * w * w * std::cos(th);
      s.heading = wrap_angle(th);
      rows.push_back(s);
    }
    return rows;
  }

  std::vector<StateRow> operator()(const StopAndGoMotion& m) const {
    std::vector<StateRow> rows;
    const double y0 = agent * layout.spacing;
    double x = 0.0;
    double v = m.initial_speed;
    for (std::int64_t t = 0; t < n; ++t) {
      const double a = m.accel_at(t);
      StateRow s;
      s.ts = t;
      s.x = x;
      s.y = y0;
      s.vx = v;
      s.ax = a;
      rows.push_back(s);
      x += v * dt + 0.5 * a * dt * dt;
      v += a * dt;
    }
    return rows;
  }
};

}  // namespace

SceneFrame synth_scene(const SynthMotion& motion, int n_agents, std::int64_t n_timesteps, double dt,
                       const SynthLayout& layout) {
  if (n_agents < 0 || n_timesteps < 1 || !(dt > 0.0)) {
    throw Error(ErrorKind::kArgument, "synthetic scene needs n_agents >= 0, n_timesteps >= 1, dt > 0");
  }
  std::vector<AgentTrack> tracks;
  for (int a = 0; a < n_agents; ++a) {
    AgentTrack track;
    track.meta.id = "agent_" + std::to_string(a);
    track.meta.type = layout.type;
    track.meta.extent = layout.extent;
    track.meta.heading_from_data = true;
    track.rows = std::visit(TrackGenerator{layout, n_timesteps, dt, a}, motion);
    tracks.push_back(std::move(track));
  }
  SceneFrame scene = make_scene(SceneInfo{layout.scene_id, layout.dataset, layout.split, layout.location, dt},
                                std::move(tracks));
  scene.n_timesteps = n_timesteps;
  return scene;
}

}  // namespace trajkit
