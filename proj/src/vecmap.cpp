#include "trajkit/vecmap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace trajkit {

std::string_view to_string(TrafficLightStatus status) {
  switch (status) {
    case TrafficLightStatus::kGreen: return "green";
    case TrafficLightStatus::kYellow: return "yellow";
    case TrafficLightStatus::kRed: return "red";
    case TrafficLightStatus::kUnknown: return "unknown";
  }
  return "unknown";
}

TrafficLightStatus parse_traffic_light_status(std::string_view text) {
  for (auto s : {TrafficLightStatus::kGreen, TrafficLightStatus::kYellow, TrafficLightStatus::kRed,
                 TrafficLightStatus::kUnknown}) {
    if (to_string(s) == text) return s;
  }
  throw Error(ErrorKind::kParse, "unknown traffic light status '" + std::string(text) + "'");
}

double Polyline::length() const {
  double total = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    total += std::hypot(points[i].x - points[i - 1].x, points[i].y - points[i - 1].y);
  }
  return total;
}

double point_segment_distance(Point2 p, Point2 a, Point2 b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  if (len2 == 0.0) return std::hypot(p.x - a.x, p.y - a.y);
  const double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
  if (t <= 0.0) return std::hypot(p.x - a.x, p.y - a.y);
  if (t >= 1.0) return std::hypot(p.x - b.x, p.y - b.y);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

double point_polyline_distance(Point2 p, const Polyline& line) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < line.points.size(); ++i) {
    best = std::min(best, point_segment_distance(p, line.points[i - 1].xy(), line.points[i].xy()));
  }
  if (line.points.size() == 1) best = std::hypot(p.x - line.points[0].x, p.y - line.points[0].y);
  return best;
}

double ring_signed_area(const Ring& ring) {
  const std::size_t n = ring.size();
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = ring[i];
    const Point2& b = ring[(i + 1) % n];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

namespace {

double orient(Point2 a, Point2 b, Point2 c) { return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x); }

bool on_segment(Point2 p, Point2 a, Point2 b) {
  if (orient(a, b, p) != 0.0) return false;
  return p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) && p.y >= std::min(a.y, b.y) &&
         p.y <= std::max(a.y, b.y);
}

bool segments_intersect(Point2 a, Point2 b, Point2 c, Point2 d) {
  const double o1 = orient(a, b, c);
  const double o2 = orient(a, b, d);
  const double o3 = orient(c, d, a);
  const double o4 = orient(c, d, b);
  if (((o1 > 0 && o2 < 0) || (o1 < 0 && o2 > 0)) && ((o3 > 0 && o4 < 0) || (o3 < 0 && o4 > 0))) return true;
  return (o1 == 0 && on_segment(c, a, b)) || (o2 == 0 && on_segment(d, a, b)) || (o3 == 0 && on_segment(a, c, d)) ||
         (o4 == 0 && on_segment(b, c, d));
}

std::size_t distinct_points(const Ring& ring) {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(ring.size());
  for (const auto& p : ring) pts.emplace_back(p.x, p.y);
  std::sort(pts.begin(), pts.end());
  return static_cast<std::size_t>(std::unique(pts.begin(), pts.end()) - pts.begin());
}

void require_ring(const Ring& ring, const std::string& what) {
  if (distinct_points(ring) < 3) throw Error(ErrorKind::kArgument, what + ": ring needs at least 3 distinct points");
}

bool ring_self_intersects(const Ring& ring) {
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a = ring[i];
    const Point2 b = ring[(i + 1) % n];
    if (a == b) return true;
    for (std::size_t j = i + 1; j < n; ++j) {
      // Adjacent edges share a vertex by construction.
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(a, b, ring[j], ring[(j + 1) % n])) return true;
    }
  }
  return false;
}

Box2 ring_box(const Ring& ring) {
  Box2 b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
         -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : ring) {
    b.min_x = std::min(b.min_x, p.x);
    b.min_y = std::min(b.min_y, p.y);
    b.max_x = std::max(b.max_x, p.x);
    b.max_y = std::max(b.max_y, p.y);
  }
  return b;
}

Ring lane_ring(const RoadLane& lane) {
  Ring ring;
  for (const auto& p : lane.left_edge->points) ring.push_back(p.xy());
  for (auto it = lane.right_edge->points.rbegin(); it != lane.right_edge->points.rend(); ++it) {
    ring.push_back(it->xy());
  }
  return ring;
}

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorKind::kValidation, msg); }

void validate_polyline(const Polyline& line, const std::string& what) {
  if (line.points.size() < 2) invalid(what + ": polyline needs at least 2 points");
  for (std::size_t i = 1; i < line.points.size(); ++i) {
    if (line.points[i] == line.points[i - 1]) invalid(what + ": consecutive identical points");
  }
  for (const auto& p : line.points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) invalid(what + ": non-finite point");
  }
  if (!(line.length() > 0.0)) invalid(what + ": zero planar arclength");
}

void validate_area(const PolygonArea& area, const std::string& kind) {
  const std::string what = kind + " '" + area.id + "'";
  if (distinct_points(area.exterior) < 3) invalid(what + ": exterior needs at least 3 distinct points");
  if (ring_self_intersects(area.exterior)) invalid(what + ": exterior ring self-intersects");
  if (!(std::abs(ring_signed_area(area.exterior)) > 0.0)) invalid(what + ": exterior has zero area");
  for (const auto& hole : area.holes) {
    if (distinct_points(hole) < 3) invalid(what + ": hole needs at least 3 distinct points");
    if (ring_self_intersects(hole)) invalid(what + ": hole ring self-intersects");
    for (const auto& p : hole) {
      if (locate_in_ring(p, area.exterior) != RingLocation::kInside) invalid(what + ": hole not strictly inside exterior");
    }
  }
}

}  // namespace

RingLocation locate_in_ring(Point2 p, const Ring& ring) {
  const std::size_t n = ring.size();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2 a = ring[j];
    const Point2 b = ring[i];
    if (on_segment(p, a, b)) return RingLocation::kBoundary;
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside ? RingLocation::kInside : RingLocation::kOutside;
}

double polygon_area(const PolygonArea& area) {
  require_ring(area.exterior, "polygon '" + area.id + "' exterior");
  double total = std::abs(ring_signed_area(area.exterior));
  for (const auto& hole : area.holes) {
    require_ring(hole, "polygon '" + area.id + "' hole");
    total -= std::abs(ring_signed_area(hole));
  }
  return std::max(total, 0.0);
}

bool point_in_polygon_area(Point2 p, const PolygonArea& area) {
  const RingLocation ext = locate_in_ring(p, area.exterior);
  if (ext == RingLocation::kOutside) return false;
  if (ext == RingLocation::kBoundary) return true;
  for (const auto& hole : area.holes) {
    if (locate_in_ring(p, hole) == RingLocation::kInside) return false;
  }
  return true;
}

double Box2::distance_squared(Point2 p) const {
  const double dx = std::max({min_x - p.x, 0.0, p.x - max_x});
  const double dy = std::max({min_y - p.y, 0.0, p.y - max_y});
  return dx * dx + dy * dy;
}

// ---------------------------------------------------------------------------
// VectorMap

VectorMap VectorMap::build(MapData data) {
  VectorMap map;
  const auto colon = data.map_id.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == data.map_id.size() ||
      data.map_id.find(':', colon + 1) != std::string::npos) {
    invalid("map id '" + data.map_id + "' must look like dataset:location");
  }

  for (auto& [key, lane] : data.lanes) {
    if (lane.id.empty()) lane.id = key;
    if (lane.id != key) invalid("lane keyed '" + key + "' carries id '" + lane.id + "'");
    validate_polyline(lane.centerline, "lane '" + key + "' centerline");
    if (lane.left_edge) validate_polyline(*lane.left_edge, "lane '" + key + "' left edge");
    if (lane.right_edge) validate_polyline(*lane.right_edge, "lane '" + key + "' right edge");
    for (const auto* rel : {&lane.adjacent_left, &lane.adjacent_right, &lane.successors, &lane.predecessors}) {
      for (const auto& other : *rel) {
        if (other == key) invalid("lane '" + key + "' references itself");
        if (!data.lanes.count(other)) invalid("lane '" + key + "' references missing lane '" + other + "'");
      }
    }
  }

  // Close successor/predecessor symmetry.
  for (auto& [key, lane] : data.lanes) {
    for (const auto& succ : lane.successors) {
      if (data.lanes.at(succ).predecessors.insert(key).second) {
        map.warnings_.push_back("added predecessor " + key + " to lane " + succ);
      }
    }
    for (const auto& pred : lane.predecessors) {
      if (data.lanes.at(pred).successors.insert(key).second) {
        map.warnings_.push_back("added successor " + key + " to lane " + pred);
      }
    }
  }

  for (const auto& a : data.road_areas) validate_area(a, "road area");
  for (const auto& a : data.ped_crosswalks) validate_area(a, "crosswalk");
  for (const auto& a : data.ped_walkways) validate_area(a, "walkway");
  for (const auto& [key, status] : data.traffic_lights) {
    if (!data.lanes.count(key.first)) invalid("traffic light references missing lane '" + key.first + "'");
  }

  map.data_ = std::move(data);
  map.build_index();
  return map;
}

void VectorMap::build_index() {
  lane_ids_.clear();
  segments_.clear();
  nodes_.clear();
  drivable_.clear();
  for (const auto& [id, lane] : data_.lanes) {
    const auto rank = static_cast<std::uint32_t>(lane_ids_.size());
    lane_ids_.push_back(id);
    const auto& pts = lane.centerline.points;
    for (std::size_t i = 1; i < pts.size(); ++i) segments_.push_back(Segment{pts[i - 1].xy(), pts[i].xy(), rank});
  }
  if (!segments_.empty()) {
    nodes_.reserve(2 * segments_.size());
    build_node(0, static_cast<std::uint32_t>(segments_.size()));
  }

  for (const auto& area : data_.road_areas) drivable_.push_back(IndexedPolygon{area, ring_box(area.exterior)});
  for (const auto& [id, lane] : data_.lanes) {
    if (!lane.bounded()) continue;
    PolygonArea poly{"lane:" + id, lane_ring(lane), {}};
    Box2 box = ring_box(poly.exterior);
    drivable_.push_back(IndexedPolygon{std::move(poly), box});
  }
}

std::uint32_t VectorMap::build_node(std::uint32_t begin, std::uint32_t end) {
  constexpr std::uint32_t kLeafSize = 4;
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{});

  Box2 box{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  Box2 centroids = box;
  for (std::uint32_t i = begin; i < end; ++i) {
    const Segment& s = segments_[i];
    box.min_x = std::min({box.min_x, s.a.x, s.b.x});
    box.min_y = std::min({box.min_y, s.a.y, s.b.y});
    box.max_x = std::max({box.max_x, s.a.x, s.b.x});
    box.max_y = std::max({box.max_y, s.a.y, s.b.y});
    const double cx = 0.5 * (s.a.x + s.b.x);
    const double cy = 0.5 * (s.a.y + s.b.y);
    centroids.min_x = std::min(centroids.min_x, cx);
    centroids.min_y = std::min(centroids.min_y, cy);
    centroids.max_x = std::max(centroids.max_x, cx);
    centroids.max_y = std::max(centroids.max_y, cy);
  }
  nodes_[index].box = box;

  if (end - begin <= kLeafSize) {
    nodes_[index].first = begin;
    nodes_[index].count = end - begin;
    return index;
  }

  const bool split_x = (centroids.max_x - centroids.min_x) >= (centroids.max_y - centroids.min_y);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(segments_.begin() + begin, segments_.begin() + mid, segments_.begin() + end,
                   [split_x](const Segment& l, const Segment& r) {
                     return split_x ? (l.a.x + l.b.x) < (r.a.x + r.b.x) : (l.a.y + l.b.y) < (r.a.y + r.b.y);
                   });
  const std::uint32_t left = build_node(begin, mid);
  const std::uint32_t right = build_node(mid, end);
  nodes_[index].first = left;
  nodes_[index].right = right;
  nodes_[index].count = 0;
  return index;
}

const RoadLane& VectorMap::lane(std::string_view lane_id) const {
  auto it = data_.lanes.find(std::string(lane_id));
  if (it == data_.lanes.end()) throw Error(ErrorKind::kNotFound, "unknown lane '" + std::string(lane_id) + "'");
  return it->second;
}

namespace {

// Slack on the box lower bound so rounding never prunes a true candidate.
double box_bound(double box_d2) { return std::sqrt(box_d2) * (1.0 - 1e-12) - 1e-12; }

}  // namespace

LaneHit VectorMap::closest_lane(const Point3& p3) const {
  if (segments_.empty()) throw Error(ErrorKind::kEmpty, "map '" + data_.map_id + "' has no lanes");
  const Point2 p = p3.xy();
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t best_lane = std::numeric_limits<std::uint32_t>::max();

  std::vector<std::pair<double, std::uint32_t>> stack;
  stack.emplace_back(box_bound(nodes_[0].box.distance_squared(p)), 0);
  while (!stack.empty()) {
    const auto [bound, ni] = stack.back();
    stack.pop_back();
    if (bound > best) continue;
    const Node& node = nodes_[ni];
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const Segment& s = segments_[i];
        const double d = point_segment_distance(p, s.a, s.b);
        if (d < best || (d == best && s.lane < best_lane)) {
          best = d;
          best_lane = s.lane;
        }
      }
      continue;
    }
    const double bl = box_bound(nodes_[node.first].box.distance_squared(p));
    const double br = box_bound(nodes_[node.right].box.distance_squared(p));
    // Push the farther child first so the nearer one is explored first.
    if (bl < br) {
      stack.emplace_back(br, node.right);
      stack.emplace_back(bl, node.first);
    } else {
      stack.emplace_back(bl, node.first);
      stack.emplace_back(br, node.right);
    }
  }
  return LaneHit{lane_ids_[best_lane], best};
}

std::vector<std::string> VectorMap::lanes_within(const Point3& p3, double radius) const {
  if (radius < 0.0) throw Error(ErrorKind::kArgument, "radius must be non-negative");
  std::vector<std::uint32_t> hits;
  if (segments_.empty()) return {};
  const Point2 p = p3.xy();
  std::vector<std::uint32_t> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (box_bound(node.box.distance_squared(p)) > radius) continue;
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const Segment& s = segments_[i];
        if (point_segment_distance(p, s.a, s.b) <= radius) hits.push_back(s.lane);
      }
    } else {
      stack.push_back(node.first);
      stack.push_back(node.right);
    }
  }
  std::sort(hits.begin(), hits.end());
  hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
  std::vector<std::string> out;
  out.reserve(hits.size());
  for (auto h : hits) out.push_back(lane_ids_[h]);
  return out;
}

DrivableQuery VectorMap::point_in_drivable_area(Point2 p) const {
  if (drivable_.empty()) return DrivableQuery::kUnsupported;
  for (const auto& ip : drivable_) {
    if (!ip.box.contains(p)) continue;
    if (point_in_polygon_area(p, ip.polygon)) return DrivableQuery::kInside;
  }
  return DrivableQuery::kOutside;
}

std::vector<PolygonArea> VectorMap::drivable_polygons() const {
  std::vector<PolygonArea> out;
  out.reserve(drivable_.size());
  for (const auto& ip : drivable_) out.push_back(ip.polygon);
  return out;
}

TrafficLightStatus VectorMap::traffic_light_status(std::string_view lane_id, std::int64_t scene_ts) const {
  lane(lane_id);
  auto it = data_.traffic_lights.find({std::string(lane_id), scene_ts});
  return it == data_.traffic_lights.end() ? TrafficLightStatus::kUnknown : it->second;
}

MapStats map_stats(const VectorMap& map) {
  MapStats stats;
  double lane_m = 0.0;
  bool any_lane_polygon = false;
  for (const auto& [id, lane] : map.data().lanes) {
    lane_m += lane.centerline.length();
    ++stats.n_lanes;
    if (lane.bounded()) {
      ++stats.n_bounded_lanes;
      any_lane_polygon = true;
      stats.road_area_m2 += std::abs(ring_signed_area(lane_ring(lane)));
    }
  }
  stats.total_lane_length_km = lane_m / 1000.0;
  for (const auto& a : map.data().road_areas) stats.road_area_m2 += polygon_area(a);
  for (const auto& a : map.data().ped_crosswalks) stats.pedestrian_area_m2 += polygon_area(a);
  for (const auto& a : map.data().ped_walkways) stats.pedestrian_area_m2 += polygon_area(a);
  stats.road_area_may_overcount = any_lane_polygon && !map.data().road_areas.empty();
  return stats;
}

}  // namespace trajkit
