#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "trajkit/core.hpp"

namespace trajkit {

struct Polyline {
  std::vector<Point3> points;

  double length() const;  // planar arclength
  bool operator==(const Polyline&) const = default;
};

struct RoadLane {
  std::string id;
  Polyline centerline;
  std::optional<Polyline> left_edge;
  std::optional<Polyline> right_edge;
  std::set<std::string> adjacent_left;
  std::set<std::string> adjacent_right;
  std::set<std::string> successors;
  std::set<std::string> predecessors;

  bool bounded() const { return left_edge.has_value() && right_edge.has_value(); }
  bool operator==(const RoadLane&) const = default;
};

/// Closed ring; the closing vertex is implicit (first point is not repeated).
using Ring = std::vector<Point2>;

struct PolygonArea {
  std::string id;
  Ring exterior;
  std::vector<Ring> holes;

  bool operator==(const PolygonArea&) const = default;
};

enum class TrafficLightStatus : std::uint8_t { kGreen, kYellow, kRed, kUnknown };

std::string_view to_string(TrafficLightStatus status);
TrafficLightStatus parse_traffic_light_status(std::string_view text);

/// Plain, mutable map content. VectorMap::build validates and freezes it.
struct MapData {
  std::string map_id;  // "dataset:location"
  std::map<std::string, RoadLane> lanes;
  std::vector<PolygonArea> road_areas;
  std::vector<PolygonArea> ped_crosswalks;
  std::vector<PolygonArea> ped_walkways;
  std::map<std::pair<std::string, std::int64_t>, TrafficLightStatus> traffic_lights;

  bool operator==(const MapData&) const = default;
};

// ---------------------------------------------------------------------------
// Geometry primitives

double point_segment_distance(Point2 p, Point2 a, Point2 b);
double point_polyline_distance(Point2 p, const Polyline& line);

/// Shoelace area; positive for counter-clockwise rings.
double ring_signed_area(const Ring& ring);

enum class RingLocation { kOutside, kBoundary, kInside };

/// Even-odd crossing test with an explicit on-boundary check.
RingLocation locate_in_ring(Point2 p, const Ring& ring);

/// Exterior area minus hole areas, orientation-insensitive. Throws
/// Error(kArgument) for a ring with fewer than 3 distinct points.
double polygon_area(const PolygonArea& area);

/// Boundary points count as inside; hole interiors are outside.
bool point_in_polygon_area(Point2 p, const PolygonArea& area);

struct Box2 {
  double min_x, min_y, max_x, max_y;

  double distance_squared(Point2 p) const;
  bool contains(Point2 p) const { return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y; }
};

// ---------------------------------------------------------------------------
// VectorMap

enum class DrivableQuery { kInside, kOutside, kUnsupported };

struct LaneHit {
  std::string lane_id;
  double distance = 0.0;
};

struct MapStats {
  double total_lane_length_km = 0.0;
  double road_area_m2 = 0.0;
  double pedestrian_area_m2 = 0.0;
  std::size_t n_lanes = 0;
  std::size_t n_bounded_lanes = 0;
  // Lane polygons and road areas are summed without union.
  bool road_area_may_overcount = false;
};

class VectorMap {
 public:
  /// Validates ids, references and geometry, closes successor/predecessor
  /// symmetry (recording a warning per added link), builds lane polygons and
  /// the spatial index. Throws Error(kValidation) on invalid content.
  static VectorMap build(MapData data);

  const MapData& data() const { return data_; }
  const std::string& map_id() const { return data_.map_id; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const RoadLane& lane(std::string_view lane_id) const;

  /// Nearest lane by planar centerline distance; ties go to the smallest id.
  LaneHit closest_lane(const Point3& p) const;
  /// Sorted ids of lanes whose centerline lies within `radius` of p.
  std::vector<std::string> lanes_within(const Point3& p, double radius) const;

  DrivableQuery point_in_drivable_area(Point2 p) const;
  /// Road areas plus the polygons of lanes with both edges.
  std::vector<PolygonArea> drivable_polygons() const;

  TrafficLightStatus traffic_light_status(std::string_view lane_id, std::int64_t scene_ts) const;

 private:
  struct Segment {
    Point2 a, b;
    std::uint32_t lane;  // rank in lexicographic lane order
  };
  struct Node {
    Box2 box;
    std::uint32_t first = 0;  // leaf: first segment; inner: left child
    std::uint32_t count = 0;  // leaf segment count, 0 for inner nodes
    std::uint32_t right = 0;
  };
  struct IndexedPolygon {
    PolygonArea polygon;
    Box2 box;
  };

  void build_index();
  std::uint32_t build_node(std::uint32_t begin, std::uint32_t end);

  MapData data_;
  std::vector<std::string> warnings_;
  std::vector<std::string> lane_ids_;  // lexicographic
  std::vector<Segment> segments_;
  std::vector<Node> nodes_;
  std::vector<IndexedPolygon> drivable_;
};

MapStats map_stats(const VectorMap& map);

// ---------------------------------------------------------------------------
// Serialization

inline constexpr std::string_view kMapMagic = "TKMAP1";
inline constexpr std::uint32_t kMapFormatVersion = 1;
/// Grid that stored coordinates snap to (2^-20 m).
inline constexpr double kMapQuantum = 1.0 / 1048576.0;

/// First point of each polyline or ring as 3 x f64, then 3 x f32 deltas.
std::vector<std::uint8_t> map_serialize(const VectorMap& map);
VectorMap map_deserialize(std::span<const std::uint8_t> bytes);

/// Human-authored JSON map description.
MapData parse_map_json(std::string_view text);
std::string map_to_json(const MapData& data);

/// Loads either the binary container or the JSON description.
VectorMap load_map_file(const std::string& path);

}  // namespace trajkit
