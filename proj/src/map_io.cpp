#include <cmath>

#include <nlohmann/json.hpp>

#include "trajkit/bytes.hpp"
#include "trajkit/vecmap.hpp"

namespace trajkit {

using nlohmann::json;

namespace {

// Adding 0.0 folds -0.0 into +0.0 so equal maps encode to equal bytes.
double snap(double v) { return std::nearbyint(v / kMapQuantum) * kMapQuantum + 0.0; }

// Every stored coordinate is a multiple of kMapQuantum, so running sums of
// f32 deltas are exact in double and re-encoding a decoded map reproduces
// the same bytes. Deltas are taken against the reconstructed previous point
// so errors never accumulate along a polyline.
json write_points(ByteWriter& w, std::size_t payload_start, const std::vector<Point3>& pts) {
  json ref{{"offset", w.size() - payload_start}, {"count", pts.size()}};
  if (pts.empty()) return ref;
  Point3 prev{snap(pts[0].x), snap(pts[0].y), snap(pts[0].z)};
  w.f64(prev.x);
  w.f64(prev.y);
  w.f64(prev.z);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const float dx = static_cast<float>(snap(pts[i].x - prev.x));
    const float dy = static_cast<float>(snap(pts[i].y - prev.y));
    const float dz = static_cast<float>(snap(pts[i].z - prev.z));
    w.f32(dx);
    w.f32(dy);
    w.f32(dz);
    prev = Point3{prev.x + dx, prev.y + dy, prev.z + dz};
  }
  return ref;
}

std::vector<Point3> read_points(std::span<const std::uint8_t> payload, const json& ref) {
  const auto offset = ref.at("offset").get<std::uint64_t>();
  const auto count = ref.at("count").get<std::uint64_t>();
  if (count == 0) return {};
  const std::uint64_t need = 24 + (count - 1) * 12;
  if (offset > payload.size() || need > payload.size() - offset) {
    throw FormatError(FormatFault::kTruncated, "geometry block runs past end of payload");
  }
  ByteReader r(payload.subspan(offset, need));
  std::vector<Point3> pts;
  pts.reserve(count);
  Point3 prev{r.f64(), r.f64(), r.f64()};
  pts.push_back(prev);
  for (std::uint64_t i = 1; i < count; ++i) {
    const double dx = r.f32();
    const double dy = r.f32();
    const double dz = r.f32();
    prev = Point3{prev.x + dx, prev.y + dy, prev.z + dz};
    pts.push_back(prev);
  }
  return pts;
}

std::vector<Point3> lift(const Ring& ring) {
  std::vector<Point3> out;
  out.reserve(ring.size());
  for (const auto& p : ring) out.push_back({p.x, p.y, 0.0});
  return out;
}

Ring flatten(const std::vector<Point3>& pts) {
  Ring out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back({p.x, p.y});
  return out;
}

json write_area(ByteWriter& w, std::size_t payload_start, const PolygonArea& area) {
  json j;
  j["id"] = area.id;
  j["exterior"] = write_points(w, payload_start, lift(area.exterior));
  j["holes"] = json::array();
  for (const auto& hole : area.holes) j["holes"].push_back(write_points(w, payload_start, lift(hole)));
  return j;
}

PolygonArea read_area(std::span<const std::uint8_t> payload, const json& j) {
  PolygonArea a;
  a.id = j.at("id").get<std::string>();
  a.exterior = flatten(read_points(payload, j.at("exterior")));
  for (const auto& h : j.at("holes")) a.holes.push_back(flatten(read_points(payload, h)));
  return a;
}

}  // namespace

// Layout: magic | version u32 | directory length u64 | directory JSON |
// geometry payload | crc32 u32.
std::vector<std::uint8_t> map_serialize(const VectorMap& map) {
  const MapData& d = map.data();
  ByteWriter geo;
  json dir;
  dir["map_id"] = d.map_id;
  dir["lanes"] = json::array();
  for (const auto& [id, lane] : d.lanes) {
    json l;
    l["id"] = id;
    l["centerline"] = write_points(geo, 0, lane.centerline.points);
    l["left_edge"] = lane.left_edge ? write_points(geo, 0, lane.left_edge->points) : json(nullptr);
    l["right_edge"] = lane.right_edge ? write_points(geo, 0, lane.right_edge->points) : json(nullptr);
    l["adjacent_left"] = lane.adjacent_left;
    l["adjacent_right"] = lane.adjacent_right;
    l["successors"] = lane.successors;
    l["predecessors"] = lane.predecessors;
    dir["lanes"].push_back(std::move(l));
  }
  for (const auto& [key, areas] : {std::pair{"road_areas", &d.road_areas}, std::pair{"ped_crosswalks", &d.ped_crosswalks},
                                   std::pair{"ped_walkways", &d.ped_walkways}}) {
    dir[key] = json::array();
    for (const auto& a : *areas) dir[key].push_back(write_area(geo, 0, a));
  }
  dir["traffic_lights"] = json::array();
  for (const auto& [key, status] : d.traffic_lights) {
    dir["traffic_lights"].push_back(json::array({key.first, key.second, std::string(to_string(status))}));
  }

  const std::string dir_text = dir.dump();
  ByteWriter w;
  w.bytes(kMapMagic);
  w.u32(kMapFormatVersion);
  w.u64(dir_text.size());
  w.bytes(dir_text);
  w.bytes(geo.data());
  w.u32(crc32(w.data()));
  return w.release();
}

VectorMap map_deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMapMagic.size()) throw FormatError(FormatFault::kTruncated, "map file shorter than magic");
  if (!std::equal(kMapMagic.begin(), kMapMagic.end(), bytes.begin())) {
    throw FormatError(FormatFault::kMagic, "not a map file (bad magic)");
  }
  ByteReader r(bytes);
  r.bytes(kMapMagic.size());
  const std::uint32_t version = r.u32();
  if (version != kMapFormatVersion) {
    throw FormatError(FormatFault::kVersion, "unsupported map format version " + std::to_string(version));
  }
  const std::uint64_t dir_len = r.u64();
  if (dir_len > r.remaining()) throw FormatError(FormatFault::kTruncated, "map directory truncated");
  const std::string_view dir_text = r.text(dir_len);
  if (r.remaining() < 4) throw FormatError(FormatFault::kTruncated, "map file truncated");
  const std::size_t payload_end = bytes.size() - 4;
  const std::uint32_t stored_crc = ByteReader(bytes.subspan(payload_end)).u32();
  if (stored_crc != crc32(bytes.first(payload_end))) throw FormatError(FormatFault::kChecksum, "map checksum mismatch");
  const auto payload = bytes.subspan(r.position(), payload_end - r.position());

  MapData d;
  try {
    const json dir = json::parse(dir_text);
    d.map_id = dir.at("map_id").get<std::string>();
    for (const auto& l : dir.at("lanes")) {
      RoadLane lane;
      lane.id = l.at("id").get<std::string>();
      lane.centerline.points = read_points(payload, l.at("centerline"));
      if (!l.at("left_edge").is_null()) lane.left_edge = Polyline{read_points(payload, l.at("left_edge"))};
      if (!l.at("right_edge").is_null()) lane.right_edge = Polyline{read_points(payload, l.at("right_edge"))};
      lane.adjacent_left = l.at("adjacent_left").get<std::set<std::string>>();
      lane.adjacent_right = l.at("adjacent_right").get<std::set<std::string>>();
      lane.successors = l.at("successors").get<std::set<std::string>>();
      lane.predecessors = l.at("predecessors").get<std::set<std::string>>();
      const std::string id = lane.id;
      if (!d.lanes.emplace(id, std::move(lane)).second) {
        throw FormatError(FormatFault::kCorrupt, "duplicate lane id '" + id + "'");
      }
    }
    for (const auto& a : dir.at("road_areas")) d.road_areas.push_back(read_area(payload, a));
    for (const auto& a : dir.at("ped_crosswalks")) d.ped_crosswalks.push_back(read_area(payload, a));
    for (const auto& a : dir.at("ped_walkways")) d.ped_walkways.push_back(read_area(payload, a));
    for (const auto& t : dir.at("traffic_lights")) {
      d.traffic_lights[{t.at(0).get<std::string>(), t.at(1).get<std::int64_t>()}] =
          parse_traffic_light_status(t.at(2).get<std::string>());
    }
  } catch (const json::exception& e) {
    throw FormatError(FormatFault::kCorrupt, std::string("map directory is malformed: ") + e.what());
  }
  return VectorMap::build(std::move(d));
}

// ---------------------------------------------------------------------------
// JSON description

namespace {

Point3 point_from_json(const json& j) {
  if (!j.is_array() || j.size() < 2 || j.size() > 3) throw Error(ErrorKind::kParse, "points must be [x, y] or [x, y, z]");
  return Point3{j[0].get<double>(), j[1].get<double>(), j.size() == 3 ? j[2].get<double>() : 0.0};
}

Polyline polyline_from_json(const json& j) {
  Polyline p;
  for (const auto& pt : j) p.points.push_back(point_from_json(pt));
  return p;
}

Ring ring_from_json(const json& j) {
  Ring r;
  for (const auto& pt : j) r.push_back(point_from_json(pt).xy());
  if (r.size() > 1 && r.front() == r.back()) r.pop_back();
  return r;
}

PolygonArea area_from_json(const json& j, const std::string& fallback_id) {
  PolygonArea a;
  a.id = j.value("id", fallback_id);
  a.exterior = ring_from_json(j.at("exterior"));
  if (j.contains("holes")) {
    for (const auto& h : j.at("holes")) a.holes.push_back(ring_from_json(h));
  }
  return a;
}

json points_to_json(const std::vector<Point3>& pts) {
  json out = json::array();
  for (const auto& p : pts) out.push_back({p.x, p.y, p.z});
  return out;
}

json ring_to_json(const Ring& ring) {
  json out = json::array();
  for (const auto& p : ring) out.push_back({p.x, p.y});
  return out;
}

}  // namespace

MapData parse_map_json(std::string_view text) {
  MapData d;
  try {
    const json j = json::parse(text);
    d.map_id = j.at("map_id").get<std::string>();
    if (j.contains("lanes")) {
      for (const auto& l : j.at("lanes")) {
        RoadLane lane;
        lane.id = l.at("id").get<std::string>();
        lane.centerline = polyline_from_json(l.at("centerline"));
        if (l.contains("left_edge") && !l["left_edge"].is_null()) lane.left_edge = polyline_from_json(l["left_edge"]);
        if (l.contains("right_edge") && !l["right_edge"].is_null()) lane.right_edge = polyline_from_json(l["right_edge"]);
        lane.adjacent_left = l.value("adjacent_left", std::set<std::string>{});
        lane.adjacent_right = l.value("adjacent_right", std::set<std::string>{});
        lane.successors = l.value("successors", std::set<std::string>{});
        lane.predecessors = l.value("predecessors", std::set<std::string>{});
        const std::string id = lane.id;
        if (!d.lanes.emplace(id, std::move(lane)).second) throw Error(ErrorKind::kParse, "duplicate lane id '" + id + "'");
      }
    }
    for (const auto& [key, dest] : {std::pair{"road_areas", &d.road_areas}, std::pair{"ped_crosswalks", &d.ped_crosswalks},
                                    std::pair{"ped_walkways", &d.ped_walkways}}) {
      if (!j.contains(key)) continue;
      std::size_t k = 0;
      for (const auto& a : j.at(key)) dest->push_back(area_from_json(a, std::string(key) + "_" + std::to_string(k++)));
    }
    if (j.contains("traffic_lights")) {
      for (const auto& t : j.at("traffic_lights")) {
        d.traffic_lights[{t.at("lane").get<std::string>(), t.at("ts").get<std::int64_t>()}] =
            parse_traffic_light_status(t.at("status").get<std::string>());
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("map JSON: ") + e.what());
  }
  return d;
}

std::string map_to_json(const MapData& d) {
  json j;
  j["map_id"] = d.map_id;
  j["lanes"] = json::array();
  for (const auto& [id, lane] : d.lanes) {
    json l;
    l["id"] = id;
    l["centerline"] = points_to_json(lane.centerline.points);
    if (lane.left_edge) l["left_edge"] = points_to_json(lane.left_edge->points);
    if (lane.right_edge) l["right_edge"] = points_to_json(lane.right_edge->points);
    l["adjacent_left"] = lane.adjacent_left;
    l["adjacent_right"] = lane.adjacent_right;
    l["successors"] = lane.successors;
    l["predecessors"] = lane.predecessors;
    j["lanes"].push_back(std::move(l));
  }
  for (const auto& [key, areas] : {std::pair{"road_areas", &d.road_areas}, std::pair{"ped_crosswalks", &d.ped_crosswalks},
                                   std::pair{"ped_walkways", &d.ped_walkways}}) {
    j[key] = json::array();
    for (const auto& a : *areas) {
      json aj{{"id", a.id}, {"exterior", ring_to_json(a.exterior)}, {"holes", json::array()}};
      for (const auto& h : a.holes) aj["holes"].push_back(ring_to_json(h));
      j[key].push_back(std::move(aj));
    }
  }
  j["traffic_lights"] = json::array();
  for (const auto& [key, status] : d.traffic_lights) {
    j["traffic_lights"].push_back({{"lane", key.first}, {"ts", key.second}, {"status", std::string(to_string(status))}});
  }
  return j.dump(2) + "\n";
}

VectorMap load_map_file(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() >= kMapMagic.size() && std::equal(kMapMagic.begin(), kMapMagic.end(), bytes.begin())) {
    return map_deserialize(bytes);
  }
  return VectorMap::build(parse_map_json(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
}

}  // namespace trajkit
