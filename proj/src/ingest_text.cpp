#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "trajkit/bytes.hpp"
#include "trajkit/ingest.hpp"
#include "trajkit/kinematics.hpp"

namespace trajkit {

using nlohmann::json;

SceneMetaRecord parse_meta_json(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("scene metadata is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::kParse, "scene metadata must be a JSON object");
  SceneMetaRecord m;
  try {
    m.scene_id = j.at("scene_id").get<std::string>();
    m.dt = j.at("dt").get<double>();
    m.location = j.value("location", std::string{});
    m.dataset = j.at("dataset").get<std::string>();
    m.split = j.value("split", std::string{});
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("scene metadata: ") + e.what());
  }
  if (!(m.dt > 0.0) || !std::isfinite(m.dt)) throw Error(ErrorKind::kParse, "scene metadata: dt must be positive");
  if (m.scene_id.empty()) throw Error(ErrorKind::kParse, "scene metadata: empty scene_id");
  if (m.dataset.empty() || m.dataset.find('-') != std::string::npos) {
    throw Error(ErrorKind::kParse, "scene metadata: dataset must be non-empty and contain no '-'");
  }
  if (!m.split.empty()) {
    const auto& known = SceneTag::known_splits();
    if (std::find(known.begin(), known.end(), m.split) == known.end()) {
      throw Error(ErrorKind::kParse, "scene metadata: unknown split '" + m.split + "'");
    }
  }
  return m;
}

std::string meta_to_json(const SceneMetaRecord& meta) {
  json j;
  j["scene_id"] = meta.scene_id;
  j["dt"] = meta.dt;
  j["location"] = meta.location;
  j["dataset"] = meta.dataset;
  j["split"] = meta.split;
  return j.dump(2) + "\n";
}

SceneMetaRecord meta_of(const SceneFrame& scene) {
  return SceneMetaRecord{scene.scene_id, scene.dt, scene.location, scene.dataset, scene.split};
}

namespace {

std::vector<std::pair<std::size_t, std::string_view>> split_lines(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  std::vector<std::pair<std::size_t, std::string_view>> lines;
  std::size_t line_no = 1;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line_no, line);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
    ++line_no;
  }
  return lines;
}

[[noreturn]] void fail_at(std::size_t line, const std::string& msg) {
  throw Error(ErrorKind::kParse, "line " + std::to_string(line) + ": " + msg);
}

std::vector<std::string> split_csv_fields(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      if (!cur.empty() || was_quoted) fail_at(line_no, "stray quote");
      quoted = was_quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else {
      if (was_quoted) fail_at(line_no, "text after closing quote");
      cur.push_back(ch);
    }
  }
  if (quoted) fail_at(line_no, "unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

double parse_double(std::string_view cell, std::size_t line, std::string_view column) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
    fail_at(line, "malformed number '" + std::string(cell) + "' in column " + std::string(column));
  }
  return v;
}

std::optional<double> parse_optional_double(std::string_view cell, std::size_t line, std::string_view column) {
  if (cell.empty()) return std::nullopt;
  return parse_double(cell, line, column);
}

std::int64_t parse_int(std::string_view cell, std::size_t line, std::string_view column) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
    fail_at(line, "malformed integer '" + std::string(cell) + "' in column " + std::string(column));
  }
  return v;
}

struct RawRow {
  std::int64_t frame = 0;
  double x = 0.0, y = 0.0, z = 0.0;
  std::optional<double> heading;
};

struct RawAgent {
  AgentType type = AgentType::kUnknown;
  std::optional<Extent> extent;
  std::vector<RawRow> rows;
};

// Shared tail of both parsers: renumber frames, impute, derive, validate.
SceneFrame finish_scene(const SceneMetaRecord& meta, std::map<std::string, RawAgent> raw,
                        std::int64_t frame_base, std::int64_t frame_step) {
  if (raw.empty()) throw Error(ErrorKind::kParse, "no agents in input");
  if (!(meta.dt > 0.0)) throw Error(ErrorKind::kArgument, "scene dt must be positive");

  std::vector<AgentTrack> tracks;
  tracks.reserve(raw.size());
  for (auto& [id, agent] : raw) {
    std::sort(agent.rows.begin(), agent.rows.end(),
              [](const RawRow& a, const RawRow& b) { return a.frame < b.frame; });
    for (std::size_t i = 1; i < agent.rows.size(); ++i) {
      if (agent.rows[i].frame == agent.rows[i - 1].frame) {
        throw Error(ErrorKind::kParse, "agent " + id + ": frames are not strictly increasing (frame " +
                                           std::to_string(agent.rows[i].frame) + " repeats)");
      }
    }
    AgentTrack track;
    track.meta.id = id;
    track.meta.type = agent.type;
    track.meta.extent = agent.extent;
    track.meta.heading_from_data =
        std::all_of(agent.rows.begin(), agent.rows.end(), [](const RawRow& r) { return r.heading.has_value(); });
    for (const RawRow& r : agent.rows) {
      StateRow s;
      s.ts = (r.frame - frame_base) / frame_step;
      s.x = r.x;
      s.y = r.y;
      s.z = r.z;
      s.heading = track.meta.heading_from_data ? wrap_angle(*r.heading) : 0.0;
      s.observed = true;
      track.rows.push_back(s);
    }
    tracks.push_back(complete_track(std::move(track), meta.dt));
  }

  SceneFrame scene = make_scene(meta.info(), std::move(tracks));
  const auto violations = scene_validate(scene);
  if (!violations.empty()) throw Error(ErrorKind::kValidation, violations.front().describe());
  return scene;
}

std::string csv_quote(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

}  // namespace

SceneFrame parse_canonical_csv(std::string_view text, const SceneMetaRecord& meta) {
  const auto lines = split_lines(text);
  std::size_t k = 0;
  while (k < lines.size() && lines[k].second.empty()) ++k;
  if (k == lines.size()) throw Error(ErrorKind::kParse, "empty CSV input");
  if (lines[k].second != kCanonicalCsvHeader) {
    fail_at(lines[k].first, "header does not match canonical schema '" + std::string(kCanonicalCsvHeader) + "'");
  }

  static constexpr std::array<std::string_view, 11> kCols = {
      "scene_id", "agent_id", "agent_type", "frame", "x", "y", "z", "heading", "length", "width", "height"};

  std::map<std::string, RawAgent> raw;
  std::optional<std::int64_t> min_frame;
  for (++k; k < lines.size(); ++k) {
    const auto [line_no, line] = lines[k];
    if (line.empty()) continue;
    const auto f = split_csv_fields(line, line_no);
    if (f.size() != kCols.size()) {
      fail_at(line_no, "expected " + std::to_string(kCols.size()) + " fields, got " + std::to_string(f.size()));
    }
    if (!f[0].empty() && f[0] != meta.scene_id) {
      fail_at(line_no, "scene_id '" + f[0] + "' does not match metadata scene_id '" + meta.scene_id + "'");
    }
    if (f[1].empty()) fail_at(line_no, "empty agent_id");
    const auto type = try_parse_agent_type(f[2]);
    if (!type) fail_at(line_no, "unknown agent type '" + f[2] + "'");

    RawRow row;
    row.frame = parse_int(f[3], line_no, kCols[3]);
    row.x = parse_double(f[4], line_no, kCols[4]);
    row.y = parse_double(f[5], line_no, kCols[5]);
    row.z = parse_optional_double(f[6], line_no, kCols[6]).value_or(0.0);
    row.heading = parse_optional_double(f[7], line_no, kCols[7]);
    const auto length = parse_optional_double(f[8], line_no, kCols[8]);
    const auto width = parse_optional_double(f[9], line_no, kCols[9]);
    const auto height = parse_optional_double(f[10], line_no, kCols[10]);
    if (length.has_value() != width.has_value()) fail_at(line_no, "length and width must be given together");
    if (length && (!(*length > 0.0) || !(*width > 0.0))) fail_at(line_no, "extent must be positive");

    auto [it, inserted] = raw.try_emplace(f[1]);
    RawAgent& agent = it->second;
    if (inserted) {
      agent.type = *type;
    } else if (agent.type != *type) {
      fail_at(line_no, "agent " + f[1] + " changes type");
    }
    if (length && !agent.extent) agent.extent = Extent{*length, *width, height};
    agent.rows.push_back(row);
    min_frame = min_frame ? std::min(*min_frame, row.frame) : row.frame;
  }
  return finish_scene(meta, std::move(raw), min_frame.value_or(0), 1);
}

std::string to_canonical_csv(const SceneFrame& scene, bool observed_only) {
  std::ostringstream os;
  os << kCanonicalCsvHeader << '\n';
  const auto& c = scene.columns;
  const std::string scene_id = csv_quote(scene.scene_id);
  for (std::size_t a = 0; a < scene.agents.size(); ++a) {
    const auto& meta = scene.agents[a];
    std::string extent_cells = ",,";
    if (meta.extent) {
      extent_cells = format_double(meta.extent->length) + "," + format_double(meta.extent->width) + "," +
                     (meta.extent->height ? format_double(*meta.extent->height) : std::string{});
    }
    const std::string id = csv_quote(meta.id);
    const RowRange r = scene.agent_rows(a);
    for (std::size_t i = r.begin; i < r.end; ++i) {
      if (observed_only && !c.observed[i]) continue;
      os << scene_id << ',' << id << ',' << to_string(meta.type) << ',' << c.ts[i] << ','
         << format_double(c.x[i]) << ',' << format_double(c.y[i]) << ',' << format_double(c.z[i]) << ','
         << format_double(c.heading[i]) << ',' << extent_cells << '\n';
    }
  }
  return os.str();
}

SceneFrame parse_frame_text(std::string_view text, const SceneMetaRecord& meta) {
  std::map<std::int64_t, RawAgent> by_id;
  std::optional<std::int64_t> min_frame;
  auto integral = [](double v, std::size_t line, std::string_view what) {
    if (std::floor(v) != v || std::abs(v) > 9.0e15) fail_at(line, std::string(what) + " must be integral");
    return static_cast<std::int64_t>(v);
  };

  for (const auto& [line_no, line] : split_lines(text)) {
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
      if (pos >= line.size()) break;
      const std::size_t start = pos;
      while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') ++pos;
      fields.push_back(line.substr(start, pos - start));
    }
    if (fields.empty() || fields.front().starts_with('#')) continue;
    if (fields.size() < 4) fail_at(line_no, "expected at least 4 fields (frame id x y)");
    const std::int64_t frame = integral(parse_double(fields[0], line_no, "frame"), line_no, "frame");
    const std::int64_t id = integral(parse_double(fields[1], line_no, "id"), line_no, "id");
    RawRow row;
    row.frame = frame;
    row.x = parse_double(fields[2], line_no, "x");
    row.y = parse_double(fields[3], line_no, "y");
    auto& agent = by_id[id];
    agent.type = AgentType::kPedestrian;
    agent.rows.push_back(row);
    min_frame = min_frame ? std::min(*min_frame, frame) : frame;
  }
  if (by_id.empty()) throw Error(ErrorKind::kParse, "no agents in input");

  std::int64_t step = 0;
  for (const auto& [id, agent] : by_id) {
    for (const RawRow& r : agent.rows) step = std::gcd(step, r.frame - *min_frame);
  }
  if (step == 0) step = 1;

  std::map<std::string, RawAgent> raw;
  for (auto& [id, agent] : by_id) raw.emplace(std::to_string(id), std::move(agent));
  return finish_scene(meta, std::move(raw), *min_frame, step);
}

}  // namespace trajkit
