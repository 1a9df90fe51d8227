#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "trajkit/bytes.hpp"
#include "trajkit/ingest.hpp"

namespace trajkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kIndexFile = "index.json";
constexpr std::string_view kSceneExt = ".tksc";

struct ColumnSpec {
  std::string_view name;
  std::string_view dtype;  // "f64" or "u8"
};

constexpr std::array<ColumnSpec, 11> kColumns = {{{"agent_index", "f64"},
                                                  {"ts", "f64"},
                                                  {"x", "f64"},
                                                  {"y", "f64"},
                                                  {"z", "f64"},
                                                  {"vx", "f64"},
                                                  {"vy", "f64"},
                                                  {"ax", "f64"},
                                                  {"ay", "f64"},
                                                  {"heading", "f64"},
                                                  {"observed", "u8"}}};
constexpr std::size_t kNumColumns = kColumns.size();

const std::vector<double>* double_column(const TrajectoryColumns& c, std::string_view name) {
  if (name == "x") return &c.x;
  if (name == "y") return &c.y;
  if (name == "z") return &c.z;
  if (name == "vx") return &c.vx;
  if (name == "vy") return &c.vy;
  if (name == "ax") return &c.ax;
  if (name == "ay") return &c.ay;
  if (name == "heading") return &c.heading;
  return nullptr;
}

std::vector<double>* double_column(TrajectoryColumns& c, std::string_view name) {
  return const_cast<std::vector<double>*>(double_column(std::as_const(c), name));
}

json agent_to_json(const AgentMetadata& a) {
  json j;
  j["id"] = a.id;
  j["type"] = std::string(to_string(a.type));
  j["first_ts"] = a.first_ts;
  j["last_ts"] = a.last_ts;
  j["heading_from_data"] = a.heading_from_data;
  if (a.extent) {
    json e;
    e["length"] = a.extent->length;
    e["width"] = a.extent->width;
    e["height"] = a.extent->height ? json(*a.extent->height) : json(nullptr);
    j["extent"] = e;
  } else {
    j["extent"] = nullptr;
  }
  return j;
}

AgentMetadata agent_from_json(const json& j) {
  AgentMetadata a;
  a.id = j.at("id").get<std::string>();
  a.type = parse_agent_type(j.at("type").get<std::string>());
  a.first_ts = j.at("first_ts").get<std::int64_t>();
  a.last_ts = j.at("last_ts").get<std::int64_t>();
  a.heading_from_data = j.at("heading_from_data").get<bool>();
  const json& e = j.at("extent");
  if (!e.is_null()) {
    Extent ext;
    ext.length = e.at("length").get<double>();
    ext.width = e.at("width").get<double>();
    if (!e.at("height").is_null()) ext.height = e.at("height").get<double>();
    a.extent = ext;
  }
  return a;
}

std::string sanitize_file_stem(std::string_view id) {
  std::string out;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '-' || c == '.';
    out.push_back(ok ? c : '_');
  }
  if (out.empty() || out.front() == '.') out.insert(out.begin(), '_');
  return out;
}

json entry_to_json(const CacheEntry& e) {
  json j;
  j["scene_id"] = e.scene_id;
  j["path"] = e.relative_path;
  j["n_agents"] = e.n_agents;
  j["n_timesteps"] = e.n_timesteps;
  j["dataset"] = e.dataset;
  j["split"] = e.split;
  j["location"] = e.location;
  j["dt"] = e.dt;
  return j;
}

CacheEntry entry_from_json(const json& j) {
  CacheEntry e;
  e.scene_id = j.at("scene_id").get<std::string>();
  e.relative_path = j.at("path").get<std::string>();
  e.n_agents = j.at("n_agents").get<std::int64_t>();
  e.n_timesteps = j.at("n_timesteps").get<std::int64_t>();
  e.dataset = j.at("dataset").get<std::string>();
  e.split = j.at("split").get<std::string>();
  e.location = j.at("location").get<std::string>();
  e.dt = j.at("dt").get<double>();
  return e;
}

CacheEntry entry_for(const SceneFrame& scene, std::string relative_path) {
  return CacheEntry{scene.scene_id,
                    std::move(relative_path),
                    static_cast<std::int64_t>(scene.agents.size()),
                    scene.n_timesteps,
                    scene.dataset,
                    scene.split,
                    scene.location,
                    scene.dt};
}

void write_index(const fs::path& cache_dir, const std::string& dataset, std::vector<CacheEntry> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const CacheEntry& a, const CacheEntry& b) { return a.scene_id < b.scene_id; });
  json j;
  j["dataset"] = dataset;
  j["version"] = kSceneFormatVersion;
  j["scenes"] = json::array();
  for (const auto& e : entries) j["scenes"].push_back(entry_to_json(e));
  write_file_atomic((cache_dir / dataset / kIndexFile).string(), j.dump(2) + "\n");
}

CacheIndex index_of(std::vector<CacheEntry> entries) {
  CacheIndex idx;
  for (auto& e : entries) idx.by_tag[e.tag()].push_back(std::move(e));
  for (auto& [tag, list] : idx.by_tag) {
    std::sort(list.begin(), list.end(),
              [](const CacheEntry& a, const CacheEntry& b) { return a.scene_id < b.scene_id; });
  }
  return idx;
}

std::vector<CacheEntry> read_index_entries(const fs::path& cache_dir, const std::string& dataset) {
  const fs::path p = cache_dir / dataset / kIndexFile;
  if (!fs::exists(p)) return {};
  const auto bytes = read_file_bytes(p.string());
  try {
    const json j = json::parse(bytes.begin(), bytes.end());
    std::vector<CacheEntry> out;
    for (const auto& s : j.at("scenes")) out.push_back(entry_from_json(s));
    return out;
  } catch (const json::exception& e) {
    throw FormatError(FormatFault::kCorrupt, "cache index " + p.string() + " is corrupt: " + e.what());
  }
}

}  // namespace

std::string CacheEntry::tag() const {
  SceneTag t;
  t.dataset = dataset;
  if (!split.empty()) t.split = split;
  if (!location.empty()) t.location = location;
  return t.render();
}

std::vector<CacheEntry> CacheIndex::entries() const {
  std::vector<CacheEntry> out;
  for (const auto& [tag, list] : by_tag) out.insert(out.end(), list.begin(), list.end());
  std::sort(out.begin(), out.end(), [](const CacheEntry& a, const CacheEntry& b) {
    return std::tie(a.dataset, a.scene_id) < std::tie(b.dataset, b.scene_id);
  });
  return out;
}

// Layout: magic | version u32 | header length u64 | header JSON | columns | crc32 u32.
std::vector<std::uint8_t> encode_scene(const SceneFrame& scene) {
  const auto& c = scene.columns;
  const std::size_t n = c.size();

  json header;
  header["scene_id"] = scene.scene_id;
  header["dataset"] = scene.dataset;
  header["split"] = scene.split;
  header["location"] = scene.location;
  header["dt"] = scene.dt;
  header["n_timesteps"] = scene.n_timesteps;
  header["n_rows"] = n;
  header["agents"] = json::array();
  for (const auto& a : scene.agents) header["agents"].push_back(agent_to_json(a));
  header["columns"] = json::array();
  std::uint64_t offset = 0;
  for (std::size_t k = 0; k < kNumColumns; ++k) {
    const std::uint64_t width = kColumns[k].dtype == "f64" ? 8 : 1;
    header["columns"].push_back(
        {{"name", kColumns[k].name}, {"dtype", kColumns[k].dtype}, {"offset", offset}, {"nbytes", width * n}});
    offset += width * n;
  }
  const std::string header_text = header.dump();

  ByteWriter w;
  w.bytes(kSceneMagic);
  w.u32(kSceneFormatVersion);
  w.u64(header_text.size());
  w.bytes(header_text);
  for (std::int32_t v : c.agent_index) w.f64(static_cast<double>(v));
  for (std::int64_t v : c.ts) w.f64(static_cast<double>(v));
  for (std::size_t k = 2; k < 10; ++k) {
    for (double v : *double_column(c, kColumns[k].name)) w.f64(v);
  }
  for (std::uint8_t v : c.observed) w.u8(v);
  w.u32(crc32(w.data()));
  return w.release();
}

SceneFrame decode_scene(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kSceneMagic.size()) throw FormatError(FormatFault::kTruncated, "scene file shorter than magic");
  if (!std::equal(kSceneMagic.begin(), kSceneMagic.end(), bytes.begin())) {
    throw FormatError(FormatFault::kMagic, "not a scene cache file (bad magic)");
  }
  ByteReader r(bytes);
  r.bytes(kSceneMagic.size());
  const std::uint32_t version = r.u32();
  if (version != kSceneFormatVersion) {
    throw FormatError(FormatFault::kVersion, "unsupported scene format version " + std::to_string(version));
  }
  const std::uint64_t header_len = r.u64();
  if (header_len > r.remaining()) throw FormatError(FormatFault::kTruncated, "scene header truncated");
  const std::string_view header_text = r.text(header_len);
  const std::size_t payload_start = r.position();

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw FormatError(FormatFault::kCorrupt, std::string("scene header is not valid JSON: ") + e.what());
  }

  SceneFrame scene;
  std::uint64_t n_rows = 0;
  std::uint64_t payload_len = 0;
  try {
    scene.scene_id = header.at("scene_id").get<std::string>();
    scene.dataset = header.at("dataset").get<std::string>();
    scene.split = header.at("split").get<std::string>();
    scene.location = header.at("location").get<std::string>();
    scene.dt = header.at("dt").get<double>();
    scene.n_timesteps = header.at("n_timesteps").get<std::int64_t>();
    n_rows = header.at("n_rows").get<std::uint64_t>();
    for (const auto& a : header.at("agents")) scene.agents.push_back(agent_from_json(a));
    const auto& cols = header.at("columns");
    if (cols.size() != kNumColumns) throw FormatError(FormatFault::kCorrupt, "unexpected column directory");
    std::uint64_t expect_offset = 0;
    for (std::size_t k = 0; k < kNumColumns; ++k) {
      const std::uint64_t width = kColumns[k].dtype == "f64" ? 8 : 1;
      if (cols[k].at("name") != kColumns[k].name || cols[k].at("dtype") != kColumns[k].dtype ||
          cols[k].at("offset").get<std::uint64_t>() != expect_offset ||
          cols[k].at("nbytes").get<std::uint64_t>() != width * n_rows) {
        throw FormatError(FormatFault::kCorrupt, "column directory mismatch at " + std::string(kColumns[k].name));
      }
      expect_offset += width * n_rows;
    }
    payload_len = expect_offset;
  } catch (const json::exception& e) {
    throw FormatError(FormatFault::kCorrupt, std::string("scene header is malformed: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kFormat) throw;
    throw FormatError(FormatFault::kCorrupt, std::string("scene header is malformed: ") + e.what());
  }

  const std::size_t expected = payload_start + payload_len + 4;
  if (bytes.size() < expected) throw FormatError(FormatFault::kTruncated, "scene file truncated");
  if (bytes.size() > expected) throw FormatError(FormatFault::kCorrupt, "trailing bytes after scene payload");
  const std::uint32_t stored_crc = ByteReader(bytes.subspan(expected - 4)).u32();
  if (stored_crc != crc32(bytes.first(expected - 4))) {
    throw FormatError(FormatFault::kChecksum, "scene file checksum mismatch");
  }

  auto& c = scene.columns;
  const auto n = static_cast<std::size_t>(n_rows);
  c.agent_index.resize(n);
  c.ts.resize(n);
  for (auto& v : c.agent_index) v = static_cast<std::int32_t>(r.f64());
  for (auto& v : c.ts) v = static_cast<std::int64_t>(r.f64());
  for (std::size_t k = 2; k < 10; ++k) {
    auto* col = double_column(c, kColumns[k].name);
    col->resize(n);
    for (auto& v : *col) v = r.f64();
  }
  c.observed.resize(n);
  for (auto& v : c.observed) v = r.u8();
  return scene;
}

fs::path cache_write(const SceneFrame& scene, const fs::path& cache_dir) {
  if (scene.dataset.empty()) throw Error(ErrorKind::kArgument, "scene has no dataset name");
  const fs::path dir = cache_dir / scene.dataset;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create cache directory " + dir.string() + ": " + ec.message());

  const std::string file = sanitize_file_stem(scene.scene_id) + std::string(kSceneExt);
  const fs::path path = dir / file;
  write_file_atomic(path.string(), encode_scene(scene));

  auto entries = read_index_entries(cache_dir, scene.dataset);
  const std::string rel = scene.dataset + "/" + file;
  std::erase_if(entries, [&](const CacheEntry& e) { return e.scene_id == scene.scene_id || e.relative_path == rel; });
  entries.push_back(entry_for(scene, rel));
  write_index(cache_dir, scene.dataset, std::move(entries));
  return path;
}

SceneFrame cache_load(const fs::path& path) { return decode_scene(read_file_bytes(path.string())); }

CacheIndex read_cache_index(const fs::path& cache_dir, const std::string& dataset) {
  return index_of(read_index_entries(cache_dir, dataset));
}

CacheIndex rebuild_cache_index(const fs::path& cache_dir, const std::string& dataset) {
  const fs::path dir = cache_dir / dataset;
  std::vector<CacheEntry> entries;
  if (fs::is_directory(dir)) {
    std::vector<fs::path> files;
    for (const auto& de : fs::directory_iterator(dir)) {
      if (de.is_regular_file() && de.path().extension() == kSceneExt) files.push_back(de.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const SceneFrame s = cache_load(f);
      entries.push_back(entry_for(s, dataset + "/" + f.filename().string()));
    }
  }
  write_index(cache_dir, dataset, entries);
  return index_of(std::move(entries));
}

std::vector<std::string> SceneCache::datasets() const {
  std::vector<std::string> out;
  if (!fs::is_directory(root_)) return out;
  for (const auto& de : fs::directory_iterator(root_)) {
    if (de.is_directory() && fs::exists(de.path() / kIndexFile)) out.push_back(de.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<CacheEntry> SceneCache::all() const {
  std::vector<CacheEntry> out;
  for (const auto& d : datasets()) {
    auto e = read_cache_index(root_, d).entries();
    out.insert(out.end(), e.begin(), e.end());
  }
  return out;
}

std::vector<CacheEntry> SceneCache::resolve(const std::vector<SceneTag>& tags) const {
  std::vector<CacheEntry> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& tag : tags) {
    std::size_t matched = 0;
    if (fs::exists(root_ / tag.dataset / kIndexFile)) {
      for (const auto& e : read_cache_index(root_, tag.dataset).entries()) {
        if (!tag.matches(e.dataset, e.split, e.location)) continue;
        ++matched;
        if (seen.emplace(e.dataset, e.scene_id).second) out.push_back(e);
      }
    }
    if (matched == 0) throw Error(ErrorKind::kNotFound, "tag '" + tag.render() + "' matches no cached scene");
  }
  std::sort(out.begin(), out.end(), [](const CacheEntry& a, const CacheEntry& b) {
    return std::tie(a.dataset, a.scene_id) < std::tie(b.dataset, b.scene_id);
  });
  return out;
}

SceneFrame SceneCache::load(const CacheEntry& entry) const { return cache_load(root_ / entry.relative_path); }

std::optional<CacheEntry> SceneCache::find_scene(std::string_view scene_ref) const {
  std::optional<std::string> dataset;
  std::string_view id = scene_ref;
  if (const auto colon = scene_ref.find(':'); colon != std::string_view::npos) {
    dataset = std::string(scene_ref.substr(0, colon));
    id = scene_ref.substr(colon + 1);
  }
  std::optional<CacheEntry> found;
  for (const auto& e : all()) {
    if (e.scene_id != id || (dataset && e.dataset != *dataset)) continue;
    if (found) throw Error(ErrorKind::kArgument, "scene '" + std::string(id) + "' is ambiguous; use dataset:scene_id");
    found = e;
  }
  return found;
}

std::vector<SceneTag> parse_tag_list(std::string_view text) {
  std::vector<SceneTag> tags;
  while (!text.empty()) {
    const auto comma = text.find(',');
    std::string_view item = text.substr(0, comma);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) tags.push_back(SceneTag::parse(item));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (tags.empty()) throw Error(ErrorKind::kParse, "no scene tags given");
  return tags;
}

}  // namespace trajkit
