// trajkit command-line front end. Logs go to stderr, data to files/stdout.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "trajkit/analysis.hpp"
#include "trajkit/batching.hpp"
#include "trajkit/bytes.hpp"
#include "trajkit/ingest.hpp"
#include "trajkit/simulation.hpp"
#include "trajkit/vecmap.hpp"

namespace fs = std::filesystem;
using namespace trajkit;

namespace {

enum ExitCode : int {
  kOk = 0,
  kInput = 2,
  kInvalid = 3,
  kEmptyResult = 4,
  kIoFailure = 5,
  kUsage = 64,
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse:
    case ErrorKind::kFormat:
    case ErrorKind::kRatio:
    case ErrorKind::kNotFound:
      return kInput;
    case ErrorKind::kValidation:
      return kInvalid;
    case ErrorKind::kEmpty:
      return kEmptyResult;
    case ErrorKind::kIo:
      return kIoFailure;
    case ErrorKind::kArgument:
      return kUsage;
  }
  return kUsage;
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string cache_dir_or_env(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("TRAJKIT_CACHE"); env && *env) return env;
  throw UsageError("--cache not given and TRAJKIT_CACHE is unset");
}

std::pair<double, double> parse_range(const std::string& text, const std::string& flag) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw UsageError(flag + " expects two comma-separated seconds, e.g. 1,3");
  try {
    std::size_t used = 0;
    const double a = std::stod(text.substr(0, comma), &used);
    if (used != comma) throw std::invalid_argument(text);
    const std::string rest = text.substr(comma + 1);
    const double b = std::stod(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(text);
    return {a, b};
  } catch (const std::logic_error&) {
    throw UsageError(flag + ": cannot parse '" + text + "'");
  }
}

std::vector<SceneTag> tags_or_all(const SceneCache& cache, const std::string& tags) {
  if (!tags.empty()) return parse_tag_list(tags);
  std::vector<SceneTag> all;
  for (const auto& d : cache.datasets()) all.push_back(SceneTag{d, std::nullopt, std::nullopt});
  if (all.empty()) throw Error(ErrorKind::kNotFound, "cache " + cache.root().string() + " holds no datasets");
  return all;
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string input, format, meta, cache;
};

int cmd_ingest(const IngestArgs& a) {
  const std::string cache = cache_dir_or_env(a.cache);
  const auto meta = parse_meta_json(read_file_text(a.meta));
  const std::string text = read_file_text(a.input);
  const SceneFrame scene = a.format == "frame-text" ? parse_frame_text(text, meta) : parse_canonical_csv(text, meta);
  const auto path = cache_write(scene, cache);
  std::cerr << "wrote " << path.string() << "\n";
  std::cout << "ingested 1 scenes, " << scene.agents.size() << " agents\n";
  return kOk;
}

struct AnalyzeArgs {
  std::string cache, tags, metrics, config, out;
  std::vector<std::string> maps;
};

int cmd_analyze(const AnalyzeArgs& a) {
  std::vector<std::string> metrics;
  for (std::size_t pos = 0; pos <= a.metrics.size();) {
    const auto comma = std::min(a.metrics.find(',', pos), a.metrics.size());
    if (comma > pos) metrics.push_back(a.metrics.substr(pos, comma - pos));
    pos = comma + 1;
  }
  if (metrics.empty()) throw UsageError("--metrics is empty");
  for (const auto& m : metrics) {
    const auto& known = metric_names();
    if (std::find(known.begin(), known.end(), m) == known.end()) {
      std::string all;
      for (const auto& k : known) all += (all.empty() ? "" : ",") + k;
      throw UsageError("unknown metric '" + m + "'; valid metrics: " + all);
    }
  }
  const SceneCache cache(cache_dir_or_env(a.cache));
  AnalysisConfig cfg;
  if (!a.config.empty()) cfg = parse_analysis_config(read_file_text(a.config));
  std::vector<VectorMap> maps;
  for (const auto& m : a.maps) maps.push_back(load_map_file(m));
  const MetricReport report = analyze(cache, tags_or_all(cache, a.tags), metrics, cfg, maps);
  emit_report(report, a.out);
  for (const auto& [metric, reason] : report.unavailable) std::cerr << metric << ": unavailable (" << reason << ")\n";
  std::cerr << "analyzed " << report.scenes << " scenes, " << report.histograms.size() << " histograms\n";
  return kOk;
}

struct MapArgs {
  std::string map;
  std::string point;
  std::string out;
};

int cmd_map_closest(const MapArgs& a) {
  const VectorMap map = load_map_file(a.map);
  std::vector<double> xyz;
  std::size_t pos = 0;
  try {
    while (pos <= a.point.size()) {
      const auto comma = std::min(a.point.find(',', pos), a.point.size());
      std::size_t used = 0;
      const std::string cell = a.point.substr(pos, comma - pos);
      xyz.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
      pos = comma + 1;
    }
  } catch (const std::logic_error&) {
    throw UsageError("--point expects x,y,z");
  }
  if (xyz.size() == 2) xyz.push_back(0.0);
  if (xyz.size() != 3) throw UsageError("--point expects x,y,z");
  const LaneHit hit = map.closest_lane({xyz[0], xyz[1], xyz[2]});
  std::cout << hit.lane_id << " " << format_double(hit.distance) << "\n";
  return kOk;
}

int cmd_map_stats(const MapArgs& a) {
  const VectorMap map = load_map_file(a.map);
  const MapStats s = map_stats(map);
  nlohmann::json j = {{"map_id", map.map_id()},
                      {"lane_length_km", s.total_lane_length_km},
                      {"road_area_m2", s.road_area_m2},
                      {"pedestrian_area_m2", s.pedestrian_area_m2},
                      {"n_lanes", s.n_lanes},
                      {"n_bounded_lanes", s.n_bounded_lanes},
                      {"road_area_may_overcount", s.road_area_may_overcount}};
  std::cout << j.dump(2) << "\n";
  for (const auto& w : map.warnings()) std::cerr << "warning: " << w << "\n";
  return kOk;
}

int cmd_map_pack(const MapArgs& a) {
  const VectorMap map = load_map_file(a.map);
  write_file_atomic(a.out, map_serialize(map));
  std::cerr << "packed " << map.data().lanes.size() << " lanes into " << a.out << "\n";
  return kOk;
}

struct BatchArgs {
  std::string cache, tags, centric = "agent", history, future, out;
  std::optional<double> dt;
};

int cmd_batch(const BatchArgs& a) {
  const auto [hmin, hmax] = parse_range(a.history, "--history");
  const auto [fmin, fmax] = parse_range(a.future, "--future");
  const WindowSpec window{hmin, hmax, fmin, fmax};
  const SceneCache cache(cache_dir_or_env(a.cache));
  const Centric centric = a.centric == "scene" ? Centric::kScene : Centric::kAgent;
  const BatchIndex index = BatchIndex::build(cache, tags_or_all(cache, a.tags), centric, window, FilterSpec{}, a.dt);
  const ExportSummary summary = export_batches(index, a.out);
  std::cout << "exported " << summary.num_elements << " elements in " << summary.num_batches << " batches\n";
  return kOk;
}

struct SimArgs {
  std::string cache, scene, out;
  std::int64_t init_ts = 0;
  std::int64_t steps = 0;
};

int cmd_sim_replay(const SimArgs& a) {
  const SceneCache cache(cache_dir_or_env(a.cache));
  const auto entry = cache.find_scene(a.scene);
  if (!entry) throw Error(ErrorKind::kNotFound, "scene '" + a.scene + "' not in cache");
  SceneFrame scene = cache.load(*entry);
  if (a.init_ts < 0 || a.steps < 0 || a.init_ts + a.steps >= scene.n_timesteps) {
    throw Error(ErrorKind::kParse, "window [" + std::to_string(a.init_ts) + ", " + std::to_string(a.init_ts + a.steps) +
                                       "] exceeds scene frames [0, " + std::to_string(scene.n_timesteps - 1) + "]");
  }
  const std::int64_t end = a.init_ts + a.steps;
  std::set<std::string> controlled;
  for (const auto& meta : scene.agents) {
    if (meta.first_ts <= a.init_ts && meta.last_ts >= end) controlled.insert(meta.id);
  }
  SimulationScene sim = SimulationScene::reset(scene, a.init_ts, controlled);
  for (std::int64_t t = a.init_ts + 1; t <= end; ++t) {
    std::map<std::string, Pose> poses;
    for (const auto& id : controlled) {
      const auto agent = *scene.find_agent(id);
      const auto row = scene.columns.row(*scene.row_at(agent, t));
      poses[id] = {row.x, row.y, row.heading};
    }
    sim.step(poses);
  }
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + a.out + ": " + ec.message());
  write_file_atomic((fs::path(a.out) / "metrics.json").string(), sim_metrics_to_json(sim.score()));
  sim.export_csv(fs::path(a.out) / "rollout.csv");
  std::cerr << "replayed " << controlled.size() << " agents for " << a.steps << " steps\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trajkit: trajectory dataset tooling"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Parse, validate and cache one scene");
  ingest_cmd->add_option("--input", ingest.input, "Scene file")->required();
  ingest_cmd->add_option("--format", ingest.format, "Input format")
      ->required()
      ->check(CLI::IsMember({"canonical-csv", "frame-text"}));
  ingest_cmd->add_option("--meta", ingest.meta, "Scene metadata JSON")->required();
  ingest_cmd->add_option("--cache", ingest.cache, "Cache directory (default: $TRAJKIT_CACHE)");

  AnalyzeArgs analyze_args;
  auto* analyze_cmd = app.add_subcommand("analyze", "Compute dataset statistics");
  analyze_cmd->add_option("--cache", analyze_args.cache, "Cache directory (default: $TRAJKIT_CACHE)");
  analyze_cmd->add_option("--tags", analyze_args.tags, "Comma-separated scene tags (default: every dataset)");
  analyze_cmd->add_option("--metrics", analyze_args.metrics, "Comma-separated metric names")->required();
  analyze_cmd->add_option("--map", analyze_args.maps, "Map file (binary or JSON); repeatable");
  analyze_cmd->add_option("--config", analyze_args.config, "Analysis config JSON");
  analyze_cmd->add_option("--out", analyze_args.out, "Report directory")->required();

  MapArgs map_args;
  auto* map_cmd = app.add_subcommand("map", "Vector map queries");
  map_cmd->add_option("--map", map_args.map, "Map file (binary or JSON)")->required();
  map_cmd->require_subcommand(1);
  auto* closest_cmd = map_cmd->add_subcommand("closest-lane", "Nearest lane to a point");
  closest_cmd->add_option("--point", map_args.point, "x,y,z")->required();
  auto* stats_cmd = map_cmd->add_subcommand("stats", "Map statistics as JSON");
  auto* pack_cmd = map_cmd->add_subcommand("pack", "Write the binary map container");
  pack_cmd->add_option("--out", map_args.out, "Output file")->required();

  BatchArgs batch;
  auto* batch_cmd = app.add_subcommand("batch", "Build and export training batches");
  batch_cmd->add_option("--cache", batch.cache, "Cache directory (default: $TRAJKIT_CACHE)");
  batch_cmd->add_option("--tags", batch.tags, "Comma-separated scene tags (default: every dataset)");
  batch_cmd->add_option("--centric", batch.centric, "agent or scene")->check(CLI::IsMember({"agent", "scene"}));
  batch_cmd->add_option("--history", batch.history, "min,max seconds")->required();
  batch_cmd->add_option("--future", batch.future, "min,max seconds")->required();
  batch_cmd->add_option("--dt", batch.dt, "Resample to this dt first");
  batch_cmd->add_option("--out", batch.out, "Export directory")->required();

  SimArgs sim;
  auto* sim_cmd = app.add_subcommand("sim-replay", "Replay a scene through the simulator");
  sim_cmd->add_option("--cache", sim.cache, "Cache directory (default: $TRAJKIT_CACHE)");
  sim_cmd->add_option("--scene", sim.scene, "scene_id or dataset:scene_id")->required();
  sim_cmd->add_option("--init-ts", sim.init_ts, "First simulated frame")->required();
  sim_cmd->add_option("--steps", sim.steps, "Number of steps")->required();
  sim_cmd->add_option("--out", sim.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*ingest_cmd) return cmd_ingest(ingest);
    if (*analyze_cmd) return cmd_analyze(analyze_args);
    if (*closest_cmd) return cmd_map_closest(map_args);
    if (*stats_cmd) return cmd_map_stats(map_args);
    if (*pack_cmd) return cmd_map_pack(map_args);
    if (*batch_cmd) return cmd_batch(batch);
    if (*sim_cmd) return cmd_sim_replay(sim);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  }
  return kUsage;
}
