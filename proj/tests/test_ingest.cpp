#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "trajkit/bytes.hpp"
#include "trajkit/ingest.hpp"

using namespace trajkit;
namespace fs = std::filesystem;

namespace {

SceneMetaRecord meta(const std::string& scene_id = "s1", double dt = 0.1) {
  return SceneMetaRecord{scene_id, dt, "boston", "nusc_mini", "train"};
}

std::string csv(const std::vector<std::string>& rows) {
  std::string out = std::string(kCanonicalCsvHeader) + "\n";
  for (const auto& r : rows) out += r + "\n";
  return out;
}

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("trajkit_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

FormatFault fault_of(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_scene(bytes);
  } catch (const FormatError& e) {
    return e.fault();
  }
  ADD_FAILURE() << "decode_scene accepted corrupted bytes";
  return FormatFault::kCorrupt;
}

}  // namespace

TEST(MetaJson, ParsesAndRejects) {
  const auto m = parse_meta_json(R"({"scene_id":"a","dt":0.5,"location":"x","dataset":"eth","split":"test"})");
  EXPECT_EQ(m.scene_id, "a");
  EXPECT_EQ(m.dt, 0.5);
  EXPECT_EQ(parse_meta_json(meta_to_json(m)).info().dataset, "eth");
  EXPECT_THROW(parse_meta_json(R"({"scene_id":"a","dt":0,"location":"x","dataset":"eth","split":"test"})"), Error);
  EXPECT_THROW(parse_meta_json(R"({"scene_id":"a","dt":1,"location":"x","dataset":"e-th","split":"test"})"), Error);
  EXPECT_THROW(parse_meta_json("{"), Error);
}

TEST(CanonicalCsv, PositionsOnlyDerivesKinematics) {
  const auto s = parse_canonical_csv(csv({"s1,a,vehicle,0,0,0,,,,,", "s1,a,vehicle,1,1,0,,,,,",
                                          "s1,a,vehicle,2,2,0,,,,,", "s1,b,pedestrian,0,5,5,,,,,",
                                          "s1,b,pedestrian,1,5,6,,,,,", "s1,b,pedestrian,2,5,7,,,,,"}),
                                     meta());
  ASSERT_EQ(s.agents.size(), 2u);
  EXPECT_EQ(s.agents[1].type, AgentType::kPedestrian);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(s.columns.vx[i], 10.0, 1e-9);
    EXPECT_NEAR(s.columns.heading[i], 0.0, 1e-12);
  }
  for (std::size_t i = 3; i < 6; ++i) {
    EXPECT_NEAR(s.columns.vy[i], 10.0, 1e-9);
    EXPECT_NEAR(s.columns.heading[i], kPi / 2, 1e-12);
  }
  for (auto o : s.columns.observed) EXPECT_EQ(o, 1);
  EXPECT_TRUE(scene_validate(s).empty());
  EXPECT_EQ(s.dataset, "nusc_mini");
}

TEST(CanonicalCsv, GapIsImputed) {
  const auto s = parse_canonical_csv(
      csv({"s1,a,vehicle,0,0,0,,,,,", "s1,a,vehicle,1,1,0,,,,,", "s1,a,vehicle,3,3,0,,,,,"}), meta());
  ASSERT_EQ(s.columns.size(), 4u);
  EXPECT_EQ(s.columns.ts[2], 2);
  EXPECT_EQ(s.columns.observed[2], 0);
  EXPECT_DOUBLE_EQ(s.columns.x[2], 2.0);
}

TEST(CanonicalCsv, FramesRenumberFromZero) {
  const auto s = parse_canonical_csv(csv({"s1,a,vehicle,100,0,0,,,,,", "s1,a,vehicle,101,1,0,,,,,"}), meta());
  EXPECT_EQ(s.columns.ts.front(), 0);
  EXPECT_EQ(s.n_timesteps, 2);
}

TEST(CanonicalCsv, MalformedCellReportsLine) {
  for (const std::string bad : {"s1,a,vehicle,1,12,3,0,,,,,", "s1,a,vehicle,1,\"12,3\",0,,,,,", "s1,a,vehicle,1,1x,0,,,,,"}) {
    try {
      parse_canonical_csv(csv({"s1,a,vehicle,0,0,0,,,,,", bad}), meta());
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kParse);
      EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
  }
}

TEST(CanonicalCsv, RejectsBadInput) {
  auto kind_of = [](const std::string& text) {
    try {
      parse_canonical_csv(text, meta());
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kArgument;
  };
  EXPECT_EQ(kind_of("scene,agent\n"), ErrorKind::kParse);
  EXPECT_EQ(kind_of(csv({"s1,a,truck,0,0,0,,,,,"})), ErrorKind::kParse);
  EXPECT_EQ(kind_of(csv({"s2,a,vehicle,0,0,0,,,,,"})), ErrorKind::kParse);
  EXPECT_EQ(kind_of(csv({"s1,a,vehicle,0,0,0,,,4,,"})), ErrorKind::kParse);
  EXPECT_EQ(kind_of(csv({"s1,a,vehicle,0,0,0,,,,,", "s1,a,pedestrian,1,0,0,,,,,"})), ErrorKind::kParse);
  EXPECT_EQ(kind_of(csv({})), ErrorKind::kParse);
}

TEST(CanonicalCsv, RepeatedFrameNamesAgent) {
  try {
    parse_canonical_csv(csv({"s1,car7,vehicle,0,0,0,,,,,", "s1,car7,vehicle,0,1,0,,,,,"}), meta());
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("car7"), std::string::npos);
  }
}

TEST(CanonicalCsv, CrlfBomAndQuotes) {
  const std::string text = "\xEF\xBB\xBF" + std::string(kCanonicalCsvHeader) +
                           "\r\ns1,\"a,1\",vehicle,0,0,0,0,0.5,4,2,1.5\r\ns1,\"a,1\",vehicle,1,1,0,0,0.5,4,2,1.5\r\n";
  const auto s = parse_canonical_csv(text, meta());
  ASSERT_EQ(s.agents.size(), 1u);
  EXPECT_EQ(s.agents[0].id, "a,1");
  ASSERT_TRUE(s.agents[0].extent);
  EXPECT_EQ(s.agents[0].extent->height, 1.5);
  EXPECT_TRUE(s.agents[0].heading_from_data);
  EXPECT_DOUBLE_EQ(s.columns.heading[1], 0.5);
}

TEST(CanonicalCsv, ShuffledRowsGiveSameScene) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const auto scene = oracle::random_scene(rng, 6, 40, 0.1, "s1", "nusc_mini");
    const std::string text = to_canonical_csv(scene, true);
    std::vector<std::string> lines;
    std::size_t pos = text.find('\n') + 1;
    while (pos < text.size()) {
      const auto end = text.find('\n', pos);
      lines.push_back(text.substr(pos, end - pos));
      pos = end + 1;
    }
    const auto a = parse_canonical_csv(csv(lines), meta());
    std::shuffle(lines.begin(), lines.end(), rng);
    const auto b = parse_canonical_csv(csv(lines), meta());
    EXPECT_EQ(a, b);
    EXPECT_TRUE(scene_validate(b).empty());
  }
}

TEST(FrameText, PedestrianSpeed) {
  const auto s = parse_frame_text("0 1 0.0 0.0\n1 1 1.0 0.0\n", meta("eth0", 0.4));
  ASSERT_EQ(s.agents.size(), 1u);
  EXPECT_EQ(s.agents[0].type, AgentType::kPedestrian);
  EXPECT_NEAR(std::hypot(s.columns.vx[0], s.columns.vy[0]), 2.5, 1e-12);
}

TEST(FrameText, StepsAndInterleaving) {
  const auto s = parse_frame_text("# comment\n10 1 0 0\n10 2 5 5\n20 1 1 0\n20 2 5 6\n30 2 5 7\n", meta("eth0", 0.4));
  ASSERT_EQ(s.agents.size(), 2u);
  EXPECT_EQ(s.agents[0].first_ts, 0);
  EXPECT_EQ(s.agents[0].last_ts, 1);
  EXPECT_EQ(s.agents[1].last_ts, 2);
  EXPECT_EQ(s.n_timesteps, 3);
}

TEST(FrameText, Errors) {
  EXPECT_THROW(parse_frame_text("", meta()), Error);
  EXPECT_THROW(parse_frame_text("# only\n", meta()), Error);
  try {
    parse_frame_text("0 1 0 0\n1 1 zz 0\n", meta());
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(parse_frame_text("0.5 1 0 0\n", meta()), Error);
}

TEST(Synth, StraightDisplacementAndSpeed) {
  const auto s = synth_scene(StraightMotion{10.0}, 1, 11, 0.1);
  EXPECT_NEAR(s.columns.x.back() - s.columns.x.front(), 10.0, 1e-9);
  for (double vx : s.columns.vx) EXPECT_NEAR(vx, 10.0, 1e-9);
  EXPECT_TRUE(scene_validate(s).empty());
}

TEST(Synth, StopAndGoPlateauExceedsThreshold) {
  const double g = 9.81;
  const auto motion = StopAndGoMotion::symmetric(0.5 * g, 20, 10, 15, 0.1);
  const auto s = synth_scene(motion, 1, 100, 0.1);
  int above = 0;
  for (std::size_t i = 0; i < s.columns.size(); ++i) above += std::hypot(s.columns.ax[i], s.columns.ay[i]) > 3.924;
  EXPECT_EQ(above, 40);
  // Brakes to a standstill during the hold.
  const auto hold = s.row_at(0, 35);
  ASSERT_TRUE(hold);
  EXPECT_NEAR(s.columns.vx[*hold], 0.0, 1e-9);
}

TEST(Cache, RoundTripIsBitExact) {
  std::mt19937_64 rng(31);
  const auto dir = temp_dir("cache_rt");
  for (int i = 0; i < 20; ++i) {
    const auto s = oracle::random_scene(rng, 5, 50, 0.1, "scene_" + std::to_string(i), "randds");
    EXPECT_EQ(decode_scene(encode_scene(s)), s);
    const auto path = cache_write(s, dir);
    EXPECT_EQ(cache_load(path), s);
  }
  const auto idx = read_cache_index(dir, "randds");
  EXPECT_EQ(idx.entries().size(), 20u);
  EXPECT_EQ(rebuild_cache_index(dir, "randds"), idx);
  EXPECT_EQ(rebuild_cache_index(dir, "randds"), idx);
  fs::remove_all(dir);
}

TEST(Cache, DistinctFaults) {
  const auto bytes = encode_scene(synth_scene(CircleMotion{}, 2, 30, 0.1));
  {
    auto b = bytes;
    b.pop_back();
    EXPECT_EQ(fault_of(b), FormatFault::kTruncated);
  }
  {
    auto b = bytes;
    b.resize(10);
    EXPECT_EQ(fault_of(b), FormatFault::kTruncated);
  }
  {
    auto b = bytes;
    b[0] = 'X';
    EXPECT_EQ(fault_of(b), FormatFault::kMagic);
  }
  {
    auto b = bytes;
    b[6] = 9;
    EXPECT_EQ(fault_of(b), FormatFault::kVersion);
  }
  {
    auto b = bytes;
    b[b.size() / 2] ^= 0x40;
    EXPECT_EQ(fault_of(b), FormatFault::kChecksum);
  }
}

TEST(Cache, ResolveTags) {
  const auto dir = temp_dir("cache_tags");
  auto a = synth_scene(StraightMotion{}, 1, 5, 0.1, SynthLayout{.scene_id = "a", .dataset = "nusc_mini", .split = "train", .location = "boston"});
  auto b = synth_scene(StraightMotion{}, 1, 5, 0.1, SynthLayout{.scene_id = "b", .dataset = "nusc_mini", .split = "val", .location = "singapore"});
  auto c = synth_scene(StraightMotion{}, 1, 5, 0.1, SynthLayout{.scene_id = "c", .dataset = "sdd", .split = "train", .location = "gates"});
  for (const auto* s : {&a, &b, &c}) cache_write(*s, dir);
  const SceneCache cache(dir);
  EXPECT_EQ(cache.datasets(), (std::vector<std::string>{"nusc_mini", "sdd"}));
  const auto hits = cache.resolve(parse_tag_list("nusc_mini-boston,sdd-train"));
  ASSERT_EQ(hits.size(), 2u);
  EXPECT_EQ(hits[0].scene_id, "a");
  EXPECT_EQ(hits[1].scene_id, "c");
  EXPECT_EQ(cache.resolve({SceneTag::parse("nusc_mini")}).size(), 2u);
  try {
    cache.resolve({SceneTag::parse("lyft")});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNotFound);
  }
  EXPECT_EQ(cache.load(hits[1]), c);
  EXPECT_EQ(cache.find_scene("sdd:c")->scene_id, "c");
  EXPECT_FALSE(cache.find_scene("zzz"));
  fs::remove_all(dir);
}
