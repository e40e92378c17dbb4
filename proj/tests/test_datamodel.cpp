#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "acs/data.hpp"
#include "test_util.hpp"

using namespace acs;
namespace fs = std::filesystem;

namespace {

/// Writes a feature file byte by byte, independently of write_features.
void write_raw_features(const fs::path& p, std::uint32_t T, std::uint32_t D,
                        const std::vector<float>& values) {
  std::ofstream os(p, std::ios::binary);
  os.write("ACSFEAT1", 8);
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  u32(T);
  u32(D);
  for (float f : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    u32(bits);
  }
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p);
  os << s;
}

/// One-video manifest with valid feature files next to it.
fs::path minimal_dataset(const std::string& name, std::size_t T = 5, std::size_t D = 4) {
  const auto dir = testutil::temp_dir(name);
  std::vector<float> vals(T * D);
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<float>(i) * 0.25f;
  write_raw_features(dir / "v.rgb", std::uint32_t(T), std::uint32_t(D), vals);
  write_raw_features(dir / "v.flow", std::uint32_t(T), std::uint32_t(D), vals);
  write_text(dir / "manifest.json", R"({
    "class_names": ["jump"],
    "videos": [{"video_id": "v", "split": "train", "snippet_count": )" + std::to_string(T) +
                                        R"(, "snippet_duration": 0.5, "labels": [1],
                 "rgb_path": "v.rgb", "flow_path": "v.flow",
                 "gt_segments": [{"start": 0.5, "end": 1.5, "class": 1}]}]
  })");
  return dir;
}

std::string error_of(const fs::path& p) {
  try {
    load_manifest(p);
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Features, SnippetMajorLayoutReadAsDxT) {
  const auto dir = minimal_dataset("feat_layout");
  const Matrix m = read_feature_file(dir / "v.rgb");
  ASSERT_EQ(m.rows(), 4u);
  ASSERT_EQ(m.cols(), 5u);
  // value index t * D + d holds (t * D + d) * 0.25
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t d = 0; d < 4; ++d) EXPECT_EQ(m(d, t), double(t * 4 + d) * 0.25);
}

TEST(Features, RoundTripIsBitExactForFloatValues) {
  const auto dir = testutil::temp_dir("feat_rt");
  Rng rng = make_rng(3, "f");
  Matrix m = testutil::random_matrix(7, 9, rng);
  for (double& v : m.values()) v = static_cast<double>(static_cast<float>(v));
  write_features(dir / "x.feat", m);
  EXPECT_TRUE(read_feature_file(dir / "x.feat") == m);
  const auto h = read_feature_header(dir / "x.feat");
  EXPECT_EQ(h.snippet_count, 9u);
  EXPECT_EQ(h.dim, 7u);
  EXPECT_EQ(fs::file_size(dir / "x.feat"), 16u + 4u * 63u);
}

TEST(Features, TruncatedFileIsIoError) {
  const auto dir = testutil::temp_dir("feat_trunc");
  write_features(dir / "x.feat", Matrix(3, 4, 1.0));
  fs::resize_file(dir / "x.feat", fs::file_size(dir / "x.feat") - 3);
  EXPECT_THROW(read_feature_file(dir / "x.feat"), IoError);
  write_text(dir / "bad.feat", "ACSFEAT2");
  EXPECT_THROW(read_feature_file(dir / "bad.feat"), IoError);
}

TEST(Features, NonFiniteValuesRejected) {
  const auto dir = testutil::temp_dir("feat_nan");
  write_raw_features(dir / "x.feat", 2, 1, {1.0f, std::numeric_limits<float>::quiet_NaN()});
  EXPECT_THROW(read_feature_file(dir / "x.feat"), DataError);
}

TEST(Manifest, MinimalOneVideo) {
  const auto dir = minimal_dataset("man_min");
  const auto m = load_manifest(dir / "manifest.json");
  EXPECT_EQ(m.num_classes(), 1u);
  ASSERT_EQ(m.videos.size(), 1u);
  EXPECT_EQ(m.videos[0].snippet_count, 5u);
  EXPECT_EQ(m.rgb_dim, 4u);
  EXPECT_DOUBLE_EQ(m.videos[0].duration(), 2.5);
  EXPECT_EQ(m.class_index("jump"), 1);
  EXPECT_EQ(m.class_index("run"), 0);
  const auto f = load_features(m.videos[0], Stream::flow);
  EXPECT_EQ(f.length(), 5u);
  EXPECT_EQ(f.dim(), 4u);
}

TEST(Manifest, MissingFeatureFileNamesThePath) {
  const auto dir = minimal_dataset("man_missing");
  fs::remove(dir / "v.flow");
  const std::string msg = error_of(dir / "manifest.json");
  EXPECT_NE(msg.find("v.flow"), std::string::npos) << msg;
  EXPECT_THROW(load_manifest(dir / "manifest.json"), IoError);
}

TEST(Manifest, FieldAndReferentialErrors) {
  const auto dir = minimal_dataset("man_err");
  auto with = [&](const std::string& video_json) {
    write_text(dir / "m.json", R"({"class_names": ["a", "b"], "videos": [)" + video_json + "]}");
    return error_of(dir / "m.json");
  };
  const std::string ok = R"("split": "train", "snippet_count": 5, "snippet_duration": 1.0,
                             "rgb_path": "v.rgb", "flow_path": "v.flow")";
  EXPECT_NE(with(R"({"video_id": "x", "labels": [3], )" + ok + "}").find("x"), std::string::npos);
  EXPECT_NE(with(R"({"video_id": "y", "labels": [1], "gt_segments": [{"start": 4, "end": 9, "class": 1}], )" + ok + "}")
                .find("gt_segments[0]"),
            std::string::npos);
  EXPECT_NE(with(R"({"video_id": "z", )" + ok + "}").find("labels"), std::string::npos);
  EXPECT_NE(with(R"({"video_id": "d", "labels": [1], )" + ok + R"(}, {"video_id": "d", "labels": [1], )" + ok + "}")
                .find("duplicate"),
            std::string::npos);
  EXPECT_NE(with(R"({"video_id": "t", "labels": [1], "split": "train", "snippet_count": 6,
                     "snippet_duration": 1.0, "rgb_path": "v.rgb", "flow_path": "v.flow"})")
                .find("T=5"),
            std::string::npos);
  write_text(dir / "p.json", "{\"class_names\": [\"a\"],\n \"videos\": [ oops ]}");
  EXPECT_THROW(load_manifest(dir / "p.json"), DataError);
  EXPECT_NE(error_of(dir / "p.json").find("line 2"), std::string::npos);
}

TEST(Manifest, SaveLoadRoundTripPreservesOrderAndContent) {
  const auto dir = minimal_dataset("man_rt");
  DatasetManifest m = load_manifest(dir / "manifest.json");
  VideoRecord second = m.videos[0];
  second.video_id = "a_second";
  second.split = Split::test;
  second.labels = {1};
  second.gt_segments = {{0.0, 1.0, 1}, {1.5, 2.5, 1}};
  m.videos.push_back(second);
  save_manifest(dir / "again.json", m);
  const DatasetManifest back = load_manifest(dir / "again.json");
  EXPECT_EQ(back.class_names, m.class_names);
  ASSERT_EQ(back.videos.size(), 2u);
  EXPECT_EQ(back.videos[0], m.videos[0]);
  EXPECT_EQ(back.videos[1], m.videos[1]);
  EXPECT_EQ(back.split(Split::test).size(), 1u);
}
