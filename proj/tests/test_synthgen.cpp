#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "acs/evaluation.hpp"
#include "acs/synthgen.hpp"
#include "test_util.hpp"

using namespace acs;

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  return dot(a, b) / std::sqrt(dot(a, a) * dot(b, b));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

SynthConfig small(std::uint64_t seed) {
  SynthConfig s;
  s.seed = seed;
  s.train_videos = 10;
  s.test_videos = 10;
  return s;
}

/// Projections onto the planted signatures, normalised by the signal strength.
struct Probe {
  double rgb_action, rgb_context, flow_action, flow_motion;
};

Probe probe(const SynthCorpus& c, const SynthVideo& v, std::size_t t) {
  const auto cls = static_cast<std::size_t>(v.record.labels[0] - 1);
  const auto& s = c.signatures;
  const auto r = v.rgb.col(t), f = v.flow.col(t);
  const double A = c.config.signal_strength;
  // Context signatures share a component with the action ones; project on
  // the orthogonal remainder so the two probes are independent.
  auto residual = [](const std::vector<double>& ctx, const std::vector<double>& act) {
    std::vector<double> out(ctx.size());
    const double k = dot(ctx, act);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ctx[i] - k * act[i];
    const double n = std::sqrt(dot(out, out));
    for (double& x : out) x /= n;
    return out;
  };
  return {dot(r, s.rgb_action[cls]) / A, dot(r, residual(s.rgb_context[cls], s.rgb_action[cls])) / A,
          dot(f, s.flow_action[cls]) / A, dot(f, residual(s.flow_motion[cls], s.flow_action[cls])) / A};
}

}  // namespace

TEST(Synth, SameSeedGivesIdenticalFiles) {
  const auto d1 = testutil::temp_dir("synth_a"), d2 = testutil::temp_dir("synth_b");
  SynthCorpus a = generate_corpus(small(7)), b = generate_corpus(small(7));
  write_corpus(a, d1);
  write_corpus(b, d2);
  for (const auto& v : a.videos) {
    const std::string f = v.record.video_id + ".rgb.feat";
    EXPECT_EQ(slurp(d1 / "features" / f), slurp(d2 / "features" / f));
  }
  SynthCorpus c = generate_corpus(small(8));
  EXPECT_FALSE(c.videos[0].rgb == a.videos[0].rgb);
}

TEST(Synth, InfeasibleConfigRejected) {
  SynthConfig s = small(1);
  s.min_snippets = s.max_snippets = 10;
  s.max_actions = 3;
  s.max_action_length = 12;
  try {
    generate_corpus(s);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("infeasible"), std::string::npos);
  }
  SynthConfig narrow = small(1);
  narrow.feature_dim = 2 * narrow.num_classes;
  EXPECT_THROW(generate_corpus(narrow), ConfigError);
}

TEST(Synth, SingleVideoSingleAction) {
  SynthConfig s = small(2);
  s.train_videos = 1;
  s.test_videos = 0;
  s.min_actions = s.max_actions = 1;
  const SynthCorpus c = generate_corpus(s);
  const DatasetManifest m = c.manifest();
  ASSERT_EQ(m.videos.size(), 1u);
  ASSERT_EQ(m.videos[0].gt_segments.size(), 1u);
  const auto& g = m.videos[0].gt_segments[0];
  EXPECT_EQ(g.label, m.videos[0].labels[0]);
  std::size_t action_snippets = 0;
  for (auto k : c.videos[0].kinds) action_snippets += k == PlantedKind::action;
  EXPECT_DOUBLE_EQ(g.end - g.start, double(action_snippets) * s.snippet_duration);
}

TEST(Synth, ContextSignatureCorrelation) {
  const SynthCorpus c = generate_corpus(small(3));
  const auto& s = c.signatures;
  for (std::size_t i = 0; i < s.rgb_action.size(); ++i)
    for (std::size_t j = 0; j < s.rgb_action.size(); ++j) {
      const double cs = cosine(s.rgb_context[i], s.rgb_action[j]);
      if (i == j) EXPECT_GT(cs, 0.5);
      else EXPECT_LT(std::abs(cs), 0.1);
    }
  // Same check on the features themselves: mean context vs mean action.
  for (const auto& v : c.videos) {
    std::vector<double> act(c.config.feature_dim), ctx(c.config.feature_dim);
    for (std::size_t t = 0; t < v.kinds.size(); ++t)
      for (std::size_t d = 0; d < act.size(); ++d) {
        if (v.kinds[t] == PlantedKind::action) act[d] += v.rgb(d, t);
        if (v.kinds[t] == PlantedKind::context) ctx[d] += v.rgb(d, t);
      }
    EXPECT_GT(cosine(act, ctx), 0.5) << v.record.video_id;
  }
}

TEST(Synth, PlantedKindsAreLinearlySeparable) {
  const SynthCorpus c = generate_corpus(small(4));
  std::size_t counts[4] = {};
  for (const auto& v : c.videos)
    for (std::size_t t = 0; t < v.kinds.size(); ++t) {
      const Probe p = probe(c, v, t);
      const bool rgb_sig = p.rgb_action > 0.5, flow_sig = p.flow_action > 0.5;
      const bool ctx = !rgb_sig && p.rgb_context > 0.3, motion = !flow_sig && p.flow_motion > 0.3;
      PlantedKind k = PlantedKind::background;
      if (rgb_sig && flow_sig) k = PlantedKind::action;
      else if (rgb_sig || ctx) k = PlantedKind::context;
      else if (flow_sig || motion) k = PlantedKind::motion_context;
      EXPECT_EQ(k, v.kinds[t]) << v.record.video_id << " t=" << t;
      ++counts[static_cast<int>(v.kinds[t])];
    }
  for (auto n : counts) EXPECT_GT(n, 0u);
}

TEST(Synth, PlantedSignalOracleIsPerfect) {
  const SynthCorpus c = generate_corpus(small(5));
  const DatasetManifest m = c.manifest();
  std::vector<Detection> dets;
  for (const auto& v : c.videos) {
    if (v.record.split != Split::test) continue;
    // Per class: runs where both streams carry that class's action signature.
    const std::size_t T = v.kinds.size();
    for (std::size_t n = 0; n < c.config.num_classes; ++n) {
      std::vector<bool> on(T);
      for (std::size_t t = 0; t < T; ++t)
        on[t] = dot(v.rgb.col(t), c.signatures.rgb_action[n]) > c.config.signal_strength / 2 &&
                dot(v.flow.col(t), c.signatures.flow_action[n]) > c.config.signal_strength / 2;
      for (std::size_t s = 0; s < T;) {
        if (!on[s]) {
          ++s;
          continue;
        }
        std::size_t e = s;
        while (e < T && on[e]) ++e;
        dets.push_back({v.record.video_id, int(n + 1), double(s), double(e), double(e - s)});
        s = e;
      }
    }
  }
  const EvalReport r = map_report(dets, m, Split::test, {0.5});
  EXPECT_DOUBLE_EQ(r.map[0], 1.0);
}

TEST(Synth, WriteThenLoadRoundTrips) {
  const auto dir = testutil::temp_dir("synth_rt");
  SynthCorpus c = generate_corpus(small(6));
  const DatasetManifest written = write_corpus(c, dir);
  const DatasetManifest back = load_manifest(dir / "manifest.json");
  ASSERT_EQ(back.videos.size(), c.videos.size());
  EXPECT_EQ(back.class_names, written.class_names);
  for (std::size_t i = 0; i < c.videos.size(); ++i) {
    EXPECT_EQ(back.videos[i], c.videos[i].record);
    EXPECT_TRUE(load_features(back.videos[i], Stream::rgb).data == c.videos[i].rgb);
    EXPECT_TRUE(load_features(back.videos[i], Stream::flow).data == c.videos[i].flow);
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "diagnostics.json"));
}
