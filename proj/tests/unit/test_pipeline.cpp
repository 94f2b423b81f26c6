#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "inpaint/checkpoint.hpp"
#include "inpaint/config.hpp"
#include "inpaint/error.hpp"
#include "inpaint/log.hpp"
#include "inpaint/pipeline.hpp"

namespace fs = std::filesystem;
using namespace inpaint;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("inpaint_unit_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RunConfig tiny_config() {
  RunConfig c;
  c.g1_width = c.g2_width = c.d_width = 4;
  c.g1_residual_blocks = 1;
  c.batch_size = 2;
  c.edge_steps = c.inpaint_steps = 4;
  c.checkpoint_every = 2;
  return c;
}

std::vector<Sample> toy_samples(std::size_t n) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.id = "s" + std::to_string(i);
    s.image = synth_toy_image(64, 40 + i);
    s.mask_paper = gen_irregular_mask(64, 64, {}, 50 + i);
    s.edge_gt = canny(s.image);
    out.push_back(std::move(s));
  }
  return out;
}

class QuietWarnings : public ::testing::Test {
 protected:
  void SetUp() override { set_warning_sink([](const std::string&) {}); }
  void TearDown() override { set_warning_sink({}); }
};

}  // namespace

// ------------------------------------------------------------------ config

TEST(RunConfig, SerializeParseRoundTrip) {
  RunConfig c;
  c.structure = "7(C)-0(C)-7(C)";
  c.lr = 2.5e-4;
  c.use_edges = false;
  c.sconv_norm = "sum";
  c.manifest = "/data/manifest.txt";
  EXPECT_EQ(parse_config(serialize_config(c)), c);
}

TEST(RunConfig, CommentsAndWhitespace) {
  const RunConfig c = parse_config("# header\n  seed = 7   # trailing\n\nbatch_size=2\n");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.batch_size, 2u);
}

TEST(RunConfig, RejectsUnknownDuplicateAndMalformed) {
  EXPECT_THROW(parse_config("sed = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = 1\nseed = 2\n"), ConfigError);
  EXPECT_THROW(parse_config("seed 1\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = -1\n"), ConfigError);
  EXPECT_THROW(parse_config("lr = fast\n"), ConfigError);
  EXPECT_THROW(parse_config("use_edges = maybe\n"), ConfigError);
  try {
    parse_config("seed = 1\n\nbogus = 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(RunConfig, EnvironmentOverrides) {
  RunConfig c;
  apply_env_overrides(c, {{"INPAINT_LR", "0.001"}, {"INPAINT_USE_SKIP_LINKS", "false"}, {"OTHER", "x"}});
  EXPECT_DOUBLE_EQ(c.lr, 0.001);
  EXPECT_FALSE(c.use_skip_links);
  EXPECT_THROW(apply_env_overrides(c, {{"INPAINT_SEED", "abc"}}), ConfigError);
}

TEST(RunConfig, Validation) {
  EXPECT_NO_THROW(validate(RunConfig{}));
  RunConfig c;
  c.image_size = 72;  // not divisible by 16
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.structure = "4(CM)-6(CM)-5(CM)";
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.sconv_norm = "median";
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.lambda_s = -1;
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.canny_low = 0.5;
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.precision = "f16";
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(RunConfig, HashesTrackTheRightKeys) {
  const RunConfig a;
  RunConfig b = a;
  b.lr = 3e-4;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(structural_hash(a, ModelKind::inpaint), structural_hash(b, ModelKind::inpaint));
  b.manifest = "elsewhere";
  b.lr = a.lr;
  EXPECT_EQ(config_hash(a), config_hash(b));  // paths do not count
  b.structure = "5(CM)-4(CM)-5(CM)";
  EXPECT_NE(structural_hash(a, ModelKind::inpaint), structural_hash(b, ModelKind::inpaint));
  EXPECT_EQ(structural_hash(a, ModelKind::edge), structural_hash(b, ModelKind::edge));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(RunConfig, CmFlagTurnsEveryLayerPlain) {
  RunConfig c;
  c.use_cm = false;
  for (const auto& s : network_spec(c).segments) EXPECT_EQ(s.kind, ConvKind::C);
}

// ---------------------------------------------------------------- pipeline

TEST_F(QuietWarnings, TrainingWritesCsvAndCheckpointWithHashes) {
  const fs::path dir = fresh_dir("train");
  RunConfig c = tiny_config();
  const auto samples = toy_samples(3);
  const auto e = train_edge(c, samples, dir / "edge");
  EXPECT_EQ(e.steps, 4);
  c.edge_checkpoint = e.checkpoint.string();
  const auto r = train_inpaint(c, samples, dir / "inpaint");
  const std::string csv = slurp(dir / "inpaint" / kInpaintLossCsv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,l1,adv,perc,style,total");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  const std::string ecsv = slurp(dir / "edge" / kEdgeLossCsv);
  EXPECT_EQ(ecsv.substr(0, ecsv.find('\n')), "step,d,adv,fm,total,l1");
  const Checkpoint ck = load_checkpoint(r.checkpoint);
  EXPECT_EQ(ck.metadata.at("structural_hash"), structural_hash(c, ModelKind::inpaint));
  EXPECT_EQ(ck.metadata.at("model"), "inpaint");
  EXPECT_NO_THROW(check_checkpoint(ck, c, ModelKind::inpaint, "x"));
  RunConfig other = c;
  other.use_skip_links = false;
  try {
    check_checkpoint(ck, other, ModelKind::inpaint, "x");
    FAIL();
  } catch (const ConfigError& err) {
    const std::string msg = err.what();
    EXPECT_NE(msg.find(structural_hash(c, ModelKind::inpaint)), std::string::npos);
    EXPECT_NE(msg.find(structural_hash(other, ModelKind::inpaint)), std::string::npos);
  }
  EXPECT_THROW(check_checkpoint(ck, c, ModelKind::edge, "x"), ConfigError);
}

TEST_F(QuietWarnings, ResumedRunMatchesUninterruptedRun) {
  const auto samples = toy_samples(3);
  RunConfig c = tiny_config();
  c.use_edges = false;
  const fs::path straight = fresh_dir("resume_a"), split = fresh_dir("resume_b");
  train_inpaint(c, samples, straight);
  RunConfig half = c;
  half.inpaint_steps = 2;
  train_inpaint(half, samples, split);
  train_inpaint(c, samples, split);
  EXPECT_EQ(slurp(straight / kInpaintCheckpoint), slurp(split / kInpaintCheckpoint));
  EXPECT_EQ(slurp(straight / kInpaintLossCsv), slurp(split / kInpaintLossCsv));
}

TEST_F(QuietWarnings, InpaintWithEdgesNeedsEdgeCheckpoint) {
  RunConfig c = tiny_config();
  EXPECT_THROW(train_inpaint(c, toy_samples(2), fresh_dir("noedge")), ConfigError);
  EXPECT_THROW(train_inpaint(c, {}, fresh_dir("noedge")), std::invalid_argument);
}

TEST_F(QuietWarnings, InferenceKeepsKnownPixels) {
  const fs::path dir = fresh_dir("infer");
  RunConfig c = tiny_config();
  c.use_edges = false;
  auto samples = toy_samples(2);
  c.inpaint_checkpoint = train_inpaint(c, samples, dir).checkpoint.string();
  Inpainter model(c);
  const EvalReport r = evaluate(model, samples);
  samples[0].mask_paper = Tensor::zeros({1, 1, 64, 64});
  const InpaintOutput out = model.run(make_batch(samples, {0}));
  EXPECT_EQ(tensor_to_image(out.composite), samples[0].image);
  EXPECT_EQ(r.sample_count, 2u);
  EXPECT_TRUE(std::isfinite(r.psnr));
  EXPECT_TRUE(r.fid_available);
}

TEST(Reports, IdentityEvaluation) {
  RunConfig c;
  const EvalReport r = evaluate_identity(c, toy_samples(3));
  EXPECT_TRUE(std::isinf(r.psnr));
  EXPECT_EQ(r.ssim, 1.0);
  EXPECT_LT(r.fid, 1e-6);
  const std::string json = report_json(r);
  EXPECT_NE(json.find("\"psnr\": \"inf\""), std::string::npos);
  EXPECT_NE(json.find("\"config_hash\": \"" + config_hash(c) + "\""), std::string::npos);
  EXPECT_NE(json.find("\"use_edges\": \"true\""), std::string::npos);
  EXPECT_NE(report_text(r).find("psnr: inf"), std::string::npos);
  EXPECT_EQ(report_json(evaluate_identity(c, toy_samples(3))), json);
}

TEST(Reports, SingleSampleHasNoFid) {
  const EvalReport r = evaluate_identity(RunConfig{}, toy_samples(1));
  EXPECT_FALSE(r.fid_available);
  EXPECT_NE(report_json(r).find("\"fid\": null"), std::string::npos);
  EXPECT_THROW(evaluate_identity(RunConfig{}, {}), std::invalid_argument);
}

TEST(Reports, AblationRejectsUnknownAxis) {
  EXPECT_THROW(run_ablation(RunConfig{}, {"depth"}, toy_samples(1), toy_samples(1), fresh_dir("abl")), ConfigError);
}
