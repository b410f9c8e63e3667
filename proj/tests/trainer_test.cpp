#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "topolab/trainer.hpp"

namespace topolab {
namespace {

namespace fs = std::filesystem;

ModelConfig small_config() {
  ModelConfig mc;
  mc.channels = 8;
  mc.transformer_blocks = 1;
  mc.gcn_layers = 1;
  mc.heads = 2;
  return mc;
}

// Tiny labeled dataset with a consistent geometric signal: LAD bends up,
// LCX bends down, so there is something to learn within a few iterations.
std::vector<PreparedCase> tiny_dataset(int n_cases) {
  CategoryTopology topo = default_topology();
  TemplateSet templates = build_templates(topo, 8);
  std::vector<PreparedCase> out;
  Rng rng(99);
  for (int i = 0; i < n_cases; ++i) {
    double x0 = rng.uniform(10, 30), y0 = rng.uniform(40, 60), z0 = rng.uniform(40, 60);
    VesselTree tree;
    tree.segments.push_back(
        {0, Domain::LD, {{x0, y0, z0}, {x0 + 2, y0, z0}, {x0 + 4, y0, z0}}, "LM"});
    tree.segments.push_back(
        {1, Domain::LD, {{x0 + 4, y0, z0}, {x0 + 5, y0 + 1, z0}, {x0 + 6, y0 + 2, z0}}, "LAD"});
    tree.segments.push_back(
        {2, Domain::LD, {{x0 + 4, y0, z0}, {x0 + 5, y0 - 1, z0}, {x0 + 6, y0 - 2, z0}}, "LCX"});
    tree.connections = {{0, 1}, {0, 2}};
    tree.roots = {{Domain::LD, 0}};
    out.push_back(prepare_case(tree, topo, templates, "case" + std::to_string(i)));
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(TrainConfig, Validate) {
  TrainConfig tc;
  tc.total_iterations = 10;
  tc.validate();
  TrainConfig bad = tc;
  bad.total_iterations = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = tc;
  bad.base_lr = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = tc;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = tc;
  bad.checkpoint_interval = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = tc;
  bad.grad_clip = -0.5;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(EpochIterator, CoversEveryIndexOncePerEpoch) {
  EpochIterator it(7, 5);
  std::vector<int> counts(7, 0);
  for (int epoch = 0; epoch < 3; ++epoch)
    for (int i = 0; i < 7; ++i) ++counts[it.next()];
  for (int c : counts) EXPECT_EQ(c, 3);
  EXPECT_THROW(EpochIterator(0, 1), EmptyInputError);
}

TEST(EpochIterator, SeedDeterminesOrder) {
  EpochIterator a(10, 3), b(10, 3), c(10, 4);
  std::vector<std::size_t> sa, sb, sc;
  for (int i = 0; i < 20; ++i) {
    sa.push_back(a.next());
    sb.push_back(b.next());
    sc.push_back(c.next());
  }
  EXPECT_EQ(sa, sb);
  EXPECT_NE(sa, sc);
}

TEST(ClipGradients, ScalesOnlyWhenAboveThreshold) {
  nn::ParamStore ps(1);
  nn::Tensor a = ps.create_zeros("a", {2});
  nn::Tensor b = ps.create_zeros("b", {1});
  a.grad() = {3.0, 0.0};
  b.grad() = {4.0};  // global norm 5
  clip_gradients(ps, 2.0);
  double norm = std::sqrt(a.grad()[0] * a.grad()[0] + b.grad()[0] * b.grad()[0]);
  EXPECT_NEAR(norm, 2.0, 1e-12);
  EXPECT_NEAR(a.grad()[0], 3.0 * 2.0 / 5.0, 1e-12);

  a.grad() = {0.3, 0.0};
  b.grad() = {0.4};
  clip_gradients(ps, 2.0);
  EXPECT_DOUBLE_EQ(a.grad()[0], 0.3);  // below threshold: untouched
  EXPECT_DOUBLE_EQ(b.grad()[0], 0.4);

  a.grad() = {0.0, 0.0};
  b.grad() = {0.0};
  clip_gradients(ps, 2.0);
  EXPECT_DOUBLE_EQ(a.grad()[0], 0.0);
}

TEST(Train, RunsAndLogs) {
  testutil::TempDir tmp("tmp_train_run");
  Model model(small_config(), default_topology(), 7);
  auto data = tiny_dataset(6);
  TrainConfig tc;
  tc.total_iterations = 30;
  tc.batch_size = 2;
  tc.base_lr = 3e-3;
  tc.seed = 1;
  tc.checkpoint_interval = 10;
  TrainResult result = train(model, data, tc, tmp.str());

  ASSERT_EQ(result.losses.size(), 30u);
  ASSERT_EQ(result.lrs.size(), 30u);
  for (long t = 0; t < 30; ++t)
    EXPECT_DOUBLE_EQ(result.lrs[t], cosine_lr(t, 30, 3e-3));
  EXPECT_LT(result.losses.back(), result.losses.front());
  for (double l : result.losses) EXPECT_TRUE(std::isfinite(l));

  EXPECT_TRUE(fs::exists(tmp.sub("ckpt_000010.tlab")));
  EXPECT_TRUE(fs::exists(tmp.sub("ckpt_000020.tlab")));
  EXPECT_FALSE(fs::exists(tmp.sub("ckpt_000030.tlab")));  // final covers the last step
  ASSERT_EQ(result.final_checkpoint, tmp.sub("final.tlab"));
  EXPECT_TRUE(fs::exists(result.final_checkpoint));

  std::ifstream log(tmp.sub("train_log.csv"));
  ASSERT_TRUE(log.good());
  std::string line;
  std::getline(log, line);
  EXPECT_EQ(line, "iter,lr,loss");
  int rows = 0;
  while (std::getline(log, line))
    if (!line.empty()) ++rows;
  EXPECT_EQ(rows, 30);

  // The saved checkpoint must load back into a fresh model of the same shape.
  Model fresh(small_config(), default_topology(), 8);
  fresh.params().load(result.final_checkpoint);
  auto a = model.params().items(), b = fresh.params().items();
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_EQ(a[i].second.values(), b[i].second.values());
}

TEST(Train, SingleIterationSingleStep) {
  Model model(small_config(), default_topology(), 9);
  auto data = tiny_dataset(2);
  std::vector<double> before = model.params().at("fuse.w").values();
  TrainConfig tc;
  tc.total_iterations = 1;
  tc.batch_size = 1;
  TrainResult result = train(model, data, tc);
  EXPECT_EQ(result.losses.size(), 1u);
  EXPECT_TRUE(result.final_checkpoint.empty());
  EXPECT_NE(model.params().at("fuse.w").values(), before);  // exactly one step applied
}

TEST(Train, DeterministicAcrossRuns) {
  testutil::TempDir tmp("tmp_train_det");
  auto run = [&](const std::string& sub) {
    Model model(small_config(), default_topology(), 11);
    auto data = tiny_dataset(5);
    TrainConfig tc;
    tc.total_iterations = 12;
    tc.batch_size = 2;
    tc.seed = 3;
    std::vector<double> losses = train(model, data, tc, tmp.sub(sub)).losses;
    return std::make_pair(losses, read_file(tmp.sub(sub) + "/final.tlab"));
  };
  auto [losses_a, ckpt_a] = run("a");
  auto [losses_b, ckpt_b] = run("b");
  EXPECT_EQ(losses_a, losses_b);
  ASSERT_FALSE(ckpt_a.empty());
  EXPECT_EQ(ckpt_a, ckpt_b);  // bit-identical checkpoint files
}

TEST(Train, RejectsUnlabeledAndEmpty) {
  Model model(small_config(), default_topology(), 13);
  TrainConfig tc;
  tc.total_iterations = 1;
  EXPECT_THROW(train(model, {}, tc), EmptyInputError);
  auto data = tiny_dataset(2);
  data[1].gold_class.clear();
  data[1].gold_template_row.clear();
  EXPECT_THROW(train(model, data, tc), LabelError);
}

TEST(Train, GradClipKeepsRunFinite) {
  Model model(small_config(), default_topology(), 14);
  auto data = tiny_dataset(3);
  TrainConfig tc;
  tc.total_iterations = 5;
  tc.batch_size = 1;
  tc.base_lr = 1e-2;
  tc.grad_clip = 1.0;
  TrainResult result = train(model, data, tc);
  for (double l : result.losses) EXPECT_TRUE(std::isfinite(l));
}

}  // namespace
}  // namespace topolab
