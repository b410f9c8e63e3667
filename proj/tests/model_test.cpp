#include <cmath>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "topolab/model.hpp"
#include "topolab/topology.hpp"

namespace topolab {
namespace {

ModelConfig small_config() {
  ModelConfig mc;
  mc.channels = 8;
  mc.transformer_blocks = 1;
  mc.gcn_layers = 1;
  mc.heads = 2;
  return mc;
}

// LM -> {LAD, LCX} with geometry the tree validator accepts (steps <= 2, shared endpoints).
VesselTree tiny_tree(bool labeled = true) {
  VesselTree tree;
  tree.segments.push_back({0, Domain::LD, {{0, 0, 0}, {2, 0, 0}, {4, 0, 0}}, labeled ? "LM" : ""});
  tree.segments.push_back({1, Domain::LD, {{4, 0, 0}, {5, 1, 0}, {6, 2, 0}}, labeled ? "LAD" : ""});
  tree.segments.push_back({2, Domain::LD, {{4, 0, 0}, {5, -1, 0}, {6, -2, 0}}, labeled ? "LCX" : ""});
  tree.connections = {{0, 1}, {0, 2}};
  tree.roots = {{Domain::LD, 0}};
  tree.validate();
  return tree;
}

PreparedCase random_case(Rng& rng, int n_segments, std::vector<std::pair<int, int>> connections,
                         int points_per_segment = 4) {
  PreparedCase pc;
  pc.id = "hand";
  for (int s = 0; s < n_segments; ++s) {
    std::vector<Vec3> pts;
    Vec3 cur{rng.uniform(20, 80), rng.uniform(20, 80), rng.uniform(20, 80)};
    for (int i = 0; i < points_per_segment; ++i) {
      pts.push_back(cur);
      cur = {cur.x + rng.uniform(-1.5, 1.5), cur.y + rng.uniform(-1.5, 1.5),
             cur.z + rng.uniform(-1.5, 1.5)};
    }
    pc.segment_points.push_back(std::move(pts));
  }
  pc.real_connections = static_cast<int>(connections.size());
  pc.connections = std::move(connections);
  std::vector<char> covered(n_segments, 0);
  for (auto [a, b] : pc.connections) covered[a] = covered[b] = 1;
  for (int s = 0; s < n_segments; ++s)
    if (!covered[s]) pc.connections.emplace_back(s, s);
  return pc;
}

TEST(ModelConfig, ValidateRejectsBadSettings) {
  ModelConfig mc;
  mc.validate();
  ModelConfig bad = mc;
  bad.channels = 7;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = mc;
  bad.heads = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = mc;
  bad.tau = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = mc;
  bad.transformer_blocks = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = mc;
  bad.gcn_layers = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = mc;
  bad.feature_backend = "voxelnet";
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = mc;
  bad.aggregator = "max";
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = mc;
  bad.interaction = "mlp";
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = mc;
  bad.classifier = "svm";
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = mc;
  bad.coord_scale = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(PrepareCase, ResolvesConnectionsAndGold) {
  CategoryTopology topo = default_topology();
  TemplateSet templates = build_templates(topo, 8);
  PreparedCase pc = prepare_case(tiny_tree(), topo, templates, "c1");
  EXPECT_EQ(pc.id, "c1");
  EXPECT_EQ(pc.num_segments(), 3);
  ASSERT_EQ(pc.connections.size(), 2u);  // all segments covered, no self-pairs
  EXPECT_EQ(pc.real_connections, 2);
  ASSERT_EQ(pc.gold_class.size(), 3u);
  EXPECT_EQ(pc.gold_class[0], topo.class_index("LM"));
  EXPECT_EQ(pc.gold_class[1], topo.class_index("LAD"));
  EXPECT_EQ(pc.gold_class[2], topo.class_index("LCX"));
  ASSERT_EQ(pc.gold_template_row.size(), 2u);
  EXPECT_EQ(pc.gold_template_row[0],
            templates.row_of(topo.class_index("LM"), topo.class_index("LAD")));
  EXPECT_EQ(pc.gold_template_row[1],
            templates.row_of(topo.class_index("LM"), topo.class_index("LCX")));
}

TEST(PrepareCase, SelfPairCoversIsolatedSegment) {
  CategoryTopology topo = default_topology();
  TemplateSet templates = build_templates(topo, 8);
  VesselTree tree;
  tree.segments.push_back({0, Domain::RD, {{0, 0, 0}, {2, 0, 0}}, "RCA"});
  tree.roots = {{Domain::RD, 0}};
  tree.validate();
  PreparedCase pc = prepare_case(tree, topo, templates, "solo");
  ASSERT_EQ(pc.connections.size(), 1u);
  EXPECT_EQ(pc.connections[0], (std::pair<int, int>{0, 0}));
  EXPECT_EQ(pc.real_connections, 0);
  int rca = topo.class_index("RCA");
  EXPECT_EQ(pc.gold_template_row[0], templates.row_of(rca, rca));
}

TEST(PrepareCase, UnlabeledAndPartialLabels) {
  CategoryTopology topo = default_topology();
  TemplateSet templates = build_templates(topo, 8);
  PreparedCase pc = prepare_case(tiny_tree(false), topo, templates, "u");
  EXPECT_TRUE(pc.gold_class.empty());
  EXPECT_TRUE(pc.gold_template_row.empty());

  VesselTree partial = tiny_tree();
  partial.segments[2].gold_class.clear();
  EXPECT_THROW(prepare_case(partial, topo, templates, "p"), LabelError);
}

TEST(PrepareCase, NonTemplateGoldPairRejected) {
  CategoryTopology topo = default_topology();
  TemplateSet templates = build_templates(topo, 8);
  VesselTree tree = tiny_tree();
  tree.segments[1].gold_class = "D";  // (LM, D) is not an allowed connection
  try {
    prepare_case(tree, topo, templates, "bad");
    FAIL() << "expected LabelError";
  } catch (const LabelError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("LM"), std::string::npos);
    EXPECT_NE(msg.find("D"), std::string::npos);
  }
}

TEST(InferLabels, ParentAndChildSlots) {
  std::vector<std::pair<int, int>> conns{{0, 1}};
  std::vector<ConnectionPrediction> decoded{{0, 1, 3, 7, 0.9, 5}};
  auto segs = infer_labels(decoded, conns, 2);
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_EQ(segs[0].class_index, 3);  // parent slot
  EXPECT_EQ(segs[1].class_index, 7);  // child slot
  EXPECT_DOUBLE_EQ(segs[0].confidence, 0.9);
}

TEST(InferLabels, HighestConfidenceConnectionWins) {
  std::vector<std::pair<int, int>> conns{{0, 1}, {1, 2}};
  std::vector<ConnectionPrediction> decoded{{0, 1, 3, 4, 0.9, 0}, {1, 2, 5, 6, 0.6, 1}};
  auto segs = infer_labels(decoded, conns, 3);
  EXPECT_EQ(segs[1].class_index, 4);  // 0.9 via child slot beats 0.6 via parent slot
  EXPECT_DOUBLE_EQ(segs[1].confidence, 0.9);
  EXPECT_EQ(segs[2].class_index, 6);
}

TEST(InferLabels, TieBreaksTowardLowestIndex) {
  std::vector<std::pair<int, int>> conns{{0, 1}, {1, 2}};
  std::vector<ConnectionPrediction> decoded{{0, 1, 3, 4, 0.7, 0}, {1, 2, 5, 6, 0.7, 1}};
  auto segs = infer_labels(decoded, conns, 3);
  EXPECT_EQ(segs[1].class_index, 4);
}

TEST(InferLabels, SelfPairUsesParentSlotAndUncoveredThrows) {
  std::vector<std::pair<int, int>> conns{{0, 1}, {2, 2}};
  std::vector<ConnectionPrediction> decoded{{0, 1, 3, 4, 0.8, 2}, {2, 2, 9, 9, 0.5, 25}};
  auto segs = infer_labels(decoded, conns, 3);
  EXPECT_EQ(segs[2].class_index, 9);  // self-pair labels via the parent slot
  EXPECT_THROW(infer_labels(decoded, conns, 4), LabelError);  // segment 3 uncovered
}

TEST(Classifier, TemplateMatchClosedForm) {
  // With p_hat equal to one template row and all other templates orthogonal to
  // it, the softmax over cosine/tau puts p[y] = e^20 / (e^20 + 25) at tau=0.05.
  int n_g = 26;
  std::vector<double> rows(static_cast<std::size_t>(n_g) * n_g, 0.0);
  for (int r = 0; r < n_g; ++r) rows[static_cast<std::size_t>(r) * n_g + r] = 1.0;
  ad::Tensor templates = ad::Tensor::constant({n_g, n_g}, rows);
  auto head = [&](double magnitude) {
    std::vector<double> p_hat(n_g, 0.0);
    p_hat[4] = magnitude;
    ad::Tensor sim = ad::matmul_nt(ad::l2_normalize_rows(ad::Tensor::constant({1, n_g}, p_hat)),
                                   templates);
    return ad::softmax_rows(ad::scale(sim, 1.0 / 0.05));
  };
  ad::Tensor probs = head(1.0);
  double expect = std::exp(20.0) / (std::exp(20.0) + 25.0);
  EXPECT_NEAR(probs.values()[4], expect, 1e-14);  // max-shifted softmax reorders the arithmetic
  EXPECT_NEAR(probs.values()[4], 1.0 - 25.0 * std::exp(-20.0), 1e-12);
  for (int j = 0; j < n_g; ++j)
    if (j != 4) EXPECT_NEAR(probs.values()[j], std::exp(-20.0) * expect, 1e-20);
  // Cosine similarity ignores the magnitude of p_hat.
  ad::Tensor scaled = head(7.0);
  for (int j = 0; j < n_g; ++j) EXPECT_DOUBLE_EQ(scaled.values()[j], probs.values()[j]);
}

TEST(Classifier, RowsAreDistributions) {
  Model model(small_config(), default_topology(), 42);
  Rng rng(7);
  PreparedCase pc = random_case(rng, 3, {{0, 1}, {0, 2}});
  CaseForward cf = model.forward(pc);
  ASSERT_EQ(cf.prob_rows.rows(), 2);
  ASSERT_EQ(cf.prob_rows.cols(), 26);
  for (int r = 0; r < cf.prob_rows.rows(); ++r) {
    double sum = 0.0;
    for (int j = 0; j < cf.prob_rows.cols(); ++j) {
      double p = cf.prob_rows.values()[r * 26 + j];
      EXPECT_GT(p, 0.0);
      EXPECT_LT(p, 1.0);
      sum += p;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(CaseLoss, MatchesNaiveCrossEntropy) {
  Model model(small_config(), default_topology(), 43);
  Rng rng(8);
  PreparedCase pc = random_case(rng, 3, {{0, 1}, {0, 2}});
  pc.gold_template_row = {0, 5};
  double loss = model.case_loss(pc).item();
  CaseForward cf = model.forward(pc);
  double naive = 0.0;
  for (int k = 0; k < 2; ++k)
    naive -= std::log(cf.prob_rows.values()[k * 26 + pc.gold_template_row[k]]);
  EXPECT_LT(std::abs(loss - naive), 1e-10);
  EXPECT_GT(loss, 0.0);
}

TEST(CaseLoss, UniformAndOneHotReferencePoints) {
  // -log over a uniform 26-way row is ln 26 ~= 3.258; a one-hot row gives 0.
  std::vector<double> uniform(26, 1.0 / 26.0);
  ad::Tensor u = ad::Tensor::constant({1, 26}, uniform);
  double lu = ad::scale(ad::sum(ad::log(ad::pick_per_row(u, {3}))), -1.0).item();
  EXPECT_NEAR(lu, std::log(26.0), 1e-12);
  EXPECT_NEAR(lu, 3.258, 1e-3);
  std::vector<double> onehot(26, 0.0);
  onehot[3] = 1.0;
  ad::Tensor o = ad::Tensor::constant({1, 26}, onehot);
  EXPECT_DOUBLE_EQ(ad::scale(ad::sum(ad::log(ad::pick_per_row(o, {3}))), -1.0).item(), 0.0);
}

TEST(CaseLoss, RequiresGold) {
  Model model(small_config(), default_topology(), 44);
  Rng rng(9);
  PreparedCase pc = random_case(rng, 2, {{0, 1}});
  EXPECT_THROW(model.case_loss(pc), LabelError);
}

TEST(Model, FullGradientCheckAc) {
  Model model(small_config(), default_topology(), 45);
  Rng rng(10);
  PreparedCase pc = random_case(rng, 3, {{0, 1}, {0, 2}});
  pc.gold_template_row = {0, 1};
  EXPECT_LT(testutil::fd_model_max_rel_error(model, pc), 1e-4);
}

TEST(Model, FullGradientCheckLinear) {
  ModelConfig mc = small_config();
  mc.classifier = "linear";
  Model model(mc, default_topology(), 46);
  Rng rng(11);
  PreparedCase pc = random_case(rng, 3, {{0, 1}, {0, 2}});
  pc.gold_class = {0, 1, 5};
  EXPECT_LT(testutil::fd_model_max_rel_error(model, pc), 1e-4);
}

TEST(Model, DeterministicAcrossInstances) {
  Model a(small_config(), default_topology(), 77);
  Model b(small_config(), default_topology(), 77);
  auto ia = a.params().items(), ib = b.params().items();
  ASSERT_EQ(ia.size(), ib.size());
  for (std::size_t i = 0; i < ia.size(); ++i) {
    EXPECT_EQ(ia[i].first, ib[i].first);
    EXPECT_EQ(ia[i].second.values(), ib[i].second.values());
  }
  Rng rng(12);
  PreparedCase pc = random_case(rng, 3, {{0, 1}, {0, 2}});
  EXPECT_EQ(a.forward(pc).prob_rows.values(), b.forward(pc).prob_rows.values());
}

TEST(Model, AggregateShapeForAnyLength) {
  Model model(small_config(), default_topology(), 48);
  Rng rng(13);
  for (int l : {1, 7, 500}) {
    std::vector<double> vals(static_cast<std::size_t>(l) * 8);
    for (double& v : vals) v = rng.uniform(-1, 1);
    ad::Tensor e = model.aggregate_segment(ad::Tensor::constant({l, 8}, vals));
    EXPECT_EQ(e.shape(), (std::vector<int>{1, 8}));
  }
  ModelConfig mc = small_config();
  mc.aggregator = "mean";
  Model mean_model(mc, default_topology(), 48);
  ad::Tensor e = mean_model.aggregate_segment(ad::Tensor::constant({2, 8}, std::vector<double>(16, 1.0)));
  EXPECT_EQ(e.shape(), (std::vector<int>{1, 8}));
  for (double v : e.values()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Model, IdenticalSegmentsGetIdenticalEmbeddings) {
  Model model(small_config(), default_topology(), 49);
  std::vector<Vec3> pts{{10, 10, 10}, {11, 10, 10}, {12, 10, 10}};
  ad::Tensor grid;
  int clamped = 0;
  ad::Tensor f1 = model.point_features(pts, grid, {1, 1, 1}, &clamped);
  ad::Tensor f2 = model.point_features(pts, grid, {1, 1, 1}, &clamped);
  ad::Tensor e1 = model.aggregate_segment(f1), e2 = model.aggregate_segment(f2);
  EXPECT_EQ(e1.values(), e2.values());
}

TEST(Model, ReversedPointsMatchWithZeroPositionalEncoder) {
  Model model(small_config(), default_topology(), 50);
  for (const char* name : {"pos.mlp2.w", "pos.mlp2.b"}) {
    auto& v = model.params().at(name).mutable_values();
    std::fill(v.begin(), v.end(), 0.0);
  }
  std::vector<Vec3> pts{{10, 10, 10}, {11, 11, 10}, {12, 11, 11}, {13, 12, 11}};
  std::vector<Vec3> rev(pts.rbegin(), pts.rend());
  ad::Tensor grid;
  int clamped = 0;
  ad::Tensor ef = model.aggregate_segment(model.point_features(pts, grid, {1, 1, 1}, &clamped));
  ad::Tensor er = model.aggregate_segment(model.point_features(rev, grid, {1, 1, 1}, &clamped));
  for (int c = 0; c < 8; ++c) EXPECT_NEAR(ef.values()[c], er.values()[c], 1e-12);
}

TEST(Model, PositionalEncoderBreaksOrderInvariance) {
  Model model(small_config(), default_topology(), 50);
  std::vector<Vec3> pts{{10, 10, 10}, {11, 11, 10}, {12, 11, 11}, {13, 12, 11}};
  std::vector<Vec3> rev(pts.rbegin(), pts.rend());
  ad::Tensor grid;
  int clamped = 0;
  ad::Tensor ef = model.aggregate_segment(model.point_features(pts, grid, {1, 1, 1}, &clamped));
  ad::Tensor er = model.aggregate_segment(model.point_features(rev, grid, {1, 1, 1}, &clamped));
  double diff = 0.0;
  for (int c = 0; c < 8; ++c) diff = std::max(diff, std::abs(ef.values()[c] - er.values()[c]));
  EXPECT_TRUE(std::isfinite(diff));
  EXPECT_GT(diff, 0.0);
}

TEST(Model, DisconnectedComponentsDoNotInteract) {
  Model model(small_config(), default_topology(), 51);
  Rng rng(14);
  PreparedCase pc = random_case(rng, 4, {{0, 1}, {2, 3}});
  CaseForward before = model.forward(pc);
  // Perturb only segment 0's geometry; component {2,3} must be untouched.
  for (Vec3& p : pc.segment_points[0]) p.x += 5.0;
  CaseForward after = model.forward(pc);
  for (int j = 0; j < 26; ++j) {
    EXPECT_DOUBLE_EQ(before.prob_rows.values()[1 * 26 + j], after.prob_rows.values()[1 * 26 + j]);
  }
  // Sanity: the perturbed component's own row did change.
  double moved = 0.0;
  for (int j = 0; j < 26; ++j)
    moved += std::abs(before.prob_rows.values()[j] - after.prob_rows.values()[j]);
  EXPECT_GT(moved, 0.0);
}

TEST(Model, ConvBackendRequiresUsableVolume) {
  ModelConfig mc = small_config();
  mc.feature_backend = "conv";
  Model model(mc, default_topology(), 52);
  Rng rng(15);
  PreparedCase pc = random_case(rng, 2, {{0, 1}});
  EXPECT_THROW(model.forward(pc), MalformedCaseError);

  auto bad = std::make_shared<IntensityVolume>();
  bad->dims = {6, 8, 8};
  bad->spacing = {1, 1, 1};
  bad->values.assign(6 * 8 * 8, 0.0f);
  pc.volume = bad;
  EXPECT_THROW(model.forward(pc), ShapeError);

  auto vol = std::make_shared<IntensityVolume>();
  vol->dims = {8, 8, 8};
  vol->spacing = {12.5, 12.5, 12.5};  // grid spans the whole coord box
  vol->values.assign(8 * 8 * 8, 0.0f);
  for (std::size_t i = 0; i < vol->values.size(); ++i)
    vol->values[i] = static_cast<float>(rng.uniform(0, 1));
  pc.volume = vol;
  CaseForward cf = model.forward(pc);
  EXPECT_EQ(cf.prob_rows.rows(), 1);
  for (int r = 0; r < cf.prob_rows.rows(); ++r) {
    double sum = 0.0;
    for (int j = 0; j < 26; ++j) sum += cf.prob_rows.values()[r * 26 + j];
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Model, AcDecodeAlwaysTemplateValid) {
  CategoryTopology topo = default_topology();
  Rng rng(16);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Model model(small_config(), topo, 1000 + seed);
    PreparedCase pc = random_case(rng, 4, {{0, 1}, {0, 2}});
    CasePrediction pred = model.infer(pc);
    ASSERT_EQ(pred.connections.size(), 3u);  // two real plus one self-pair
    for (const auto& conn : pred.connections) {
      EXPECT_GE(conn.template_row, 0);
      EXPECT_LT(conn.template_row, 26);
      EXPECT_TRUE(topo.is_valid_connection(topo.classes[conn.parent_class],
                                           topo.classes[conn.child_class]));
      EXPECT_GT(conn.probability, 0.0);
      EXPECT_LE(conn.probability, 1.0);
    }
    ASSERT_EQ(pred.segments.size(), 4u);
    for (const auto& seg : pred.segments) {
      EXPECT_GE(seg.class_index, 0);
      EXPECT_LT(seg.class_index, 14);
    }
  }
}

TEST(Model, LinearArmDecode) {
  ModelConfig mc = small_config();
  mc.classifier = "linear";
  Model model(mc, default_topology(), 53);
  Rng rng(17);
  PreparedCase pc = random_case(rng, 3, {{0, 1}, {0, 2}});
  CaseForward cf = model.forward(pc);
  ASSERT_EQ(cf.prob_rows.rows(), 3);  // one row per segment
  ASSERT_EQ(cf.prob_rows.cols(), 14);
  CasePrediction pred = model.infer(pc);
  ASSERT_EQ(pred.segments.size(), 3u);
  for (int s = 0; s < 3; ++s) {
    int arg = 0;
    for (int j = 1; j < 14; ++j)
      if (cf.prob_rows.values()[s * 14 + j] > cf.prob_rows.values()[s * 14 + arg]) arg = j;
    EXPECT_EQ(pred.segments[s].class_index, arg);
    EXPECT_DOUBLE_EQ(pred.segments[s].confidence, cf.prob_rows.values()[s * 14 + arg]);
  }
  ASSERT_EQ(pred.connections.size(), 2u);
  for (const auto& conn : pred.connections) {
    EXPECT_EQ(conn.template_row, -1);
    double expect = std::min(pred.segments[conn.parent].confidence,
                             pred.segments[conn.child].confidence);
    EXPECT_DOUBLE_EQ(conn.probability, expect);
    EXPECT_EQ(conn.parent_class, pred.segments[conn.parent].class_index);
    EXPECT_EQ(conn.child_class, pred.segments[conn.child].class_index);
  }
}

TEST(Model, ParamNameSetsFollowArchitecture) {
  Model full(small_config(), default_topology(), 54);
  EXPECT_TRUE(full.params().contains("feat.mlp1.w"));
  EXPECT_TRUE(full.params().contains("agg.query"));
  EXPECT_TRUE(full.params().contains("agg.block0.mha.q.w"));
  EXPECT_TRUE(full.params().contains("gcn.w0"));
  EXPECT_TRUE(full.params().contains("fuse.w"));
  EXPECT_TRUE(full.params().contains("clf.mlp1.w"));
  EXPECT_FALSE(full.params().contains("lin.head.w"));
  EXPECT_FALSE(full.params().contains("feat.conv.w1"));

  ModelConfig ablated = small_config();
  ablated.aggregator = "mean";
  ablated.interaction = "none";
  ablated.classifier = "linear";
  Model lin(ablated, default_topology(), 54);
  EXPECT_TRUE(lin.params().contains("lin.head.w"));
  EXPECT_FALSE(lin.params().contains("agg.query"));
  EXPECT_FALSE(lin.params().contains("gcn.w0"));
  EXPECT_FALSE(lin.params().contains("fuse.w"));
  EXPECT_FALSE(lin.params().contains("clf.mlp1.w"));

  ModelConfig conv = small_config();
  conv.feature_backend = "conv";
  Model cm(conv, default_topology(), 54);
  EXPECT_TRUE(cm.params().contains("feat.conv.w1"));
  EXPECT_FALSE(cm.params().contains("feat.mlp1.w"));
}

TEST(Model, EmptyInputsRejected) {
  Model model(small_config(), default_topology(), 55);
  PreparedCase empty;
  empty.id = "empty";
  EXPECT_THROW(model.forward(empty), EmptyInputError);
  ad::Tensor fused = ad::Tensor::constant({2, 8}, std::vector<double>(16, 0.5));
  EXPECT_THROW(model.classify_connections(fused, {}), EmptyInputError);
}

TEST(Model, InteractionNonePassesThrough) {
  ModelConfig mc = small_config();
  mc.interaction = "none";
  Model model(mc, default_topology(), 56);
  std::vector<double> vals(2 * 8);
  Rng rng(18);
  for (double& v : vals) v = rng.uniform(-1, 1);
  ad::Tensor e = ad::Tensor::constant({2, 8}, vals);
  ad::Tensor out = model.interact_segments(e, {{0, 1}});
  EXPECT_EQ(out.values(), e.values());
}

}  // namespace
}  // namespace topolab
