#include <gtest/gtest.h>

#include <cmath>

#include "jigsaw/cfn.hpp"

using namespace jigsaw;

namespace {

template <typename Scalar>
std::vector<Tensor<Scalar>> random_tiles(const CfnConfig& cfg, std::uint64_t seed, Index count = 9) {
  Rng rng(seed);
  std::vector<Tensor<Scalar>> tiles;
  for (Index i = 0; i < count; ++i) {
    Tensor<Scalar> t(cfg.tile_shape());
    for (Index j = 0; j < t.size(); ++j) t[j] = static_cast<Scalar>(rng.normal());
    tiles.push_back(std::move(t));
  }
  return tiles;
}

Index layer_weights(const std::vector<LayerParamCount>& counts, const std::string& name) {
  for (const auto& c : counts)
    if (c.name == name) return c.weights;
  ADD_FAILURE() << "no layer " << name;
  return 0;
}

Index total(const std::vector<LayerParamCount>& counts) {
  Index t = 0;
  for (const auto& c : counts) t += c.total();
  return t;
}

std::vector<LayerParamCount> full_counts(Index classes) {
  const auto cfg = CfnConfig::full(classes);
  auto c = count_parameters(cfg.branch, cfg.tile_shape());
  const auto h = count_parameters(cfg.head(), {cfg.fc6_width});
  c.insert(c.end(), h.begin(), h.end());
  return c;
}

}  // namespace

TEST(CfnConfig, ToyBuildsAndRuns) {
  auto m = build_cfn(CfnConfig::toy(8), 1);
  const auto logits = m.forward(random_tiles<float>(m.config(), 2));
  EXPECT_EQ(logits.shape(), (Shape{1, 8}));
  EXPECT_THROW(m.forward(random_tiles<float>(m.config(), 2, 8)), std::invalid_argument);
  auto wrong = random_tiles<float>(m.config(), 2);
  wrong[4] = Tensor<float>({3, 31, 31});
  EXPECT_THROW(m.forward(wrong), std::invalid_argument);
}

TEST(CfnConfig, ToyCountEqualsHandSum) {
  const CfnModel<float> m(CfnConfig::toy(8));
  const Index conv1 = 16 * 3 * 5 * 5 + 16, conv2 = 32 * 16 * 3 * 3 + 32, fc6 = 32 * 4 * 4 * 64 + 64;
  const Index fc7 = 9 * 64 * 128 + 128, fc8 = 128 * 8 + 8;
  EXPECT_EQ(m.total_params(), conv1 + conv2 + fc6 + fc7 + fc8);
}

TEST(CfnConfig, FullDimsParameterCounts) {
  const auto c = full_counts(1000);
  EXPECT_EQ(layer_weights(c, "fc6"), 2097152);
  EXPECT_EQ(layer_weights(c, "fc6"), 4 * 4 * 256 * 512);
  const Index fc7_extra = layer_weights(c, "fc7") - 4096 * 4096;
  EXPECT_GE(fc7_extra, 1900000);
  EXPECT_LE(fc7_extra, 2300000);
  EXPECT_GE(total(c), 26500000);
  EXPECT_LE(total(c), 29500000);
  EXPECT_LT(total(c), total(count_parameters(alexnet_reference_layers(1000), alexnet_reference_input())));

  const auto hundred = full_counts(100);
  EXPECT_EQ(layer_weights(hundred, "fc8"), 4096 * 100);
}

TEST(CfnConfig, RejectsBrokenLayouts) {
  auto cfg = CfnConfig::toy(8);
  cfg.fc6_width = 32;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = CfnConfig::toy(8);
  cfg.tile_side = 4;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = CfnConfig::toy(8);
  cfg.branch.pop_back();
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(CfnConfig::toy(1).validate(), ConfigError);
}

TEST(CfnConfig, TextRoundTrip) {
  for (const auto& cfg : {CfnConfig::toy(8), CfnConfig::full(100)}) EXPECT_EQ(CfnConfig::from_text(cfg.to_text()), cfg);
  auto kv = CfnConfig::toy(8).to_map();
  kv["extra"] = "1";
  EXPECT_THROW(CfnConfig::from_map(kv), ConfigError);
}

TEST(CfnModel, IdenticalTilesGiveIdenticalFeatures) {
  auto m = build_cfn(CfnConfig::toy(8), 3);
  const auto one = random_tiles<float>(m.config(), 4, 1).front();
  m.forward(std::vector<Tensor<float>>(9, one));
  const auto f = m.branch_features().matrix();
  for (Index i = 1; i < 9; ++i) EXPECT_EQ(f.row(i), f.row(0));
}

TEST(CfnModel, SwappingTilesSwapsSegments) {
  auto m = build_cfn(CfnConfig::toy(8), 5);
  const auto tiles = random_tiles<float>(m.config(), 6);
  m.forward(tiles);
  const RowMatrix<float> base = m.branch_features().matrix();
  Rng rng(7);
  for (int t = 0; t < 10; ++t) {
    const auto i = rng.uniform_index(9), j = rng.uniform_index(9);
    auto swapped = tiles;
    std::swap(swapped[i], swapped[j]);
    m.forward(swapped);
    const auto f = m.branch_features().matrix();
    for (Index k = 0; k < 9; ++k) {
      const Index src = k == static_cast<Index>(i) ? static_cast<Index>(j) : k == static_cast<Index>(j) ? static_cast<Index>(i) : k;
      EXPECT_EQ(f.row(k), base.row(src));
    }
  }
}

TEST(CfnModel, SoftmaxOfLogitsSumsToOne) {
  auto m = build_cfn(CfnConfig::toy(8), 8);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto p = softmax(m.forward(random_tiles<float>(m.config(), s)));
    EXPECT_NEAR(p.values().cast<double>().sum(), 1.0, 1e-6);
  }
}

TEST(CfnModel, SharedStoreIsSingleCopy) {
  auto m = build_cfn(CfnConfig::toy(8), 9);
  EXPECT_EQ(m.parameters().size(), 10u);  // 3 branch layers + fc7 + fc8, weight and bias each
  const auto one = random_tiles<float>(m.config(), 10, 1).front();
  const std::vector<Tensor<float>> same(9, one);
  m.forward(same);
  const RowMatrix<float> before = m.branch_features().matrix();
  m.branch().params(0).weight.value[0] += 0.5f;
  m.forward(same);
  const auto after = m.branch_features().matrix();
  EXPECT_NE(after.row(0), before.row(0));
  for (Index i = 1; i < 9; ++i) EXPECT_EQ(after.row(i), after.row(0));
}

TEST(CfnModel, BackwardBeforeForwardIsStateError) {
  auto m = build_cfn(CfnConfig::toy(8), 1);
  EXPECT_THROW(m.backward(Tensor<float>({1, 8})), StateError);
}

TEST(CfnModel, ZeroUpstreamGradientGivesZeroGradients) {
  auto m = build_cfn(CfnConfig::toy(8), 2);
  m.zero_grad();
  m.forward(random_tiles<float>(m.config(), 3));
  m.backward(Tensor<float>({1, 8}));
  for (auto* p : m.parameters()) EXPECT_TRUE(p->grad.values().isZero());
}

TEST(CfnModel, SharedGradientIsSumOfBranchContributions) {
  auto m = build_cfn<double>(CfnConfig::toy(8), 11);
  Tensor<double> stacked({18, 3, 32, 32});
  {
    const auto a = random_tiles<double>(m.config(), 12, 18);
    for (Index i = 0; i < 18; ++i) stacked.values().segment(i * 3072, 3072) = a[static_cast<std::size_t>(i)].values();
  }
  const std::vector<int> labels{2, 5};
  m.zero_grad();
  const auto loss = softmax_cross_entropy(m.forward(stacked), std::span<const int>(labels));
  m.backward(loss.grad);
  std::vector<Eigen::VectorXd> shared;
  for (auto* p : m.branch().parameters()) shared.push_back(p->grad.values());

  // Feature gradient from the head, then one masked branch pass per tile position.
  m.head().zero_grad();
  m.head().forward(m.branch().forward(stacked));
  const auto grad_features = m.head().backward(loss.grad);
  std::vector<Eigen::VectorXd> summed(shared.size());
  for (Index b = 0; b < 9; ++b) {
    Tensor<double> masked(grad_features.shape());
    for (Index n = 0; n < 2; ++n) masked.matrix().row(n * 9 + b) = grad_features.matrix().row(n * 9 + b);
    m.branch().zero_grad();
    m.branch().forward(stacked);
    m.branch().backward(masked);
    const auto ps = m.branch().parameters();
    for (std::size_t k = 0; k < ps.size(); ++k)
      summed[k] = summed[k].size() ? Eigen::VectorXd(summed[k] + ps[k]->grad.values()) : ps[k]->grad.values();
  }
  for (std::size_t k = 0; k < shared.size(); ++k) EXPECT_TRUE(shared[k].isApprox(summed[k], 1e-10)) << "param " << k;
}

TEST(CfnModel, HeadReadingOneSegmentMatchesSingleBranch) {
  auto nine = build_cfn<double>(CfnConfig::toy(8), 13);
  auto& fc7 = nine.head().params(2).weight.value;  // [128, 9 * 64]
  fc7.matrix().rightCols(8 * 64).setZero();

  CfnModel<double> single(CfnConfig::toy(8, 1));
  for (std::size_t i : nine.branch().parameterized_layers()) {
    single.branch().params(i).weight.value = nine.branch().params(i).weight.value;
    single.branch().params(i).bias.value = nine.branch().params(i).bias.value;
  }
  single.head().params(2).weight.value = Tensor<double>({128, 64});
  single.head().params(2).weight.value.matrix() = fc7.matrix().leftCols(64);
  single.head().params(2).bias.value = nine.head().params(2).bias.value;
  single.head().params(4).weight.value = nine.head().params(4).weight.value;
  single.head().params(4).bias.value = nine.head().params(4).bias.value;

  const auto tile = random_tiles<double>(nine.config(), 14, 1).front();
  const std::vector<int> label{6};
  nine.zero_grad();
  single.zero_grad();
  const auto l9 = softmax_cross_entropy(nine.forward(std::vector<Tensor<double>>(9, tile)), std::span<const int>(label));
  const auto l1 = softmax_cross_entropy(single.forward(std::vector<Tensor<double>>{tile}), std::span<const int>(label));
  EXPECT_NEAR(l9.loss, l1.loss, 1e-12);
  nine.backward(l9.grad);
  single.backward(l1.grad);
  const auto a = nine.branch().parameters(), b = single.branch().parameters();
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_TRUE(a[k]->grad.values().isApprox(b[k]->grad.values(), 1e-10));
}

TEST(CfnModel, FullModelFiniteDifference) {
  auto m = build_cfn<double>(CfnConfig::toy(8), 15);
  Tensor<double> stacked({18, 3, 32, 32});
  {
    const auto a = random_tiles<double>(m.config(), 16, 18);
    for (Index i = 0; i < 18; ++i) stacked.values().segment(i * 3072, 3072) = a[static_cast<std::size_t>(i)].values();
  }
  const std::vector<int> labels{1, 7};
  const std::span<const int> ls(labels);
  m.zero_grad();
  m.backward(softmax_cross_entropy(m.forward(stacked), ls).grad);

  Rng rng(17);
  const double h = 1e-6;
  double worst = 0.0;
  for (auto* p : m.parameters()) {
    for (int t = 0; t < 12; ++t) {
      const Index j = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(p->value.size())));
      const double saved = p->value[j];
      p->value[j] = saved + h;
      const double up = softmax_cross_entropy(m.forward(stacked), ls).loss;
      p->value[j] = saved - h;
      const double down = softmax_cross_entropy(m.forward(stacked), ls).loss;
      p->value[j] = saved;
      const double numeric = (up - down) / (2 * h), analytic = p->grad[j];
      worst = std::max(worst, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8}));
    }
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(CfnModel, FreshLogitsNearUniform) {
  auto m = build_cfn(CfnConfig::toy(8), 18);
  const std::vector<int> label{0};
  const double loss = softmax_cross_entropy(m.forward(random_tiles<float>(m.config(), 19)), std::span<const int>(label)).loss;
  EXPECT_NEAR(loss, std::log(8.0), 0.2);
}
