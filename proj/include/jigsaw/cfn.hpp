#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "jigsaw/imagepipe.hpp"
#include "jigsaw/network.hpp"

namespace jigsaw {

/// Layout of a context-free network: one branch shared by every tile, then a
/// head (concat, relu, fc7, relu, fc8) over the concatenated fc6 outputs.
struct CfnConfig {
  std::vector<LayerSpec> branch;  // conv/pool/relu stack ending in the fc6 linear layer
  Index fc6_width = 0;
  Index fc7_width = 0;
  Index num_classes = 0;
  Index num_branches = 9;
  Index tile_side = 64;
  Index channels = 3;
  Index first_conv_stride = 2;

  /// Throws ConfigError if the chain does not wire up or fields disagree.
  void validate() const;

  Shape tile_shape() const { return {channels, tile_side, tile_side}; }
  std::vector<LayerSpec> head() const;

  /// Two conv layers on 32 px tiles, fc6 64, fc7 128.
  static CfnConfig toy(Index num_classes, Index num_branches = 9);
  /// AlexNet conv1-conv5 with stride-2 conv1 on 64 px tiles, fc6 512 from
  /// a 4x4x256 map, fc7 4096.
  static CfnConfig full(Index num_classes);

  /// Flat key/value form, e.g. "fc7_width" -> "4096", "branch.0" -> "conv name=conv1 ...".
  std::map<std::string, std::string> to_map() const;
  static CfnConfig from_map(const std::map<std::string, std::string>& kv);
  std::string to_text() const;
  static CfnConfig from_text(const std::string& text);

  friend bool operator==(const CfnConfig&, const CfnConfig&) = default;
};

/// Layers and input shape of the single-column AlexNet used as the
/// parameter-count reference (227 px input, stride-4 conv1, fc6/fc7 4096).
std::vector<LayerSpec> alexnet_reference_layers(Index num_classes = 1000);
Shape alexnet_reference_input();

/// Stacks puzzles into a [N * B, C, T, T] batch, sample-major (row n*B + i is
/// tile i of puzzle n).
Tensor<float> stack_puzzles(const std::vector<PuzzleSample>& samples);
Tensor<float> stack_tiles(const std::vector<Tensor<float>>& tiles);

template <typename Scalar>
class CfnModel {
 public:
  CfnModel() = default;
  explicit CfnModel(CfnConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    branch_ = Sequential<Scalar>(cfg_.branch, cfg_.tile_shape());
    head_ = Sequential<Scalar>(cfg_.head(), Shape{cfg_.fc6_width});
  }

  const CfnConfig& config() const { return cfg_; }
  Sequential<Scalar>& branch() { return branch_; }
  const Sequential<Scalar>& branch() const { return branch_; }
  Sequential<Scalar>& head() { return head_; }
  const Sequential<Scalar>& head() const { return head_; }

  /// `how` for every layer except fc8, which gets `last`.
  void init(Rng& rng, const WeightInit& how, const WeightInit& last) {
    branch_.init(rng, how);
    head_.init(rng, how);
    const auto layers = head_.parameterized_layers();
    if (!layers.empty()) head_.init_layer(layers.back(), rng, last);
  }

  /// tiles: [N * num_branches, C, T, T], sample-major. Returns logits [N, K].
  Tensor<Scalar> forward(const Tensor<Scalar>& tiles) {
    if (tiles.rank() != 4 || tiles.dim(0) == 0 || tiles.dim(0) % cfg_.num_branches != 0)
      throw std::invalid_argument("CfnModel::forward: expected [N*" + std::to_string(cfg_.num_branches) +
                                  ", C, T, T] tiles, got " + shape_string(tiles.shape()));
    features_ = branch_.forward(tiles);
    have_forward_ = true;
    return head_.forward(features_);
  }

  /// Single puzzle given as num_branches tiles of shape [C, T, T].
  Tensor<Scalar> forward(const std::vector<Tensor<Scalar>>& tiles) {
    if (static_cast<Index>(tiles.size()) != cfg_.num_branches)
      throw std::invalid_argument("CfnModel::forward: expected " + std::to_string(cfg_.num_branches) + " tiles, got " +
                                  std::to_string(tiles.size()));
    Tensor<Scalar> stacked({cfg_.num_branches, cfg_.channels, cfg_.tile_side, cfg_.tile_side});
    const Index per = shape_size(cfg_.tile_shape());
    for (std::size_t i = 0; i < tiles.size(); ++i) {
      if (tiles[i].shape() != cfg_.tile_shape())
        throw std::invalid_argument("CfnModel::forward: tile shape " + shape_string(tiles[i].shape()) +
                                    " does not match " + shape_string(cfg_.tile_shape()));
      stacked.values().segment(static_cast<Index>(i) * per, per) = tiles[i].values();
    }
    return forward(stacked);
  }

  /// Branch (fc6) outputs of the last forward: [N * num_branches, fc6].
  const Tensor<Scalar>& branch_features() const { return features_; }

  /// Adds parameter gradients for d loss / d logits. Every branch application
  /// contributes to the one shared branch store, so its gradient is the sum
  /// over tiles.
  void backward(const Tensor<Scalar>& grad_logits) {
    if (!have_forward_) throw StateError("CfnModel::backward called before forward");
    const Tensor<Scalar> grad_features = head_.backward(grad_logits);
    branch_.backward(grad_features);
    have_forward_ = false;
  }

  void zero_grad() {
    branch_.zero_grad();
    head_.zero_grad();
  }

  /// Branch parameters first, then head, in layer order.
  std::vector<Parameter<Scalar>*> parameters() {
    auto p = branch_.parameters();
    auto h = head_.parameters();
    p.insert(p.end(), h.begin(), h.end());
    return p;
  }

  /// Per-layer counts; the shared branch is counted once.
  std::vector<LayerParamCount> param_count() const {
    auto c = branch_.param_count();
    auto h = head_.param_count();
    c.insert(c.end(), h.begin(), h.end());
    return c;
  }

  Index total_params() const {
    Index t = 0;
    for (const auto& c : param_count()) t += c.total();
    return t;
  }

  template <typename Other>
  CfnModel<Other> cast() const {
    CfnModel<Other> out;
    out.assign(cfg_, branch_.template cast<Other>(), head_.template cast<Other>());
    return out;
  }

  void assign(CfnConfig cfg, Sequential<Scalar> branch, Sequential<Scalar> head) {
    cfg_ = std::move(cfg);
    branch_ = std::move(branch);
    head_ = std::move(head);
    have_forward_ = false;
  }

 private:
  CfnConfig cfg_;
  Sequential<Scalar> branch_;
  Sequential<Scalar> head_;
  Tensor<Scalar> features_;
  bool have_forward_ = false;
};

/// Output-layer initialization: N(0, 0.01), so fresh logits are near zero.
inline WeightInit output_init() { return WeightInit::gaussian(0.0, 0.01); }

/// Default initialization: fan-in scaled Gaussian for hidden layers,
/// output_init() for fc8, zero biases.
template <typename Scalar = float>
CfnModel<Scalar> build_cfn(const CfnConfig& cfg, std::uint64_t seed, const WeightInit& hidden = WeightInit::he()) {
  CfnModel<Scalar> m(cfg);
  Rng rng(derive_seed(seed, {0x1417}));
  m.init(rng, hidden, output_init());
  return m;
}

}  // namespace jigsaw
