#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "jigsaw/ops.hpp"
#include "jigsaw/rng.hpp"
#include "jigsaw/tensor.hpp"

namespace jigsaw {

enum class LayerKind { conv, maxpool, relu, linear, flatten, concat };

std::string to_string(LayerKind k);
LayerKind parse_layer_kind(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;
  Index out_channels = 0;  // conv
  Index kernel = 0;        // conv kernel / pool window
  Index stride = 1;
  Index padding = 0;
  Index groups = 1;
  Index out_features = 0;  // linear
  Index branches = 0;      // concat: batch rows folded into one sample

  bool has_params() const { return kind == LayerKind::conv || kind == LayerKind::linear; }

  static LayerSpec conv(std::string name, Index out_channels, Index kernel, Index stride = 1, Index padding = 0,
                        Index groups = 1);
  static LayerSpec maxpool(std::string name, Index window, Index stride, Index padding = 0);
  static LayerSpec relu(std::string name = "relu");
  static LayerSpec linear(std::string name, Index out_features);
  static LayerSpec flatten(std::string name = "flatten");
  static LayerSpec concat(std::string name, Index branches);

  /// "conv name=conv1 out=96 k=11 stride=2 pad=0 groups=1"
  std::string to_string() const;
  static LayerSpec parse(const std::string& text);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Thrown when a layer chain cannot be wired together.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-sample output shape of `spec` given per-sample input shape `in`.
Shape infer_output_shape(const LayerSpec& spec, const Shape& in);

struct LayerParamCount {
  std::string name;
  Index weights = 0;
  Index biases = 0;
  Index total() const { return weights + biases; }
};

/// Parameter counts derived from shapes alone (nothing is allocated).
std::vector<LayerParamCount> count_parameters(const std::vector<LayerSpec>& specs, const Shape& sample_input);

/// Weight shape of a parameterized layer given its per-sample input shape.
Shape weight_shape(const LayerSpec& spec, const Shape& in);

/// Gaussian weight initializer; biases are always zeroed.
struct WeightInit {
  enum class Kind { fixed, fan_in };
  Kind kind = Kind::fan_in;
  double mean = 0.0;
  double stddev = 0.0;  // used by Kind::fixed

  /// N(mean, stddev^2) regardless of layer size.
  static WeightInit gaussian(double mean, double stddev) { return {Kind::fixed, mean, stddev}; }
  /// N(0, 2 / fan_in), fan_in = weight count per output unit.
  static WeightInit he() { return {Kind::fan_in, 0.0, 0.0}; }

  double stddev_for(const Shape& weight_shape) const;
};

template <typename Scalar>
struct Parameter {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  Tensor<Scalar> velocity;

  explicit Parameter(Shape s = {}) : value(s), grad(s), velocity(s) {}
};

template <typename Scalar>
struct LayerParams {
  Parameter<Scalar> weight;
  Parameter<Scalar> bias;
};

/// Forward/backward state errors (e.g. backward without forward).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Ordered layer list with a parameter store keyed by layer index.
template <typename Scalar>
class Sequential {
 public:
  Sequential() = default;

  Sequential(std::vector<LayerSpec> specs, Shape sample_input) : specs_(std::move(specs)), input_(std::move(sample_input)) {
    Shape s = input_;
    params_.resize(specs_.size());
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      const Shape out = infer_output_shape(specs_[i], s);
      if (specs_[i].has_params()) {
        const Shape ws = weight_shape(specs_[i], s);
        params_[i] = LayerParams<Scalar>{Parameter<Scalar>(ws), Parameter<Scalar>(Shape{ws[0]})};
      }
      shapes_.push_back(out);
      s = out;
    }
    caches_.resize(specs_.size());
  }

  const std::vector<LayerSpec>& specs() const { return specs_; }
  const Shape& sample_input_shape() const { return input_; }
  Shape sample_output_shape() const { return shapes_.empty() ? input_ : shapes_.back(); }
  const Shape& layer_output_shape(std::size_t i) const { return shapes_.at(i); }
  std::size_t num_layers() const { return specs_.size(); }

  bool has_params(std::size_t i) const { return params_.at(i).has_value(); }
  LayerParams<Scalar>& params(std::size_t i) {
    if (!params_.at(i)) throw std::out_of_range("layer " + std::to_string(i) + " has no parameters");
    return *params_[i];
  }
  const LayerParams<Scalar>& params(std::size_t i) const {
    if (!params_.at(i)) throw std::out_of_range("layer " + std::to_string(i) + " has no parameters");
    return *params_[i];
  }

  /// Layer indices of conv/linear layers in order.
  std::vector<std::size_t> parameterized_layers() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < specs_.size(); ++i)
      if (params_[i]) out.push_back(i);
    return out;
  }

  /// Weights then bias of every parameterized layer, in layer order.
  std::vector<Parameter<Scalar>*> parameters() {
    std::vector<Parameter<Scalar>*> out;
    for (auto& p : params_)
      if (p) {
        out.push_back(&p->weight);
        out.push_back(&p->bias);
      }
    return out;
  }

  std::vector<LayerParamCount> param_count() const { return count_parameters(specs_, input_); }

  void init(Rng& rng, const WeightInit& how) {
    for (std::size_t i = 0; i < specs_.size(); ++i) init_layer(i, rng, how);
  }
  void init_layer(std::size_t i, Rng& rng, const WeightInit& how) {
    if (!params_.at(i)) return;
    auto& w = params_[i]->weight.value;
    const double sd = how.stddev_for(w.shape());
    for (Index j = 0; j < w.size(); ++j) w[j] = static_cast<Scalar>(rng.normal(how.mean, sd));
    params_[i]->bias.value.values().setZero();
  }

  /// Runs layers [0, stop) on a batch whose first axis is the batch axis.
  Tensor<Scalar> forward(const Tensor<Scalar>& x, std::size_t stop) {
    check_input(x);
    stop = std::min(stop, specs_.size());
    Tensor<Scalar> a = x;
    for (std::size_t i = 0; i < stop; ++i) a = forward_layer(i, std::move(a));
    forward_depth_ = stop;
    return a;
  }
  Tensor<Scalar> forward(const Tensor<Scalar>& x) { return forward(x, specs_.size()); }

  /// Backpropagates through the layers run by the last forward(), adding
  /// parameter gradients into Parameter::grad. Returns d loss / d input.
  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) {
    if (forward_depth_ == 0 && !specs_.empty()) throw StateError("Sequential::backward called before forward");
    Tensor<Scalar> g = grad_out;
    for (std::size_t i = forward_depth_; i-- > 0;) g = backward_layer(i, g);
    forward_depth_ = 0;
    return g;
  }

  void zero_grad() {
    for (auto& p : params_)
      if (p) {
        p->weight.grad.values().setZero();
        p->bias.grad.values().setZero();
      }
  }

  template <typename Other>
  Sequential<Other> cast() const {
    Sequential<Other> out(specs_, input_);
    for (std::size_t i = 0; i < specs_.size(); ++i)
      if (params_[i]) {
        auto& dst = out.params(i);
        dst.weight.value = params_[i]->weight.value.template cast<Other>();
        dst.bias.value = params_[i]->bias.value.template cast<Other>();
      }
    return out;
  }

 private:
  struct Cache {
    Tensor<Scalar> input;
    Conv2dCache<Scalar> conv;
    MaxPoolCache pool;
  };

  void check_input(const Tensor<Scalar>& x) const {
    Shape per(x.shape().begin() + (x.rank() ? 1 : 0), x.shape().end());
    if (x.rank() == 0 || per != input_)
      throw std::invalid_argument("Sequential: expected per-sample input " + shape_string(input_) + ", got " +
                                  shape_string(x.shape()));
    const auto lead = specs_.empty() ? 0 : specs_.front().branches;
    if (!specs_.empty() && specs_.front().kind == LayerKind::concat && x.dim(0) % lead != 0)
      throw std::invalid_argument("Sequential: batch not divisible by branch count");
  }

  Tensor<Scalar> forward_layer(std::size_t i, Tensor<Scalar> a) {
    const LayerSpec& s = specs_[i];
    Cache& c = caches_[i];
    switch (s.kind) {
      case LayerKind::conv: {
        auto& p = *params_[i];
        Tensor<Scalar> y = conv2d(a, p.weight.value, p.bias.value, ConvParams{s.stride, s.padding, s.groups}, &c.conv);
        return y;
      }
      case LayerKind::maxpool:
        return maxpool(a, PoolParams{s.kernel, s.stride, s.padding}, &c.pool);
      case LayerKind::relu: {
        Tensor<Scalar> y = relu(a);
        c.input = std::move(a);
        return y;
      }
      case LayerKind::linear: {
        auto& p = *params_[i];
        Tensor<Scalar> y = linear(a, p.weight.value, p.bias.value);
        c.input = std::move(a);
        return y;
      }
      case LayerKind::flatten:
        c.input = Tensor<Scalar>(a.shape());
        return flatten(a);
      case LayerKind::concat:
        c.input = Tensor<Scalar>(a.shape());
        return concat_branches(a, s.branches);
    }
    throw std::logic_error("unreachable");
  }

  Tensor<Scalar> backward_layer(std::size_t i, const Tensor<Scalar>& g) {
    const LayerSpec& s = specs_[i];
    Cache& c = caches_[i];
    switch (s.kind) {
      case LayerKind::conv: {
        auto& p = *params_[i];
        auto r = conv2d_backward(g, p.weight.value, ConvParams{s.stride, s.padding, s.groups}, c.conv);
        p.weight.grad.values() += r.weight.values();
        p.bias.grad.values() += r.bias.values();
        return std::move(r.input);
      }
      case LayerKind::maxpool:
        return maxpool_backward(g, c.pool);
      case LayerKind::relu:
        return relu_backward(g, c.input);
      case LayerKind::linear: {
        auto& p = *params_[i];
        auto r = linear_backward(g, c.input, p.weight.value);
        p.weight.grad.values() += r.weight.values();
        p.bias.grad.values() += r.bias.values();
        return std::move(r.input);
      }
      case LayerKind::flatten:
      case LayerKind::concat:
        return g.reshaped(c.input.shape());
    }
    throw std::logic_error("unreachable");
  }

  std::vector<LayerSpec> specs_;
  Shape input_;
  std::vector<Shape> shapes_;
  std::vector<std::optional<LayerParams<Scalar>>> params_;
  std::vector<Cache> caches_;
  std::size_t forward_depth_ = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  bool finite = true;
};

/// Compares analytic gradients of `params` against central differences.
///
/// `loss` evaluates the scalar loss at the current parameter values;
/// `analytic` zeroes and refills Parameter::grad. Up to `per_param` randomly
/// chosen coordinates of each parameter are perturbed by +-epsilon.
/// Relative error is |a - n| / max(|a|, |n|, 1e-8).
template <typename Scalar>
GradCheckReport check_gradients(const std::vector<Parameter<Scalar>*>& params, const std::function<double()>& loss,
                                const std::function<void()>& analytic, double epsilon, std::size_t per_param,
                                Rng& rng) {
  analytic();
  GradCheckReport rep;
  for (Parameter<Scalar>* p : params) {
    const Index n = p->value.size();
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    if (static_cast<std::size_t>(n) > per_param) {
      rng.shuffle(idx.begin(), idx.end());
      idx.resize(per_param);
    }
    for (const Index j : idx) {
      const Scalar saved = p->value[j];
      p->value[j] = saved + static_cast<Scalar>(epsilon);
      const double up = loss();
      p->value[j] = saved - static_cast<Scalar>(epsilon);
      const double down = loss();
      p->value[j] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = static_cast<double>(p->grad[j]);
      if (!std::isfinite(numeric) || !std::isfinite(a)) rep.finite = false;
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), 1e-8});
      rep.max_rel_error = std::max(rep.max_rel_error, rel);
      rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
      ++rep.checked;
    }
  }
  return rep;
}

/// Gradient check of a classifier graph under softmax cross-entropy.
template <typename Scalar>
GradCheckReport gradient_check(Sequential<Scalar>& graph, const Tensor<Scalar>& input, std::span<const int> labels,
                               double epsilon, std::size_t per_param = 64, std::uint64_t seed = 0) {
  Rng rng(seed);
  auto loss = [&] { return softmax_cross_entropy(graph.forward(input), labels).loss; };
  auto analytic = [&] {
    graph.zero_grad();
    auto r = softmax_cross_entropy(graph.forward(input), labels);
    graph.backward(r.grad);
  };
  return check_gradients<Scalar>(graph.parameters(), loss, analytic, epsilon, per_param, rng);
}

}  // namespace jigsaw
