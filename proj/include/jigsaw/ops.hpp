#pragma once

// Differentiable operators over Tensor<Scalar>. Forward functions fill an
// optional cache that the matching backward function consumes. Backward
// functions return fresh gradients; accumulation is the caller's job.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "jigsaw/tensor.hpp"

namespace jigsaw {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// ---------------------------------------------------------------- conv2d

struct ConvParams {
  Index stride = 1;
  Index padding = 0;
  Index groups = 1;
};

/// floor((in + 2 pad - k) / stride) + 1
inline Index conv_out_size(Index in, Index kernel, Index stride, Index padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

template <typename Scalar>
struct Conv2dCache {
  Shape input_shape;
  RowMatrix<Scalar> cols;  // [C*k*k, N*Ho*Wo]
};

namespace detail {

template <typename Scalar>
void im2col(const Tensor<Scalar>& x, Index k, Index stride, Index pad, Index ho, Index wo, RowMatrix<Scalar>& cols) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index plane = ho * wo;
  cols.resize(c * k * k, n * plane);
  const Scalar* src = x.data();
  for (Index ci = 0; ci < c; ++ci)
    for (Index ki = 0; ki < k; ++ki)
      for (Index kj = 0; kj < k; ++kj) {
        Scalar* row = cols.row((ci * k + ki) * k + kj).data();
        for (Index ni = 0; ni < n; ++ni) {
          const Scalar* img = src + (ni * c + ci) * h * w;
          Scalar* out = row + ni * plane;
          for (Index oh = 0; oh < ho; ++oh) {
            const Index ih = oh * stride - pad + ki;
            Scalar* o = out + oh * wo;
            if (ih < 0 || ih >= h) {
              std::fill(o, o + wo, Scalar(0));
              continue;
            }
            const Scalar* line = img + ih * w;
            for (Index ow = 0; ow < wo; ++ow) {
              const Index iw = ow * stride - pad + kj;
              o[ow] = (iw >= 0 && iw < w) ? line[iw] : Scalar(0);
            }
          }
        }
      }
}

template <typename Scalar>
void col2im(const RowMatrix<Scalar>& cols, Index k, Index stride, Index pad, Index ho, Index wo, Tensor<Scalar>& x) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index plane = ho * wo;
  Scalar* dst = x.data();
  for (Index ci = 0; ci < c; ++ci)
    for (Index ki = 0; ki < k; ++ki)
      for (Index kj = 0; kj < k; ++kj) {
        const Scalar* row = cols.row((ci * k + ki) * k + kj).data();
        for (Index ni = 0; ni < n; ++ni) {
          Scalar* img = dst + (ni * c + ci) * h * w;
          const Scalar* in = row + ni * plane;
          for (Index oh = 0; oh < ho; ++oh) {
            const Index ih = oh * stride - pad + ki;
            if (ih < 0 || ih >= h) continue;
            Scalar* line = img + ih * w;
            const Scalar* g = in + oh * wo;
            for (Index ow = 0; ow < wo; ++ow) {
              const Index iw = ow * stride - pad + kj;
              if (iw >= 0 && iw < w) line[iw] += g[ow];
            }
          }
        }
      }
}

}  // namespace detail

/// Cross-correlation. input [N, C, H, W], weight [Cout, C/groups, k, k], bias [Cout].
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias,
                      const ConvParams& p, Conv2dCache<Scalar>* cache = nullptr) {
  require(input.rank() == 4, "conv2d: input must be [N,C,H,W], got " + shape_string(input.shape()));
  require(weight.rank() == 4 && weight.dim(2) == weight.dim(3), "conv2d: weight must be [Cout,Cin/g,k,k]");
  require(p.stride >= 1 && p.padding >= 0 && p.groups >= 1, "conv2d: bad stride/padding/groups");
  const Index n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const Index cout = weight.dim(0), k = weight.dim(2), g = p.groups;
  require(c % g == 0 && cout % g == 0, "conv2d: channel counts not divisible by groups");
  require(weight.dim(1) == c / g, "conv2d: weight in-channels " + std::to_string(weight.dim(1)) +
                                      " do not match input channels/groups " + std::to_string(c / g));
  require(bias.size() == cout, "conv2d: bias length must equal out channels");
  require(h + 2 * p.padding >= k && w + 2 * p.padding >= k, "conv2d: input smaller than kernel");
  const Index ho = conv_out_size(h, k, p.stride, p.padding), wo = conv_out_size(w, k, p.stride, p.padding);
  const Index plane = ho * wo;

  Conv2dCache<Scalar> local;
  Conv2dCache<Scalar>& cc = cache ? *cache : local;
  cc.input_shape = input.shape();
  detail::im2col(input, k, p.stride, p.padding, ho, wo, cc.cols);

  const Index cg = c / g * k * k, og = cout / g;
  const auto wm = weight.matrix(cout);  // [Cout, Cin/g*k*k]
  RowMatrix<Scalar> out(cout, n * plane);
  for (Index gi = 0; gi < g; ++gi)
    out.middleRows(gi * og, og).noalias() = wm.middleRows(gi * og, og) * cc.cols.middleRows(gi * cg, cg);

  Tensor<Scalar> y({n, cout, ho, wo});
  for (Index ni = 0; ni < n; ++ni)
    for (Index o = 0; o < cout; ++o) {
      Eigen::Map<Vector<Scalar>> dst(y.data() + (ni * cout + o) * plane, plane);
      dst = out.row(o).segment(ni * plane, plane).transpose().array() + bias[o];
    }
  return y;
}

template <typename Scalar>
struct Conv2dGrads {
  Tensor<Scalar> input, weight, bias;
};

template <typename Scalar>
Conv2dGrads<Scalar> conv2d_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& weight,
                                    const ConvParams& p, const Conv2dCache<Scalar>& cache) {
  const Shape& in_shape = cache.input_shape;
  require(in_shape.size() == 4, "conv2d_backward: missing forward cache");
  const Index n = in_shape[0], c = in_shape[1];
  const Index cout = weight.dim(0), k = weight.dim(2), g = p.groups;
  require(grad_out.rank() == 4 && grad_out.dim(0) == n && grad_out.dim(1) == cout,
          "conv2d_backward: grad shape " + shape_string(grad_out.shape()) + " does not match forward");
  const Index ho = grad_out.dim(2), wo = grad_out.dim(3), plane = ho * wo;
  const Index cg = c / g * k * k, og = cout / g;

  RowMatrix<Scalar> gm(cout, n * plane);
  for (Index ni = 0; ni < n; ++ni)
    for (Index o = 0; o < cout; ++o)
      gm.row(o).segment(ni * plane, plane) =
          Eigen::Map<const Vector<Scalar>>(grad_out.data() + (ni * cout + o) * plane, plane).transpose();

  Conv2dGrads<Scalar> out{Tensor<Scalar>(in_shape), Tensor<Scalar>(weight.shape()), Tensor<Scalar>({cout})};
  auto dw = out.weight.matrix(cout);
  const auto wm = weight.matrix(cout);
  RowMatrix<Scalar> dcols(c * k * k, n * plane);
  for (Index gi = 0; gi < g; ++gi) {
    dw.middleRows(gi * og, og).noalias() = gm.middleRows(gi * og, og) * cache.cols.middleRows(gi * cg, cg).transpose();
    dcols.middleRows(gi * cg, cg).noalias() = wm.middleRows(gi * og, og).transpose() * gm.middleRows(gi * og, og);
  }
  out.bias.values() = gm.template cast<double>().rowwise().sum().template cast<Scalar>();
  detail::col2im(dcols, k, p.stride, p.padding, ho, wo, out.input);
  return out;
}

// ---------------------------------------------------------------- maxpool

struct PoolParams {
  Index window = 2;
  Index stride = 2;
  Index padding = 0;  // implicit -inf border
};

struct MaxPoolCache {
  Shape input_shape;
  std::vector<Index> argmax;  // flat input index per output element
};

/// Per-window maximum; the first maximum in scan order wins ties.
template <typename Scalar>
Tensor<Scalar> maxpool(const Tensor<Scalar>& input, const PoolParams& p, MaxPoolCache* cache = nullptr) {
  require(input.rank() == 4, "maxpool: input must be [N,C,H,W]");
  require(p.window >= 1 && p.stride >= 1 && p.padding >= 0 && p.padding < p.window, "maxpool: bad parameters");
  const Index n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  require(h + 2 * p.padding >= p.window && w + 2 * p.padding >= p.window, "maxpool: input smaller than window");
  const Index ho = conv_out_size(h, p.window, p.stride, p.padding);
  const Index wo = conv_out_size(w, p.window, p.stride, p.padding);
  Tensor<Scalar> y({n, c, ho, wo});
  std::vector<Index> arg(static_cast<std::size_t>(y.size()));
  const Scalar* src = input.data();
  Index o = 0;
  for (Index plane = 0; plane < n * c; ++plane) {
    const Scalar* img = src + plane * h * w;
    for (Index oh = 0; oh < ho; ++oh)
      for (Index ow = 0; ow < wo; ++ow, ++o) {
        const Index h0 = std::max<Index>(oh * p.stride - p.padding, 0);
        const Index h1 = std::min<Index>(oh * p.stride - p.padding + p.window, h);
        const Index w0 = std::max<Index>(ow * p.stride - p.padding, 0);
        const Index w1 = std::min<Index>(ow * p.stride - p.padding + p.window, w);
        Index best = h0 * w + w0;
        for (Index i = h0; i < h1; ++i)
          for (Index j = w0; j < w1; ++j)
            if (img[i * w + j] > img[best]) best = i * w + j;
        y[o] = img[best];
        arg[static_cast<std::size_t>(o)] = plane * h * w + best;
      }
  }
  if (cache) {
    cache->input_shape = input.shape();
    cache->argmax = std::move(arg);
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> maxpool_backward(const Tensor<Scalar>& grad_out, const MaxPoolCache& cache) {
  require(static_cast<std::size_t>(grad_out.size()) == cache.argmax.size(), "maxpool_backward: grad shape mismatch");
  Tensor<Scalar> gi(cache.input_shape);
  for (Index i = 0; i < grad_out.size(); ++i) gi[cache.argmax[static_cast<std::size_t>(i)]] += grad_out[i];
  return gi;
}

// ---------------------------------------------------------------- relu

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  return Tensor<Scalar>(x.shape(), x.values().cwiseMax(Scalar(0)));
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& input) {
  require(grad_out.shape() == input.shape(), "relu_backward: shape mismatch");
  return Tensor<Scalar>(input.shape(),
                        (input.values().array() > Scalar(0)).select(grad_out.values(), Scalar(0)).matrix());
}

// ---------------------------------------------------------------- linear

/// input [N, D], weight [O, D], bias [O] -> [N, O]
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& input, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias) {
  require(input.rank() == 2, "linear: input must be [N,D], got " + shape_string(input.shape()));
  require(weight.rank() == 2 && weight.dim(1) == input.dim(1),
          "linear: weight " + shape_string(weight.shape()) + " incompatible with input " + shape_string(input.shape()));
  require(bias.size() == weight.dim(0), "linear: bias length must equal output width");
  // One matrix-vector product per sample: a blocked GEMM treats tail rows
  // differently, which would make a sample's output depend on its batch slot.
  Tensor<Scalar> y({input.dim(0), weight.dim(0)});
  const auto w = weight.matrix();
  for (Index n = 0; n < input.dim(0); ++n)
    y.matrix().row(n).transpose().noalias() = w * input.matrix().row(n).transpose();
  y.matrix().rowwise() += bias.values().transpose();
  return y;
}

template <typename Scalar>
struct LinearGrads {
  Tensor<Scalar> input, weight, bias;
};

template <typename Scalar>
LinearGrads<Scalar> linear_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& input,
                                    const Tensor<Scalar>& weight) {
  require(grad_out.rank() == 2 && grad_out.dim(0) == input.dim(0) && grad_out.dim(1) == weight.dim(0),
          "linear_backward: grad shape mismatch");
  LinearGrads<Scalar> g{Tensor<Scalar>(input.shape()), Tensor<Scalar>(weight.shape()), Tensor<Scalar>({weight.dim(0)})};
  const auto w = weight.matrix();
  for (Index n = 0; n < input.dim(0); ++n)
    g.input.matrix().row(n).transpose().noalias() = w.transpose() * grad_out.matrix().row(n).transpose();
  g.weight.matrix().noalias() = grad_out.matrix().transpose() * input.matrix();
  g.bias.values() = grad_out.matrix().template cast<double>().colwise().sum().transpose().template cast<Scalar>();
  return g;
}

// ---------------------------------------------------------------- flatten / concat

template <typename Scalar>
Tensor<Scalar> flatten(const Tensor<Scalar>& x) {
  require(x.rank() >= 1, "flatten: scalar input");
  const Index n = x.dim(0);
  return x.reshaped({n, n ? x.size() / n : 0});
}

/// Joins [N, D_i] blocks along the feature axis in argument order.
template <typename Scalar>
Tensor<Scalar> concat(std::span<const Tensor<Scalar>> parts) {
  require(!parts.empty(), "concat: no inputs");
  const Index n = parts.front().dim(0);
  Index total = 0;
  for (const auto& t : parts) {
    require(t.rank() == 2 && t.dim(0) == n, "concat: inputs must be [N, D] with equal N");
    total += t.dim(1);
  }
  Tensor<Scalar> y({n, total});
  Index col = 0;
  for (const auto& t : parts) {
    y.matrix().middleCols(col, t.dim(1)) = t.matrix();
    col += t.dim(1);
  }
  return y;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> concat_backward(const Tensor<Scalar>& grad_out, std::span<const Index> widths) {
  std::vector<Tensor<Scalar>> out;
  Index col = 0;
  for (const Index w : widths) {
    require(col + w <= grad_out.dim(1), "concat_backward: widths exceed gradient");
    Tensor<Scalar> g({grad_out.dim(0), w});
    g.matrix() = grad_out.matrix().middleCols(col, w);
    out.push_back(std::move(g));
    col += w;
  }
  require(col == grad_out.dim(1), "concat_backward: widths do not cover gradient");
  return out;
}

/// Branch-stacked features [N*B, D] (sample-major) -> [N, B*D]; segment i of a
/// row is branch i's features. Identical to concat over the B branch blocks.
template <typename Scalar>
Tensor<Scalar> concat_branches(const Tensor<Scalar>& stacked, Index branches) {
  require(stacked.rank() == 2 && branches >= 1 && stacked.dim(0) % branches == 0,
          "concat_branches: expected [N*B, D] features");
  return stacked.reshaped({stacked.dim(0) / branches, branches * stacked.dim(1)});
}

// ---------------------------------------------------------------- softmax / loss

/// Row-wise softmax with max subtraction.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& logits) {
  require(logits.rank() == 2, "softmax: logits must be [N, K]");
  Tensor<Scalar> p(logits.shape());
  for (Index i = 0; i < logits.dim(0); ++i) {
    const auto row = logits.matrix().row(i).template cast<double>();
    const double m = row.maxCoeff();
    const Eigen::RowVectorXd e = (row.array() - m).exp().matrix();
    p.matrix().row(i) = (e / e.sum()).template cast<Scalar>();
  }
  return p;
}

template <typename Scalar>
struct LossResult {
  double loss = 0.0;        // mean over the batch
  Tensor<Scalar> grad;      // d loss / d logits
  Tensor<Scalar> probs;
};

/// Mean of -log softmax(logits)[label] over the batch.
template <typename Scalar>
LossResult<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits, std::span<const int> labels) {
  require(logits.rank() == 2, "softmax_cross_entropy: logits must be [N, K]");
  const Index n = logits.dim(0), k = logits.dim(1);
  require(static_cast<Index>(labels.size()) == n, "softmax_cross_entropy: one label per row required");
  LossResult<Scalar> r{0.0, Tensor<Scalar>(logits.shape()), Tensor<Scalar>(logits.shape())};
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < k, "softmax_cross_entropy: label " + std::to_string(y) + " out of range");
    const Eigen::RowVectorXd row = logits.matrix().row(i).template cast<double>();
    const double m = row.maxCoeff();
    const Eigen::RowVectorXd shifted = row.array() - m;
    const double lse = std::log(shifted.array().exp().sum());
    const Eigen::RowVectorXd prob = (shifted.array() - lse).exp().matrix();
    r.loss += lse - shifted[y];
    r.probs.matrix().row(i) = prob.template cast<Scalar>();
    Eigen::RowVectorXd g = prob;
    g[y] -= 1.0;
    r.grad.matrix().row(i) = (g / static_cast<double>(n)).template cast<Scalar>();
  }
  r.loss /= static_cast<double>(n);
  return r;
}

// ---------------------------------------------------------------- sgd

/// v <- momentum * v + g; p <- p - lr * v
template <typename Scalar>
void sgd_step(Tensor<Scalar>& param, const Tensor<Scalar>& grad, Tensor<Scalar>& velocity, double lr, double momentum) {
  require(param.shape() == grad.shape(), "sgd_step: gradient shape does not match parameter");
  if (velocity.shape() != param.shape()) velocity = Tensor<Scalar>(param.shape());
  velocity.values() = static_cast<Scalar>(momentum) * velocity.values() + grad.values();
  param.values() -= static_cast<Scalar>(lr) * velocity.values();
}

}  // namespace jigsaw
