#pragma once

// Dense neural-network engine: MLP and small-CNN forward pass, manual
// backpropagation and momentum SGD over a flat parameter vector whose
// layout separates feature-extractor layers from classifier layers.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "fedseq/errors.hpp"
#include "fedseq/rng.hpp"

namespace fedseq {

enum class LayerRole : std::uint8_t { feature = 0, classifier = 1 };

struct LayerSlice {
  std::string name;
  LayerRole role;
  std::size_t offset;
  std::size_t length;

  bool operator==(const LayerSlice&) const = default;
};

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VectorXd = Vec<double>;
using RowMatrixXd = RowMatrix<double>;

/// Flat model parameters plus the layer layout that gives them meaning.
/// Each layer stores its weights (row-major, out x in) followed by biases.
template <typename Scalar>
class BasicParamVector {
 public:
  BasicParamVector() = default;

  BasicParamVector(Vec<Scalar> values, std::vector<LayerSlice> layout)
      : values_(std::move(values)), layout_(std::move(layout)) {
    validate();
  }

  static BasicParamVector zeros(std::vector<LayerSlice> layout) {
    std::size_t total = 0;
    for (const auto& l : layout) total += l.length;
    return BasicParamVector(Vec<Scalar>::Zero(static_cast<Eigen::Index>(total)), std::move(layout));
  }

  BasicParamVector zeros_like() const { return zeros(layout_); }

  const Vec<Scalar>& values() const { return values_; }
  Vec<Scalar>& values() { return values_; }
  const std::vector<LayerSlice>& layout() const { return layout_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

  auto layer(std::size_t i) const {
    const auto& l = layout_.at(i);
    return values_.segment(static_cast<Eigen::Index>(l.offset), static_cast<Eigen::Index>(l.length));
  }
  auto layer(std::size_t i) {
    const auto& l = layout_.at(i);
    return values_.segment(static_cast<Eigen::Index>(l.offset), static_cast<Eigen::Index>(l.length));
  }

  bool same_layout(const BasicParamVector& other) const { return layout_ == other.layout_; }

  bool all_finite() const { return values_.allFinite(); }

 private:
  void validate() const {
    std::size_t expected_offset = 0;
    bool has_classifier = false;
    for (const auto& l : layout_) {
      if (l.offset != expected_offset) {
        throw ShapeError("layer '" + l.name + "' offset " + std::to_string(l.offset) +
                         " is not contiguous (expected " + std::to_string(expected_offset) + ")");
      }
      expected_offset += l.length;
      has_classifier = has_classifier || l.role == LayerRole::classifier;
    }
    if (expected_offset != static_cast<std::size_t>(values_.size())) {
      throw ShapeError("layout covers " + std::to_string(expected_offset) + " values but vector holds " +
                       std::to_string(values_.size()));
    }
    if (!has_classifier) throw ShapeError("layout has no classifier layer");
  }

  Vec<Scalar> values_;
  std::vector<LayerSlice> layout_;
};

using ParamVector = BasicParamVector<double>;

enum class Architecture { mlp, small_cnn };

struct ImageShape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
};

/// Model description. For `mlp` the first hidden layer is the feature
/// extractor and every later dense layer is the classifier; with no hidden
/// layers the single dense layer is the classifier. For `small_cnn` one
/// 3x3 valid convolution (ReLU, 2x2 max-pool) forms the feature extractor and
/// the dense stack on top is the classifier.
struct ModelSpec {
  Architecture arch = Architecture::mlp;
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t num_classes = 2;
  ImageShape image{};            // small_cnn only; channels*height*width == input_dim
  std::size_t conv_filters = 4;  // small_cnn only
};

namespace detail {

struct LayerPlan {
  enum class Kind { dense, conv } kind = Kind::dense;
  std::string name;
  LayerRole role = LayerRole::classifier;
  std::size_t in = 0;   // flattened input width
  std::size_t out = 0;  // flattened output width (after pooling for conv)
  bool relu = true;
  // conv geometry
  std::size_t channels = 0, height = 0, width = 0, filters = 0;

  std::size_t conv_h() const { return height - 2; }
  std::size_t conv_w() const { return width - 2; }
  std::size_t pool_h() const { return conv_h() / 2; }
  std::size_t pool_w() const { return conv_w() / 2; }
  std::size_t weight_count() const { return kind == Kind::dense ? out * in : filters * channels * 9; }
  std::size_t bias_count() const { return kind == Kind::dense ? out : filters; }
  std::size_t fan_in() const { return kind == Kind::dense ? in : channels * 9; }
  std::size_t param_count() const { return weight_count() + bias_count(); }
};

inline std::vector<LayerPlan> make_plan(const ModelSpec& spec) {
  if (spec.num_classes < 2) throw InvalidArgument("num_classes must be >= 2");
  if (spec.input_dim == 0) throw InvalidArgument("input_dim must be positive");
  std::vector<LayerPlan> plan;
  std::size_t width = spec.input_dim;
  std::size_t dense_index = 1;
  bool feature_assigned = false;

  if (spec.arch == Architecture::small_cnn) {
    const auto& im = spec.image;
    if (im.channels * im.height * im.width != spec.input_dim) {
      throw InvalidArgument("image shape does not match input_dim");
    }
    if (im.height < 4 || im.width < 4) throw InvalidArgument("small_cnn needs images of at least 4x4");
    if (spec.conv_filters == 0) throw InvalidArgument("conv_filters must be positive");
    LayerPlan conv;
    conv.kind = LayerPlan::Kind::conv;
    conv.name = "conv1";
    conv.role = LayerRole::feature;
    conv.channels = im.channels;
    conv.height = im.height;
    conv.width = im.width;
    conv.filters = spec.conv_filters;
    conv.in = spec.input_dim;
    conv.out = conv.filters * conv.pool_h() * conv.pool_w();
    plan.push_back(conv);
    width = conv.out;
    feature_assigned = true;
  }

  for (std::size_t h : spec.hidden) {
    if (h == 0) throw InvalidArgument("hidden layer width must be positive");
    LayerPlan d;
    d.name = "fc" + std::to_string(dense_index++);
    d.role = feature_assigned ? LayerRole::classifier : LayerRole::feature;
    feature_assigned = true;
    d.in = width;
    d.out = h;
    plan.push_back(d);
    width = h;
  }
  LayerPlan last;
  last.name = "fc" + std::to_string(dense_index);
  last.role = LayerRole::classifier;
  last.in = width;
  last.out = spec.num_classes;
  last.relu = false;
  plan.push_back(last);
  return plan;
}

}  // namespace detail

inline std::vector<LayerSlice> model_layout(const ModelSpec& spec) {
  std::vector<LayerSlice> layout;
  std::size_t offset = 0;
  for (const auto& p : detail::make_plan(spec)) {
    layout.push_back({p.name, p.role, offset, p.param_count()});
    offset += p.param_count();
  }
  return layout;
}

inline std::size_t param_count(const ModelSpec& spec) {
  std::size_t n = 0;
  for (const auto& l : model_layout(spec)) n += l.length;
  return n;
}

/// Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
template <typename Scalar = double>
BasicParamVector<Scalar> init_params(const ModelSpec& spec, std::uint64_t seed) {
  auto params = BasicParamVector<Scalar>::zeros(model_layout(spec));
  Rng rng(derive_seed({seed, stream::init}));
  const auto plan = detail::make_plan(spec);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(plan[i].fan_in()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto seg = params.layer(i);
    for (Eigen::Index j = 0; j < seg.size(); ++j) seg[j] = static_cast<Scalar>(dist(rng));
  }
  return params;
}

template <typename Scalar>
struct BasicBatch {
  RowMatrix<Scalar> inputs;  // batch x input_dim
  std::vector<int> labels;
};

using Batch = BasicBatch<double>;

namespace detail {

inline void check_layout(const std::vector<LayerSlice>& have, const ModelSpec& spec) {
  const auto want = model_layout(spec);
  const std::size_t n = std::max(have.size(), want.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= have.size()) throw ShapeError("parameters are missing layer '" + want[i].name + "'");
    if (i >= want.size()) throw ShapeError("unexpected extra layer '" + have[i].name + "'");
    if (!(have[i] == want[i])) {
      throw ShapeError("layer '" + have[i].name + "' does not match model layer '" + want[i].name +
                       "' (length " + std::to_string(have[i].length) + " vs " +
                       std::to_string(want[i].length) + ")");
    }
  }
}

template <typename Scalar>
void check_finite(const RowMatrix<Scalar>& m, std::size_t layer, const std::string& name) {
  if (!m.allFinite()) {
    throw OverflowError("non-finite activations at layer " + std::to_string(layer) + " ('" + name + "')",
                        static_cast<int>(layer));
  }
}

template <typename Scalar>
using ConstRowMap = Eigen::Map<const RowMatrix<Scalar>>;

// Per-layer state retained for the backward pass.
template <typename Scalar>
struct LayerCache {
  RowMatrix<Scalar> input;                      // batch x in
  RowMatrix<Scalar> pre;                        // dense: batch x out pre-activation
  std::vector<RowMatrix<Scalar>> cols;          // conv: per sample (C*9) x (Ho*Wo)
  std::vector<RowMatrix<Scalar>> conv_pre;      // conv: per sample F x (Ho*Wo)
  std::vector<std::vector<std::size_t>> argmax; // conv: per sample pooled-position -> conv position
};

template <typename Scalar>
RowMatrix<Scalar> im2col(const Scalar* x, const LayerPlan& p) {
  const std::size_t ho = p.conv_h(), wo = p.conv_w();
  RowMatrix<Scalar> cols(static_cast<Eigen::Index>(p.channels * 9), static_cast<Eigen::Index>(ho * wo));
  for (std::size_t c = 0; c < p.channels; ++c)
    for (std::size_t ky = 0; ky < 3; ++ky)
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const auto row = static_cast<Eigen::Index>(c * 9 + ky * 3 + kx);
        for (std::size_t oy = 0; oy < ho; ++oy)
          for (std::size_t ox = 0; ox < wo; ++ox)
            cols(row, static_cast<Eigen::Index>(oy * wo + ox)) =
                x[c * p.height * p.width + (oy + ky) * p.width + (ox + kx)];
      }
  return cols;
}

template <typename Scalar>
RowMatrix<Scalar> layer_forward(const LayerPlan& p, std::span<const Scalar> theta, const RowMatrix<Scalar>& in,
                                 LayerCache<Scalar>* cache) {
  const auto batch = in.rows();
  if (p.kind == LayerPlan::Kind::dense) {
    ConstRowMap<Scalar> w(theta.data(), static_cast<Eigen::Index>(p.out), static_cast<Eigen::Index>(p.in));
    Eigen::Map<const Vec<Scalar>> b(theta.data() + p.weight_count(), static_cast<Eigen::Index>(p.out));
    RowMatrix<Scalar> z = in * w.transpose();
    z.rowwise() += b.transpose();
    if (cache) {
      cache->input = in;
      cache->pre = z;
    }
    if (p.relu) z = z.cwiseMax(Scalar(0));
    return z;
  }

  ConstRowMap<Scalar> w(theta.data(), static_cast<Eigen::Index>(p.filters), static_cast<Eigen::Index>(p.channels * 9));
  Eigen::Map<const Vec<Scalar>> b(theta.data() + p.weight_count(), static_cast<Eigen::Index>(p.filters));
  const std::size_t wo = p.conv_w(), ph = p.pool_h(), pw = p.pool_w();
  RowMatrix<Scalar> out(batch, static_cast<Eigen::Index>(p.out));
  if (cache) {
    cache->input = in;
    cache->cols.resize(static_cast<std::size_t>(batch));
    cache->conv_pre.resize(static_cast<std::size_t>(batch));
    cache->argmax.resize(static_cast<std::size_t>(batch));
  }
  for (Eigen::Index s = 0; s < batch; ++s) {
    RowMatrix<Scalar> cols = im2col<Scalar>(in.row(s).data(), p);
    RowMatrix<Scalar> z = w * cols;
    z.colwise() += b;
    std::vector<std::size_t> arg(p.out);
    for (std::size_t f = 0; f < p.filters; ++f)
      for (std::size_t py = 0; py < ph; ++py)
        for (std::size_t px = 0; px < pw; ++px) {
          std::size_t best = (2 * py) * wo + 2 * px;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t pos = (2 * py + dy) * wo + 2 * px + dx;
              if (z(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(pos)) >
                  z(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(best)))
                best = pos;
            }
          const std::size_t o = f * ph * pw + py * pw + px;
          arg[o] = best;
          // max-pool commutes with ReLU
          out(s, static_cast<Eigen::Index>(o)) =
              std::max(Scalar(0), z(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(best)));
        }
    if (cache) {
      cache->cols[static_cast<std::size_t>(s)] = std::move(cols);
      cache->conv_pre[static_cast<std::size_t>(s)] = std::move(z);
      cache->argmax[static_cast<std::size_t>(s)] = std::move(arg);
    }
  }
  return out;
}

// Accumulates parameter gradients for one layer into `grad` and returns the
// gradient w.r.t. the layer input when `need_input_grad` is set.
template <typename Scalar>
RowMatrix<Scalar> layer_backward(const LayerPlan& p, std::span<const Scalar> theta, const LayerCache<Scalar>& cache,
                                 RowMatrix<Scalar> d_out, std::span<Scalar> grad, bool need_input_grad) {
  if (p.kind == LayerPlan::Kind::dense) {
    if (p.relu) d_out = (cache.pre.array() > Scalar(0)).select(d_out, Scalar(0));
    Eigen::Map<RowMatrix<Scalar>> gw(grad.data(), static_cast<Eigen::Index>(p.out), static_cast<Eigen::Index>(p.in));
    Eigen::Map<Vec<Scalar>> gb(grad.data() + p.weight_count(), static_cast<Eigen::Index>(p.out));
    gw.noalias() = d_out.transpose() * cache.input;
    gb = d_out.colwise().sum().transpose();
    if (!need_input_grad) return {};
    ConstRowMap<Scalar> w(theta.data(), static_cast<Eigen::Index>(p.out), static_cast<Eigen::Index>(p.in));
    return d_out * w;
  }

  const auto batch = cache.input.rows();
  const std::size_t hw = p.conv_h() * p.conv_w();
  ConstRowMap<Scalar> w(theta.data(), static_cast<Eigen::Index>(p.filters), static_cast<Eigen::Index>(p.channels * 9));
  Eigen::Map<RowMatrix<Scalar>> gw(grad.data(), static_cast<Eigen::Index>(p.filters),
                                   static_cast<Eigen::Index>(p.channels * 9));
  Eigen::Map<Vec<Scalar>> gb(grad.data() + p.weight_count(), static_cast<Eigen::Index>(p.filters));
  gw.setZero();
  gb.setZero();
  RowMatrix<Scalar> d_in;
  if (need_input_grad) d_in = RowMatrix<Scalar>::Zero(batch, static_cast<Eigen::Index>(p.in));
  for (Eigen::Index s = 0; s < batch; ++s) {
    const auto& z = cache.conv_pre[static_cast<std::size_t>(s)];
    const auto& arg = cache.argmax[static_cast<std::size_t>(s)];
    RowMatrix<Scalar> dz = RowMatrix<Scalar>::Zero(static_cast<Eigen::Index>(p.filters), static_cast<Eigen::Index>(hw));
    const std::size_t pooled = p.pool_h() * p.pool_w();
    for (std::size_t o = 0; o < p.out; ++o) {
      const auto f = static_cast<Eigen::Index>(o / pooled);
      const auto pos = static_cast<Eigen::Index>(arg[o]);
      if (z(f, pos) > Scalar(0)) dz(f, pos) += d_out(s, static_cast<Eigen::Index>(o));
    }
    const auto& cols = cache.cols[static_cast<std::size_t>(s)];
    gw.noalias() += dz * cols.transpose();
    gb += dz.rowwise().sum();
    if (need_input_grad) {
      RowMatrix<Scalar> dcols = w.transpose() * dz;
      const std::size_t wo = p.conv_w();
      for (std::size_t c = 0; c < p.channels; ++c)
        for (std::size_t ky = 0; ky < 3; ++ky)
          for (std::size_t kx = 0; kx < 3; ++kx)
            for (std::size_t pos = 0; pos < hw; ++pos) {
              const std::size_t oy = pos / wo, ox = pos % wo;
              d_in(s, static_cast<Eigen::Index>(c * p.height * p.width + (oy + ky) * p.width + ox + kx)) +=
                  dcols(static_cast<Eigen::Index>(c * 9 + ky * 3 + kx), static_cast<Eigen::Index>(pos));
            }
    }
  }
  return d_in;
}

template <typename Scalar>
std::span<const Scalar> layer_span(const BasicParamVector<Scalar>& params, std::size_t i) {
  const auto& l = params.layout()[i];
  return {params.values().data() + l.offset, l.length};
}

template <typename Scalar>
void check_batch(const BasicBatch<Scalar>& batch, const ModelSpec& spec) {
  if (batch.inputs.rows() == 0) throw ShapeError("batch is empty");
  if (static_cast<std::size_t>(batch.inputs.rows()) != batch.labels.size()) {
    throw ShapeError("batch has " + std::to_string(batch.inputs.rows()) + " rows but " +
                     std::to_string(batch.labels.size()) + " labels");
  }
  if (static_cast<std::size_t>(batch.inputs.cols()) != spec.input_dim) {
    throw ShapeError("batch width " + std::to_string(batch.inputs.cols()) + " does not match input layer ('" +
                     model_layout(spec).front().name + "', expects " + std::to_string(spec.input_dim) + ")");
  }
}

}  // namespace detail

/// Logits (batch x num_classes).
template <typename Scalar>
RowMatrix<Scalar> forward(const BasicParamVector<Scalar>& params, const ModelSpec& spec,
                          const std::type_identity_t<RowMatrix<Scalar>>& inputs) {
  detail::check_layout(params.layout(), spec);
  if (static_cast<std::size_t>(inputs.cols()) != spec.input_dim) {
    throw ShapeError("input width " + std::to_string(inputs.cols()) + " does not match layer '" +
                     params.layout().front().name + "'");
  }
  const auto plan = detail::make_plan(spec);
  RowMatrix<Scalar> act = inputs;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    act = detail::layer_forward<Scalar>(plan[i], detail::layer_span(params, i), act, nullptr);
    detail::check_finite(act, i, plan[i].name);
  }
  return act;
}

template <typename Scalar>
RowMatrix<Scalar> forward(const BasicParamVector<Scalar>& params, const ModelSpec& spec,
                          const BasicBatch<Scalar>& batch) {
  return forward(params, spec, batch.inputs);
}

/// Row-wise softmax with max subtraction.
template <typename Scalar>
RowMatrix<Scalar> softmax(const RowMatrix<Scalar>& logits) {
  RowMatrix<Scalar> p = logits.colwise() - logits.rowwise().maxCoeff();
  p = p.array().exp();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

/// Lowest index wins ties.
template <typename Derived>
Eigen::Index argmax_row(const Eigen::MatrixBase<Derived>& row) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < row.size(); ++j)
    if (row(j) > row(best)) best = j;
  return best;
}

template <typename Scalar>
struct LossAndGrad {
  Scalar loss;
  BasicParamVector<Scalar> grad;
};

/// Mean cross-entropy over the batch and its gradient in the parameter layout.
template <typename Scalar>
LossAndGrad<Scalar> loss_and_grad(const BasicParamVector<Scalar>& params, const ModelSpec& spec,
                                  const BasicBatch<Scalar>& batch) {
  detail::check_layout(params.layout(), spec);
  detail::check_batch(batch, spec);
  const auto plan = detail::make_plan(spec);
  for (int y : batch.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= spec.num_classes) {
      throw InvalidArgument("label " + std::to_string(y) + " outside [0, " + std::to_string(spec.num_classes) + ")");
    }
  }

  std::vector<detail::LayerCache<Scalar>> caches(plan.size());
  RowMatrix<Scalar> act = batch.inputs;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    act = detail::layer_forward<Scalar>(plan[i], detail::layer_span(params, i), act, &caches[i]);
    detail::check_finite(act, i, plan[i].name);
  }

  const auto n = act.rows();
  const RowMatrix<Scalar> shifted = act.colwise() - act.rowwise().maxCoeff();
  const Vec<Scalar> log_z = shifted.array().exp().rowwise().sum().log().matrix();
  Scalar loss(0);
  RowMatrix<Scalar> d = shifted.array().exp().matrix();
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto y = static_cast<Eigen::Index>(batch.labels[static_cast<std::size_t>(r)]);
    loss += log_z(r) - shifted(r, y);
    d.row(r) /= std::exp(log_z(r));
    d(r, y) -= Scalar(1);
  }
  loss /= static_cast<Scalar>(n);
  d /= static_cast<Scalar>(n);

  auto grad = params.zeros_like();
  for (std::size_t i = plan.size(); i-- > 0;) {
    const auto& l = params.layout()[i];
    std::span<Scalar> g(grad.values().data() + l.offset, l.length);
    d = detail::layer_backward<Scalar>(plan[i], detail::layer_span(params, i), caches[i], std::move(d), g, i > 0);
  }
  return {loss, std::move(grad)};
}

template <typename Scalar>
struct BasicOptimizerState {
  Vec<Scalar> momentum_buffer;
  Scalar lr = Scalar(0.01);
  Scalar momentum = Scalar(0);
  Scalar weight_decay = Scalar(0);

  static BasicOptimizerState for_params(const BasicParamVector<Scalar>& p, Scalar lr, Scalar momentum,
                                        Scalar weight_decay) {
    if (!(lr >= Scalar(0))) throw InvalidArgument("learning rate must be non-negative");
    if (!(momentum >= Scalar(0) && momentum < Scalar(1))) throw InvalidArgument("momentum must lie in [0, 1)");
    if (!(weight_decay >= Scalar(0))) throw InvalidArgument("weight decay must be non-negative");
    return {Vec<Scalar>::Zero(static_cast<Eigen::Index>(p.size())), lr, momentum, weight_decay};
  }
};

using OptimizerState = BasicOptimizerState<double>;

/// v <- m*v + (g + wd*theta); theta <- theta - lr*v.
template <typename Scalar, typename GradDerived>
void sgd_step(BasicParamVector<Scalar>& params, const Eigen::MatrixBase<GradDerived>& grad,
              BasicOptimizerState<Scalar>& opt) {
  if (grad.size() != static_cast<Eigen::Index>(params.size()) ||
      opt.momentum_buffer.size() != static_cast<Eigen::Index>(params.size())) {
    throw ShapeError("sgd_step: gradient/buffer length does not match parameters");
  }
  opt.momentum_buffer = opt.momentum * opt.momentum_buffer + (grad + opt.weight_decay * params.values());
  params.values() -= opt.lr * opt.momentum_buffer;
}

template <typename Scalar>
void sgd_step(BasicParamVector<Scalar>& params, const BasicParamVector<Scalar>& grad,
              BasicOptimizerState<Scalar>& opt) {
  if (!params.same_layout(grad)) throw ShapeError("sgd_step: gradient layout differs from parameters");
  sgd_step(params, grad.values(), opt);
}

/// 0.5 * base * (1 + cos(pi * t / T)).
inline double cosine_annealing_lr(std::size_t t, std::size_t horizon, double base) {
  if (horizon == 0) throw InvalidArgument("cosine annealing horizon must be >= 1");
  if (t > horizon) throw InvalidArgument("cosine annealing step exceeds horizon");
  if (t == horizon) return 0.0;
  return 0.5 * base *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(horizon)));
}

enum class ClassifierMode { all, last2, last };

/// Concatenated classifier-layer values in layout order.
template <typename Scalar>
Vec<Scalar> extract_classifier(const BasicParamVector<Scalar>& params, ClassifierMode mode) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < params.layout().size(); ++i)
    if (params.layout()[i].role == LayerRole::classifier) idx.push_back(i);
  const std::size_t keep = mode == ClassifierMode::all ? idx.size() : mode == ClassifierMode::last2 ? 2 : 1;
  if (idx.size() < keep) {
    throw InvalidArgument("model has " + std::to_string(idx.size()) + " classifier layer(s), mode needs " +
                          std::to_string(keep));
  }
  idx.erase(idx.begin(), idx.end() - static_cast<std::ptrdiff_t>(keep));
  std::size_t total = 0;
  for (auto i : idx) total += params.layout()[i].length;
  Vec<Scalar> out(static_cast<Eigen::Index>(total));
  Eigen::Index pos = 0;
  for (auto i : idx) {
    const auto seg = params.layer(i);
    out.segment(pos, seg.size()) = seg;
    pos += seg.size();
  }
  return out;
}

// Checkpoint format: u64 layer count; per layer u64 name length, name bytes,
// u8 role, u64 offset, u64 length; then the values as f64. All little-endian.
std::vector<std::uint8_t> serialize(const ParamVector& params);
ParamVector deserialize(std::span<const std::uint8_t> bytes);
void save_params(const ParamVector& params, const std::string& path);
ParamVector load_params(const std::string& path);

}  // namespace fedseq
