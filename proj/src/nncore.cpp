#include "mcaae/nncore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "mcaae/error.hpp"

namespace mcaae {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv_mix(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffU;
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t mask_hash(double keep_prob, const std::vector<std::vector<std::uint8_t>>& bits) {
  std::uint64_t h = fnv_mix(kFnvOffset, std::bit_cast<std::uint64_t>(keep_prob));
  for (const auto& layer : bits) {
    h = fnv_mix(h, layer.size());
    for (std::uint8_t b : layer) {
      h ^= b;
      h *= kFnvPrime;
    }
  }
  return h;
}

void apply_activation(Activation act, const Matrix& pre, Matrix& out) {
  switch (act) {
    case Activation::identity:
      out = pre;
      break;
    case Activation::relu:
      out = pre.cwiseMax(0.0);
      break;
    case Activation::sigmoid:
      out = pre.unaryExpr([](double v) { return sigmoid(v); });
      break;
  }
}

// d(activation)/d(pre), evaluated elementwise.
Matrix activation_derivative(Activation act, const Matrix& pre) {
  switch (act) {
    case Activation::identity:
      return Matrix::Ones(pre.rows(), pre.cols());
    case Activation::relu:
      return pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::sigmoid:
      return pre.unaryExpr([](double v) {
        const double s = sigmoid(v);
        return s * (1.0 - s);
      });
  }
  return {};
}

void check_batch_mask(const Network& net, const BatchMask& mask, Eigen::Index batch) {
  if (mask.scale.size() != net.layer_count()) throw DimensionError("batch mask layer count does not match network");
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const Matrix& s = mask.scale[i];
    if (!net.dropout_eligible(i)) {
      if (s.size() != 0) throw DimensionError("batch mask scales the last layer");
      continue;
    }
    if (s.size() == 0) continue;
    if (static_cast<std::size_t>(s.rows()) != net.layers()[i].out_dim() || s.cols() != batch) {
      throw DimensionError("batch mask for layer " + std::to_string(i) + " has the wrong shape");
    }
  }
}

Matrix as_column(const Tensor& x) {
  Matrix m(static_cast<Eigen::Index>(x.size()), 1);
  m.col(0) = x.flat();
  return m;
}

}  // namespace

Rng substream(std::uint64_t seed, std::initializer_list<std::uint64_t> indices) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (std::uint64_t i : indices) {
    words.push_back(static_cast<std::uint32_t>(i));
    words.push_back(static_cast<std::uint32_t>(i >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double mx = logits.col(c).maxCoeff();
    out.col(c) = (logits.col(c).array() - mx).exp().matrix();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

Network::Network(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ValidationError("network needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DenseLayer& l = layers_[i];
    if (l.weights.rows() == 0 || l.weights.cols() == 0) throw DimensionError("layer with zero width");
    if (l.bias.size() != l.weights.rows()) {
      throw DimensionError("layer " + std::to_string(i) + ": bias length differs from output width");
    }
    if (i > 0 && layers_[i - 1].out_dim() != l.in_dim()) {
      throw DimensionError("layer " + std::to_string(i) + ": input width does not chain with previous layer");
    }
    if (!l.weights.allFinite() || !l.bias.allFinite()) {
      throw ValidationError("layer " + std::to_string(i) + " has non-finite parameters");
    }
  }
}

Network Network::glorot(const std::vector<std::size_t>& widths, const std::vector<Activation>& activations,
                        Rng& rng) {
  if (widths.size() != activations.size() + 1) throw ValidationError("need one activation per layer");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(widths[i]);
    const auto out = static_cast<Eigen::Index>(widths[i + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer;
    layer.weights.resize(out, in);
    // Row-major fill so the draw order matches the checkpoint layout.
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = dist(rng);
    }
    layer.bias = Vector::Zero(out);
    layer.activation = activations[i];
    layers.push_back(std::move(layer));
  }
  return Network(std::move(layers));
}

std::size_t Network::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

bool operator==(const Network& a, const Network& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    const DenseLayer& x = a.layers_[i];
    const DenseLayer& y = b.layers_[i];
    if (x.activation != y.activation || x.weights.rows() != y.weights.rows() ||
        x.weights.cols() != y.weights.cols() || x.weights != y.weights || x.bias != y.bias) {
      return false;
    }
  }
  return true;
}

DropoutMask::DropoutMask(double keep_prob, std::vector<std::vector<std::uint8_t>> keep_bits)
    : keep_prob_(keep_prob), keep_bits_(std::move(keep_bits)) {
  if (!(keep_prob_ > 0.0 && keep_prob_ <= 1.0)) throw ValidationError("keep_prob must lie in (0, 1]");
  for (const auto& layer : keep_bits_) {
    for (std::uint8_t b : layer) {
      if (b > 1) throw ValidationError("dropout mask bits must be 0 or 1");
    }
  }
  id_ = mask_hash(keep_prob_, keep_bits_);
}

void DropoutMask::check_matches(const Network& net) const {
  if (keep_bits_.size() != net.layer_count()) throw DimensionError("dropout mask layer count does not match network");
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const std::size_t expected = net.dropout_eligible(i) ? net.layers()[i].out_dim() : 0;
    if (keep_bits_[i].size() != expected) {
      throw DimensionError("dropout mask for layer " + std::to_string(i) + " has length " +
                           std::to_string(keep_bits_[i].size()) + ", expected " + std::to_string(expected));
    }
  }
}

DropoutMask sample_dropout_mask(const Network& net, double keep_prob, Rng& rng) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ValidationError("keep_prob must lie in (0, 1]");
  std::bernoulli_distribution keep(keep_prob);
  std::vector<std::vector<std::uint8_t>> bits(net.layer_count());
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    if (!net.dropout_eligible(i)) continue;
    bits[i].resize(net.layers()[i].out_dim());
    for (auto& b : bits[i]) b = keep(rng) ? 1 : 0;
  }
  return DropoutMask(keep_prob, std::move(bits));
}

DropoutMask full_mask(const Network& net) {
  std::vector<std::vector<std::uint8_t>> bits(net.layer_count());
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    if (net.dropout_eligible(i)) bits[i].assign(net.layers()[i].out_dim(), 1);
  }
  return DropoutMask(1.0, std::move(bits));
}

BatchMask BatchMask::from_masks(const Network& net, std::span<const DropoutMask* const> per_column) {
  BatchMask out;
  out.scale.resize(net.layer_count());
  const auto batch = static_cast<Eigen::Index>(per_column.size());
  for (const DropoutMask* m : per_column) m->check_matches(net);
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    if (!net.dropout_eligible(i)) continue;
    Matrix s(static_cast<Eigen::Index>(net.layers()[i].out_dim()), batch);
    for (Eigen::Index c = 0; c < batch; ++c) {
      const DropoutMask& m = *per_column[static_cast<std::size_t>(c)];
      const double inv = 1.0 / m.keep_prob();
      const auto& bits = m.keep_bits()[i];
      for (Eigen::Index r = 0; r < s.rows(); ++r) s(r, c) = bits[static_cast<std::size_t>(r)] ? inv : 0.0;
    }
    out.scale[i] = std::move(s);
  }
  return out;
}

BatchMask BatchMask::sample(const Network& net, double keep_prob, std::size_t batch, Rng& rng) {
  std::vector<DropoutMask> masks;
  masks.reserve(batch);
  for (std::size_t c = 0; c < batch; ++c) masks.push_back(sample_dropout_mask(net, keep_prob, rng));
  std::vector<const DropoutMask*> ptrs;
  for (const auto& m : masks) ptrs.push_back(&m);
  return from_masks(net, ptrs);
}

std::uint64_t BatchMask::column_id(std::size_t column, double keep_prob) const {
  std::vector<std::vector<std::uint8_t>> bits(scale.size());
  const auto c = static_cast<Eigen::Index>(column);
  for (std::size_t i = 0; i < scale.size(); ++i) {
    if (scale[i].size() == 0) continue;
    bits[i].resize(static_cast<std::size_t>(scale[i].rows()));
    for (Eigen::Index r = 0; r < scale[i].rows(); ++r) bits[i][static_cast<std::size_t>(r)] = scale[i](r, c) > 0.0;
  }
  return mask_hash(keep_prob, bits);
}

ParamGradients ParamGradients::zeros_like(const Network& net) {
  ParamGradients g;
  for (const auto& l : net.layers()) {
    g.weights.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
    g.bias.push_back(Vector::Zero(l.bias.size()));
  }
  return g;
}

ActivationTrace forward_batch(const Network& net, const Matrix& x, const BatchMask* mask) {
  if (static_cast<std::size_t>(x.rows()) != net.input_dim()) {
    throw DimensionError("input has " + std::to_string(x.rows()) + " rows, network expects " +
                         std::to_string(net.input_dim()));
  }
  if (!x.allFinite()) throw ValidationError("network input contains non-finite values");
  if (mask) check_batch_mask(net, *mask, x.cols());

  ActivationTrace trace;
  trace.pre.reserve(net.layer_count());
  trace.outputs.reserve(net.layer_count() + 1);
  trace.outputs.push_back(x);
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const DenseLayer& l = net.layers()[i];
    Matrix pre(l.weights.rows(), x.cols());
    pre.noalias() = l.weights * trace.outputs.back();
    pre.colwise() += l.bias;
    Matrix out;
    apply_activation(l.activation, pre, out);
    if (mask && mask->scale[i].size() != 0) out.array() *= mask->scale[i].array();
    trace.pre.push_back(std::move(pre));
    trace.outputs.push_back(std::move(out));
  }
  return trace;
}

Matrix evaluate_batch(const Network& net, const Matrix& x, const BatchMask* mask) {
  if (static_cast<std::size_t>(x.rows()) != net.input_dim()) {
    throw DimensionError("input has " + std::to_string(x.rows()) + " rows, network expects " +
                         std::to_string(net.input_dim()));
  }
  if (!x.allFinite()) throw ValidationError("network input contains non-finite values");
  if (mask) check_batch_mask(net, *mask, x.cols());
  Matrix cur = x;
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const DenseLayer& l = net.layers()[i];
    Matrix pre(l.weights.rows(), cur.cols());
    pre.noalias() = l.weights * cur;
    pre.colwise() += l.bias;
    apply_activation(l.activation, pre, cur);
    if (mask && mask->scale[i].size() != 0) cur.array() *= mask->scale[i].array();
  }
  return cur;
}

ParamGradients backward_batch(const Network& net, const ActivationTrace& trace, const Matrix& grad_output,
                              const BatchMask* mask) {
  if (trace.pre.size() != net.layer_count() || trace.outputs.size() != net.layer_count() + 1) {
    throw ValidationError("activation trace was not produced by this network");
  }
  const Eigen::Index batch = trace.outputs.front().cols();
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    if (static_cast<std::size_t>(trace.pre[i].rows()) != net.layers()[i].out_dim() || trace.pre[i].cols() != batch) {
      throw ValidationError("activation trace was not produced by this network");
    }
  }
  if (grad_output.rows() != trace.output().rows() || grad_output.cols() != batch) {
    throw DimensionError("output gradient shape does not match the trace");
  }
  if (mask) check_batch_mask(net, *mask, batch);

  ParamGradients g = ParamGradients::zeros_like(net);
  Matrix delta = grad_output;
  for (std::size_t li = net.layer_count(); li-- > 0;) {
    const DenseLayer& l = net.layers()[li];
    if (mask && mask->scale[li].size() != 0) delta.array() *= mask->scale[li].array();
    delta.array() *= activation_derivative(l.activation, trace.pre[li]).array();
    g.weights[li].noalias() = delta * trace.outputs[li].transpose();
    g.bias[li] = delta.rowwise().sum();
    Matrix next(l.weights.cols(), batch);
    next.noalias() = l.weights.transpose() * delta;
    delta = std::move(next);
  }
  g.input = std::move(delta);
  return g;
}

ActivationTrace forward(const Network& net, const Tensor& x, const DropoutMask* mask) {
  if (mask) {
    const DropoutMask* ptrs[] = {mask};
    const BatchMask bm = BatchMask::from_masks(net, ptrs);
    return forward_batch(net, as_column(x), &bm);
  }
  return forward_batch(net, as_column(x), nullptr);
}

ParamGradients backward(const Network& net, const ActivationTrace& trace, const Tensor& grad_output,
                        const DropoutMask* mask) {
  if (mask) {
    const DropoutMask* ptrs[] = {mask};
    const BatchMask bm = BatchMask::from_masks(net, ptrs);
    return backward_batch(net, trace, as_column(grad_output), &bm);
  }
  return backward_batch(net, trace, as_column(grad_output), nullptr);
}

Vector evaluate(const Network& net, const Vector& x, const DropoutMask* mask) {
  Matrix col = x;
  if (mask) {
    const DropoutMask* ptrs[] = {mask};
    const BatchMask bm = BatchMask::from_masks(net, ptrs);
    return evaluate_batch(net, col, &bm).col(0);
  }
  return evaluate_batch(net, col, nullptr).col(0);
}

AdamState AdamState::for_blocks(const std::vector<std::size_t>& block_sizes, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (std::size_t n : block_sizes) {
    s.first_moment.emplace_back(n, 0.0);
    s.second_moment.emplace_back(n, 0.0);
  }
  return s;
}

AdamState AdamState::for_network(const Network& net, double learning_rate) {
  std::vector<std::size_t> sizes;
  for (const auto& l : net.layers()) {
    sizes.push_back(static_cast<std::size_t>(l.weights.size()));
    sizes.push_back(static_cast<std::size_t>(l.bias.size()));
  }
  return for_blocks(sizes, learning_rate);
}

void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw DimensionError("adam: parameter, gradient and moment block counts differ");
  }
  std::size_t flat = 0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size() || params[b].size() != state.first_moment[b].size() ||
        params[b].size() != state.second_moment[b].size()) {
      throw DimensionError("adam: block " + std::to_string(b) + " sizes differ");
    }
    for (std::size_t i = 0; i < grads[b].size(); ++i, ++flat) {
      if (!std::isfinite(grads[b][i])) {
        throw TrainingError("non-finite gradient at parameter index " + std::to_string(flat));
      }
    }
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      const double g = grads[b][i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      params[b][i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

void adam_step(Network& net, const ParamGradients& grads, AdamState& state) {
  if (grads.weights.size() != net.layer_count() || grads.bias.size() != net.layer_count()) {
    throw DimensionError("gradient layer count does not match network");
  }
  std::vector<std::span<double>> p;
  std::vector<std::span<const double>> g;
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    DenseLayer& l = net.layers()[i];
    if (grads.weights[i].rows() != l.weights.rows() || grads.weights[i].cols() != l.weights.cols()) {
      throw DimensionError("gradient shape differs from layer " + std::to_string(i));
    }
    p.emplace_back(l.weights.data(), static_cast<std::size_t>(l.weights.size()));
    g.emplace_back(grads.weights[i].data(), static_cast<std::size_t>(grads.weights[i].size()));
    p.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    g.emplace_back(grads.bias[i].data(), static_cast<std::size_t>(grads.bias[i].size()));
  }
  adam_step(p, g, state);
}

}  // namespace mcaae
