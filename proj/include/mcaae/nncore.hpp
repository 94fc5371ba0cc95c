#pragma once

// Minimal dense network engine: explicit dropout masks, batched forward and
// backward passes, and Adam.
//
// Batches are column-major Eigen matrices with one sample per column. Dropout
// is "inverted": kept units are scaled by 1/keep_prob so that running without
// a mask needs no rescaling.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

#include "mcaae/tensor.hpp"

namespace mcaae {

using Rng = std::mt19937_64;

/// Independent generator for the stream identified by (seed, indices...).
Rng substream(std::uint64_t seed, std::initializer_list<std::uint64_t> indices);

enum class Activation : std::uint8_t { identity = 0, relu = 1, sigmoid = 2 };

struct DenseLayer {
  Matrix weights;  // [out_dim x in_dim]
  Vector bias;     // [out_dim]
  Activation activation = Activation::identity;

  std::size_t in_dim() const noexcept { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out_dim() const noexcept { return static_cast<std::size_t>(weights.rows()); }
};

/// Ordered stack of dense layers. Every layer except the last is
/// dropout-eligible; the last layer's outputs are never masked.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<DenseLayer> layers);

  /// Glorot-uniform weights, zero bias. `widths` has one more entry than
  /// `activations`.
  static Network glorot(const std::vector<std::size_t>& widths, const std::vector<Activation>& activations,
                        Rng& rng);

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::size_t input_dim() const { return layers_.front().in_dim(); }
  std::size_t output_dim() const { return layers_.back().out_dim(); }
  bool dropout_eligible(std::size_t layer) const noexcept { return layer + 1 < layers_.size(); }
  std::size_t parameter_count() const noexcept;

  friend bool operator==(const Network& a, const Network& b);

 private:
  std::vector<DenseLayer> layers_;
};

/// Frozen per-layer keep bits of one sampled sub-network.
///
/// `keep_bits()[i]` holds the bits of layer i's outputs when layer i is
/// dropout-eligible and is empty otherwise.
class DropoutMask {
 public:
  DropoutMask(double keep_prob, std::vector<std::vector<std::uint8_t>> keep_bits);

  double keep_prob() const noexcept { return keep_prob_; }
  const std::vector<std::vector<std::uint8_t>>& keep_bits() const noexcept { return keep_bits_; }
  /// Content hash; equal masks have equal ids.
  std::uint64_t id() const noexcept { return id_; }
  /// Throws DimensionError unless the mask fits `net`.
  void check_matches(const Network& net) const;

  friend bool operator==(const DropoutMask& a, const DropoutMask& b) {
    return a.keep_prob_ == b.keep_prob_ && a.keep_bits_ == b.keep_bits_;
  }

 private:
  double keep_prob_;
  std::vector<std::vector<std::uint8_t>> keep_bits_;
  std::uint64_t id_;
};

DropoutMask sample_dropout_mask(const Network& net, double keep_prob, Rng& rng);
/// Mask that keeps every unit (keep_prob = 1).
DropoutMask full_mask(const Network& net);

/// Per-column output multipliers (0 or 1/keep_prob) for a batch. Entry i is an
/// [out_dim_i x batch] matrix for dropout-eligible layers and empty otherwise.
struct BatchMask {
  std::vector<Matrix> scale;

  static BatchMask from_masks(const Network& net, std::span<const DropoutMask* const> per_column);
  static BatchMask sample(const Network& net, double keep_prob, std::size_t batch, Rng& rng);
  /// Hash of the multipliers applied to one column, comparable with DropoutMask::id().
  std::uint64_t column_id(std::size_t column, double keep_prob) const;
};

struct ActivationTrace {
  std::vector<Matrix> pre;      // pre-activation of layer i
  std::vector<Matrix> outputs;  // outputs[0] is the input, outputs[i+1] the masked output of layer i

  const Matrix& output() const { return outputs.back(); }
};

struct ParamGradients {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;
  Matrix input;  // gradient with respect to the network input

  static ParamGradients zeros_like(const Network& net);
};

/// Batched forward pass. `mask` may be null (no dropout).
ActivationTrace forward_batch(const Network& net, const Matrix& x, const BatchMask* mask = nullptr);

/// Gradients summed over the batch columns.
ParamGradients backward_batch(const Network& net, const ActivationTrace& trace, const Matrix& grad_output,
                              const BatchMask* mask = nullptr);

/// Single-sample forward pass on a rank-1 tensor (or any tensor of input_dim elements).
ActivationTrace forward(const Network& net, const Tensor& x, const DropoutMask* mask = nullptr);
ParamGradients backward(const Network& net, const ActivationTrace& trace, const Tensor& grad_output,
                        const DropoutMask* mask = nullptr);

/// Output-only helpers that skip storing the full trace.
Matrix evaluate_batch(const Network& net, const Matrix& x, const BatchMask* mask = nullptr);
Vector evaluate(const Network& net, const Vector& x, const DropoutMask* mask = nullptr);

struct AdamState {
  std::uint64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Zero moments shaped like the given parameter blocks.
  static AdamState for_blocks(const std::vector<std::size_t>& block_sizes, double learning_rate);
  static AdamState for_network(const Network& net, double learning_rate);
};

/// Bias-corrected Adam update over parameter blocks. All gradients are checked
/// for finiteness before anything is modified; a TrainingError names the first
/// offending flat parameter index.
void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state);
void adam_step(Network& net, const ParamGradients& grads, AdamState& state);

double sigmoid(double x);
/// Numerically stable softmax of each column.
Matrix softmax_columns(const Matrix& logits);

}  // namespace mcaae
