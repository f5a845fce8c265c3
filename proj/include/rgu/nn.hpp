// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "rgu/rng.hpp"
#include "rgu/tensor.hpp"

namespace rgu::nn {

/// Conditioning label. std::nullopt selects the unconditional embedding row.
using ClassId = std::optional<int>;

/// Shape of the noise-prediction MLP.
///
/// The network maps (x_t, t, class) to a noise estimate with the shape of x_t:
///
///   h_0 = silu(W_0 [x_t ; time_embedding[t-1]] + b_0 + class_embedding[c])
///   h_l = silu(W_l h_{l-1} + b_l)               l = 1 .. H-1
///   out = W_H h_{H-1} + b_H
///
/// silu(z) = z * sigmoid(z), with derivative sigmoid(z) * (1 + z * (1 - sigmoid(z))).
/// The class table has num_classes + 1 rows; the last row is the unconditional one.
/// class_embed_dim must equal hidden_dims[0] since the embedding is added to the
/// first pre-activation.
struct Architecture {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden_dims{64, 64};
  std::size_t num_classes = 5;
  std::size_t num_timesteps = 100;
  std::size_t time_embed_dim = 16;
  std::size_t class_embed_dim = 64;

  /// Throws DomainError when the fields are inconsistent.
  void validate() const;
  std::size_t param_count() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Offsets of each parameter block inside the flat vector.
///
/// Canonical order: for each dense layer (first hidden .. output) its weight
/// matrix row-major as (out, in), then its bias; then the time-embedding table
/// (num_timesteps x time_embed_dim) row-major; then the class-embedding table
/// ((num_classes + 1) x class_embed_dim) row-major. Checkpoints depend on this.
struct ParamLayout {
  struct Dense {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weight = 0;
    std::size_t bias = 0;
  };
  std::vector<Dense> layers;
  std::size_t time_table = 0;
  std::size_t class_table = 0;
  std::size_t total = 0;

  static ParamLayout of(const Architecture& arch);
};

/// Gradient aligned index-for-index with NoisePredictor::params().
struct FlatGrad {
  std::vector<double> values;

  FlatGrad() = default;
  explicit FlatGrad(std::size_t n) : values(n, 0.0) {}
  explicit FlatGrad(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  std::span<const double> view() const { return values; }

  friend bool operator==(const FlatGrad&, const FlatGrad&) = default;
};

/// Unflattened parameters, used for inspection and for building models by hand.
struct DenseLayer {
  Tensor weight;  // (out, in)
  std::vector<double> bias;
};

struct ModelParts {
  std::vector<DenseLayer> layers;
  Tensor time_embedding;   // (num_timesteps, time_embed_dim)
  Tensor class_embedding;  // (num_classes + 1, class_embed_dim)
};

class NoisePredictor {
 public:
  /// All parameters zero.
  explicit NoisePredictor(Architecture arch);
  NoisePredictor(Architecture arch, std::vector<double> params);

  /// Scaled-normal weights (variance 1/fan_in), zero biases, N(0, embed_scale^2) embeddings.
  static NoisePredictor random_init(Architecture arch, Rng& rng, double embed_scale = 1.0);
  static NoisePredictor from_parts(Architecture arch, const ModelParts& parts);

  const Architecture& architecture() const { return arch_; }
  const ParamLayout& layout() const { return layout_; }
  std::span<const double> params() const { return params_; }
  const std::vector<double>& param_vector() const { return params_; }

  ModelParts parts() const;

  /// Returns params - eta * direction.
  NoisePredictor stepped(const FlatGrad& direction, double eta) const;
  NoisePredictor with_params(std::vector<double> params) const;

 private:
  Architecture arch_;
  ParamLayout layout_;
  std::vector<double> params_;
};

double silu(double z);
double silu_derivative(double z);

/// Predicted noise for a batch sharing one timestep and one class label.
/// x_t has shape (batch, input_dim); 1 <= t <= num_timesteps.
Tensor mlp_forward(const NoisePredictor& model, const Tensor& x_t, int t, ClassId class_id);

/// Per-sample timesteps and labels.
Tensor mlp_forward(const NoisePredictor& model, const Tensor& x_t, std::span<const int> t,
                   std::span<const ClassId> class_ids);

struct LossGrad {
  double loss = 0.0;
  FlatGrad grad;
};

/// loss = mean over the batch of the per-sample squared error
/// l_b = (1/input_dim) * ||prediction_b - target_b||^2, with its analytic gradient.
LossGrad mlp_backward(const NoisePredictor& model, const Tensor& batch, const Tensor& targets,
                      std::span<const int> t, std::span<const ClassId> class_ids);

/// Maps (sample index, per-sample loss l_b) to the weight w_b of that sample
/// in the objective sum_b w_b * l_b.
using SampleWeightFn = std::function<double(std::size_t, double)>;

struct WeightedLossGrad {
  std::vector<double> sample_losses;
  FlatGrad grad;  // gradient of sum_b w_b * l_b
};

/// Single forward/backward sweep with a loss-dependent weight per sample.
/// Samples whose weight is exactly zero contribute nothing to the gradient.
WeightedLossGrad weighted_backward(const NoisePredictor& model, const Tensor& batch,
                                   const Tensor& targets, std::span<const int> t,
                                   std::span<const ClassId> class_ids,
                                   const SampleWeightFn& weight);

}  // namespace rgu::nn
