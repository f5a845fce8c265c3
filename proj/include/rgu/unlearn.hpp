// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rgu/data.hpp"
#include "rgu/diffusion.hpp"
#include "rgu/nn.hpp"
#include "rgu/rng.hpp"

namespace rgu::unlearn {

using nn::FlatGrad;

/// How the forgetting and remaining gradients are combined into one step.
enum class Strategy {
  kRestricted,  // mutual projection when the two gradients conflict
  kGradDiff,    // raw sum of both gradients
  kFinetune,    // remaining gradient only
};

std::string to_string(Strategy s);
/// Accepts "restricted", "graddiff", "finetune". Throws DomainError otherwise.
Strategy parse_strategy(const std::string& name);

struct UnlearnConfig {
  double lambda = 5.0;  // forgetting weight
  double alpha = 1.0;   // per-sample loss truncation threshold
  double eta = 1e-3;    // step size
  std::size_t iterations = 2000;
  std::size_t batch_forget = 64;
  std::size_t batch_remain = 64;
  Strategy strategy = Strategy::kRestricted;
  /// Draw remaining minibatches with an equal share per class present in D_r.
  bool stratified_remain = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Result of combining one (grad_f, grad_r) pair.
struct RestrictedUpdate {
  FlatGrad delta_f;
  FlatGrad delta_r;
  FlatGrad combined;
  bool conflicted = false;
  double dot = 0.0;
  double norm_f = 0.0;
  double norm_r = 0.0;
};

/// g - ((g . onto) / ||onto||^2) onto. Throws DegenerateDirectionError for onto = 0.
FlatGrad project_away(const FlatGrad& g, const FlatGrad& onto);

/// Mutual projection when grad_f . grad_r < 0, otherwise the raw pair.
/// Throws DegenerateDirectionError when both gradients are zero.
RestrictedUpdate restricted_gradient(const FlatGrad& grad_f, const FlatGrad& grad_r);

/// Update direction chosen by a strategy for one gradient pair.
struct Combined {
  FlatGrad direction;
  bool conflicted = false;  // grad_f . grad_r < 0
  /// The direction is exactly zero (anti-parallel or vanishing gradients).
  bool noop = false;
};

/// restricted: restricted_gradient, with both-zero gradients giving a no-op
/// instead of an error; graddiff: grad_f + grad_r; finetune: grad_r.
Combined combine_gradients(Strategy strategy, const FlatGrad& grad_f, const FlatGrad& grad_r);

/// The clamp applied to per-sample losses l_b on the forgetting batch.
struct Truncation {
  double loss_f = 0.0;          // -lambda * mean_b min(l_b, alpha)
  std::vector<double> weights;  // d loss_f / d l_b: -lambda / B below alpha, else 0
  double truncated_fraction = 0.0;
};

Truncation truncate_losses(std::span<const double> sample_losses, double lambda, double alpha);

struct ForgettingLoss {
  double loss_f = 0.0;  // -lambda * mean_z min(l(z), alpha)
  FlatGrad grad_f;
  double raw_mse = 0.0;             // mean_z l(z), untruncated
  double truncated_fraction = 0.0;  // share of samples with l(z) >= alpha
};

/// Truncated negative diffusion loss on the forgetting batch. Samples whose
/// loss already reached alpha contribute no gradient.
ForgettingLoss forgetting_loss(const nn::NoisePredictor& model, const data::LabeledDataset& forget_batch,
                               const diffusion::NoiseSchedule& schedule, double lambda,
                               double alpha, Rng& rng);

struct StepReport {
  std::size_t iteration = 0;
  double loss_r = 0.0;
  double loss_f = 0.0;
  double raw_forget_mse = 0.0;
  bool conflicted = false;
  double dot = 0.0;
  double truncated_fraction = 0.0;
  double norm_f = 0.0;
  double norm_r = 0.0;
  /// Set when the combined direction vanished and parameters were left unchanged.
  bool noop = false;
};

struct StepResult {
  nn::NoisePredictor model;
  StepReport report;
};

/// One unlearning step on explicit minibatches. Always evaluates both losses
/// (remaining first) so every strategy consumes the rng identically.
StepResult unlearn_step(const nn::NoisePredictor& model, const data::LabeledDataset& forget_batch,
                        const data::LabeledDataset& remain_batch,
                        const diffusion::NoiseSchedule& schedule, const UnlearnConfig& config,
                        Rng& rng);

struct RunResult {
  nn::NoisePredictor model;
  std::vector<StepReport> trajectory;
};

/// config.iterations steps, each on freshly drawn minibatches (with replacement).
RunResult unlearn_run(const nn::NoisePredictor& model, const data::LabeledDataset& forget_set,
                      const data::LabeledDataset& remain_set,
                      const diffusion::NoiseSchedule& schedule, const UnlearnConfig& config,
                      Rng& rng);

/// Minibatch draw used by unlearn_run. With stratify, slot i is taken from the
/// (i mod m)-th class present in the set, so every class gets an equal share.
data::LabeledDataset draw_minibatch(const data::LabeledDataset& set, std::size_t size,
                                    bool stratify, Rng& rng);

/// q-quantile (linear interpolation) of per-sample diffusion losses on a set.
/// Used to pick the truncation threshold alpha at a pretrained checkpoint.
double calibrate_alpha(const nn::NoisePredictor& model, const data::LabeledDataset& remain_set,
                       const diffusion::NoiseSchedule& schedule, double quantile, Rng& rng);

inline constexpr const char* kTrajectoryCsvHeader =
    "iteration,loss_r,loss_f,raw_forget_mse,conflicted,dot,truncated_fraction";

std::string trajectory_csv(const std::vector<StepReport>& trajectory);

}  // namespace rgu::unlearn
