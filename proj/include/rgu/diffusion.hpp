// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rgu/nn.hpp"
#include "rgu/rng.hpp"
#include "rgu/tensor.hpp"

namespace rgu::diffusion {

/// Linear variance schedule. Index k of each vector holds timestep t = k + 1.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alpha_bars;

  double beta(int t) const { return betas.at(static_cast<std::size_t>(t - 1)); }
  double alpha_bar(int t) const { return alpha_bars.at(static_cast<std::size_t>(t - 1)); }
};

inline constexpr int kDefaultSteps = 100;
inline constexpr double kDefaultBetaMin = 1e-4;
inline constexpr double kDefaultBetaMax = 0.1;

/// betas interpolated linearly from beta_min (t = 1) to beta_max (t = T);
/// alpha_bar_t = prod_{j <= t} (1 - beta_j).
NoiseSchedule make_schedule(int T, double beta_min, double beta_max);

/// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps, row by row.
Tensor q_sample(const Tensor& x0, std::span<const int> t, const Tensor& eps,
                const NoiseSchedule& schedule);

/// One draw of per-sample timesteps (uniform in 1..T) and standard-normal noise.
struct NoiseDraw {
  std::vector<int> t;
  Tensor eps;
};

/// Draws t for every sample first, then eps row by row.
NoiseDraw draw_noise(std::size_t batch, std::size_t dim, const NoiseSchedule& schedule, Rng& rng);

/// Inputs and targets of the epsilon-prediction regression for one draw.
struct DenoisingBatch {
  Tensor x_t;
  Tensor eps;
  std::vector<int> t;
};

DenoisingBatch make_denoising_batch(const Tensor& x0, const NoiseSchedule& schedule, Rng& rng);

/// Mean over the batch of ||eps - e_theta(x_t, t, c)||^2 / dim and its gradient.
nn::LossGrad diffusion_loss(const nn::NoisePredictor& model, const Tensor& x0_batch,
                            std::span<const nn::ClassId> class_ids, const NoiseSchedule& schedule,
                            Rng& rng);

/// Per-sample losses l(z) for one noise draw, without gradients.
std::vector<double> per_sample_loss(const nn::NoisePredictor& model, const Tensor& x0_batch,
                                    std::span<const nn::ClassId> class_ids,
                                    const NoiseSchedule& schedule, Rng& rng);

struct SamplerOutput {
  Tensor samples;
  std::vector<Tensor> trajectory;  // x_T .. x_1 when requested
  std::uint64_t seed = 0;
};

/// Ancestral sampling with fixed reverse variance sigma_t^2 = beta_t:
///   x_{t-1} = (x_t - beta_t / sqrt(1 - alpha_bar_t) * e_theta(x_t, t)) / sqrt(1 - beta_t)
///             + sigma_t * z,     z = 0 at t = 1.
SamplerOutput ddpm_sample(const nn::NoisePredictor& model, nn::ClassId class_id, std::size_t n,
                          const NoiseSchedule& schedule, Rng& rng, bool keep_trajectory = false);

}  // namespace rgu::diffusion
