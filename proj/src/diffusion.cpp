// SPDX-License-Identifier: Apache-2.0
#include "rgu/diffusion.hpp"

#include <cmath>
#include <string>

#include "rgu/errors.hpp"

namespace rgu::diffusion {

NoiseSchedule make_schedule(int T, double beta_min, double beta_max) {
  if (T < 1) throw DomainError("schedule: T must be at least 1, got " + std::to_string(T));
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0)) {
    throw DomainError("schedule: need 0 < beta_min <= beta_max < 1");
  }
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(static_cast<std::size_t>(T));
  s.alpha_bars.resize(static_cast<std::size_t>(T));
  double running = 1.0;
  for (int k = 0; k < T; ++k) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(T - 1);
    const double beta = beta_min + (beta_max - beta_min) * frac;
    running *= 1.0 - beta;
    s.betas[static_cast<std::size_t>(k)] = beta;
    s.alpha_bars[static_cast<std::size_t>(k)] = running;
  }
  return s;
}

namespace {

void check_t(const NoiseSchedule& s, int t) {
  if (t < 1 || t > s.T) {
    throw DomainError("diffusion: timestep " + std::to_string(t) + " outside [1, " +
                      std::to_string(s.T) + "]");
  }
}

}  // namespace

Tensor q_sample(const Tensor& x0, std::span<const int> t, const Tensor& eps,
                const NoiseSchedule& schedule) {
  if (x0.shape() != eps.shape() || x0.rank() != 2) {
    throw ShapeError("q_sample: x0 " + shape_string(x0.shape()) + " vs eps " +
                     shape_string(eps.shape()));
  }
  if (t.size() != x0.rows()) throw ShapeError("q_sample: one timestep per sample required");
  Tensor out(x0.shape());
  for (std::size_t b = 0; b < x0.rows(); ++b) {
    check_t(schedule, t[b]);
    const double ab = schedule.alpha_bar(t[b]);
    const double signal = std::sqrt(ab);
    const double noise = std::sqrt(1.0 - ab);
    const auto xr = x0.row(b);
    const auto er = eps.row(b);
    auto orow = out.row(b);
    for (std::size_t j = 0; j < xr.size(); ++j) orow[j] = signal * xr[j] + noise * er[j];
  }
  return out;
}

NoiseDraw draw_noise(std::size_t batch, std::size_t dim, const NoiseSchedule& schedule, Rng& rng) {
  NoiseDraw d;
  d.t.resize(batch);
  for (auto& t : d.t) t = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(schedule.T)));
  d.eps = Tensor({batch, dim});
  for (double& v : d.eps.data()) v = rng.normal();
  return d;
}

DenoisingBatch make_denoising_batch(const Tensor& x0, const NoiseSchedule& schedule, Rng& rng) {
  if (x0.rank() != 2 || x0.rows() == 0) throw DomainError("diffusion: empty batch");
  NoiseDraw d = draw_noise(x0.rows(), x0.cols(), schedule, rng);
  DenoisingBatch b;
  b.x_t = q_sample(x0, d.t, d.eps, schedule);
  b.eps = std::move(d.eps);
  b.t = std::move(d.t);
  return b;
}

nn::LossGrad diffusion_loss(const nn::NoisePredictor& model, const Tensor& x0_batch,
                            std::span<const nn::ClassId> class_ids, const NoiseSchedule& schedule,
                            Rng& rng) {
  const DenoisingBatch b = make_denoising_batch(x0_batch, schedule, rng);
  return nn::mlp_backward(model, b.x_t, b.eps, b.t, class_ids);
}

std::vector<double> per_sample_loss(const nn::NoisePredictor& model, const Tensor& x0_batch,
                                    std::span<const nn::ClassId> class_ids,
                                    const NoiseSchedule& schedule, Rng& rng) {
  const DenoisingBatch b = make_denoising_batch(x0_batch, schedule, rng);
  return nn::weighted_backward(model, b.x_t, b.eps, b.t, class_ids,
                               [](std::size_t, double) { return 0.0; })
      .sample_losses;
}

SamplerOutput ddpm_sample(const nn::NoisePredictor& model, nn::ClassId class_id, std::size_t n,
                          const NoiseSchedule& schedule, Rng& rng, bool keep_trajectory) {
  if (n == 0) throw DomainError("ddpm_sample: n must be at least 1");
  const std::size_t dim = model.architecture().input_dim;
  SamplerOutput out;
  out.seed = rng.seed();
  Tensor x({n, dim});
  for (double& v : x.data()) v = rng.normal();
  for (int t = schedule.T; t >= 1; --t) {
    if (keep_trajectory) out.trajectory.push_back(x);
    const Tensor eps_hat = nn::mlp_forward(model, x, t, class_id);
    const double beta = schedule.beta(t);
    const double coef = beta / std::sqrt(1.0 - schedule.alpha_bar(t));
    const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
    const double sigma = std::sqrt(beta);
    auto xs = x.data();
    const auto es = eps_hat.data();
    for (std::size_t i = 0; i < xs.size(); ++i) {
      xs[i] = inv_sqrt_alpha * (xs[i] - coef * es[i]);
      if (t > 1) xs[i] += sigma * rng.normal();
    }
  }
  out.samples = std::move(x);
  return out;
}

}  // namespace rgu::diffusion
