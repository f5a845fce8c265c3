// SPDX-License-Identifier: Apache-2.0
#include "rgu/unlearn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rgu/errors.hpp"
#include "rgu/format.hpp"

namespace rgu::unlearn {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kRestricted: return "restricted";
    case Strategy::kGradDiff: return "graddiff";
    case Strategy::kFinetune: return "finetune";
  }
  return "unknown";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "restricted") return Strategy::kRestricted;
  if (name == "graddiff") return Strategy::kGradDiff;
  if (name == "finetune") return Strategy::kFinetune;
  throw DomainError("unknown strategy '" + name + "' (expected restricted, graddiff or finetune)");
}

void UnlearnConfig::validate() const {
  if (!(lambda >= 0.0)) throw DomainError("unlearn.lambda must be >= 0");
  if (!(alpha > 0.0)) throw DomainError("unlearn.alpha must be > 0");
  if (!(eta > 0.0)) throw DomainError("unlearn.eta must be > 0");
  if (iterations < 1) throw DomainError("unlearn.iterations must be >= 1");
  if (batch_forget < 1) throw DomainError("unlearn.batch_forget must be >= 1");
  if (batch_remain < 1) throw DomainError("unlearn.batch_remain must be >= 1");
}

namespace {

void check_lengths(const FlatGrad& a, const FlatGrad& b, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": length " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
}

bool all_zero(const FlatGrad& g) {
  return std::all_of(g.values.begin(), g.values.end(), [](double v) { return v == 0.0; });
}

FlatGrad sum(const FlatGrad& a, const FlatGrad& b) {
  FlatGrad out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.values[i] = a.values[i] + b.values[i];
  return out;
}

}  // namespace

FlatGrad project_away(const FlatGrad& g, const FlatGrad& onto) {
  check_lengths(g, onto, "project_away");
  const double nn = squared_norm(onto.view());
  if (nn == 0.0) throw DegenerateDirectionError("project_away: zero direction");
  const double coef = dot(g.view(), onto.view()) / nn;
  FlatGrad out = g;
  axpy(-coef, onto.view(), out.values);
  return out;
}

RestrictedUpdate restricted_gradient(const FlatGrad& grad_f, const FlatGrad& grad_r) {
  check_lengths(grad_f, grad_r, "restricted_gradient");
  RestrictedUpdate u;
  u.norm_f = norm(grad_f.view());
  u.norm_r = norm(grad_r.view());
  if (u.norm_f == 0.0 && u.norm_r == 0.0) {
    throw DegenerateDirectionError("restricted_gradient: both gradients are zero");
  }
  u.dot = dot(grad_f.view(), grad_r.view());
  if (u.dot < 0.0) {
    u.conflicted = true;
    u.delta_f = project_away(grad_f, grad_r);
    u.delta_r = project_away(grad_r, grad_f);
  } else {
    u.delta_f = grad_f;
    u.delta_r = grad_r;
  }
  u.combined = sum(u.delta_f, u.delta_r);
  return u;
}

Combined combine_gradients(Strategy strategy, const FlatGrad& grad_f, const FlatGrad& grad_r) {
  check_lengths(grad_f, grad_r, "combine_gradients");
  Combined out;
  out.conflicted = dot(grad_f.view(), grad_r.view()) < 0.0;
  switch (strategy) {
    case Strategy::kRestricted:
      try {
        out.direction = restricted_gradient(grad_f, grad_r).combined;
      } catch (const DegenerateDirectionError&) {
        out.direction = FlatGrad(grad_r.size());
      }
      break;
    case Strategy::kGradDiff:
      out.direction = sum(grad_f, grad_r);
      break;
    case Strategy::kFinetune:
      out.direction = grad_r;
      break;
  }
  out.noop = all_zero(out.direction);
  return out;
}

Truncation truncate_losses(std::span<const double> sample_losses, double lambda, double alpha) {
  if (sample_losses.empty()) throw DomainError("forgetting loss: empty batch");
  if (!(lambda >= 0.0)) throw DomainError("forgetting loss: lambda must be >= 0");
  if (!(alpha > 0.0)) throw DomainError("forgetting loss: alpha must be > 0");
  const double n = static_cast<double>(sample_losses.size());
  Truncation out;
  out.weights.resize(sample_losses.size(), 0.0);
  double clamped = 0.0;
  std::size_t truncated = 0;
  for (std::size_t b = 0; b < sample_losses.size(); ++b) {
    const double l = sample_losses[b];
    if (l >= alpha) {
      clamped += alpha;
      ++truncated;
    } else {
      clamped += l;
      if (lambda != 0.0) out.weights[b] = -lambda / n;
    }
  }
  out.loss_f = -lambda * (clamped / n);
  out.truncated_fraction = static_cast<double>(truncated) / n;
  return out;
}

ForgettingLoss forgetting_loss(const nn::NoisePredictor& model,
                               const data::LabeledDataset& forget_batch,
                               const diffusion::NoiseSchedule& schedule, double lambda,
                               double alpha, Rng& rng) {
  if (forget_batch.empty()) throw DomainError("forgetting loss: empty batch");
  if (!(lambda >= 0.0)) throw DomainError("forgetting loss: lambda must be >= 0");
  if (!(alpha > 0.0)) throw DomainError("forgetting loss: alpha must be > 0");
  const auto batch = diffusion::make_denoising_batch(forget_batch.points, schedule, rng);
  const auto ids = forget_batch.class_ids();
  // weights depend only on each sample's own loss, so the clamp is decided inside the sweep
  const double n = static_cast<double>(forget_batch.size());
  auto weighted = nn::weighted_backward(model, batch.x_t, batch.eps, batch.t, ids,
                                        [&](std::size_t, double l) {
                                          return (l < alpha && lambda != 0.0) ? -lambda / n : 0.0;
                                        });
  const Truncation tr = truncate_losses(weighted.sample_losses, lambda, alpha);
  ForgettingLoss out;
  out.loss_f = tr.loss_f;
  out.grad_f = std::move(weighted.grad);
  double raw = 0.0;
  for (double l : weighted.sample_losses) raw += l;
  out.raw_mse = raw / n;
  out.truncated_fraction = tr.truncated_fraction;
  return out;
}

StepResult unlearn_step(const nn::NoisePredictor& model, const data::LabeledDataset& forget_batch,
                        const data::LabeledDataset& remain_batch,
                        const diffusion::NoiseSchedule& schedule, const UnlearnConfig& config,
                        Rng& rng) {
  config.validate();
  if (forget_batch.empty() || remain_batch.empty()) {
    throw DomainError("unlearn step: batches must be nonempty");
  }
  const auto remain_ids = remain_batch.class_ids();
  const nn::LossGrad rem =
      diffusion::diffusion_loss(model, remain_batch.points, remain_ids, schedule, rng);
  const ForgettingLoss fog =
      forgetting_loss(model, forget_batch, schedule, config.lambda, config.alpha, rng);

  StepReport rep;
  rep.loss_r = rem.loss;
  rep.loss_f = fog.loss_f;
  rep.raw_forget_mse = fog.raw_mse;
  rep.truncated_fraction = fog.truncated_fraction;
  rep.dot = dot(fog.grad_f.view(), rem.grad.view());
  rep.norm_f = norm(fog.grad_f.view());
  rep.norm_r = norm(rem.grad.view());

  Combined comb = combine_gradients(config.strategy, fog.grad_f, rem.grad);
  rep.conflicted = comb.conflicted;
  rep.noop = comb.noop;
  if (rep.noop) return {model, rep};
  return {model.stepped(comb.direction, config.eta), rep};
}

data::LabeledDataset draw_minibatch(const data::LabeledDataset& set, std::size_t size,
                                    bool stratify, Rng& rng) {
  if (set.empty()) throw DomainError("minibatch: empty set");
  if (size == 0) throw DomainError("minibatch: size must be positive");
  std::vector<std::size_t> picked(size);
  if (!stratify) {
    for (auto& i : picked) i = rng.index(set.size());
    return data::gather(set, picked);
  }
  std::vector<int> classes(set.labels.begin(), set.labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  std::vector<std::vector<std::size_t>> pools(classes.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto pos = std::lower_bound(classes.begin(), classes.end(), set.labels[i]) - classes.begin();
    pools[static_cast<std::size_t>(pos)].push_back(i);
  }
  for (std::size_t s = 0; s < size; ++s) {
    const auto& pool = pools[s % pools.size()];
    picked[s] = pool[rng.index(pool.size())];
  }
  return data::gather(set, picked);
}

RunResult unlearn_run(const nn::NoisePredictor& model, const data::LabeledDataset& forget_set,
                      const data::LabeledDataset& remain_set,
                      const diffusion::NoiseSchedule& schedule, const UnlearnConfig& config,
                      Rng& rng) {
  config.validate();
  if (forget_set.empty() || remain_set.empty()) {
    throw DomainError("unlearn run: forget and remain sets must be nonempty");
  }
  RunResult out{model, {}};
  out.trajectory.reserve(config.iterations);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const auto fb = draw_minibatch(forget_set, config.batch_forget, false, rng);
    const auto rb = draw_minibatch(remain_set, config.batch_remain, config.stratified_remain, rng);
    StepResult step = unlearn_step(out.model, fb, rb, schedule, config, rng);
    step.report.iteration = it;
    out.model = std::move(step.model);
    out.trajectory.push_back(step.report);
  }
  return out;
}

double calibrate_alpha(const nn::NoisePredictor& model, const data::LabeledDataset& remain_set,
                       const diffusion::NoiseSchedule& schedule, double quantile, Rng& rng) {
  if (remain_set.empty()) throw DomainError("calibrate alpha: empty set");
  if (!(quantile >= 0.0 && quantile <= 1.0)) {
    throw DomainError("calibrate alpha: quantile must be in [0, 1]");
  }
  const auto ids = remain_set.class_ids();
  auto losses = diffusion::per_sample_loss(model, remain_set.points, ids, schedule, rng);
  std::sort(losses.begin(), losses.end());
  const double pos = quantile * static_cast<double>(losses.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, losses.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  const double alpha = losses[lo] + frac * (losses[hi] - losses[lo]);
  if (!(alpha > 0.0)) throw DomainError("calibrate alpha: non-positive loss quantile");
  return alpha;
}

std::string trajectory_csv(const std::vector<StepReport>& trajectory) {
  std::ostringstream os;
  os << kTrajectoryCsvHeader << '\n';
  for (const auto& r : trajectory) {
    os << r.iteration << ',' << format_double(r.loss_r) << ',' << format_double(r.loss_f) << ','
       << format_double(r.raw_forget_mse) << ',' << (r.conflicted ? 1 : 0) << ','
       << format_double(r.dot) << ',' << format_double(r.truncated_fraction) << '\n';
  }
  return os.str();
}

}  // namespace rgu::unlearn
