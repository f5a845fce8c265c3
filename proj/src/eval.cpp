// SPDX-License-Identifier: Apache-2.0
#include "rgu/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rgu/errors.hpp"
#include "rgu/format.hpp"

namespace rgu::eval {

std::optional<int> oracle_classify(std::span<const double> x, const data::MixtureSpec& spec,
                                   double none_threshold) {
  if (x.size() != spec.dim()) {
    throw ShapeError("oracle_classify: point of dimension " + std::to_string(x.size()) +
                     ", mixture of dimension " + std::to_string(spec.dim()));
  }
  // equal isotropic covariances: the likelihood is monotone in squared distance
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < spec.num_classes(); ++k) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double e = x[j] - spec.means[k][j];
      d2 += e * e;
    }
    if (d2 < best_d2) {
      best_d2 = d2;
      best = static_cast<int>(k);
    }
  }
  const double limit = none_threshold * spec.sigma;
  if (best < 0 || !(best_d2 <= limit * limit)) return std::nullopt;
  return best;
}

Generator model_generator(const nn::NoisePredictor& model,
                          const diffusion::NoiseSchedule& schedule) {
  return [model, schedule](int k, std::size_t n, Rng& rng) {
    return diffusion::ddpm_sample(model, k, n, schedule, rng).samples;
  };
}

Tally tally_conditions(const Generator& gen, std::span<const int> conditions, std::size_t n,
                       const data::MixtureSpec& spec, double none_threshold, Rng& rng) {
  if (n == 0) throw DomainError("evaluation: need at least one sample per condition");
  if (!(none_threshold > 0.0)) throw DomainError("evaluation: none_threshold must be positive");
  Tally t;
  t.histogram.assign(spec.num_classes() + 1, 0);
  t.samples = Tensor({0, spec.dim()});
  for (int k : conditions) {
    const Tensor xs = gen(k, n, rng);
    if (xs.rank() != 2 || xs.rows() != n || xs.cols() != spec.dim()) {
      throw ShapeError("evaluation: generator returned " + shape_string(xs.shape()));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto label = oracle_classify(xs.row(i), spec, none_threshold);
      ++t.histogram[label ? static_cast<std::size_t>(*label) : spec.num_classes()];
      if (label == k) ++t.hits;
      t.samples.append_row(xs.row(i));
    }
    t.total += n;
  }
  return t;
}

namespace {

void check_class(int k, const data::MixtureSpec& spec) {
  if (k < 0 || static_cast<std::size_t>(k) >= spec.num_classes()) {
    throw DomainError("evaluation: forget class " + std::to_string(k) + " outside mixture");
  }
}

std::vector<int> retained_classes(int forget_class, const data::MixtureSpec& spec) {
  std::vector<int> out;
  for (std::size_t k = 0; k < spec.num_classes(); ++k) {
    if (static_cast<int>(k) != forget_class) out.push_back(static_cast<int>(k));
  }
  return out;
}

double fraction(std::size_t num, std::size_t den) {
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double unlearning_accuracy(const Generator& gen, int forget_class, const data::MixtureSpec& spec,
                           std::size_t n, double none_threshold, Rng& rng) {
  check_class(forget_class, spec);
  const int cond[] = {forget_class};
  const Tally t = tally_conditions(gen, cond, n, spec, none_threshold, rng);
  return 1.0 - fraction(t.hits, t.total);
}

double remaining_accuracy(const Generator& gen, int forget_class, const data::MixtureSpec& spec,
                          std::size_t n_per_class, double none_threshold, Rng& rng) {
  check_class(forget_class, spec);
  const auto kept = retained_classes(forget_class, spec);
  const Tally t = tally_conditions(gen, kept, n_per_class, spec, none_threshold, rng);
  return fraction(t.hits, t.total);
}

namespace {

std::vector<std::vector<double>> sorted_rows(const Tensor& t) {
  std::vector<std::vector<double>> rows;
  rows.reserve(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) rows.emplace_back(t.row(i).begin(), t.row(i).end());
  std::sort(rows.begin(), rows.end());
  return rows;
}

double sq_dist(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double e = x[j] - y[j];
    s += e * e;
  }
  return s;
}

double within_mean(const std::vector<std::vector<double>>& s, double inv2bw2) {
  double sum = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) sum += std::exp(-sq_dist(s[i], s[j]) * inv2bw2);
  }
  const double n = static_cast<double>(s.size());
  return 2.0 * sum / (n * (n - 1.0));
}

}  // namespace

double mmd(const Tensor& a, const Tensor& b, double bandwidth) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw ShapeError("mmd: sets " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  if (a.rows() < 2 || b.rows() < 2) throw DomainError("mmd: each set needs at least 2 points");
  if (!(bandwidth > 0.0)) throw DomainError("mmd: bandwidth must be positive");
  const double inv2bw2 = 1.0 / (2.0 * bandwidth * bandwidth);
  auto sa = sorted_rows(a);
  auto sb = sorted_rows(b);
  // canonical roles so that mmd(a, b) and mmd(b, a) run identical arithmetic
  if (sb < sa) std::swap(sa, sb);
  const double kaa = within_mean(sa, inv2bw2);
  const double kbb = within_mean(sb, inv2bw2);
  double cross = 0.0;
  for (const auto& x : sa) {
    for (const auto& y : sb) cross += std::exp(-sq_dist(x, y) * inv2bw2);
  }
  const double kab = cross / (static_cast<double>(sa.size()) * static_cast<double>(sb.size()));
  return kaa + kbb - 2.0 * kab;
}

double median_bandwidth(const Tensor& reference) {
  if (reference.rank() != 2 || reference.rows() < 2) {
    throw DomainError("median bandwidth: need at least 2 points");
  }
  std::vector<double> d;
  const std::size_t n = reference.rows();
  d.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = reference.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto y = reference.row(j);
      double s = 0.0;
      for (std::size_t c = 0; c < x.size(); ++c) s += (x[c] - y[c]) * (x[c] - y[c]);
      d.push_back(std::sqrt(s));
    }
  }
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double med = *mid;
  if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), mid));
  if (!(med > 0.0)) throw DomainError("median bandwidth: reference points coincide");
  return med;
}

void EvalConfig::validate() const {
  if (n_per_condition < 2) throw DomainError("eval.n_per_condition must be >= 2");
  if (!(none_threshold > 0.0)) throw DomainError("eval.none_threshold must be > 0");
  if (!(mmd_bandwidth >= 0.0)) throw DomainError("eval.mmd_bandwidth must be >= 0");
}

EvalReport full_eval(const Generator& gen, int forget_class, const data::MixtureSpec& spec,
                     const EvalConfig& config) {
  config.validate();
  spec.validate();
  check_class(forget_class, spec);
  EvalReport r;
  r.forget_class = forget_class;
  r.n_samples_per_condition = config.n_per_condition;
  r.seed = config.seed;

  Rng forget_rng(derive_seed(config.seed, 1));
  const int cond[] = {forget_class};
  const Tally f =
      tally_conditions(gen, cond, config.n_per_condition, spec, config.none_threshold, forget_rng);
  r.ua = 1.0 - fraction(f.hits, f.total);

  Rng retain_rng(derive_seed(config.seed, 2));
  const auto kept = retained_classes(forget_class, spec);
  const Tally t =
      tally_conditions(gen, kept, config.n_per_condition, spec, config.none_threshold, retain_rng);
  r.ra = fraction(t.hits, t.total);

  r.per_class_counts = f.histogram;
  for (std::size_t k = 0; k < t.histogram.size(); ++k) r.per_class_counts[k] += t.histogram[k];

  data::MixtureSpec ref_spec;
  ref_spec.sigma = spec.sigma;
  ref_spec.samples_per_class = config.n_per_condition;
  for (int k : kept) ref_spec.means.push_back(spec.means[static_cast<std::size_t>(k)]);
  Rng ref_rng(derive_seed(config.seed, 3));
  const Tensor reference = data::gen_mixture(ref_spec, ref_rng).points;
  r.bandwidth = config.mmd_bandwidth > 0.0 ? config.mmd_bandwidth : median_bandwidth(reference);
  r.mmd = mmd(t.samples, reference, r.bandwidth);
  return r;
}

EvalReport full_eval(const nn::NoisePredictor& model, int forget_class,
                     const data::MixtureSpec& spec, const diffusion::NoiseSchedule& schedule,
                     const EvalConfig& config) {
  return full_eval(model_generator(model, schedule), forget_class, spec, config);
}

nlohmann::json to_json(const EvalReport& r) {
  return nlohmann::json{{"forget_class", r.forget_class},
                        {"ua", r.ua},
                        {"ra", r.ra},
                        {"mmd", r.mmd},
                        {"bandwidth", r.bandwidth},
                        {"per_class_counts", r.per_class_counts},
                        {"n_samples_per_condition", r.n_samples_per_condition},
                        {"seed", r.seed}};
}

std::string csv_row(const EvalReport& r) {
  std::ostringstream os;
  os << r.forget_class << ',' << format_double(r.ua) << ',' << format_double(r.ra) << ','
     << format_double(r.mmd) << ',' << format_double(r.bandwidth) << ','
     << r.n_samples_per_condition << ',' << r.seed;
  return os.str();
}

}  // namespace rgu::eval
