// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rgu/data.hpp"
#include "rgu/diffusion.hpp"
#include "rgu/nn.hpp"
#include "rgu/rng.hpp"
#include "rgu/tensor.hpp"

namespace rgu::eval {

inline constexpr double kDefaultNoneThreshold = 4.0;

/// Most likely mixture component for x, or nullopt ("none") when x lies more
/// than none_threshold * sigma from every mean. Ties go to the lower index.
std::optional<int> oracle_classify(std::span<const double> x, const data::MixtureSpec& spec,
                                   double none_threshold = kDefaultNoneThreshold);

/// Produces n points conditioned on class k.
using Generator = std::function<Tensor(int k, std::size_t n, Rng& rng)>;

/// Generator backed by the ancestral sampler.
Generator model_generator(const nn::NoisePredictor& model, const diffusion::NoiseSchedule& schedule);

/// Outcome of classifying generated samples for one or more conditions.
struct Tally {
  std::size_t total = 0;
  std::size_t hits = 0;                // classified as the conditioning class
  std::vector<std::size_t> histogram;  // K classes, then "none"
  Tensor samples;                      // everything generated, in order
};

/// n samples per listed condition, classified against spec.
Tally tally_conditions(const Generator& gen, std::span<const int> conditions, std::size_t n,
                       const data::MixtureSpec& spec, double none_threshold, Rng& rng);

/// 1 - fraction of forget-conditioned samples classified as forget_class.
double unlearning_accuracy(const Generator& gen, int forget_class, const data::MixtureSpec& spec,
                           std::size_t n, double none_threshold, Rng& rng);

/// Fraction of retained-class-conditioned samples classified as their condition.
double remaining_accuracy(const Generator& gen, int forget_class, const data::MixtureSpec& spec,
                          std::size_t n_per_class, double none_threshold, Rng& rng);

/// Unbiased squared MMD with kernel exp(-|x - y|^2 / (2 bw^2)). Both sets need at
/// least two rows. The result does not depend on row order and is symmetric in (a, b).
double mmd(const Tensor& a, const Tensor& b, double bandwidth);

/// Median pairwise Euclidean distance within a set (at least two rows).
double median_bandwidth(const Tensor& reference);

struct EvalConfig {
  std::size_t n_per_condition = 500;
  double none_threshold = kDefaultNoneThreshold;
  /// Fixed kernel bandwidth; 0 selects the median heuristic on the reference set.
  double mmd_bandwidth = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EvalReport {
  int forget_class = 0;
  double ua = 0.0;
  double ra = 0.0;
  double mmd = 0.0;
  double bandwidth = 0.0;
  std::vector<std::size_t> per_class_counts;  // K classes, then "none", over all conditions
  std::size_t n_samples_per_condition = 0;
  std::uint64_t seed = 0;
};

/// UA on the forget condition, RA over retained conditions, and MMD between the
/// retained-condition samples and fresh mixture draws of the retained classes.
EvalReport full_eval(const Generator& gen, int forget_class, const data::MixtureSpec& spec,
                     const EvalConfig& config);
EvalReport full_eval(const nn::NoisePredictor& model, int forget_class,
                     const data::MixtureSpec& spec, const diffusion::NoiseSchedule& schedule,
                     const EvalConfig& config);

nlohmann::json to_json(const EvalReport& r);

inline constexpr const char* kEvalCsvHeader =
    "forget_class,ua,ra,mmd,bandwidth,n_per_condition,seed";
std::string csv_row(const EvalReport& r);

}  // namespace rgu::eval
