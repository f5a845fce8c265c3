// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "rgu/nn.hpp"
#include "rgu/rng.hpp"
#include "rgu/tensor.hpp"

namespace rgu::data {

/// K isotropic Gaussians sharing one standard deviation.
struct MixtureSpec {
  std::vector<std::vector<double>> means;
  double sigma = 0.3;
  std::size_t samples_per_class = 1000;

  std::size_t num_classes() const { return means.size(); }
  std::size_t dim() const { return means.empty() ? 0 : means.front().size(); }

  /// K >= 2, sigma > 0, equal-length and pairwise distinct means.
  void validate() const;

  /// K means equally spaced on a circle, the first at angle 0.
  static MixtureSpec circle(std::size_t k, double radius, double sigma,
                            std::size_t samples_per_class);
};

struct LabeledDataset {
  Tensor points;  // (n, dim)
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::size_t dim() const { return points.rank() == 2 ? points.cols() : 0; }

  /// Labels as conditioning ids for the noise predictor.
  std::vector<nn::ClassId> class_ids() const;

  void validate(std::size_t num_classes) const;
  void push_back(std::span<const double> x, int label);

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

/// samples_per_class draws from N(mean_k, sigma^2 I) per class, class by class.
LabeledDataset gen_mixture(const MixtureSpec& spec, Rng& rng);

/// Rows with the given label, in dataset order.
LabeledDataset select_class(const LabeledDataset& data, int label);

/// Rows at the given indices, in that order.
LabeledDataset gather(const LabeledDataset& data, std::span<const std::size_t> indices);

/// Per-class sample means; rows of classes without samples are NaN.
std::vector<std::vector<double>> class_means(const LabeledDataset& data, std::size_t num_classes);

/// Exactly per_class samples (without replacement) from every class other than
/// forget_class. Throws DomainError when per_class is 0 or a class is too small.
LabeledDataset balanced_remaining_set(const LabeledDataset& data, int forget_class,
                                      std::size_t per_class, Rng& rng);

/// Retained classes ordered by Euclidean distance between their sample mean and
/// the forget class's sample mean. Ties go to the lower class index.
std::vector<int> similarity_ranking(const LabeledDataset& data, int forget_class);

/// total samples drawn equally from the k_nearest retained classes closest to
/// forget_class. total must be divisible by k_nearest.
LabeledDataset similarity_restricted_set(const LabeledDataset& data, int forget_class,
                                         std::size_t k_nearest, std::size_t total, Rng& rng);

/// total samples drawn uniformly without replacement from all non-forget rows.
LabeledDataset random_remaining_set(const LabeledDataset& data, int forget_class,
                                    std::size_t total, Rng& rng);

/// One {"x": [...], "label": k} JSON object per line.
void write_jsonl(const LabeledDataset& data, std::ostream& os);
LabeledDataset read_jsonl(std::istream& is);

}  // namespace rgu::data
