// SPDX-License-Identifier: Apache-2.0
#include "rgu/data.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>

#include <json.hpp>

#include "rgu/errors.hpp"

namespace rgu::data {

void MixtureSpec::validate() const {
  if (means.size() < 2) throw DomainError("mixture: need at least 2 classes");
  if (!(sigma > 0.0)) throw DomainError("mixture: sigma must be positive");
  const std::size_t d = dim();
  if (d == 0) throw DomainError("mixture: means must be non-empty points");
  for (const auto& m : means) {
    if (m.size() != d) throw DomainError("mixture: means differ in dimension");
  }
  for (std::size_t i = 0; i < means.size(); ++i) {
    for (std::size_t j = i + 1; j < means.size(); ++j) {
      if (means[i] == means[j]) {
        throw DomainError("mixture: means " + std::to_string(i) + " and " + std::to_string(j) +
                          " coincide");
      }
    }
  }
}

MixtureSpec MixtureSpec::circle(std::size_t k, double radius, double sigma,
                                std::size_t samples_per_class) {
  MixtureSpec spec;
  spec.sigma = sigma;
  spec.samples_per_class = samples_per_class;
  for (std::size_t i = 0; i < k; ++i) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(k);
    spec.means.push_back({radius * std::cos(angle), radius * std::sin(angle)});
  }
  return spec;
}

std::vector<nn::ClassId> LabeledDataset::class_ids() const {
  return std::vector<nn::ClassId>(labels.begin(), labels.end());
}

void LabeledDataset::validate(std::size_t num_classes) const {
  if (labels.empty()) return;
  if (points.rank() != 2 || points.rows() != labels.size()) {
    throw ShapeError("dataset: " + std::to_string(labels.size()) + " labels for points " +
                     shape_string(points.shape()));
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
      throw DomainError("dataset: label " + std::to_string(l) + " outside [0, " +
                        std::to_string(num_classes) + ")");
    }
  }
}

void LabeledDataset::push_back(std::span<const double> x, int label) {
  points.append_row(x);
  labels.push_back(label);
}

LabeledDataset gen_mixture(const MixtureSpec& spec, Rng& rng) {
  spec.validate();
  LabeledDataset out;
  out.points = Tensor({0, spec.dim()});
  std::vector<double> x(spec.dim());
  for (std::size_t k = 0; k < spec.num_classes(); ++k) {
    for (std::size_t n = 0; n < spec.samples_per_class; ++n) {
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = spec.means[k][j] + spec.sigma * rng.normal();
      out.push_back(x, static_cast<int>(k));
    }
  }
  return out;
}

LabeledDataset select_class(const LabeledDataset& data, int label) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] == label) idx.push_back(i);
  }
  return gather(data, idx);
}

LabeledDataset gather(const LabeledDataset& data, std::span<const std::size_t> indices) {
  LabeledDataset out;
  out.points = Tensor({0, data.dim()});
  for (std::size_t i : indices) out.push_back(data.points.row(i), data.labels.at(i));
  return out;
}

std::vector<std::vector<double>> class_means(const LabeledDataset& data, std::size_t num_classes) {
  const std::size_t d = data.dim();
  std::vector<std::vector<double>> sums(num_classes, std::vector<double>(d, 0.0));
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto k = static_cast<std::size_t>(data.labels[i]);
    const auto x = data.points.row(i);
    for (std::size_t j = 0; j < d; ++j) sums[k][j] += x[j];
    ++counts[k];
  }
  for (std::size_t k = 0; k < num_classes; ++k) {
    for (double& v : sums[k]) {
      v = counts[k] ? v / static_cast<double>(counts[k]) : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return sums;
}

namespace {

std::size_t num_classes_in(const LabeledDataset& data) {
  int max_label = -1;
  for (int l : data.labels) max_label = std::max(max_label, l);
  return static_cast<std::size_t>(max_label + 1);
}

/// Indices of each class, in dataset order.
std::vector<std::vector<std::size_t>> class_indices(const LabeledDataset& data,
                                                    std::size_t num_classes) {
  std::vector<std::vector<std::size_t>> idx(num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    idx[static_cast<std::size_t>(data.labels[i])].push_back(i);
  }
  return idx;
}

/// First `take` entries of a partial Fisher-Yates shuffle of pool.
std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool,
                                                    std::size_t take, Rng& rng) {
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + rng.index(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(take);
  return pool;
}

void check_forget_class(const LabeledDataset& data, int forget_class) {
  if (data.empty()) throw DomainError("remaining set: empty dataset");
  if (forget_class < 0 || static_cast<std::size_t>(forget_class) >= num_classes_in(data)) {
    throw DomainError("remaining set: forget class " + std::to_string(forget_class) +
                      " not present");
  }
}

LabeledDataset draw_per_class(const LabeledDataset& data,
                              const std::vector<std::vector<std::size_t>>& by_class,
                              std::span<const int> classes, std::size_t per_class, Rng& rng) {
  std::vector<std::size_t> chosen;
  for (int k : classes) {
    const auto& pool = by_class[static_cast<std::size_t>(k)];
    if (pool.size() < per_class) {
      throw DomainError("remaining set: class " + std::to_string(k) + " has " +
                        std::to_string(pool.size()) + " samples, " + std::to_string(per_class) +
                        " requested");
    }
    const auto picked = sample_without_replacement(pool, per_class, rng);
    chosen.insert(chosen.end(), picked.begin(), picked.end());
  }
  return gather(data, chosen);
}

}  // namespace

LabeledDataset balanced_remaining_set(const LabeledDataset& data, int forget_class,
                                      std::size_t per_class, Rng& rng) {
  check_forget_class(data, forget_class);
  if (per_class == 0) throw DomainError("balanced remaining set: per_class must be positive");
  const std::size_t k = num_classes_in(data);
  std::vector<int> retained;
  for (std::size_t c = 0; c < k; ++c) {
    if (static_cast<int>(c) != forget_class) retained.push_back(static_cast<int>(c));
  }
  return draw_per_class(data, class_indices(data, k), retained, per_class, rng);
}

std::vector<int> similarity_ranking(const LabeledDataset& data, int forget_class) {
  check_forget_class(data, forget_class);
  const std::size_t k = num_classes_in(data);
  const auto means = class_means(data, k);
  const auto& target = means[static_cast<std::size_t>(forget_class)];
  std::vector<std::pair<double, int>> scored;
  for (std::size_t c = 0; c < k; ++c) {
    if (static_cast<int>(c) == forget_class || std::isnan(means[c].front())) continue;
    double d2 = 0.0;
    for (std::size_t j = 0; j < target.size(); ++j) {
      const double e = means[c][j] - target[j];
      d2 += e * e;
    }
    scored.emplace_back(d2, static_cast<int>(c));
  }
  // pair ordering breaks distance ties by the lower class index
  std::sort(scored.begin(), scored.end());
  std::vector<int> ranked;
  for (const auto& [d2, c] : scored) ranked.push_back(c);
  return ranked;
}

LabeledDataset similarity_restricted_set(const LabeledDataset& data, int forget_class,
                                         std::size_t k_nearest, std::size_t total, Rng& rng) {
  const auto ranked = similarity_ranking(data, forget_class);
  if (k_nearest == 0 || k_nearest > ranked.size()) {
    throw DomainError("similarity set: k_nearest must be in [1, " + std::to_string(ranked.size()) +
                      "]");
  }
  if (total == 0 || total % k_nearest != 0) {
    throw DomainError("similarity set: total " + std::to_string(total) +
                      " must be a positive multiple of k_nearest " + std::to_string(k_nearest));
  }
  std::vector<int> chosen(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k_nearest));
  std::sort(chosen.begin(), chosen.end());
  return draw_per_class(data, class_indices(data, num_classes_in(data)), chosen,
                        total / k_nearest, rng);
}

LabeledDataset random_remaining_set(const LabeledDataset& data, int forget_class,
                                    std::size_t total, Rng& rng) {
  check_forget_class(data, forget_class);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] != forget_class) pool.push_back(i);
  }
  if (total == 0 || total > pool.size()) {
    throw DomainError("random remaining set: total " + std::to_string(total) + " outside [1, " +
                      std::to_string(pool.size()) + "]");
  }
  const auto picked = sample_without_replacement(std::move(pool), total, rng);
  return gather(data, picked);
}

void write_jsonl(const LabeledDataset& data, std::ostream& os) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.points.row(i);
    nlohmann::json rec;
    rec["x"] = std::vector<double>(x.begin(), x.end());
    rec["label"] = data.labels[i];
    os << rec.dump() << '\n';
  }
}

LabeledDataset read_jsonl(std::istream& is) {
  LabeledDataset out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      const auto x = rec.at("x").get<std::vector<double>>();
      out.push_back(x, rec.at("label").get<int>());
    } catch (const nlohmann::json::exception& e) {
      throw DomainError("dataset line " + std::to_string(lineno) + ": " + e.what());
    } catch (const ShapeError& e) {
      throw DomainError("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace rgu::data
