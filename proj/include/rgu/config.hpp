// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rgu/data.hpp"
#include "rgu/diffusion.hpp"
#include "rgu/eval.hpp"
#include "rgu/nn.hpp"
#include "rgu/prompts.hpp"
#include "rgu/train.hpp"
#include "rgu/unlearn.hpp"

namespace rgu::app {

/// Bad configuration document or override. The message starts with the dotted
/// path of the offending field.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct MixtureConfig {
  std::size_t num_classes = 5;
  double radius = 5.0;
  double sigma = 0.3;
  std::size_t samples_per_class = 1000;
  /// Explicit means; when empty the means sit on a circle of the given radius.
  std::vector<std::vector<double>> means;

  data::MixtureSpec spec() const;
};

struct ScheduleConfig {
  int T = diffusion::kDefaultSteps;
  double beta_min = diffusion::kDefaultBetaMin;
  double beta_max = diffusion::kDefaultBetaMax;

  diffusion::NoiseSchedule make() const;
};

struct ModelConfig {
  std::vector<std::size_t> hidden_dims{64, 64};
  std::size_t time_embed_dim = 16;
  std::size_t class_embed_dim = 64;
  double embed_scale = 1.0;
};

/// How D_r is built from the retained classes.
struct RemainConfig {
  std::string mode = "balanced";  // balanced | similar | random
  std::size_t per_class = 100;
  std::size_t k_nearest = 2;
};

struct UnlearnSection {
  int forget_class = 0;
  double lambda = 5.0;
  /// Fixed truncation threshold; unset means calibrate on D_r at the checkpoint.
  std::optional<double> alpha;
  double alpha_quantile = 0.9;
  double eta = 1e-3;
  std::size_t iterations = 2000;
  std::size_t batch_forget = 64;
  std::size_t batch_remain = 64;
  std::string strategy = "restricted";
  RemainConfig remain;
};

struct SweepConfig {
  std::vector<double> lambdas{0.5, 1.0, 5.0};
  /// Multiples of the calibrated alpha; ignored when alphas is nonempty.
  std::vector<double> alpha_scales{0.5, 1.0, 2.0, 4.0};
  std::vector<double> alphas;
  std::vector<std::string> strategies{"restricted", "graddiff"};
};

struct AblationConfig {
  std::size_t k_nearest = 2;
  std::vector<std::string> strategies{"graddiff", "restricted", "restricted+diverse"};
};

struct RunConfig {
  std::uint64_t seed = 0;
  /// Replicate seeds for sweeps and ablations.
  std::vector<std::uint64_t> seeds{0, 1, 2};
  MixtureConfig mixture;
  ScheduleConfig schedule;
  ModelConfig model;
  train::TrainConfig train;
  UnlearnSection unlearn;
  eval::EvalConfig eval;
  SweepConfig sweep;
  AblationConfig ablation;
  data::PromptTemplateSpec prompts = data::default_prompt_spec();
  std::size_t prompt_count = 8;
  std::string out = "out";

  nn::Architecture architecture() const;
  /// Checks every nested invariant; throws ConfigError naming the field.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);

/// Strict parse: unknown keys and wrong types are rejected with their path.
RunConfig from_json(const nlohmann::json& j);

/// Applies "a.b.c=value" to a document. The path must already exist; value is
/// parsed as JSON when possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Defaults, then the file (if any), then overrides, then validation.
RunConfig load_config(const std::optional<std::string>& path,
                      const std::vector<std::string>& overrides);

/// Stable 64-bit FNV-1a hash of the canonical JSON text without `out`, as 16 hex digits.
std::string config_hash(const RunConfig& c);

}  // namespace rgu::app
