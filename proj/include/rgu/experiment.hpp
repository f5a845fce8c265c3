// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rgu/checkpoint.hpp"
#include "rgu/config.hpp"
#include "rgu/data.hpp"
#include "rgu/eval.hpp"
#include "rgu/unlearn.hpp"

namespace rgu::app {

/// Sub-seed streams derived from a top-level or replicate seed.
enum class Stream : std::uint64_t {
  kData = 1,
  kInit = 2,
  kTrain = 3,
  kPrompts = 4,
  kRemain = 10,
  kAlpha = 11,
  kUnlearn = 12,
  kEval = 13,
};

std::uint64_t stream_seed(std::uint64_t seed, Stream s);

/// A combine strategy plus the class-stratified remaining batches used by
/// "restricted+diverse".
struct StrategyChoice {
  std::string name;
  unlearn::Strategy strategy = unlearn::Strategy::kRestricted;
  bool diverse = false;
};

StrategyChoice parse_strategy_choice(const std::string& name);

data::LabeledDataset make_dataset(const RunConfig& cfg);

Checkpoint init_checkpoint(const RunConfig& cfg);

struct PretrainOutcome {
  Checkpoint checkpoint;
  std::vector<double> losses;
};

PretrainOutcome pretrain_checkpoint(const RunConfig& cfg, const data::LabeledDataset& dataset);

/// D_r of the given mode ("balanced", "similar", "random") for cfg's forget class.
/// Every mode yields per_class * (K - 1) samples.
data::LabeledDataset build_remain_set(const RunConfig& cfg, const data::LabeledDataset& dataset,
                                      const std::string& mode, std::uint64_t seed);

/// The configured alpha, or the configured quantile of per-sample losses on remain.
double resolve_alpha(const RunConfig& cfg, const nn::NoisePredictor& model,
                     const diffusion::NoiseSchedule& schedule,
                     const data::LabeledDataset& remain, std::uint64_t seed);

struct CellSpec {
  double lambda = 0.0;
  double alpha = 1.0;
  StrategyChoice strategy;
  std::uint64_t seed = 0;
};

unlearn::UnlearnConfig unlearn_config(const RunConfig& cfg, const CellSpec& cell);

unlearn::RunResult run_unlearning(const RunConfig& cfg, const Checkpoint& ckpt,
                                  const data::LabeledDataset& forget_set,
                                  const data::LabeledDataset& remain_set, const CellSpec& cell);

eval::EvalReport evaluate(const RunConfig& cfg, const Checkpoint& ckpt, std::uint64_t seed);

struct RunMetrics {
  double ua = 0.0;
  double ra = 0.0;
  double mmd = 0.0;
  std::size_t conflicted_steps = 0;
  std::size_t noop_steps = 0;
  std::string status = "ok";
};

/// Unlearn from ckpt with one cell's settings, then evaluate the result.
RunMetrics run_cell(const RunConfig& cfg, const Checkpoint& ckpt,
                    const data::LabeledDataset& forget_set,
                    const data::LabeledDataset& remain_set, const CellSpec& cell);

double median(std::vector<double> v);
/// Population variance.
double variance(const std::vector<double>& v);

struct SweepRun {
  CellSpec cell;
  RunMetrics metrics;
};

struct SweepCell {
  double lambda = 0.0;
  double alpha = 0.0;
  std::string strategy;
  std::size_t n_ok = 0;
  double ua = 0.0;  // medians over replicate seeds
  double ra = 0.0;
  double mmd = 0.0;
  std::string status;
};

struct SweepSummary {
  double lambda = 0.0;
  std::string strategy;
  std::size_t n_alpha = 0;
  double ua_variance = 0.0;
  double ra_variance = 0.0;
  double mmd_variance = 0.0;
};

struct SweepResult {
  std::vector<SweepRun> runs;
  std::vector<SweepCell> cells;
  std::vector<SweepSummary> summary;
};

/// Cross product of lambdas, alphas and strategies, each over cfg.seeds, all
/// starting from the same checkpoint. A failing run is recorded and skipped.
SweepResult run_sweep(const RunConfig& cfg, const Checkpoint& ckpt,
                      const data::LabeledDataset& dataset);

inline constexpr const char* kSweepCsvHeader = "lambda,alpha,strategy,n_seeds,ua,ra,mmd,status";
inline constexpr const char* kSweepRunsCsvHeader =
    "lambda,alpha,strategy,seed,ua,ra,mmd,conflicted_steps,noop_steps,status";
inline constexpr const char* kSweepSummaryCsvHeader =
    "lambda,strategy,n_alpha,ua_variance,ra_variance,mmd_variance";

std::string sweep_csv(const SweepResult& r);
std::string sweep_runs_csv(const SweepResult& r);
std::string sweep_summary_csv(const SweepResult& r);

struct AblationRun {
  std::string strategy;
  int case_id = 0;  // 1: nearest classes only, 2: all retained classes
  std::uint64_t seed = 0;
  std::size_t remain_size = 0;
  double alpha = 0.0;
  RunMetrics metrics;
};

struct AblationRow {
  std::string strategy;
  std::size_t remain_size = 0;
  double ua1 = 0.0, ra1 = 0.0, mmd1 = 0.0;  // medians over seeds
  double ua2 = 0.0, ra2 = 0.0, mmd2 = 0.0;
  double delta_ua() const { return ua2 - ua1; }
  double delta_ra() const { return ra2 - ra1; }
  double delta_mmd() const { return mmd2 - mmd1; }
};

struct AblationResult {
  std::vector<AblationRun> runs;
  std::vector<AblationRow> rows;
};

/// Case 1 draws D_r from the k nearest retained classes, Case 2 from all of them,
/// with the same |D_r|. Alpha is calibrated once per seed on the Case 2 set.
AblationResult run_ablation(const RunConfig& cfg, const Checkpoint& ckpt,
                            const data::LabeledDataset& dataset);

inline constexpr const char* kAblationCsvHeader =
    "strategy,remain_size,ua_case1,ra_case1,mmd_case1,ua_case2,ra_case2,mmd_case2,"
    "delta_ua,delta_ra,delta_mmd";
inline constexpr const char* kAblationRunsCsvHeader =
    "strategy,case,seed,remain_size,alpha,ua,ra,mmd,conflicted_steps,noop_steps,status";

std::string ablation_csv(const AblationResult& r);
std::string ablation_runs_csv(const AblationResult& r);

}  // namespace rgu::app
