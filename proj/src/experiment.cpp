// SPDX-License-Identifier: Apache-2.0
#include "rgu/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rgu/errors.hpp"
#include "rgu/format.hpp"
#include "rgu/train.hpp"

namespace rgu::app {

std::uint64_t stream_seed(std::uint64_t seed, Stream s) {
  return derive_seed(seed, static_cast<std::uint64_t>(s));
}

StrategyChoice parse_strategy_choice(const std::string& name) {
  if (name == "restricted+diverse") return {name, unlearn::Strategy::kRestricted, true};
  return {name, unlearn::parse_strategy(name), false};
}

data::LabeledDataset make_dataset(const RunConfig& cfg) {
  Rng rng(stream_seed(cfg.seed, Stream::kData));
  return data::gen_mixture(cfg.mixture.spec(), rng);
}

Checkpoint init_checkpoint(const RunConfig& cfg) {
  Rng rng(stream_seed(cfg.seed, Stream::kInit));
  Checkpoint c;
  c.model = nn::NoisePredictor::random_init(cfg.architecture(), rng, cfg.model.embed_scale);
  c.schedule = cfg.schedule;
  c.provenance = {config_hash(cfg), cfg.seed, 0, "init"};
  return c;
}

PretrainOutcome pretrain_checkpoint(const RunConfig& cfg, const data::LabeledDataset& dataset) {
  Checkpoint c = init_checkpoint(cfg);
  Rng rng(stream_seed(cfg.seed, Stream::kTrain));
  auto res = train::pretrain(c.model, dataset, cfg.schedule.make(), cfg.train, rng);
  c.model = std::move(res.model);
  c.provenance.iterations = cfg.train.steps;
  c.provenance.stage = "pretrain";
  return {std::move(c), std::move(res.losses)};
}

data::LabeledDataset build_remain_set(const RunConfig& cfg, const data::LabeledDataset& dataset,
                                      const std::string& mode, std::uint64_t seed) {
  Rng rng(stream_seed(seed, Stream::kRemain));
  const int f = cfg.unlearn.forget_class;
  const auto& r = cfg.unlearn.remain;
  const std::size_t total = r.per_class * (cfg.mixture.spec().num_classes() - 1);
  if (mode == "balanced") return data::balanced_remaining_set(dataset, f, r.per_class, rng);
  if (mode == "similar") return data::similarity_restricted_set(dataset, f, r.k_nearest, total, rng);
  if (mode == "random") return data::random_remaining_set(dataset, f, total, rng);
  throw DomainError("unknown remaining-set mode '" + mode + "'");
}

double resolve_alpha(const RunConfig& cfg, const nn::NoisePredictor& model,
                     const diffusion::NoiseSchedule& schedule,
                     const data::LabeledDataset& remain, std::uint64_t seed) {
  if (cfg.unlearn.alpha) return *cfg.unlearn.alpha;
  Rng rng(stream_seed(seed, Stream::kAlpha));
  return unlearn::calibrate_alpha(model, remain, schedule, cfg.unlearn.alpha_quantile, rng);
}

unlearn::UnlearnConfig unlearn_config(const RunConfig& cfg, const CellSpec& cell) {
  unlearn::UnlearnConfig u;
  u.lambda = cell.lambda;
  u.alpha = cell.alpha;
  u.eta = cfg.unlearn.eta;
  u.iterations = cfg.unlearn.iterations;
  u.batch_forget = cfg.unlearn.batch_forget;
  u.batch_remain = cfg.unlearn.batch_remain;
  u.strategy = cell.strategy.strategy;
  u.stratified_remain = cell.strategy.diverse;
  u.seed = stream_seed(cell.seed, Stream::kUnlearn);
  return u;
}

unlearn::RunResult run_unlearning(const RunConfig& cfg, const Checkpoint& ckpt,
                                  const data::LabeledDataset& forget_set,
                                  const data::LabeledDataset& remain_set, const CellSpec& cell) {
  const auto u = unlearn_config(cfg, cell);
  Rng rng(u.seed);
  return unlearn::unlearn_run(ckpt.model, forget_set, remain_set, ckpt.schedule.make(), u, rng);
}

eval::EvalReport evaluate(const RunConfig& cfg, const Checkpoint& ckpt, std::uint64_t seed) {
  const auto spec = cfg.mixture.spec();
  if (ckpt.model.architecture().num_classes != spec.num_classes() ||
      ckpt.model.architecture().input_dim != spec.dim()) {
    throw DomainError("checkpoint architecture does not match the configured mixture");
  }
  eval::EvalConfig e = cfg.eval;
  e.seed = stream_seed(seed, Stream::kEval);
  return eval::full_eval(ckpt.model, cfg.unlearn.forget_class, spec, ckpt.schedule.make(), e);
}

RunMetrics run_cell(const RunConfig& cfg, const Checkpoint& ckpt,
                    const data::LabeledDataset& forget_set,
                    const data::LabeledDataset& remain_set, const CellSpec& cell) {
  const auto run = run_unlearning(cfg, ckpt, forget_set, remain_set, cell);
  Checkpoint after = ckpt;
  after.model = run.model;
  const auto rep = evaluate(cfg, after, cell.seed);
  RunMetrics m;
  m.ua = rep.ua;
  m.ra = rep.ra;
  m.mmd = rep.mmd;
  for (const auto& s : run.trajectory) {
    m.conflicted_steps += s.conflicted ? 1 : 0;
    m.noop_steps += s.noop ? 1 : 0;
  }
  return m;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double variance(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size());
}

namespace {

std::string csv_field(const std::string& s) {
  std::string out;
  for (char c : s) out += (c == ',' || c == '\n' || c == '"') ? ' ' : c;
  return out;
}

RunMetrics failed(const std::exception& e) {
  RunMetrics m;
  m.ua = m.ra = m.mmd = std::numeric_limits<double>::quiet_NaN();
  m.status = csv_field(std::string("error: ") + e.what());
  return m;
}

}  // namespace

SweepResult run_sweep(const RunConfig& cfg, const Checkpoint& ckpt,
                      const data::LabeledDataset& dataset) {
  const auto forget = data::select_class(dataset, cfg.unlearn.forget_class);
  const auto schedule = ckpt.schedule.make();
  const std::size_t n_alpha =
      cfg.sweep.alphas.empty() ? cfg.sweep.alpha_scales.size() : cfg.sweep.alphas.size();

  SweepResult out;
  // runs indexed [lambda][alpha][strategy][seed]
  for (double lambda : cfg.sweep.lambdas) {
    for (std::size_t ai = 0; ai < n_alpha; ++ai) {
      for (const auto& sname : cfg.sweep.strategies) {
        SweepCell cell;
        cell.lambda = lambda;
        cell.strategy = sname;
        std::vector<double> alphas, ua, ra, mmd;
        std::string first_error;
        for (std::uint64_t seed : cfg.seeds) {
          SweepRun run;
          run.cell = {lambda, 0.0, parse_strategy_choice(sname), seed};
          try {
            const auto remain = build_remain_set(cfg, dataset, cfg.unlearn.remain.mode, seed);
            run.cell.alpha = cfg.sweep.alphas.empty()
                                 ? cfg.sweep.alpha_scales[ai] *
                                       resolve_alpha(cfg, ckpt.model, schedule, remain, seed)
                                 : cfg.sweep.alphas[ai];
            run.metrics = run_cell(cfg, ckpt, forget, remain, run.cell);
            ua.push_back(run.metrics.ua);
            ra.push_back(run.metrics.ra);
            mmd.push_back(run.metrics.mmd);
          } catch (const std::exception& e) {
            run.metrics = failed(e);
            if (first_error.empty()) first_error = run.metrics.status;
          }
          if (run.cell.alpha > 0.0) alphas.push_back(run.cell.alpha);
          out.runs.push_back(run);
        }
        // calibrated alphas differ slightly per seed
        cell.alpha = median(alphas);
        cell.n_ok = ua.size();
        cell.ua = median(ua);
        cell.ra = median(ra);
        cell.mmd = median(mmd);
        cell.status = first_error.empty() ? "ok" : first_error;
        out.cells.push_back(cell);
      }
    }
  }
  for (double lambda : cfg.sweep.lambdas) {
    for (const auto& sname : cfg.sweep.strategies) {
      std::vector<double> ua, ra, mmd;
      for (const auto& c : out.cells) {
        if (c.lambda != lambda || c.strategy != sname || c.n_ok == 0) continue;
        ua.push_back(c.ua);
        ra.push_back(c.ra);
        mmd.push_back(c.mmd);
      }
      out.summary.push_back({lambda, sname, ra.size(), variance(ua), variance(ra), variance(mmd)});
    }
  }
  return out;
}

std::string sweep_csv(const SweepResult& r) {
  std::ostringstream os;
  os << kSweepCsvHeader << '\n';
  for (const auto& c : r.cells) {
    os << format_double(c.lambda) << ',' << format_double(c.alpha) << ',' << c.strategy << ','
       << c.n_ok << ',' << format_double(c.ua) << ',' << format_double(c.ra) << ','
       << format_double(c.mmd) << ',' << c.status << '\n';
  }
  return os.str();
}

std::string sweep_runs_csv(const SweepResult& r) {
  std::ostringstream os;
  os << kSweepRunsCsvHeader << '\n';
  for (const auto& run : r.runs) {
    const auto& m = run.metrics;
    os << format_double(run.cell.lambda) << ',' << format_double(run.cell.alpha) << ','
       << run.cell.strategy.name << ',' << run.cell.seed << ',' << format_double(m.ua) << ','
       << format_double(m.ra) << ',' << format_double(m.mmd) << ',' << m.conflicted_steps << ','
       << m.noop_steps << ',' << m.status << '\n';
  }
  return os.str();
}

std::string sweep_summary_csv(const SweepResult& r) {
  std::ostringstream os;
  os << kSweepSummaryCsvHeader << '\n';
  for (const auto& s : r.summary) {
    os << format_double(s.lambda) << ',' << s.strategy << ',' << s.n_alpha << ','
       << format_double(s.ua_variance) << ',' << format_double(s.ra_variance) << ','
       << format_double(s.mmd_variance) << '\n';
  }
  return os.str();
}

AblationResult run_ablation(const RunConfig& base, const Checkpoint& ckpt,
                            const data::LabeledDataset& dataset) {
  RunConfig cfg = base;
  cfg.unlearn.remain.k_nearest = base.ablation.k_nearest;
  const auto forget = data::select_class(dataset, cfg.unlearn.forget_class);
  const auto schedule = ckpt.schedule.make();

  struct Sets {
    data::LabeledDataset similar, balanced;
    double alpha = 0.0;
  };
  std::vector<Sets> per_seed;
  for (std::uint64_t seed : cfg.seeds) {
    Sets s;
    s.similar = build_remain_set(cfg, dataset, "similar", seed);
    s.balanced = build_remain_set(cfg, dataset, "balanced", seed);
    if (s.similar.size() != s.balanced.size()) {
      throw DomainError("ablation: remaining sets differ in size");
    }
    s.alpha = resolve_alpha(cfg, ckpt.model, schedule, s.balanced, seed);
    per_seed.push_back(std::move(s));
  }

  AblationResult out;
  for (const auto& sname : cfg.ablation.strategies) {
    const auto choice = parse_strategy_choice(sname);
    AblationRow row;
    row.strategy = sname;
    std::vector<double> m[2][3];
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
      for (int case_id : {1, 2}) {
        const auto& remain = case_id == 1 ? per_seed[i].similar : per_seed[i].balanced;
        AblationRun run{sname, case_id, cfg.seeds[i], remain.size(), per_seed[i].alpha, {}};
        try {
          run.metrics = run_cell(cfg, ckpt, forget, remain,
                                 {cfg.unlearn.lambda, per_seed[i].alpha, choice, cfg.seeds[i]});
          auto& slot = m[case_id - 1];
          slot[0].push_back(run.metrics.ua);
          slot[1].push_back(run.metrics.ra);
          slot[2].push_back(run.metrics.mmd);
        } catch (const std::exception& e) {
          run.metrics = failed(e);
        }
        row.remain_size = remain.size();
        out.runs.push_back(run);
      }
    }
    row.ua1 = median(m[0][0]);
    row.ra1 = median(m[0][1]);
    row.mmd1 = median(m[0][2]);
    row.ua2 = median(m[1][0]);
    row.ra2 = median(m[1][1]);
    row.mmd2 = median(m[1][2]);
    out.rows.push_back(row);
  }
  return out;
}

std::string ablation_csv(const AblationResult& r) {
  std::ostringstream os;
  os << kAblationCsvHeader << '\n';
  for (const auto& a : r.rows) {
    os << a.strategy << ',' << a.remain_size << ',' << format_double(a.ua1) << ','
       << format_double(a.ra1) << ',' << format_double(a.mmd1) << ',' << format_double(a.ua2)
       << ',' << format_double(a.ra2) << ',' << format_double(a.mmd2) << ','
       << format_double(a.delta_ua()) << ',' << format_double(a.delta_ra()) << ','
       << format_double(a.delta_mmd()) << '\n';
  }
  return os.str();
}

std::string ablation_runs_csv(const AblationResult& r) {
  std::ostringstream os;
  os << kAblationRunsCsvHeader << '\n';
  for (const auto& run : r.runs) {
    const auto& m = run.metrics;
    os << run.strategy << ',' << run.case_id << ',' << run.seed << ',' << run.remain_size << ','
       << format_double(run.alpha) << ',' << format_double(m.ua) << ',' << format_double(m.ra)
       << ',' << format_double(m.mmd) << ',' << m.conflicted_steps << ',' << m.noop_steps << ','
       << m.status << '\n';
  }
  return os.str();
}

}  // namespace rgu::app
