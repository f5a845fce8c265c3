// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: prints one PASS/FAIL line per criterion and exits nonzero
// when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rgu/checkpoint.hpp"
#include "rgu/cli.hpp"
#include "rgu/config.hpp"
#include "rgu/data.hpp"
#include "rgu/diffusion.hpp"
#include "rgu/eval.hpp"
#include "rgu/experiment.hpp"
#include "rgu/finite_diff.hpp"
#include "rgu/prompts.hpp"
#include "rgu/tensor.hpp"
#include "rgu/unlearn.hpp"

using namespace rgu;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(const std::string& id, bool ok, const std::string& what, const std::string& detail) {
  std::printf("%s %s: %s [%s]\n", ok ? "PASS" : "FAIL", id.c_str(), what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

nn::FlatGrad random_grad(std::size_t n, Rng& rng) {
  nn::FlatGrad g(n);
  for (double& v : g.values) v = rng.normal();
  return g;
}

// ---------------------------------------------------------------- criterion 1
void criterion_1() {
  Timer timer;
  Rng rng(101);
  double worst_orth = 0.0, worst_first_order = 0.0, worst_factor = 0.0, worst_cos = 0.0;
  bool passthrough_exact = true;
  std::size_t pairs = 0;
  for (std::size_t dim : {std::size_t{2}, std::size_t{10}, std::size_t{10000}}) {
    for (int i = 0; i < 1000; ++i) {
      nn::FlatGrad f = random_grad(dim, rng);
      nn::FlatGrad r = random_grad(dim, rng);
      double d = dot(f.view(), r.view());
      if (d == 0.0) continue;
      if (d > 0.0) {
        for (double& v : r.values) v = -v;
        d = -d;
      }
      const auto u = unlearn::restricted_gradient(f, r);
      ++pairs;
      if (!u.conflicted) {
        passthrough_exact = false;
        continue;
      }
      const double nf = norm(f.view()), nr = norm(r.view());
      worst_orth = std::max(worst_orth, std::abs(dot(u.delta_f.view(), r.view())) /
                                            (norm(u.delta_f.view()) * nr));
      worst_orth = std::max(worst_orth, std::abs(dot(u.delta_r.view(), f.view())) /
                                            (norm(u.delta_r.view()) * nf));
      // most negative first-order change, relative to the scale of the terms
      const double cf = dot(u.combined.view(), f.view()) / (norm(u.combined.view()) * nf);
      const double cr = dot(u.combined.view(), r.view()) / (norm(u.combined.view()) * nr);
      worst_first_order = std::min({worst_first_order, cf, cr});

      // non-conflicting pair: flip r back
      nn::FlatGrad rp = r;
      for (double& v : rp.values) v = -v;
      const auto p = unlearn::restricted_gradient(f, rp);
      for (std::size_t j = 0; j < dim && passthrough_exact; ++j) {
        if (p.conflicted || p.combined.values[j] != f.values[j] + rp.values[j]) {
          passthrough_exact = false;
        }
      }

      // equal norms: rescale r to |f|
      nn::FlatGrad re = r;
      for (double& v : re.values) v *= nf / nr;
      const auto e = unlearn::restricted_gradient(f, re);
      const double n2 = squared_norm(f.view());
      const double de = dot(f.view(), re.view());
      std::vector<double> raw(dim);
      for (std::size_t j = 0; j < dim; ++j) raw[j] = f.values[j] + re.values[j];
      const double cosine =
          dot(e.combined.view(), raw) / (norm(e.combined.view()) * norm(raw));
      worst_cos = std::max(worst_cos, std::abs(1.0 - cosine));
      const double factor = norm(e.combined.view()) / norm(raw);
      worst_factor = std::max(worst_factor, std::abs(factor - (1.0 - de / n2)) / (1.0 - de / n2));
    }
  }
  const double secs = timer.seconds();
  const bool ok = worst_orth <= 1e-9 && worst_first_order >= 0.0 && passthrough_exact &&
                  worst_cos <= 1e-12 && worst_factor <= 1e-12 && secs < 10.0;
  std::ostringstream d;
  d << pairs << " pairs; max orthogonality residual " << fmt("%.2e", worst_orth)
    << "; min normalized first-order change " << fmt("%.2e", worst_first_order)
    << "; pass-through " << (passthrough_exact ? "bit-exact" : "NOT exact")
    << "; equal-norm |1-cos| " << fmt("%.2e", worst_cos) << ", factor rel err "
    << fmt("%.2e", worst_factor) << "; " << fmt("%.2f", secs) << " s";
  report("criterion 1", ok, "mutual-projection property suite", d.str());
}

// ---------------------------------------------------------------- criterion 2
void criterion_2() {
  Rng rng(202);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t dim = 1 + rng.index(64);
    const auto g = random_grad(dim, rng);
    auto onto = random_grad(dim, rng);
    const double scale = std::pow(10.0, -3.0 + 6.0 * rng.uniform());
    for (double& v : onto.values) v *= scale;
    // minimize |g - c onto|^2 over c: derivative -2 onto.(g - c onto) = 0
    long double go = 0, oo = 0;
    for (std::size_t j = 0; j < dim; ++j) {
      go += static_cast<long double>(g.values[j]) * onto.values[j];
      oo += static_cast<long double>(onto.values[j]) * onto.values[j];
    }
    const long double c = go / oo;
    const auto got = unlearn::project_away(g, onto);
    long double err = 0, ref = 0;
    for (std::size_t j = 0; j < dim; ++j) {
      const long double want = g.values[j] - c * onto.values[j];
      err += (got.values[j] - want) * (got.values[j] - want);
      ref += static_cast<long double>(g.values[j]) * g.values[j];
    }
    worst = std::max(worst, static_cast<double>(std::sqrt(err / ref)));
  }
  report("criterion 2", worst <= 1e-10, "projection matches least-squares oracle",
         "1000 instances; max relative error " + fmt("%.2e", worst));
}

// ---------------------------------------------------------------- criterion 3
void criterion_3() {
  Rng rng(303);
  int dominated = 0;
  double worst_value = 0.0;
  const int quadratics = 100;
  for (int q = 0; q < quadratics; ++q) {
    const std::size_t n = 2 + rng.index(9);
    std::vector<double> a(n * n), b(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) a[i * n + j] = a[j * n + i] = rng.normal();
      b[i] = rng.normal();
      p[i] = rng.normal();
    }
    const nn::ScalarFn f = [&](std::span<const double> x) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double ax = 0.0;
        for (std::size_t j = 0; j < n; ++j) ax += a[i * n + j] * x[j];
        s += 0.5 * x[i] * ax + b[i] * x[i];
      }
      return s;
    };
    std::vector<double> grad(n);
    for (std::size_t i = 0; i < n; ++i) {
      grad[i] = b[i];
      for (std::size_t j = 0; j < n; ++j) grad[i] += a[i * n + j] * p[j];
    }
    const double gnorm = norm(grad);
    std::vector<double> unit(n);
    for (std::size_t i = 0; i < n; ++i) unit[i] = grad[i] / gnorm;
    const double along = nn::directional_derivative(f, p, unit, 1e-4);
    worst_value = std::max(worst_value, std::abs(along - gnorm));
    bool best = true;
    for (int k = 0; k < 1000; ++k) {
      auto v = random_grad(n, rng).values;
      const double vn = norm(v);
      for (double& x : v) x /= vn;
      if (nn::directional_derivative(f, p, v, 1e-4) > along) best = false;
    }
    dominated += best ? 1 : 0;
  }
  report("criterion 3", dominated == quadratics && worst_value <= 1e-6,
         "normalized gradient maximizes the directional derivative",
         std::to_string(dominated) + "/" + std::to_string(quadratics) +
             " quadratics dominate 1000 random directions; max |D_u f - |grad f|| " +
             fmt("%.2e", worst_value));
}

// ---------------------------------------------------------------- criterion 4
void criterion_4() {
  Timer timer;
  Rng rng(404);
  double worst = 0.0;
  for (int m = 0; m < 100; ++m) {
    nn::Architecture arch;
    arch.input_dim = 1 + rng.index(3);
    const std::size_t depth = 1 + rng.index(3);
    arch.hidden_dims.clear();
    for (std::size_t l = 0; l < depth; ++l) arch.hidden_dims.push_back(2 + rng.index(6));
    arch.class_embed_dim = arch.hidden_dims[0];
    arch.num_classes = 2 + rng.index(3);
    arch.num_timesteps = 3 + rng.index(6);
    arch.time_embed_dim = 1 + rng.index(4);
    const auto model = nn::NoisePredictor::random_init(arch, rng, 0.5);
    const auto schedule =
        diffusion::make_schedule(static_cast<int>(arch.num_timesteps), 0.01, 0.3);
    const std::size_t batch = 1 + rng.index(5);
    Tensor x0({batch, arch.input_dim});
    for (double& v : x0.data()) v = 2.0 * rng.normal();
    std::vector<nn::ClassId> ids;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t c = rng.index(arch.num_classes + 1);
      ids.push_back(c == arch.num_classes ? nn::ClassId{} : nn::ClassId{static_cast<int>(c)});
    }
    const std::uint64_t noise_seed = rng.index(1u << 30);
    Rng r(noise_seed);
    const auto analytic = diffusion::diffusion_loss(model, x0, ids, schedule, r);
    const auto fd = nn::finite_diff_grad(
        [&](std::span<const double> p) {
          Rng same(noise_seed);
          return diffusion::diffusion_loss(model.with_params({p.begin(), p.end()}), x0, ids,
                                           schedule, same)
              .loss;
        },
        model.params(), 1e-6);
    double err = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      err += (analytic.grad.values[i] - fd[i]) * (analytic.grad.values[i] - fd[i]);
      ref += fd[i] * fd[i];
    }
    worst = std::max(worst, std::sqrt(err / ref));
  }
  const double secs = timer.seconds();
  report("criterion 4", worst <= 1e-5 && secs < 60.0,
         "analytic diffusion-loss gradients match central differences",
         "100 random models; max relative error " + fmt("%.2e", worst) + "; " +
             fmt("%.2f", secs) + " s");
}

// ------------------------------------------------------------ toy experiments
struct Toy {
  app::RunConfig cfg;
  data::LabeledDataset dataset;
  app::Checkpoint pretrained;
  double pretrain_seconds = 0.0;
};

Toy make_toy() {
  Toy t;
  t.cfg = app::load_config(std::nullopt, {});
  t.dataset = app::make_dataset(t.cfg);
  Timer timer;
  const auto res = app::pretrain_checkpoint(t.cfg, t.dataset);
  t.pretrain_seconds = timer.seconds();
  t.pretrained = res.checkpoint;
  std::printf("info: pretrained %zu steps in %.1f s, minibatch loss %.4f -> %.4f\n",
              t.cfg.train.steps, t.pretrain_seconds, res.losses.front(), res.losses.back());
  return t;
}

void pretrained_checks(const Toy& t) {
  const auto rep = app::evaluate(t.cfg, t.pretrained, t.cfg.seed);
  report("check pretrained", rep.ua <= 0.1 && rep.ra >= 0.9,
         "pretrained model generates every class",
         "UA " + fmt("%.3f", rep.ua) + ", RA " + fmt("%.3f", rep.ra));

  // null calibration: two fresh draws of the retained classes
  data::MixtureSpec kept;
  kept.sigma = t.cfg.mixture.sigma;
  kept.samples_per_class = t.cfg.eval.n_per_condition;
  const auto spec = t.cfg.mixture.spec();
  for (std::size_t k = 1; k < spec.num_classes(); ++k) kept.means.push_back(spec.means[k]);
  Rng a(1), b(2);
  const Tensor x = data::gen_mixture(kept, a).points, y = data::gen_mixture(kept, b).points;
  const double null_mmd = eval::mmd(x, y, eval::median_bandwidth(y));
  const auto init = app::evaluate(t.cfg, app::init_checkpoint(t.cfg), t.cfg.seed);
  report("check random-init", init.mmd >= 10.0 * std::abs(null_mmd),
         "untrained model is far from the data in MMD",
         "MMD " + fmt("%.3e", init.mmd) + " vs null " + fmt("%.3e", null_mmd));
}

void criterion_5(const Toy& t) {
  Timer timer;
  const auto forget = data::select_class(t.dataset, t.cfg.unlearn.forget_class);
  const std::vector<std::string> names{"finetune", "graddiff", "restricted", "restricted+diverse"};
  std::map<std::string, std::vector<double>> ua, ra, mmd;
  std::size_t restricted_conflicts = 0;
  bool trend_ok = true;
  std::string trend;
  for (std::uint64_t seed : t.cfg.seeds) {
    const auto remain = app::build_remain_set(t.cfg, t.dataset, "balanced", seed);
    const double alpha = app::resolve_alpha(t.cfg, t.pretrained.model,
                                            t.pretrained.schedule.make(), remain, seed);
    for (const auto& name : names) {
      const app::CellSpec cell{t.cfg.unlearn.lambda, alpha, app::parse_strategy_choice(name), seed};
      const auto run = app::run_unlearning(t.cfg, t.pretrained, forget, remain, cell);
      app::Checkpoint after = t.pretrained;
      after.model = run.model;
      const auto rep = app::evaluate(t.cfg, after, seed);
      ua[name].push_back(rep.ua);
      ra[name].push_back(rep.ra);
      mmd[name].push_back(rep.mmd);
      if (name == "restricted") {
        for (const auto& s : run.trajectory) restricted_conflicts += s.conflicted ? 1 : 0;
        // forgetting loss rises while the remaining loss stays near its pretrained level
        const auto schedule = t.pretrained.schedule.make();
        const auto rids = remain.class_ids();
        Rng r0(seed), r1(seed), f0(seed), f1(seed);
        const double lr0 =
            diffusion::diffusion_loss(t.pretrained.model, remain.points, rids, schedule, r0).loss;
        const double lr1 = diffusion::diffusion_loss(run.model, remain.points, rids, schedule, r1).loss;
        const auto fids = forget.class_ids();
        const double lf0 =
            diffusion::diffusion_loss(t.pretrained.model, forget.points, fids, schedule, f0).loss;
        const double lf1 = diffusion::diffusion_loss(run.model, forget.points, fids, schedule, f1).loss;
        trend_ok = trend_ok && lf1 >= lf0 && lr1 <= 2.0 * lr0;
        trend += " seed " + std::to_string(seed) + ": forget mse " + fmt("%.3f", lf0) + "->" +
                 fmt("%.3f", lf1) + ", remain mse " + fmt("%.3f", lr0) + "->" + fmt("%.3f", lr1) + ";";
      }
    }
  }
  std::ostringstream d;
  for (const auto& n : names) {
    d << n << " UA " << fmt("%.3f", app::median(ua[n])) << " RA " << fmt("%.3f", app::median(ra[n]))
      << " MMD " << fmt("%.3e", app::median(mmd[n])) << "; ";
  }
  const double secs = timer.seconds() + t.pretrain_seconds;
  d << "restricted conflicted steps " << restricted_conflicts << "; " << fmt("%.0f", secs)
    << " s incl. pretraining";
  const bool ok = app::median(ua["restricted"]) >= 0.95 &&
                  app::median(ra["restricted"]) >= app::median(ra["graddiff"]) &&
                  app::median(mmd["restricted"]) <= app::median(mmd["graddiff"]) &&
                  app::median(ua["finetune"]) < app::median(ua["restricted"]) &&
                  t.pretrain_seconds <= 600.0 && secs <= 45.0 * 60.0;
  report("criterion 5", ok, "strategy comparison on the 5-class mixture (3-seed medians)", d.str());
  report("check unlearn-trend", trend_ok && restricted_conflicts > 0,
         "restricted run raises forget loss, keeps remain loss within 2x, and conflicts",
         trend.substr(1));
}

void criterion_6(const Toy& t) {
  Timer timer;
  const auto res = app::run_ablation(t.cfg, t.pretrained, t.dataset);
  std::ostringstream d;
  bool ok = false;
  bool sizes_equal = true;
  for (std::size_t i = 0; i + 1 < res.runs.size(); i += 2) {
    sizes_equal = sizes_equal && res.runs[i].remain_size == res.runs[i + 1].remain_size;
  }
  for (const auto& row : res.rows) {
    d << row.strategy << " RA " << fmt("%.3f", row.ra1) << "->" << fmt("%.3f", row.ra2) << " MMD "
      << fmt("%.3e", row.mmd1) << "->" << fmt("%.3e", row.mmd2) << " dUA "
      << fmt("%.3f", row.delta_ua()) << "; ";
    if (row.strategy == "restricted") ok = row.ra2 >= row.ra1 && row.mmd2 <= row.mmd1;
  }
  d << "|D_r| = " << (res.rows.empty() ? 0 : res.rows.front().remain_size) << " in both cases; "
    << fmt("%.0f", timer.seconds()) << " s";
  report("criterion 6", ok && sizes_equal,
         "diverse remaining set helps the restricted strategy (case 1 -> case 2)", d.str());
}

void criterion_7(const Toy& t) {
  Timer timer;
  const auto res = app::run_sweep(t.cfg, t.pretrained, t.dataset);
  std::map<double, std::map<std::string, double>> var;
  for (const auto& s : res.summary) var[s.lambda][s.strategy] = s.ra_variance;
  bool ok = !var.empty();
  std::ostringstream d;
  for (const auto& [lambda, by] : var) {
    const double r = by.at("restricted"), g = by.at("graddiff");
    ok = ok && r <= g;
    d << "lambda " << lambda << ": RA var restricted " << fmt("%.2e", r) << " vs graddiff "
      << fmt("%.2e", g) << "; ";
  }
  std::size_t failed = 0;
  for (const auto& c : res.cells) failed += c.status == "ok" ? 0 : 1;
  d << res.cells.size() << " cells, " << failed << " failed; " << fmt("%.0f", timer.seconds())
    << " s";
  report("criterion 7", ok && failed == 0, "RA variance across the alpha grid", d.str());
}

// ---------------------------------------------------------------- criterion 8
void criterion_8() {
  const auto spec = data::default_prompt_spec();
  Rng rng(808);
  const auto pairs = data::gen_prompt_pairs(spec, 30, rng);
  std::vector<std::set<std::string>> train(spec.dimensions.size()), test(spec.dimensions.size());
  std::size_t overlap = 0, mismatched = 0;
  for (const auto& p : pairs) {
    for (std::size_t d = 0; d < spec.dimensions.size(); ++d) {
      (p.split == "train" ? train : test)[d].insert(p.subconcepts[d]);
    }
    if (p.remain_prompt != data::strip_concept(p.forget_prompt, p.concept_token)) ++mismatched;
  }
  for (std::size_t d = 0; d < spec.dimensions.size(); ++d) {
    for (const auto& v : train[d]) overlap += test[d].count(v);
  }
  data::PromptTemplateSpec ref;
  ref.concept_tokens = {"unclad"};
  ref.dimensions = {{"mood", {"melancholic", "joyful"}},
                    {"activity", {"painting", "reading"}},
                    {"environment", {"a bright, airy studio", "a quiet library"}},
                    {"time", {"early evening", "at dawn"}}};
  const std::vector<std::string> sub{"melancholic", "painting", "a bright, airy studio",
                                     "early evening"};
  const bool verbatim =
      data::render_prompt(ref, "unclad", sub) ==
          "A melancholic unclad person painting in a bright, airy studio early evening" &&
      data::render_prompt(ref, "", sub) ==
          "A melancholic person painting in a bright, airy studio early evening";
  report("criterion 8", overlap == 0 && mismatched == 0 && verbatim,
         "prompt pairs are split cleanly and differ only by the concept",
         std::to_string(pairs.size()) + " pairs; shared subconcepts " + std::to_string(overlap) +
             "; mismatched pairs " + std::to_string(mismatched) + "; reference pair " +
             (verbatim ? "reproduced" : "NOT reproduced"));
}

// ---------------------------------------------------------------- criterion 9
std::map<std::string, std::string> run_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  const std::vector<std::string> sets{
      "mixture.samples_per_class=200", "train.steps=400",       "unlearn.iterations=50",
      "eval.n_per_condition=50",       "seeds=[0,1]",           "sweep.lambdas=[1]",
      "sweep.alpha_scales=[1,2]",      "unlearn.remain.per_class=50"};
  const std::vector<std::vector<std::string>> commands{
      {"gen-data"}, {"train"}, {"unlearn", "--strategy", "restricted"},
      {"eval", "--checkpoint", (dir / "unlearned_restricted.json").string()},
      {"sweep"},    {"diversity-ablation"}, {"gen-prompts"}};
  for (const auto& c : commands) {
    std::vector<std::string> args{"rgu"};
    args.insert(args.end(), c.begin(), c.end());
    args.insert(args.end(), {"--seed", "7", "--out", dir.string()});
    for (const auto& s : sets) args.insert(args.end(), {"--set", s});
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    if (app::run_cli(static_cast<int>(argv.size()), argv.data(), out, err) != 0) {
      throw std::runtime_error("pipeline step " + c.front() + " failed: " + err.str());
    }
  }
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[e.path().filename().string()] = ss.str();
  }
  return files;
}

void criterion_9(const Toy& t) {
  const auto base = fs::temp_directory_path() / "rgu_acceptance";
  std::string detail;
  bool ok = true;
  try {
    const auto a = run_pipeline(base / "a");
    const auto b = run_pipeline(base / "b");
    std::size_t csvs = 0, differing = 0;
    for (const auto& [name, text] : a) {
      if (name.size() < 4 || name.substr(name.size() - 4) != ".csv") continue;
      ++csvs;
      const auto it = b.find(name);
      if (it == b.end() || it->second != text) ++differing;
    }
    ok = csvs >= 6 && differing == 0 && a == b;
    detail = std::to_string(csvs) + " CSV files, " + std::to_string(differing) + " differ";
  } catch (const std::exception& e) {
    ok = false;
    detail = e.what();
  }
  const auto path = base / "pretrained_roundtrip.json";
  app::save_checkpoint(t.pretrained, path.string());
  const auto back = app::load_checkpoint(path.string());
  const bool exact = back.model.param_vector() == t.pretrained.model.param_vector();
  detail += std::string("; checkpoint round-trip ") + (exact ? "bit-exact" : "NOT exact");
  report("criterion 9", ok && exact, "end-to-end determinism and checkpoint persistence", detail);
}

}  // namespace

int main() {
  Timer total;
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  const Toy toy = make_toy();
  pretrained_checks(toy);
  criterion_5(toy);
  criterion_6(toy);
  criterion_7(toy);
  criterion_8();
  criterion_9(toy);
  std::printf("info: total %.0f s, %d failing\n", total.seconds(), g_failures);
  return g_failures == 0 ? 0 : 1;
}
