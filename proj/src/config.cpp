// SPDX-License-Identifier: Apache-2.0
#include "rgu/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "rgu/errors.hpp"

namespace rgu::app {

using nlohmann::json;

data::MixtureSpec MixtureConfig::spec() const {
  data::MixtureSpec s;
  if (means.empty()) {
    s = data::MixtureSpec::circle(num_classes, radius, sigma, samples_per_class);
  } else {
    s.means = means;
    s.sigma = sigma;
    s.samples_per_class = samples_per_class;
  }
  return s;
}

diffusion::NoiseSchedule ScheduleConfig::make() const {
  return diffusion::make_schedule(T, beta_min, beta_max);
}

nn::Architecture RunConfig::architecture() const {
  nn::Architecture a;
  const auto spec = mixture.spec();
  a.input_dim = spec.dim();
  a.hidden_dims = model.hidden_dims;
  a.num_classes = spec.num_classes();
  a.num_timesteps = static_cast<std::size_t>(schedule.T);
  a.time_embed_dim = model.time_embed_dim;
  a.class_embed_dim = model.class_embed_dim;
  return a;
}

namespace {

template <class Fn>
void guard(const std::string& section, Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    const std::string what = e.what();
    throw ConfigError(what.rfind(section, 0) == 0 ? what : section + ": " + what);
  }
}

bool is_strategy_name(const std::string& s) {
  return s == "restricted" || s == "graddiff" || s == "finetune" || s == "restricted+diverse";
}

}  // namespace

void RunConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds: must be nonempty");
  guard("mixture", [&] { mixture.spec().validate(); });
  if (!mixture.means.empty() && mixture.means.size() != mixture.num_classes) {
    throw ConfigError("mixture.means: " + std::to_string(mixture.means.size()) +
                      " means for num_classes " + std::to_string(mixture.num_classes));
  }
  if (mixture.samples_per_class < 1) throw ConfigError("mixture.samples_per_class: must be >= 1");
  guard("schedule", [&] { schedule.make(); });
  guard("model", [&] { architecture().validate(); });
  if (!(model.embed_scale > 0.0)) throw ConfigError("model.embed_scale: must be > 0");
  guard("train", [&] { train.validate(); });
  const auto k = static_cast<int>(mixture.spec().num_classes());
  if (unlearn.forget_class < 0 || unlearn.forget_class >= k) {
    throw ConfigError("unlearn.forget_class: " + std::to_string(unlearn.forget_class) +
                      " outside [0, " + std::to_string(k) + ")");
  }
  if (unlearn.alpha && !(*unlearn.alpha > 0.0)) throw ConfigError("unlearn.alpha: must be > 0");
  if (!(unlearn.alpha_quantile > 0.0 && unlearn.alpha_quantile <= 1.0)) {
    throw ConfigError("unlearn.alpha_quantile: must be in (0, 1]");
  }
  if (!is_strategy_name(unlearn.strategy)) {
    throw ConfigError("unlearn.strategy: unknown strategy '" + unlearn.strategy + "'");
  }
  guard("unlearn", [&] {
    unlearn::UnlearnConfig u;
    u.lambda = unlearn.lambda;
    u.eta = unlearn.eta;
    u.iterations = unlearn.iterations;
    u.batch_forget = unlearn.batch_forget;
    u.batch_remain = unlearn.batch_remain;
    u.validate();
  });
  const auto& r = unlearn.remain;
  if (r.mode != "balanced" && r.mode != "similar" && r.mode != "random") {
    throw ConfigError("unlearn.remain.mode: expected balanced, similar or random, got '" + r.mode +
                      "'");
  }
  if (r.per_class < 1) throw ConfigError("unlearn.remain.per_class: must be >= 1");
  if (r.per_class > mixture.samples_per_class) {
    throw ConfigError("unlearn.remain.per_class: exceeds mixture.samples_per_class");
  }
  if (r.k_nearest < 1 || r.k_nearest > static_cast<std::size_t>(k - 1)) {
    throw ConfigError("unlearn.remain.k_nearest: must be in [1, " + std::to_string(k - 1) + "]");
  }
  guard("eval", [&] { eval.validate(); });
  if (sweep.lambdas.empty()) throw ConfigError("sweep.lambdas: must be nonempty");
  for (double l : sweep.lambdas) {
    if (!(l >= 0.0)) throw ConfigError("sweep.lambdas: entries must be >= 0");
  }
  if (sweep.alphas.empty() && sweep.alpha_scales.empty()) {
    throw ConfigError("sweep.alpha_scales: must be nonempty when sweep.alphas is empty");
  }
  for (double a : sweep.alphas) {
    if (!(a > 0.0)) throw ConfigError("sweep.alphas: entries must be > 0");
  }
  for (double a : sweep.alpha_scales) {
    if (!(a > 0.0)) throw ConfigError("sweep.alpha_scales: entries must be > 0");
  }
  if (sweep.strategies.empty()) throw ConfigError("sweep.strategies: must be nonempty");
  for (const auto& s : sweep.strategies) {
    if (!is_strategy_name(s)) throw ConfigError("sweep.strategies: unknown strategy '" + s + "'");
  }
  if (ablation.k_nearest < 1 || ablation.k_nearest > static_cast<std::size_t>(k - 1)) {
    throw ConfigError("ablation.k_nearest: must be in [1, " + std::to_string(k - 1) + "]");
  }
  if (ablation.strategies.empty()) throw ConfigError("ablation.strategies: must be nonempty");
  for (const auto& s : ablation.strategies) {
    if (!is_strategy_name(s)) throw ConfigError("ablation.strategies: unknown strategy '" + s + "'");
  }
  guard("prompts", [&] { prompts.validate(); });
  if (out.empty()) throw ConfigError("out: must be nonempty");
}

json to_json(const RunConfig& c) {
  json dims = json::array();
  for (const auto& d : c.prompts.dimensions) dims.push_back({{"name", d.name}, {"values", d.values}});
  return json{
      {"seed", c.seed},
      {"seeds", c.seeds},
      {"mixture",
       {{"num_classes", c.mixture.num_classes},
        {"radius", c.mixture.radius},
        {"sigma", c.mixture.sigma},
        {"samples_per_class", c.mixture.samples_per_class},
        {"means", c.mixture.means}}},
      {"schedule",
       {{"T", c.schedule.T}, {"beta_min", c.schedule.beta_min}, {"beta_max", c.schedule.beta_max}}},
      {"model",
       {{"hidden_dims", c.model.hidden_dims},
        {"time_embed_dim", c.model.time_embed_dim},
        {"class_embed_dim", c.model.class_embed_dim},
        {"embed_scale", c.model.embed_scale}}},
      {"train", {{"steps", c.train.steps}, {"batch", c.train.batch}, {"lr", c.train.lr}}},
      {"unlearn",
       {{"forget_class", c.unlearn.forget_class},
        {"lambda", c.unlearn.lambda},
        {"alpha", c.unlearn.alpha ? json(*c.unlearn.alpha) : json(nullptr)},
        {"alpha_quantile", c.unlearn.alpha_quantile},
        {"eta", c.unlearn.eta},
        {"iterations", c.unlearn.iterations},
        {"batch_forget", c.unlearn.batch_forget},
        {"batch_remain", c.unlearn.batch_remain},
        {"strategy", c.unlearn.strategy},
        {"remain",
         {{"mode", c.unlearn.remain.mode},
          {"per_class", c.unlearn.remain.per_class},
          {"k_nearest", c.unlearn.remain.k_nearest}}}}},
      {"eval",
       {{"n_per_condition", c.eval.n_per_condition},
        {"none_threshold", c.eval.none_threshold},
        {"mmd_bandwidth", c.eval.mmd_bandwidth}}},
      {"sweep",
       {{"lambdas", c.sweep.lambdas},
        {"alpha_scales", c.sweep.alpha_scales},
        {"alphas", c.sweep.alphas},
        {"strategies", c.sweep.strategies}}},
      {"ablation", {{"k_nearest", c.ablation.k_nearest}, {"strategies", c.ablation.strategies}}},
      {"prompts",
       {{"concept_tokens", c.prompts.concept_tokens},
        {"dimensions", dims},
        {"template", c.prompts.template_text},
        {"train_fraction", c.prompts.train_fraction},
        {"count", c.prompt_count}}},
      {"out", c.out},
  };
}

namespace {

/// Reads one JSON object, remembering which keys were used so that leftovers
/// can be reported as unknown fields.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    used_.insert(key);
    out = convert<T>(*it, child(key));
  }

  Section sub(const char* key) {
    used_.insert(key);
    const auto it = j_.find(key);
    static const json empty = json::object();
    return Section(it == j_.end() ? empty : *it, child(key));
  }

  const json* raw(const char* key) {
    const auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError(child(it.key()) + ": unknown field");
    }
  }

  template <class T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned())) {
        throw ConfigError(path + ": expected a non-negative integer");
      }
      return v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path + ": expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path + ": expected a string");
      return v.get<std::string>();
    } else {
      // vectors
      if (!v.is_array()) throw ConfigError(path + ": expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
      }
      return out;
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace

RunConfig from_json(const json& j) {
  RunConfig c;
  Section root(j, "");
  root.read("seed", c.seed);
  root.read("seeds", c.seeds);
  root.read("out", c.out);
  {
    Section s = root.sub("mixture");
    s.read("num_classes", c.mixture.num_classes);
    s.read("radius", c.mixture.radius);
    s.read("sigma", c.mixture.sigma);
    s.read("samples_per_class", c.mixture.samples_per_class);
    s.read("means", c.mixture.means);
    s.finish();
  }
  {
    Section s = root.sub("schedule");
    s.read("T", c.schedule.T);
    s.read("beta_min", c.schedule.beta_min);
    s.read("beta_max", c.schedule.beta_max);
    s.finish();
  }
  {
    Section s = root.sub("model");
    s.read("hidden_dims", c.model.hidden_dims);
    s.read("time_embed_dim", c.model.time_embed_dim);
    s.read("class_embed_dim", c.model.class_embed_dim);
    s.read("embed_scale", c.model.embed_scale);
    s.finish();
  }
  {
    Section s = root.sub("train");
    s.read("steps", c.train.steps);
    s.read("batch", c.train.batch);
    s.read("lr", c.train.lr);
    s.finish();
  }
  {
    Section s = root.sub("unlearn");
    s.read("forget_class", c.unlearn.forget_class);
    s.read("lambda", c.unlearn.lambda);
    if (const json* a = s.raw("alpha")) {
      if (a->is_null()) {
        c.unlearn.alpha.reset();
      } else {
        c.unlearn.alpha = Section::convert<double>(*a, "unlearn.alpha");
      }
    }
    s.read("alpha_quantile", c.unlearn.alpha_quantile);
    s.read("eta", c.unlearn.eta);
    s.read("iterations", c.unlearn.iterations);
    s.read("batch_forget", c.unlearn.batch_forget);
    s.read("batch_remain", c.unlearn.batch_remain);
    s.read("strategy", c.unlearn.strategy);
    Section r = s.sub("remain");
    r.read("mode", c.unlearn.remain.mode);
    r.read("per_class", c.unlearn.remain.per_class);
    r.read("k_nearest", c.unlearn.remain.k_nearest);
    r.finish();
    s.finish();
  }
  {
    Section s = root.sub("eval");
    s.read("n_per_condition", c.eval.n_per_condition);
    s.read("none_threshold", c.eval.none_threshold);
    s.read("mmd_bandwidth", c.eval.mmd_bandwidth);
    s.finish();
  }
  {
    Section s = root.sub("sweep");
    s.read("lambdas", c.sweep.lambdas);
    s.read("alpha_scales", c.sweep.alpha_scales);
    s.read("alphas", c.sweep.alphas);
    s.read("strategies", c.sweep.strategies);
    s.finish();
  }
  {
    Section s = root.sub("ablation");
    s.read("k_nearest", c.ablation.k_nearest);
    s.read("strategies", c.ablation.strategies);
    s.finish();
  }
  {
    Section s = root.sub("prompts");
    s.read("concept_tokens", c.prompts.concept_tokens);
    s.read("template", c.prompts.template_text);
    s.read("train_fraction", c.prompts.train_fraction);
    s.read("count", c.prompt_count);
    if (const json* dims = s.raw("dimensions")) {
      if (!dims->is_array()) throw ConfigError("prompts.dimensions: expected an array");
      c.prompts.dimensions.clear();
      for (std::size_t i = 0; i < dims->size(); ++i) {
        Section d((*dims)[i], "prompts.dimensions[" + std::to_string(i) + "]");
        data::PromptDimension dim;
        d.read("name", dim.name);
        d.read("values", dim.values);
        d.finish();
        c.prompts.dimensions.push_back(std::move(dim));
      }
    }
    s.finish();
  }
  root.finish();
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set '" + assignment + "': expected key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) throw ConfigError(path + ": unknown field");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  *node = std::move(value);
}

namespace {

void merge_into(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string p = path.empty() ? it.key() : path + "." + it.key();
    auto target = base.find(it.key());
    if (target == base.end()) throw ConfigError(p + ": unknown field");
    if (target->is_object() && it->is_object()) {
      merge_into(*target, *it, p);
    } else {
      *target = *it;
    }
  }
}

}  // namespace

RunConfig load_config(const std::optional<std::string>& path,
                      const std::vector<std::string>& overrides) {
  json doc = to_json(RunConfig{});
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("config file '" + *path + "': cannot be opened");
    json file;
    try {
      file = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config file '" + *path + "': " + e.what());
    }
    merge_into(doc, file, "");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  RunConfig c = from_json(doc);
  c.validate();
  return c;
}

std::string config_hash(const RunConfig& c) {
  // the output directory does not change results
  auto doc = to_json(c);
  doc.erase("out");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : doc.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace rgu::app
