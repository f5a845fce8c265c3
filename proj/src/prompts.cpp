// SPDX-License-Identifier: Apache-2.0
#include "rgu/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rgu/errors.hpp"

namespace rgu::data {

namespace {

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool is_article(const std::string& w) {
  const auto l = lower(w);
  return l == "a" || l == "an";
}

bool starts_with_vowel(const std::string& w) {
  return !w.empty() && std::string("aeiou").find(static_cast<char>(
                           std::tolower(static_cast<unsigned char>(w.front())))) != std::string::npos;
}

std::string matched_article(const std::string& article, const std::string& next) {
  std::string out = starts_with_vowel(next) ? "an" : "a";
  if (std::isupper(static_cast<unsigned char>(article.front()))) {
    out.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(out.front())));
  }
  return out;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

}  // namespace

std::string normalize_articles(const std::string& text) {
  auto words = split_words(text);
  for (std::size_t i = 0; i + 1 < words.size(); ++i) {
    if (is_article(words[i])) words[i] = matched_article(words[i], words[i + 1]);
  }
  return join_words(words);
}

void PromptTemplateSpec::validate() const {
  if (concept_tokens.empty()) throw DomainError("prompts: concept_tokens must be nonempty");
  for (const auto& c : concept_tokens) {
    if (split_words(c).empty()) throw DomainError("prompts: blank concept token");
  }
  if (template_text.find("{concept}") == std::string::npos) {
    throw DomainError("prompts: template has no {concept} slot");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw DomainError("prompts: train_fraction must be in (0, 1)");
  }
  std::set<std::string> names;
  for (const auto& d : dimensions) {
    if (d.name.empty() || d.name == "concept" || !names.insert(d.name).second) {
      throw DomainError("prompts: bad or repeated dimension name '" + d.name + "'");
    }
    if (d.values.size() < 2) {
      throw DomainError("prompts: dimension '" + d.name + "' needs at least 2 values to split");
    }
    if (std::set<std::string>(d.values.begin(), d.values.end()).size() != d.values.size()) {
      throw DomainError("prompts: dimension '" + d.name + "' has repeated values");
    }
    if (template_text.find("{" + d.name + "}") == std::string::npos) {
      throw DomainError("prompts: template has no {" + d.name + "} slot");
    }
  }
}

PromptSplit split_dimensions(const PromptTemplateSpec& spec, Rng& rng) {
  spec.validate();
  PromptSplit out;
  for (const auto& d : spec.dimensions) {
    auto values = d.values;
    std::shuffle(values.begin(), values.end(), rng.engine());
    const auto n = values.size();
    const auto n_train = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n))), 1,
        n - 1);
    out.train.emplace_back(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.emplace_back(values.begin() + static_cast<std::ptrdiff_t>(n_train), values.end());
  }
  return out;
}

std::string render_prompt(const PromptTemplateSpec& spec, const std::string& concept_token,
                          const std::vector<std::string>& subconcepts) {
  if (subconcepts.size() != spec.dimensions.size()) {
    throw ShapeError("prompts: " + std::to_string(subconcepts.size()) + " subconcepts for " +
                     std::to_string(spec.dimensions.size()) + " dimensions");
  }
  std::string s = spec.template_text;
  for (std::size_t i = 0; i < subconcepts.size(); ++i) {
    s = replace_all(s, "{" + spec.dimensions[i].name + "}", subconcepts[i]);
  }
  s = replace_all(s, "{concept}", concept_token);
  // word re-joining collapses the double space left by an empty slot
  return normalize_articles(join_words(split_words(s)));
}

std::string strip_concept(const std::string& prompt, const std::string& concept_token) {
  auto words = split_words(prompt);
  const auto token = split_words(concept_token);
  if (token.empty()) throw DomainError("strip_concept: blank concept token");
  const auto it = std::search(words.begin(), words.end(), token.begin(), token.end());
  if (it == words.end()) {
    throw DomainError("strip_concept: '" + concept_token + "' not found in prompt");
  }
  const auto pos = static_cast<std::size_t>(it - words.begin());
  words.erase(it, it + static_cast<std::ptrdiff_t>(token.size()));
  if (pos > 0 && pos < words.size() && is_article(words[pos - 1])) {
    words[pos - 1] = matched_article(words[pos - 1], words[pos]);
  }
  return join_words(words);
}

namespace {

/// count distinct integers from [0, n), Floyd's algorithm, returned sorted.
std::vector<std::size_t> distinct_indices(std::size_t n, std::size_t count, Rng& rng) {
  std::set<std::size_t> chosen;
  for (std::size_t j = n - count; j < n; ++j) {
    const std::size_t r = rng.index(j + 1);
    if (!chosen.insert(r).second) chosen.insert(j);
  }
  return {chosen.begin(), chosen.end()};
}

}  // namespace

std::vector<PromptPair> gen_prompt_pairs(const PromptTemplateSpec& spec, std::size_t count,
                                         Rng& rng) {
  const PromptSplit split = split_dimensions(spec, rng);
  std::vector<PromptPair> out;
  for (const auto* name : {"train", "test"}) {
    const auto& dims = std::string(name) == "train" ? split.train : split.test;
    std::size_t combos = 1;
    for (const auto& d : dims) combos *= d.size();
    if (count > combos) {
      throw DomainError("prompts: " + std::to_string(count) + " prompts requested but the " +
                        name + " split has only " + std::to_string(combos) + " combinations");
    }
    const auto picks = distinct_indices(combos, count, rng);
    for (std::size_t i = 0; i < picks.size(); ++i) {
      PromptPair p;
      p.id = std::string(name) + "-" + std::to_string(i);
      p.split = name;
      std::size_t rest = picks[i];
      for (const auto& d : dims) {
        p.subconcepts.push_back(d[rest % d.size()]);
        rest /= d.size();
      }
      p.concept_token = spec.concept_tokens[rng.index(spec.concept_tokens.size())];
      p.forget_prompt = render_prompt(spec, p.concept_token, p.subconcepts);
      p.remain_prompt = render_prompt(spec, "", p.subconcepts);
      out.push_back(std::move(p));
    }
  }
  return out;
}

void write_prompt_jsonl(const std::vector<PromptPair>& pairs, std::ostream& os) {
  for (const auto& p : pairs) {
    nlohmann::ordered_json rec;
    rec["id"] = p.id;
    rec["split"] = p.split;
    rec["forget_prompt"] = p.forget_prompt;
    rec["remain_prompt"] = p.remain_prompt;
    os << rec.dump() << '\n';
  }
}

PromptTemplateSpec default_prompt_spec() {
  PromptTemplateSpec s;
  s.concept_tokens = {"unclad", "nude", "naked"};
  s.dimensions = {
      {"mood", {"melancholic", "joyful", "pensive", "serene", "anxious", "elated"}},
      {"activity", {"painting", "reading", "dancing", "cooking", "running", "sketching"}},
      {"environment",
       {"a bright, airy studio", "a quiet library", "an old garden", "a crowded market",
        "a misty forest", "an empty beach"}},
      {"time", {"early evening", "at dawn", "at midnight", "in the afternoon", "on a rainy morning",
                "at dusk"}},
  };
  return s;
}

}  // namespace rgu::data
