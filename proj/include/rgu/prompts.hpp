// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "rgu/rng.hpp"

namespace rgu::data {

/// One named axis of variation and its candidate values.
struct PromptDimension {
  std::string name;
  std::vector<std::string> values;
};

/// Cartesian-product prompt template.
///
/// The template holds one "{concept}" slot and one "{name}" slot per dimension.
/// Each dimension's values are shuffled and split into train and test parts, so
/// the two splits never share a value in any dimension.
struct PromptTemplateSpec {
  std::vector<std::string> concept_tokens;
  std::vector<PromptDimension> dimensions;
  std::string template_text = "A {mood} {concept} person {activity} in {environment} {time}";
  double train_fraction = 0.5;

  void validate() const;
};

struct PromptPair {
  std::string id;
  std::string split;  // "train" or "test"
  std::string forget_prompt;
  std::string remain_prompt;
  std::string concept_token;
  std::vector<std::string> subconcepts;  // aligned with the spec's dimensions
};

/// Per-dimension train/test value split used by gen_prompt_pairs.
struct PromptSplit {
  std::vector<std::vector<std::string>> train;
  std::vector<std::vector<std::string>> test;
};

PromptSplit split_dimensions(const PromptTemplateSpec& spec, Rng& rng);

/// count distinct combinations per split. Throws DomainError when a split has
/// fewer than count combinations.
std::vector<PromptPair> gen_prompt_pairs(const PromptTemplateSpec& spec, std::size_t count,
                                         Rng& rng);

/// Fills the template. An empty concept drops the slot and its surrounding space.
/// Articles "a"/"an" are matched to the following word in both cases.
std::string render_prompt(const PromptTemplateSpec& spec, const std::string& concept_token,
                          const std::vector<std::string>& subconcepts);

/// The first whole-word occurrence of concept_token removed from prompt, with the
/// preceding article re-matched to its new neighbor.
std::string strip_concept(const std::string& prompt, const std::string& concept_token);

/// "a" or "an" (case kept) before each word, by its leading letter.
std::string normalize_articles(const std::string& text);

/// {"id", "split", "forget_prompt", "remain_prompt"} per line.
void write_prompt_jsonl(const std::vector<PromptPair>& pairs, std::ostream& os);

PromptTemplateSpec default_prompt_spec();

}  // namespace rgu::data
