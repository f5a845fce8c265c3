// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "rgu/data.hpp"
#include "rgu/errors.hpp"
#include "rgu/prompts.hpp"

using namespace rgu;

namespace {

data::MixtureSpec line_spec(std::size_t n) {
  data::MixtureSpec s;
  for (int i = 0; i < 5; ++i) s.means.push_back({static_cast<double>(i), 0.0});
  s.sigma = 0.01;
  s.samples_per_class = n;
  return s;
}

std::map<int, int> histogram(const data::LabeledDataset& d) {
  std::map<int, int> h;
  for (int l : d.labels) ++h[l];
  return h;
}

}  // namespace

TEST(Mixture, TinySigmaHugsMeans) {
  auto spec = data::MixtureSpec::circle(5, 5.0, 1e-9, 20);
  Rng rng(1);
  const auto d = data::gen_mixture(spec, rng);
  ASSERT_EQ(d.size(), 100u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& m = spec.means[static_cast<std::size_t>(d.labels[i])];
    EXPECT_LT(std::hypot(d.points(i, 0) - m[0], d.points(i, 1) - m[1]), 1e-6);
  }
}

TEST(Mixture, SampleMeansWithinStandardError) {
  const auto spec = data::MixtureSpec::circle(5, 5.0, 0.3, 1000);
  Rng rng(2);
  const auto d = data::gen_mixture(spec, rng);
  const auto means = data::class_means(d, 5);
  const double bound = 3.0 * 0.3 / std::sqrt(1000.0);
  for (std::size_t k = 0; k < 5; ++k) {
    for (std::size_t j = 0; j < 2; ++j) EXPECT_LT(std::abs(means[k][j] - spec.means[k][j]), bound);
  }
}

TEST(Mixture, CircleGeometry) {
  const auto spec = data::MixtureSpec::circle(4, 2.0, 0.1, 1);
  EXPECT_DOUBLE_EQ(spec.means[0][0], 2.0);
  EXPECT_NEAR(spec.means[1][0], 0.0, 1e-15);
  EXPECT_NEAR(spec.means[1][1], 2.0, 1e-15);
}

TEST(Mixture, DeterministicAndValidated) {
  const auto spec = data::MixtureSpec::circle(5, 5.0, 0.3, 10);
  Rng a(3), b(3);
  EXPECT_EQ(data::gen_mixture(spec, a), data::gen_mixture(spec, b));
  auto bad = spec;
  bad.sigma = 0;
  EXPECT_THROW(data::gen_mixture(bad, a), DomainError);
  bad = spec;
  bad.means[1] = bad.means[0];
  EXPECT_THROW(bad.validate(), DomainError);
  bad = spec;
  bad.means.resize(1);
  EXPECT_THROW(bad.validate(), DomainError);
}

TEST(Remaining, BalancedTenClasses) {
  data::MixtureSpec spec = data::MixtureSpec::circle(10, 5.0, 0.3, 60);
  Rng rng(4);
  const auto d = data::gen_mixture(spec, rng);
  const auto r = data::balanced_remaining_set(d, 3, 50, rng);
  EXPECT_EQ(r.size(), 450u);
  const auto h = histogram(r);
  EXPECT_EQ(h.count(3), 0u);
  EXPECT_EQ(h.size(), 9u);
  for (const auto& [k, n] : h) EXPECT_EQ(n, 50) << k;
}

TEST(Remaining, BalancedErrors) {
  Rng rng(5);
  const auto d = data::gen_mixture(line_spec(10), rng);
  EXPECT_THROW(data::balanced_remaining_set(d, 0, 0, rng), DomainError);
  EXPECT_THROW(data::balanced_remaining_set(d, 0, 11, rng), DomainError);
  EXPECT_THROW(data::balanced_remaining_set(d, 7, 5, rng), DomainError);
}

TEST(Remaining, BalancedHasNoDuplicates) {
  Rng rng(6);
  const auto d = data::gen_mixture(line_spec(10), rng);
  const auto r = data::balanced_remaining_set(d, 0, 10, rng);
  std::set<std::vector<double>> rows;
  for (std::size_t i = 0; i < r.size(); ++i) rows.emplace(r.points.row(i).begin(), r.points.row(i).end());
  EXPECT_EQ(rows.size(), r.size());
}

TEST(Remaining, SimilarityOnLine) {
  Rng rng(7);
  const auto d = data::gen_mixture(line_spec(50), rng);
  EXPECT_EQ(data::similarity_ranking(d, 0), (std::vector<int>{1, 2, 3, 4}));
  const auto r = data::similarity_restricted_set(d, 0, 2, 40, rng);
  const auto h = histogram(r);
  EXPECT_EQ(h, (std::map<int, int>{{1, 20}, {2, 20}}));
}

TEST(Remaining, SimilarityCircleNeighbours) {
  Rng rng(8);
  const auto d = data::gen_mixture(data::MixtureSpec::circle(5, 5.0, 0.3, 200), rng);
  const auto r = data::similarity_restricted_set(d, 0, 2, 400, rng);
  EXPECT_EQ(histogram(r), (std::map<int, int>{{1, 200}, {4, 200}}));
}

TEST(Remaining, SimilarityTieBreakLowerIndex) {
  // classes 1 and 2 sit at the same distance from class 0
  data::MixtureSpec s;
  s.means = {{0, 0}, {0, 1}, {0, -1}, {0, 5}};
  s.sigma = 1e-12;
  s.samples_per_class = 4;
  Rng rng(9);
  const auto d = data::gen_mixture(s, rng);
  const auto rank = data::similarity_ranking(d, 0);
  EXPECT_EQ(rank.front(), 1);
  EXPECT_EQ(histogram(data::similarity_restricted_set(d, 0, 1, 4, rng)), (std::map<int, int>{{1, 4}}));
}

TEST(Remaining, SimilarityAllClassesMatchesBalancedDistribution) {
  Rng rng(10);
  const auto d = data::gen_mixture(line_spec(30), rng);
  const auto r = data::similarity_restricted_set(d, 2, 4, 80, rng);
  EXPECT_EQ(histogram(r), (std::map<int, int>{{0, 20}, {1, 20}, {3, 20}, {4, 20}}));
  EXPECT_THROW(data::similarity_restricted_set(d, 2, 3, 80, rng), DomainError);
  EXPECT_THROW(data::similarity_restricted_set(d, 2, 5, 80, rng), DomainError);
}

TEST(Remaining, RandomExcludesForgetClass) {
  Rng rng(11);
  const auto d = data::gen_mixture(line_spec(30), rng);
  const auto r = data::random_remaining_set(d, 1, 100, rng);
  EXPECT_EQ(r.size(), 100u);
  for (int l : r.labels) EXPECT_NE(l, 1);
}

TEST(Jsonl, RoundTripBitExact) {
  Rng rng(12);
  const auto d = data::gen_mixture(data::MixtureSpec::circle(3, 5.0, 0.3, 20), rng);
  std::stringstream ss;
  data::write_jsonl(d, ss);
  EXPECT_EQ(data::read_jsonl(ss), d);
}

TEST(Jsonl, RejectsMalformedLine) {
  std::stringstream ss("{\"x\": [1, 2], \"label\": 0}\n{\"x\": [1], \"label\": 0}\n");
  EXPECT_THROW(data::read_jsonl(ss), DomainError);
  std::stringstream bad("not json\n");
  EXPECT_THROW(data::read_jsonl(bad), DomainError);
}

namespace {

data::PromptTemplateSpec table_spec() {
  data::PromptTemplateSpec s;
  s.concept_tokens = {"unclad"};
  s.dimensions = {{"mood", {"melancholic", "joyful"}},
                  {"activity", {"painting", "reading"}},
                  {"environment", {"a bright, airy studio", "a quiet library"}},
                  {"time", {"early evening", "at dawn"}}};
  return s;
}

}  // namespace

TEST(Prompts, ReferencePairVerbatim) {
  const auto s = table_spec();
  const std::vector<std::string> sub{"melancholic", "painting", "a bright, airy studio",
                                     "early evening"};
  EXPECT_EQ(data::render_prompt(s, "unclad", sub),
            "A melancholic unclad person painting in a bright, airy studio early evening");
  EXPECT_EQ(data::render_prompt(s, "", sub),
            "A melancholic person painting in a bright, airy studio early evening");
}

TEST(Prompts, ArticleFollowsNeighbour) {
  auto s = table_spec();
  s.template_text = "A {concept} {mood} person {activity} in {environment} {time}";
  const std::vector<std::string> sub{"joyful", "reading", "a quiet library", "at dawn"};
  EXPECT_EQ(data::render_prompt(s, "unclad", sub),
            "An unclad joyful person reading in a quiet library at dawn");
  EXPECT_EQ(data::render_prompt(s, "", sub), "A joyful person reading in a quiet library at dawn");
  EXPECT_EQ(data::strip_concept("An unclad joyful person", "unclad"), "A joyful person");
  EXPECT_EQ(data::normalize_articles("a apple and an pear"), "an apple and a pear");
}

TEST(Prompts, GeneratedPairsAreConsistentAndSplit) {
  const auto s = data::default_prompt_spec();
  Rng rng(13);
  const auto pairs = data::gen_prompt_pairs(s, 20, rng);
  ASSERT_EQ(pairs.size(), 40u);
  std::vector<std::set<std::string>> train(s.dimensions.size()), test(s.dimensions.size());
  std::set<std::string> seen;
  for (const auto& p : pairs) {
    EXPECT_EQ(p.remain_prompt, data::strip_concept(p.forget_prompt, p.concept_token));
    EXPECT_EQ(p.forget_prompt.find(p.concept_token) == std::string::npos, false);
    EXPECT_TRUE(seen.insert(p.id).second);
    for (std::size_t d = 0; d < s.dimensions.size(); ++d) {
      (p.split == "train" ? train : test)[d].insert(p.subconcepts[d]);
    }
  }
  for (std::size_t d = 0; d < s.dimensions.size(); ++d) {
    for (const auto& v : train[d]) EXPECT_EQ(test[d].count(v), 0u) << v;
  }
}

TEST(Prompts, Errors) {
  auto s = table_spec();
  Rng rng(14);
  // 1 train value per dimension with train_fraction 0.5 of 2 values
  EXPECT_THROW(data::gen_prompt_pairs(s, 2, rng), DomainError);
  EXPECT_EQ(data::gen_prompt_pairs(s, 1, rng).size(), 2u);
  s.concept_tokens.clear();
  EXPECT_THROW(data::gen_prompt_pairs(s, 1, rng), DomainError);
  s = table_spec();
  s.dimensions[0].values = {"only"};
  EXPECT_THROW(s.validate(), DomainError);
}

TEST(Prompts, DeterministicJsonl) {
  const auto s = data::default_prompt_spec();
  Rng a(15), b(15);
  std::ostringstream x, y;
  data::write_prompt_jsonl(data::gen_prompt_pairs(s, 5, a), x);
  data::write_prompt_jsonl(data::gen_prompt_pairs(s, 5, b), y);
  EXPECT_EQ(x.str(), y.str());
  EXPECT_EQ(x.str().rfind("{\"id\":\"train-0\",\"split\":\"train\",\"forget_prompt\":", 0), 0u);
}
