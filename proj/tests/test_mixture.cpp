#include "dma/mixture.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <vector>

namespace {

dma::MixtureProbs random_probs(std::size_t k, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.01, 1.0);
  dma::MixtureProbs probs;
  probs.cond.resize(static_cast<Eigen::Index>(k), d);
  probs.dprob.resize(d);
  for (int j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < k; ++i)
      probs.cond(static_cast<Eigen::Index>(i), j) = unif(rng);
    probs.cond.col(j) /= probs.cond.col(j).sum();
    probs.dprob[j] = unif(rng);
  }
  probs.dprob /= probs.dprob.sum();
  return probs;
}

TEST(UniformProbs, JointIsOneOverKd) {
  const auto probs = dma::uniform_probs(5, 3);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 5; ++i)
      EXPECT_DOUBLE_EQ(probs.cond(i, j) * probs.dprob[j], 1.0 / 15.0);
}

TEST(ForgettingUpdate, PinnedTwoModelCase) {
  // (0.8, 0.2) at alpha = 1/2: sqrt(0.8) : sqrt(0.2) = 2 : 1.
  dma::MixtureProbs probs;
  probs.cond.resize(2, 1);
  probs.cond << 0.8, 0.2;
  probs.dprob = Eigen::VectorXd::Ones(1);
  const auto out = dma::forgetting_update(probs, 0.5);
  EXPECT_NEAR(out.cond(0, 0), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(out.cond(1, 0), 1.0 / 3.0, 1e-12);
}

TEST(ForgettingUpdate, AlphaOneIsIdentity) {
  const auto probs = random_probs(20, 4, 3);
  const auto out = dma::forgetting_update(probs, 1.0);
  EXPECT_NEAR((out.cond - probs.cond).lpNorm<Eigen::Infinity>(), 0.0, 1e-13);
  EXPECT_NEAR((out.dprob - probs.dprob).lpNorm<Eigen::Infinity>(), 0.0, 1e-13);
}

TEST(ForgettingUpdate, FlattensTowardUniform) {
  const auto probs = random_probs(30, 1, 5);
  const auto out = dma::forgetting_update(probs, 0.5);
  // Powering below 1 shrinks the spread: max decreases, min increases.
  EXPECT_LT(out.cond.col(0).maxCoeff(), probs.cond.col(0).maxCoeff());
  EXPECT_GT(out.cond.col(0).minCoeff(), probs.cond.col(0).minCoeff());
  EXPECT_NEAR(out.cond.col(0).sum(), 1.0, 1e-12);
}

TEST(ForgettingUpdate, UnderflowedColumnResetsToUniform) {
  dma::MixtureProbs probs;
  probs.cond = Eigen::MatrixXd::Zero(4, 2);
  probs.cond.col(1).setConstant(0.25);
  probs.dprob = Eigen::VectorXd::Constant(2, 0.5);
  bool underflowed = false;
  const auto out = dma::forgetting_update(probs, 0.9, &underflowed);
  EXPECT_TRUE(underflowed);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(out.cond(i, 0), 0.25);
  EXPECT_NEAR(out.cond.col(1).sum(), 1.0, 1e-12);
}

TEST(ForgettingUpdate, RejectsBadAlpha) {
  const auto probs = dma::uniform_probs(3, 1);
  EXPECT_THROW(dma::forgetting_update(probs, 0.0), dma::ConfigError);
  EXPECT_THROW(dma::forgetting_update(probs, 1.1), dma::ConfigError);
}

TEST(InclusionProbs, SingleModel) {
  dma::ModelSpace space;
  space.n = 3;
  space.ids = {0b101};
  dma::MixtureProbs probs = dma::uniform_probs(1, 2);
  const Eigen::VectorXd incl = dma::inclusion_probs(probs, space);
  EXPECT_DOUBLE_EQ(incl[0], 1.0);
  EXPECT_DOUBLE_EQ(incl[1], 0.0);
  EXPECT_DOUBLE_EQ(incl[2], 1.0);
}

TEST(InclusionProbs, SumsToExpectedSize) {
  const auto space = dma::enumerate_models(5, {0});
  const auto probs = random_probs(space.size(), 3, 17);
  const Eigen::VectorXd incl = dma::inclusion_probs(probs, space);
  EXPECT_NEAR(incl.sum(), dma::expected_size(probs, space), 1e-12);
  EXPECT_NEAR(incl[0], 1.0, 1e-12);  // forced column
  for (int r = 0; r < 5; ++r) {
    ASSERT_GE(incl[r], 0.0);
    ASSERT_LE(incl[r], 1.0 + 1e-12);
  }
}

TEST(SizeStats, ExpectedAndDmsTieBreak) {
  dma::ModelSpace space;
  space.n = 3;
  space.ids = {0b001, 0b111};
  dma::MixtureProbs probs = dma::uniform_probs(2, 1);
  EXPECT_DOUBLE_EQ(dma::expected_size(probs, space), 2.0);
  // Equal weights: the lower mask wins, so the selected size is 1.
  EXPECT_EQ(dma::dms_size(probs, space), 1);
}

TEST(DeltaPosteriorMean, WeightedGridAverage) {
  dma::MixtureProbs probs = dma::uniform_probs(2, 3);
  probs.dprob << 0.2, 0.3, 0.5;
  const double mean = dma::delta_posterior_mean(probs, {0.9, 0.95, 1.0});
  EXPECT_NEAR(mean, 0.2 * 0.9 + 0.3 * 0.95 + 0.5 * 1.0, 1e-15);
  EXPECT_THROW(dma::delta_posterior_mean(probs, {0.9}), dma::ConfigError);
}

TEST(TopProbStats, MatchesSortOracle) {
  const auto probs = random_probs(20, 2, 29);
  const Eigen::VectorXd pm = dma::marginal_model_probs(probs);
  std::vector<double> sorted(pm.data(), pm.data() + pm.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  const double expect_top = sorted[0] + sorted[1];  // ceil(20/10) = 2
  const auto [highmp, top01] = dma::top_prob_stats(probs);
  EXPECT_NEAR(top01, expect_top, 1e-12);
  EXPECT_DOUBLE_EQ(highmp, sorted[0]);
}

TEST(TopProbStats, UniformTenModels) {
  const auto probs = dma::uniform_probs(10, 1);
  const auto [highmp, top01] = dma::top_prob_stats(probs);
  EXPECT_NEAR(highmp, 0.1, 1e-15);
  EXPECT_NEAR(top01, 0.1, 1e-15);  // ceil(10/10) = 1 model
}

TEST(TopProbStats, SingleModel) {
  const auto probs = dma::uniform_probs(1, 2);
  const auto [highmp, top01] = dma::top_prob_stats(probs);
  EXPECT_DOUBLE_EQ(highmp, 1.0);
  EXPECT_DOUBLE_EQ(top01, 1.0);
}

TEST(MixtureOps, SizeMismatchErrors) {
  const auto space = dma::enumerate_models(3, {});
  const auto probs = dma::uniform_probs(4, 2);  // wrong k
  EXPECT_THROW(dma::inclusion_probs(probs, space), dma::ConfigError);
  EXPECT_THROW(dma::expected_size(probs, space), dma::ConfigError);
  EXPECT_THROW(dma::dms_size(probs, space), dma::ConfigError);
}

}  // namespace
