#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "cwgrpo/policy.hpp"
#include "test_support.hpp"

using namespace cwgrpo;
using namespace cwgrpo::testing;

namespace {

// n actions whose feature rows are the first n unit vectors.
ActionSet one_hot_set(int n) {
  ActionSet s;
  for (int i = 0; i < n; ++i) s.actions.push_back(QueryAction{i, 0});
  s.features = Eigen::MatrixXd::Zero(n, features::kDim);
  for (int i = 0; i < n; ++i) s.features(i, i) = 1.0;
  s.legal = Mask::Constant(n, true);
  return s;
}

struct PolicyFixture : ::testing::Test {
  World world = small_world();
  SearchEnv env{world, EnvConfig{}};
};

}  // namespace

TEST_F(PolicyFixture, FeaturizeReset) {
  for (const auto& q : world.questions) {
    const auto phi = featurize(env.reset(q.question_id), world);
    ASSERT_EQ(phi.size(), features::kState);
    for (int h = 0; h < features::kMaxHops; ++h) EXPECT_EQ(phi(h), 0.0);
    EXPECT_EQ(phi(features::kAnswerDetermined), 0.0);
    EXPECT_EQ(phi(features::kRoundBucket), 1.0);
    EXPECT_EQ(phi, featurize(env.reset(q.question_id), world));
  }
}

TEST_F(PolicyFixture, FeaturizeFullChain) {
  for (const auto& q : world.questions) {
    const auto t = walk_chain(env, q.question_id);
    const auto& last = t.rounds.back().state;
    const auto phi = featurize(last, world);
    for (int h = 0; h < q.hops(); ++h) EXPECT_EQ(phi(h), 1.0);
    for (int h = q.hops(); h < features::kMaxHops; ++h) EXPECT_EQ(phi(h), 0.0);
    EXPECT_EQ(phi(features::kAnswerDetermined), 1.0);
    EXPECT_DOUBLE_EQ(phi(features::kProgress), 1.0);
  }
}

TEST(ActionDist, ZeroThetaIsUniform) {
  const auto w = small_world();
  const SearchEnv env(w, EnvConfig{});
  const auto set = action_set(env.reset(0), w);
  const auto d = action_dist(Eigen::VectorXd::Zero(features::kDim), set);
  for (Eigen::Index i = 0; i < set.size(); ++i) EXPECT_NEAR(d.probs(i), 1.0 / set.size(), 1e-15);
}

TEST(ActionDist, HandEvaluatedTwoActions) {
  const auto set = one_hot_set(2);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(features::kDim);
  theta(0) = std::log(3.0);
  const auto d = action_dist(theta, set);
  EXPECT_NEAR(d.probs(0), 0.75, 1e-15);
  EXPECT_NEAR(d.probs(1), 0.25, 1e-15);
}

TEST(ActionDist, ShiftInvariance) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(30));
    Eigen::VectorXd logits(n);
    for (int i = 0; i < n; ++i) logits(i) = 20 * rng.uniform() - 10;
    const double c = 100 * rng.uniform() - 50;
    const Mask all = Mask::Constant(n, true);
    const auto a = masked_softmax(logits, all);
    const auto b = masked_softmax((logits.array() + c).matrix(), all);
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(a.sum(), 1.0, 1e-12);
  }
}

TEST(ActionDist, MaskedActionsGetExactZero) {
  auto set = one_hot_set(4);
  set.legal(1) = false;
  set.legal(3) = false;
  Rng rng(1);
  const auto d = action_dist(random_theta(rng), set);
  EXPECT_EQ(d.probs(1), 0.0);
  EXPECT_EQ(d.probs(3), 0.0);
  EXPECT_NEAR(d.probs.sum(), 1.0, 1e-12);
  EXPECT_THROW(log_prob(random_theta(rng), set, 1), std::invalid_argument);
  EXPECT_THROW(grad_log_prob(random_theta(rng), set, 3), std::invalid_argument);
  EXPECT_THROW(log_prob(random_theta(rng), set, 9), std::invalid_argument);
}

TEST(LogProb, UniformAndCertain) {
  const auto set = one_hot_set(4);
  EXPECT_NEAR(log_prob(Eigen::VectorXd::Zero(features::kDim), set, 2), std::log(0.25), 1e-15);

  auto single = one_hot_set(4);
  single.legal = Mask::Constant(4, false);
  single.legal(2) = true;
  Rng rng(8);
  EXPECT_EQ(log_prob(random_theta(rng), single, 2), 0.0);
  EXPECT_EQ(grad_log_prob(random_theta(rng), single, 2), Eigen::VectorXd::Zero(features::kDim));
}

TEST_F(PolicyFixture, ProbabilitiesNormalizeAndAgree) {
  Rng rng(11);
  const auto sets = random_action_sets(env, rng, 300);
  for (const auto& set : sets) {
    const auto theta = random_theta(rng, 2.0);
    const auto d = action_dist(theta, set);
    ASSERT_NEAR(d.probs.sum(), 1.0, 1e-12);
    const auto a = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(set.size())));
    EXPECT_NEAR(std::exp(log_prob(theta, set, a)), d.probs(a), 1e-12);
  }
}

TEST(GradLogProb, HandEvaluatedZeroTheta) {
  const auto set = one_hot_set(2);
  const auto g = grad_log_prob(Eigen::VectorXd::Zero(features::kDim), set, 0);
  Eigen::VectorXd expect = Eigen::VectorXd::Zero(features::kDim);
  expect(0) = 0.5;
  expect(1) = -0.5;
  EXPECT_LE((g - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST_F(PolicyFixture, GradLogProbMatchesFiniteDifferences) {
  Rng rng(21);
  const auto sets = random_action_sets(env, rng, 120);
  int checked = 0;
  for (const auto& set : sets) {
    const auto theta = random_theta(rng);
    const auto a = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(set.size())));
    const auto fd = finite_difference([&](const Eigen::VectorXd& t) { return log_prob(t, set, a); }, theta);
    const auto g = grad_log_prob(theta, set, a);
    EXPECT_LT(relative_error(g, fd), 1e-4);
    ++checked;
  }
  EXPECT_GE(checked, 100);
}

// E_{a ~ pi}[grad log pi(a)] = 0.
TEST_F(PolicyFixture, ScoreFunctionIdentity) {
  Rng rng(31);
  for (const auto& set : random_action_sets(env, rng, 200)) {
    const auto theta = random_theta(rng, 2.0);
    const auto d = action_dist(theta, set);
    Eigen::VectorXd expected = Eigen::VectorXd::Zero(features::kDim);
    for (Eigen::Index a = 0; a < set.size(); ++a) expected += d.probs(a) * grad_log_prob(theta, set, a);
    EXPECT_LE(expected.cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Snapshot, DeepImmutableCopy) {
  Rng rng(4);
  PolicyParams p{random_theta(rng)};
  const auto snap = snapshot(p);
  const Eigen::VectorXd before = snap.theta();
  p.theta(0) += 1.0;
  EXPECT_EQ(snap.theta(), before);
  const auto set = one_hot_set(5);
  for (Eigen::Index a = 0; a < 5; ++a)
    EXPECT_EQ(std::exp(log_prob(snap.theta(), set, a) - log_prob(snap.theta(), set, a)), 1.0);
}

TEST(Sample, CertainActionAlwaysChosen) {
  auto set = one_hot_set(3);
  set.legal = Mask::Constant(3, false);
  set.legal(1) = true;
  Rng rng(0);
  const auto d = action_dist(Eigen::VectorXd::Zero(features::kDim), set);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_index(d, rng), 1);
}

TEST(Sample, UniformFrequencies) {
  const auto set = one_hot_set(2);
  const auto d = action_dist(Eigen::VectorXd::Zero(features::kDim), set);
  Rng rng(2024);
  int first = 0;
  for (int i = 0; i < 10000; ++i) first += sample_index(d, rng) == 0;
  EXPECT_GE(first / 10000.0, 0.49);
  EXPECT_LE(first / 10000.0, 0.51);
}

TEST_F(PolicyFixture, SamplingIsReproducible) {
  Rng r1(77), r2(77), rp(5);
  const PolicyParams params{random_theta(rp)};
  const auto s = env.reset(3);
  for (int i = 0; i < 50; ++i) {
    const auto a = sample_action(params, s, world, r1);
    const auto b = sample_action(params, s, world, r2);
    EXPECT_EQ(a.index(), b.index());
    if (is_answer(a)) EXPECT_EQ(std::get<AnswerAction>(a).text, std::get<AnswerAction>(b).text);
    else EXPECT_EQ(std::get<QueryAction>(a), std::get<QueryAction>(b));
  }
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  Rng rng(9);
  PolicyParams p{random_theta(rng, 1e3)};
  p.theta(0) = 0.1 + 0.2;  // not exactly representable in short decimal
  const auto back = parse_params(serialize_params(p));
  EXPECT_EQ(back, p);
  const auto path = std::filesystem::temp_directory_path() / "cwgrpo_params_rt.json";
  save_params(p, path.string());
  EXPECT_EQ(load_params(path.string()), p);
  std::filesystem::remove(path);
  EXPECT_THROW(parse_params("{\"shape\":[2],\"theta\":[1,2]}"), std::invalid_argument);
}
