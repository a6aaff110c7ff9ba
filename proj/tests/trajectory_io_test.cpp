#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cwgrpo/trainer.hpp"
#include "cwgrpo/trajectory_io.hpp"
#include "test_support.hpp"

using namespace cwgrpo;
using namespace cwgrpo::testing;

namespace {

struct IoFixture : ::testing::Test {
  World world = small_world();
  SearchEnv env{world, EnvConfig{}};

  // Sampled trajectories of mixed length and outcome, successes judged.
  std::vector<Trajectory> sample(int n) {
    std::vector<Trajectory> out;
    Rng rng(8);
    const auto old = snapshot(PolicyParams{random_theta(rng, 0.5)});
    for (int i = 0; out.size() < static_cast<std::size_t>(n); ++i)
      for (auto& s : rollout_group(old, env, world.questions[i % 32].question_id, 4, 300 + i, 4 * i)) {
        if (s.trajectory.reward == 1.0) s.trajectory.signals = judge_trajectory(s.trajectory, world);
        out.push_back(std::move(s.trajectory));
      }
    return out;
  }
};

void expect_same_log(const Trajectory& a, const Trajectory& b) {
  EXPECT_EQ(a.trajectory_id, b.trajectory_id);
  EXPECT_EQ(a.question_id, b.question_id);
  EXPECT_EQ(a.final_answer, b.final_answer);
  EXPECT_EQ(a.reward, b.reward);
  EXPECT_EQ(a.truncated, b.truncated);
  EXPECT_EQ(a.signals, b.signals);
  ASSERT_EQ(a.length(), b.length());
  for (int i = 0; i < a.length(); ++i) {
    EXPECT_EQ(a.rounds[i].action, b.rounds[i].action);
    EXPECT_EQ(a.rounds[i].retrieved, b.rounds[i].retrieved);
  }
}

}  // namespace

TEST_F(IoFixture, RoundTripWithoutReplay) {
  for (const auto& t : sample(60)) {
    const auto line = trajectory_to_jsonl(t);
    const auto back = trajectory_from_jsonl(line);
    expect_same_log(t, back);
    EXPECT_EQ(trajectory_to_jsonl(back), line);
  }
}

TEST_F(IoFixture, ReplayRebuildsStates) {
  const auto trajs = sample(60);
  std::stringstream ss;
  write_trajectories(ss, trajs);
  const auto back = read_trajectories(ss, &env);
  ASSERT_EQ(back.size(), trajs.size());
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    expect_same_log(trajs[i], back[i]);
    for (int r = 0; r < trajs[i].length(); ++r) EXPECT_EQ(back[i].rounds[r].state, trajs[i].rounds[r].state);
    // judging the replayed log reproduces the logged signals
    if (!trajs[i].signals.empty()) {
      EXPECT_EQ(judge_trajectory(back[i], world), trajs[i].signals);
    }
  }
}

TEST_F(IoFixture, ReplayDetectsForeignWorld) {
  const auto other = small_world(99);
  const SearchEnv other_env(other, EnvConfig{});
  const auto t = walk_chain(env, 0);
  EXPECT_THROW(trajectory_from_jsonl(trajectory_to_jsonl(t), &other_env), std::invalid_argument);
}

TEST_F(IoFixture, MalformedLines) {
  auto t = walk_chain(env, 0, 5);
  t.signals = judge_trajectory(t, world);
  const auto good = trajectory_to_jsonl(t);
  ASSERT_NO_THROW(trajectory_from_jsonl(good, &env));
  auto replace = [&](const std::string& from, const std::string& to) {
    auto s = good;
    const auto pos = s.find(from);
    EXPECT_NE(pos, std::string::npos) << from;
    return s.replace(pos, from.size(), to);
  };
  EXPECT_THROW(trajectory_from_jsonl("{not json"), std::invalid_argument);
  EXPECT_THROW(trajectory_from_jsonl(R"({"trajectory_id":1})"), std::invalid_argument);
  EXPECT_THROW(trajectory_from_jsonl(replace("\"t\":2", "\"t\":3")), std::invalid_argument);
  EXPECT_THROW(trajectory_from_jsonl(replace("\"p\":1", "\"p\":0")), std::invalid_argument);
  EXPECT_THROW(trajectory_from_jsonl(replace("\"u\":1", "\"u\":2")), std::invalid_argument);
  EXPECT_THROW(trajectory_from_jsonl(replace("\"u\":1,", "")), std::invalid_argument);
  EXPECT_THROW(trajectory_from_jsonl(replace("\"reward\":1.0", "\"reward\":0.0"), &env), std::invalid_argument);
}

TEST(AdvantageIo, RoundTripAndErrors) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    AdvantageRecord r;
    r.trajectory_id = static_cast<std::int64_t>(rng.below(1'000'000));
    r.question_id = static_cast<QuestionId>(rng.below(100));
    r.step = static_cast<int>(rng.below(200));
    r.reward = static_cast<double>(rng.below(2));
    const int n = static_cast<int>(rng.below(9));
    r.credit.weights = Eigen::VectorXd::Random(n);
    r.credit.profile.rounds = Eigen::VectorXd::Random(n);
    r.credit.profile.outcome = r.credit.profile.answer = rng.uniform() - 0.5;
    r.alpha = rng.below(2) ? Sharpness::infinite() : Sharpness::finite(rng.uniform() * 5);
    r.mode = static_cast<AblationMode>(rng.below(3));
    const auto line = advantage_to_jsonl(r);
    const auto back = advantage_from_jsonl(line);
    EXPECT_EQ(back.credit.weights, r.credit.weights);
    EXPECT_EQ(back.credit.profile.rounds, r.credit.profile.rounds);
    EXPECT_EQ(back.credit.profile.outcome, r.credit.profile.outcome);
    EXPECT_EQ(back.alpha, r.alpha);
    EXPECT_EQ(back.mode, r.mode);
    EXPECT_EQ(advantage_to_jsonl(back), line);
  }
  EXPECT_THROW(advantage_from_jsonl(R"({"trajectory_id":1,"question_id":0,"reward":1,"A_outcome":0,"c":[1],"A_rounds":[],"A_answer":0,"alpha":"inf","mode":"full"})"),
               std::invalid_argument);
  EXPECT_THROW(advantage_from_jsonl(R"({"trajectory_id":1})"), std::invalid_argument);
  EXPECT_THROW(advantage_from_jsonl(R"({"trajectory_id":1,"question_id":0,"reward":1,"A_outcome":0,"c":[],"A_rounds":[],"A_answer":0,"alpha":"inf","mode":"half"})"),
               std::invalid_argument);
}

TEST(AnnotationIo, RoundTripAndErrors) {
  const GoldAnnotation a{17, 3, 1, 0, Confidence::Medium};
  const auto back = annotation_from_jsonl(annotation_to_jsonl(a));
  EXPECT_EQ(back.trajectory_id, 17);
  EXPECT_EQ(back.t, 3);
  EXPECT_EQ(back.u_gold, 1);
  EXPECT_EQ(back.v_gold, 0);
  EXPECT_EQ(back.confidence, Confidence::Medium);
  EXPECT_THROW(annotation_from_jsonl(R"({"trajectory_id":1,"t":1,"u":1,"v":1,"confidence":"sure"})"), std::invalid_argument);
  EXPECT_THROW(annotation_from_jsonl(R"({"trajectory_id":1,"t":1,"u":1})"), std::invalid_argument);
}

TEST(FileIo, MissingFilesAreRuntimeErrors) {
  EXPECT_THROW(read_trajectories("/nonexistent/x.jsonl"), std::runtime_error);
  EXPECT_THROW(read_advantages("/nonexistent/x.jsonl"), std::runtime_error);
  EXPECT_THROW(read_annotations("/nonexistent/x.jsonl"), std::runtime_error);
}
