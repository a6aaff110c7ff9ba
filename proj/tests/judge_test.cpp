#include <gtest/gtest.h>

#include <chrono>
#include <set>
#include <thread>

#include "cwgrpo/judge.hpp"
#include "cwgrpo/remote_judge.hpp"
#include "test_support.hpp"
// after Eigen: resolv.h defines _res, which Eigen uses as a parameter name
#include "httplib.h"
#include "json.hpp"

using namespace cwgrpo;
using namespace cwgrpo::testing;

namespace {

struct JudgeFixture : ::testing::Test {
  World world = small_world();
  SearchEnv env{world, EnvConfig{}};
};

// Two facts (amo -rel-> bex, bex -rel-> cid) and a decoy document that repeats
// the hop-1 query tokens, so with k = 1 the decoy outranks the gold document.
World decoy_world() {
  World w;
  w.config.num_entities = 4;
  w.config.num_relations = 1;
  w.config.hops_min = w.config.hops_max = 2;
  w.config.num_questions = 1;
  w.entities = {{0, "amo"}, {1, "bex"}, {2, "cid"}, {3, "dov"}};
  w.relations = {"relof"};
  w.facts = {{0, 0, 1}, {1, 0, 2}};
  w.documents = {{0, {"amo", "relof", "bex", "amo"}, 0},
                 {1, {"bex", "relof", "cid", "bex"}, 1},
                 {2, {"amo", "relof", "dov", "amo", "relof"}, std::nullopt}};
  w.questions = {{0, {0, 1}, 0, "cid"}};
  w.finalize();
  return w;
}

}  // namespace

TEST_F(JudgeFixture, CorrectHopOneRound) {
  const auto& q = world.questions[0];
  const auto t = walk_chain(env, q.question_id);
  EXPECT_EQ(judge_round(t, 1, world), RoundSignals::make(1, 1));
}

TEST_F(JudgeFixture, OptimalWalkerEarnsGateEverywhere) {
  for (const auto& q : world.questions) {
    const auto t = walk_chain(env, q.question_id);
    const auto s = judge_trajectory(t, world);
    ASSERT_EQ(static_cast<int>(s.size()), q.hops());
    for (const auto& x : s) EXPECT_EQ(x.p, 1);
  }
}

TEST_F(JudgeFixture, RepeatedQueryEarnsNothing) {
  const auto& q = world.questions[2];
  const auto& f = world.facts[q.hop_chain[0]];
  const auto t = play(env, q.question_id, {QueryAction{f.subject, f.relation}, QueryAction{f.subject, f.relation}, AnswerAction{"x"}});
  const auto s = judge_trajectory(t, world);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].p, 1);
  EXPECT_EQ(s[1].u, 0);
  EXPECT_EQ(s[1].p, 0);
}

TEST(Judge, DistractorOutranksGold) {
  const auto w = decoy_world();
  const SearchEnv env(w, EnvConfig{1, 10});
  ASSERT_EQ(env.retrieve(QueryAction{0, 0}).front(), 2);
  const auto t = play(env, 0, {QueryAction{0, 0}, AnswerAction{"cid"}});
  EXPECT_EQ(judge_round(t, 1, w), RoundSignals::make(0, 1));
}

TEST(Judge, OffChainAndUnreachableQueries) {
  const auto w = decoy_world();
  const SearchEnv env(w, EnvConfig{1, 10});
  // bex is on the chain but stays unreachable: hop 1 is only ever answered by the decoy
  const auto t = play(env, 0, {QueryAction{1, 0}, QueryAction{0, 0}, QueryAction{1, 0}, AnswerAction{"cid"}});
  const auto s = judge_trajectory(t, w);
  EXPECT_EQ(s[0], RoundSignals::make(1, 0));  // out-of-order gold retrieval still counts as novel
  EXPECT_EQ(s[1], RoundSignals::make(0, 1));
  EXPECT_EQ(s[2], RoundSignals::make(0, 0));
}

TEST_F(JudgeFixture, RangeChecks) {
  const auto t = walk_chain(env, 0);
  EXPECT_THROW(judge_round(t, 0, world), std::out_of_range);
  EXPECT_THROW(judge_round(t, t.length(), world), std::out_of_range);
  const auto one = play(env, 0, {AnswerAction{"x"}});
  EXPECT_TRUE(judge_trajectory(one, world).empty());
}

// p = u v, purity, and novelty is consumed: each u = 1 round brings a chain
// fact no earlier round brought.
TEST_F(JudgeFixture, RandomTrajectoryProperties) {
  Rng rng(12);
  for (int trial = 0; trial < 500; ++trial) {
    const auto qid = world.questions[rng.below(world.questions.size())].question_id;
    const auto& q = world.question(qid);
    Episode ep(env, qid);
    while (!ep.done()) {
      const auto& s = ep.state();
      if (rng.uniform() < 0.15) ep.act(AnswerAction{"x"});
      else ep.act(QueryAction{s.mentioned[rng.below(s.mentioned.size())], static_cast<RelationId>(rng.below(world.num_relations()))});
    }
    const auto& t = ep.trajectory();
    const auto s = judge_trajectory(t, world);
    ASSERT_EQ(static_cast<int>(s.size()), std::max(0, t.length() - 1));
    EXPECT_EQ(s, judge_trajectory(t, world));
    std::set<FactId> credited;
    for (std::size_t i = 0; i < s.size(); ++i) {
      EXPECT_EQ(s[i].p, s[i].u * s[i].v);
      std::set<FactId> fresh;
      for (DocId d : t.rounds[i].retrieved) {
        const auto& c = world.documents[d].carries;
        if (c && std::count(q.hop_chain.begin(), q.hop_chain.end(), *c) && !credited.count(*c)) fresh.insert(*c);
      }
      EXPECT_EQ(s[i].u, fresh.empty() ? 0 : 1);
      credited.insert(fresh.begin(), fresh.end());
    }
  }
}

TEST(Agreement, PaperShapedCounts) {
  std::vector<RoundSignals> judged;
  std::vector<GoldAnnotation> gold;
  auto add = [&](Confidence c, bool agree) {
    gold.push_back({static_cast<std::int64_t>(gold.size()), 1, 1, 0, c});
    judged.push_back(agree ? RoundSignals::make(1, 0) : RoundSignals::make(1, 1));
  };
  for (int i = 0; i < 89; ++i) add(Confidence::High, i < 87);
  for (int i = 0; i < 8; ++i) add(Confidence::Medium, i < 6);
  const auto r = agreement_rate(judged, gold);
  EXPECT_EQ(r.overall.agreed, 93u);
  EXPECT_EQ(r.overall.total, 97u);
  EXPECT_NEAR(r.overall.rate(), 0.958, 0.001);
  EXPECT_EQ(r.at(Confidence::High).agreed, 87u);
  EXPECT_EQ(r.at(Confidence::Medium).total, 8u);
  EXPECT_EQ(r.at(Confidence::Low).total, 0u);
}

TEST(Agreement, IdenticalComplementaryMismatch) {
  std::vector<RoundSignals> judged;
  std::vector<GoldAnnotation> same, flipped;
  for (int i = 0; i < 20; ++i) {
    const int u = i % 2, v = (i / 2) % 2;
    judged.push_back(RoundSignals::make(u, v));
    same.push_back({i, 1, u, v, Confidence::High});
    flipped.push_back({i, 1, 1 - u, 1 - v, Confidence::Low});
  }
  EXPECT_EQ(agreement_rate(judged, same).overall.rate(), 1.0);
  EXPECT_EQ(agreement_rate(judged, flipped).overall.rate(), 0.0);
  same.pop_back();
  EXPECT_THROW(agreement_rate(judged, same), std::invalid_argument);
}

TEST(Confidence, StringRoundTrip) {
  for (auto c : {Confidence::High, Confidence::Medium, Confidence::Low}) EXPECT_EQ(confidence_from_string(to_string(c)), c);
  EXPECT_THROW(confidence_from_string("certain"), std::invalid_argument);
}

// ---------------------------------------------------------------- remote

TEST_F(JudgeFixture, RemoteRequestShape) {
  const auto t = walk_chain(env, 4, 42);
  const auto j = nlohmann::json::parse(remote_judge_request(t, 2, world));
  EXPECT_EQ(j.at("trajectory_id"), 42);
  EXPECT_EQ(j.at("round_index"), 2);
  EXPECT_EQ(j.at("retrieved_docs").size(), t.rounds[1].retrieved.size());
  EXPECT_NE(j.at("context_summary").get<std::string>().find("round 1"), std::string::npos);
  EXPECT_NE(j.at("question").get<std::string>().find(world.entities[world.question(4).seed_entity].name), std::string::npos);
  EXPECT_THROW(remote_judge_request(t, t.length(), world), std::out_of_range);
}

TEST(RemoteResponse, Parsing) {
  EXPECT_EQ(parse_remote_judge_response(R"({"u":1,"v":0})"), RoundSignals::make(1, 0));
  EXPECT_EQ(parse_remote_judge_response(R"({"u":1,"v":1,"note":"x"})"), RoundSignals::make(1, 1));
  EXPECT_FALSE(parse_remote_judge_response(R"({"u":2,"v":0})"));
  EXPECT_FALSE(parse_remote_judge_response(R"({"u":1})"));
  EXPECT_FALSE(parse_remote_judge_response(R"({"u":"1","v":0})"));
  EXPECT_FALSE(parse_remote_judge_response(R"({"u":0.5,"v":0})"));
  EXPECT_FALSE(parse_remote_judge_response("garbage"));
  EXPECT_FALSE(parse_remote_judge_response("[1,0]"));
}

// A local service: verdict u = round_index % 2, v = 1. Trajectory 1 gets a
// malformed body, trajectory 2 a reply slower than the client timeout.
TEST_F(JudgeFixture, RemoteJudgeJoinsAndFallsBack) {
  httplib::Server server;
  server.Post("/judge", [](const httplib::Request& req, httplib::Response& res) {
    const auto j = nlohmann::json::parse(req.body);
    const auto id = j.at("trajectory_id").get<int>();
    if (id == 1) {
      res.set_content("{not json", "application/json");
    } else {
      if (id == 2) std::this_thread::sleep_for(std::chrono::milliseconds(600));
      res.set_content(nlohmann::json{{"u", j.at("round_index").get<int>() % 2}, {"v", 1}}.dump(), "application/json");
    }
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread serve([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  std::vector<Trajectory> trajs;
  for (int i = 0; i < 4; ++i) trajs.push_back(walk_chain(env, world.questions[i].question_id, i));
  RemoteJudgeConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.timeout_ms = 200;
  cfg.max_in_flight = 3;
  const auto res = RemoteJudge(cfg).judge(trajs, world);
  server.stop();
  serve.join();

  ASSERT_EQ(res.signals.size(), 4u);
  std::size_t expected_fallbacks = 0;
  for (int i = 0; i < 4; ++i) {
    ASSERT_EQ(static_cast<int>(res.signals[i].size()), trajs[i].length() - 1);
    for (int t = 1; t < trajs[i].length(); ++t) {
      const auto& s = res.signals[i][t - 1];
      if (i == 1 || i == 2) {
        EXPECT_EQ(s, RoundSignals{});
        ++expected_fallbacks;
      } else {
        EXPECT_EQ(s, RoundSignals::make(t % 2, 1));
      }
    }
  }
  EXPECT_EQ(res.fallbacks, expected_fallbacks);
}

TEST_F(JudgeFixture, RemoteJudgeUnreachableFallsBack) {
  RemoteJudgeConfig cfg;
  cfg.base_url = "http://127.0.0.1:1";
  cfg.timeout_ms = 200;
  const auto t = walk_chain(env, 0);
  const auto res = RemoteJudge(cfg).judge({t}, world);
  EXPECT_EQ(res.fallbacks, static_cast<std::size_t>(t.length() - 1));
  for (const auto& s : res.signals[0]) EXPECT_EQ(s.p, 0);
}
