#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "cwgrpo/kb_synth.hpp"
#include "test_support.hpp"

using namespace cwgrpo;
using namespace cwgrpo::testing;

TEST(GenerateWorld, SameSeedSameBytes) {
  WorldConfig c;
  c.seed = 7;
  EXPECT_EQ(serialize_world(generate_world(c)), serialize_world(generate_world(c)));
  WorldConfig d = c;
  d.seed = 8;
  EXPECT_NE(serialize_world(generate_world(c)), serialize_world(generate_world(d)));
}

TEST(GenerateWorld, SingleHopQuestions) {
  WorldConfig c;
  c.hops_min = c.hops_max = 1;
  const auto w = generate_world(c);
  for (const auto& q : w.questions) {
    ASSERT_EQ(q.hops(), 1);
    EXPECT_EQ(q.gold_answer, w.entities[w.facts[q.hop_chain[0]].object].name);
  }
}

TEST(GenerateWorld, StructuralInvariants) {
  for (std::uint64_t seed : {1, 13, 99}) {
    const auto w = small_world(seed);
    // dense ids, unique names
    std::set<std::string> names;
    for (int i = 0; i < w.num_entities(); ++i) {
      EXPECT_EQ(w.entities[i].id, i);
      names.insert(w.entities[i].name);
    }
    EXPECT_EQ(static_cast<int>(names.size()), w.num_entities());

    // functional relations
    std::set<std::pair<int, int>> keys;
    for (const auto& f : w.facts) EXPECT_TRUE(keys.emplace(f.subject, f.relation).second);

    // gold documents name their fact; distractor counts
    std::map<FactId, int> gold_count;
    int distractors = 0;
    for (const auto& d : w.documents) {
      if (d.carries) {
        const auto& f = w.facts[*d.carries];
        const std::set<std::string> toks(d.tokens.begin(), d.tokens.end());
        EXPECT_TRUE(toks.count(w.entities[f.subject].name));
        EXPECT_TRUE(toks.count(w.relations[f.relation]));
        EXPECT_TRUE(toks.count(w.entities[f.object].name));
        ++gold_count[*d.carries];
      } else {
        ++distractors;
      }
    }
    EXPECT_EQ(gold_count.size(), w.facts.size());
    EXPECT_EQ(distractors, static_cast<int>(w.facts.size()) * w.config.distractors_per_gold);

    // questions chain
    for (const auto& q : w.questions) {
      ASSERT_GE(q.hops(), 2);
      ASSERT_LE(q.hops(), 3);
      EXPECT_EQ(w.facts[q.hop_chain.front()].subject, q.seed_entity);
      for (int h = 0; h + 1 < q.hops(); ++h) EXPECT_EQ(w.facts[q.hop_chain[h]].object, w.facts[q.hop_chain[h + 1]].subject);
      EXPECT_EQ(q.gold_answer, w.entities[w.facts[q.hop_chain.back()].object].name);
    }
  }
}

// No distractor contains a (subject, relation, object) triple of any fact.
TEST(GenerateWorld, Separation) {
  const auto w = small_world();
  for (const auto& d : w.documents) {
    if (d.carries) continue;
    std::set<EntityId> ents;
    std::set<RelationId> rels;
    for (const auto& tok : d.tokens) {
      if (auto e = w.entity_by_name(tok)) ents.insert(*e);
      if (auto r = w.relation_by_name(tok)) rels.insert(*r);
    }
    for (const auto& f : w.facts)
      EXPECT_FALSE(ents.count(f.subject) && rels.count(f.relation) && ents.count(f.object))
          << "distractor " << d.doc_id << " encodes a fact";
  }
}

TEST(GenerateWorld, OracleWalkerSolvesEveryQuestion) {
  const auto w = small_world(13);
  const SearchEnv env(w, EnvConfig{});
  for (const auto& q : w.questions) {
    const auto t = walk_chain(env, q.question_id);
    EXPECT_EQ(t.reward, 1.0) << "question " << q.question_id;
    EXPECT_FALSE(t.truncated);
  }
}

TEST(GenerateWorld, RejectsTooFewEntities) {
  WorldConfig c;
  c.num_entities = 3;
  c.hops_min = 3;
  c.hops_max = 3;
  EXPECT_THROW(generate_world(c), InfeasibleWorld);
  c.hops_max = 10;
  c.num_entities = 60;
  EXPECT_THROW(generate_world(c), std::invalid_argument);
  c = WorldConfig{};
  c.hops_min = 0;
  EXPECT_THROW(generate_world(c), std::invalid_argument);
}

TEST(GoldEvidence, OneDocumentPerHop) {
  const auto w = small_world();
  std::set<DocId> gold_docs;
  for (const auto& d : w.documents)
    if (d.carries) gold_docs.insert(d.doc_id);
  for (const auto& q : w.questions) {
    const auto ev = gold_evidence(q, w);
    EXPECT_EQ(static_cast<int>(ev.size()), q.hops());
    for (auto d : ev) EXPECT_TRUE(gold_docs.count(d));
    std::set<FactId> carried;
    for (auto d : ev) carried.insert(*w.documents[d].carries);
    EXPECT_EQ(carried, std::set<FactId>(q.hop_chain.begin(), q.hop_chain.end()));
  }
  WorldConfig one;
  one.hops_min = one.hops_max = 1;
  const auto w1 = generate_world(one);
  EXPECT_EQ(gold_evidence(w1.questions[0], w1).size(), 1u);
  EXPECT_THROW(gold_evidence(9999, w), std::out_of_range);
}

TEST(Serialization, RoundTrip) {
  const auto w = small_world();
  const auto text = serialize_world(w);
  const auto back = parse_world(text);
  EXPECT_EQ(serialize_world(back), text);
  EXPECT_EQ(back.question(3).gold_answer, w.question(3).gold_answer);
  EXPECT_EQ(back.postings(w.entities[0].name).size(), w.postings(w.entities[0].name).size());

  const auto path = std::filesystem::temp_directory_path() / "cwgrpo_world_rt.json";
  save_world(w, path.string());
  EXPECT_EQ(serialize_world(load_world(path.string())), text);
  std::filesystem::remove(path);

  EXPECT_THROW(parse_world("{\"config\": 3}"), std::invalid_argument);
  EXPECT_THROW(parse_world("not json"), std::invalid_argument);
}
