#include "cwgrpo/kb_synth.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "cwgrpo/rng.hpp"
#include "json.hpp"

namespace cwgrpo {

namespace {

using nlohmann::json;

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

class TokenForge {
 public:
  explicit TokenForge(Rng& rng) : rng_(rng) {}

  std::string fresh(int syllables) {
    for (;;) {
      std::string word;
      for (int i = 0; i < syllables; ++i) {
        word.push_back(kConsonants[rng_.below(kConsonants.size())]);
        word.push_back(kVowels[rng_.below(kVowels.size())]);
      }
      if (used_.insert(word).second) return word;
    }
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

void WorldConfig::validate() const {
  require(num_entities >= 1, "num_entities must be positive");
  require(num_relations >= 1, "num_relations must be positive");
  require(hops_min >= 1, "hops_min must be at least 1");
  require(hops_max >= hops_min, "hops_max must be at least hops_min");
  require(hops_max <= 9, "hops_max must be at most 9");
  require(distractors_per_gold >= 0, "distractors_per_gold must be non-negative");
  require(vocab_noise_tokens >= 0, "vocab_noise_tokens must be non-negative");
  require(num_questions >= 1, "num_questions must be positive");
  // A chain of H hops visits H + 1 distinct entities; distractors need an
  // object different from both subject and true object.
  if (num_entities < hops_max + 1)
    throw InfeasibleWorld("num_entities too small for disjoint hop chains of length hops_max");
  if (distractors_per_gold > 0 && num_entities < 3)
    throw InfeasibleWorld("num_entities too small to build distractor documents");
}

// ---------------------------------------------------------------------------
// World lookups

void World::finalize() {
  const auto n_ent = entities.size();
  const auto n_rel = relations.size();

  entity_index_.clear();
  for (const auto& e : entities) entity_index_.emplace(e.name, e.id);
  relation_index_.clear();
  for (std::size_t r = 0; r < n_rel; ++r) relation_index_.emplace(relations[r], static_cast<RelationId>(r));

  fact_table_.assign(n_ent * n_rel, -1);
  for (std::size_t f = 0; f < facts.size(); ++f) {
    const auto& fact = facts[f];
    auto& slot = fact_table_.at(static_cast<std::size_t>(fact.subject) * n_rel + fact.relation);
    if (slot != -1) throw std::invalid_argument("relations must be functional");
    slot = static_cast<FactId>(f);
  }

  gold_doc_.assign(facts.size(), -1);
  postings_.clear();
  mentions_.assign(documents.size(), {});
  for (std::size_t d = 0; d < documents.size(); ++d) {
    const auto& doc = documents[d];
    if (doc.doc_id != static_cast<DocId>(d)) throw std::invalid_argument("doc ids must be dense");
    if (doc.carries) gold_doc_.at(*doc.carries) = doc.doc_id;
    std::vector<std::string> sorted(doc.tokens);
    std::sort(sorted.begin(), sorted.end());
    for (auto it = sorted.begin(); it != sorted.end();) {
      auto end = std::upper_bound(it, sorted.end(), *it);
      postings_[*it].push_back({doc.doc_id, static_cast<int>(end - it)});
      if (auto e = entity_index_.find(*it); e != entity_index_.end()) mentions_[d].push_back(e->second);
      it = end;
    }
    std::sort(mentions_[d].begin(), mentions_[d].end());
  }

  question_index_.clear();
  for (std::size_t i = 0; i < questions.size(); ++i) question_index_.emplace(questions[i].question_id, i);
}

const Question& World::question(QuestionId id) const {
  auto it = question_index_.find(id);
  if (it == question_index_.end()) throw std::out_of_range("unknown question id " + std::to_string(id));
  return questions[it->second];
}

bool World::has_question(QuestionId id) const { return question_index_.contains(id); }

std::optional<FactId> World::fact_for(EntityId subject, RelationId relation) const {
  if (subject < 0 || relation < 0 || subject >= num_entities() || relation >= num_relations()) return std::nullopt;
  auto f = fact_table_[static_cast<std::size_t>(subject) * relations.size() + relation];
  if (f < 0) return std::nullopt;
  return f;
}

DocId World::gold_document(FactId fact) const {
  auto d = gold_doc_.at(fact);
  if (d < 0) throw std::out_of_range("fact has no gold document");
  return d;
}

std::optional<EntityId> World::entity_by_name(std::string_view name) const {
  auto it = entity_index_.find(std::string(name));
  if (it == entity_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> World::relation_by_name(std::string_view name) const {
  auto it = relation_index_.find(std::string(name));
  if (it == relation_index_.end()) return std::nullopt;
  return it->second;
}

std::span<const Posting> World::postings(std::string_view token) const {
  auto it = postings_.find(std::string(token));
  if (it == postings_.end()) return {};
  return it->second;
}

EntityId World::chain_entity(const Question& q, int hop) const {
  if (hop == 0) return q.seed_entity;
  return facts.at(q.hop_chain.at(hop - 1)).object;
}

// ---------------------------------------------------------------------------
// Generation

World generate_world(const WorldConfig& config) {
  config.validate();
  Rng rng(derive_seed({config.seed, 0x776f726c64ULL}));
  TokenForge forge(rng);

  World w;
  w.config = config;

  for (int i = 0; i < config.num_entities; ++i) w.entities.push_back({i, forge.fresh(3)});
  for (int r = 0; r < config.num_relations; ++r) w.relations.push_back(forge.fresh(2) + "of");
  std::vector<std::string> noise;
  for (int i = 0; i < config.vocab_noise_tokens; ++i) noise.push_back(forge.fresh(2));

  const int n = config.num_entities;
  const int n_rel = config.num_relations;

  // Total functional relations: every (subject, relation) has one object.
  std::vector<EntityId> successor(static_cast<std::size_t>(n) * n_rel);
  for (int s = 0; s < n; ++s) {
    for (int r = 0; r < n_rel; ++r) {
      EntityId o = static_cast<EntityId>(rng.below(static_cast<std::uint64_t>(n - 1)));
      if (o >= s) ++o;
      successor[static_cast<std::size_t>(s) * n_rel + r] = o;
      w.facts.push_back({s, r, o});
    }
  }
  auto object_of = [&](EntityId s, RelationId r) { return successor[static_cast<std::size_t>(s) * n_rel + r]; };

  // Gold documents occupy doc ids [0, F): doc id == fact id.
  for (std::size_t f = 0; f < w.facts.size(); ++f) {
    const auto& fact = w.facts[f];
    Document doc;
    doc.doc_id = static_cast<DocId>(f);
    // The subject doubles as the document title, so the document about (s, r)
    // outscores any document that merely mentions s as an object.
    doc.tokens = {w.entities[fact.subject].name, w.relations[fact.relation], w.entities[fact.object].name};
    if (!noise.empty()) {
      doc.tokens.push_back(noise[rng.below(noise.size())]);
      doc.tokens.push_back(noise[rng.below(noise.size())]);
    }
    doc.tokens.push_back(w.entities[fact.subject].name);
    doc.carries = static_cast<FactId>(f);
    w.documents.push_back(std::move(doc));
  }

  // Distractors: the gold tokens shuffled with the object name replaced. The
  // replacement o' must not make the bag {s, r, o'} match a real fact, so
  // o' != f(s, r) and f(o', r) != s.
  for (std::size_t f = 0; f < w.facts.size(); ++f) {
    const auto& fact = w.facts[f];
    std::vector<EntityId> candidates;
    for (EntityId e = 0; e < n; ++e) {
      if (e == fact.subject || e == fact.object) continue;
      if (object_of(e, fact.relation) == fact.subject) continue;
      candidates.push_back(e);
    }
    if (config.distractors_per_gold > 0 && candidates.empty())
      throw InfeasibleWorld("no admissible distractor object for a fact");
    rng.shuffle(candidates);
    for (int j = 0; j < config.distractors_per_gold; ++j) {
      Document doc;
      doc.doc_id = static_cast<DocId>(w.documents.size());
      doc.tokens = w.documents[f].tokens;
      doc.tokens[2] = w.entities[candidates[static_cast<std::size_t>(j) % candidates.size()]].name;
      rng.shuffle(doc.tokens);
      w.documents.push_back(std::move(doc));
    }
  }

  // Questions follow a random walk whose visited entities are pairwise distinct.
  constexpr int kMaxAttempts = 10000;
  for (int q = 0; q < config.num_questions; ++q) {
    const int hops = config.hops_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(config.hops_max - config.hops_min + 1)));
    bool built = false;
    for (int attempt = 0; attempt < kMaxAttempts && !built; ++attempt) {
      Question question;
      question.question_id = q;
      question.seed_entity = static_cast<EntityId>(rng.below(static_cast<std::uint64_t>(n)));
      std::vector<EntityId> visited{question.seed_entity};
      EntityId at = question.seed_entity;
      for (int h = 0; h < hops; ++h) {
        std::vector<RelationId> options;
        for (RelationId r = 0; r < n_rel; ++r) {
          if (std::find(visited.begin(), visited.end(), object_of(at, r)) == visited.end()) options.push_back(r);
        }
        if (options.empty()) break;
        RelationId r = options[rng.below(options.size())];
        question.hop_chain.push_back(at * n_rel + r);
        at = object_of(at, r);
        visited.push_back(at);
      }
      if (question.hops() != hops) continue;
      question.gold_answer = w.entities[at].name;
      w.questions.push_back(std::move(question));
      built = true;
    }
    if (!built) throw InfeasibleWorld("could not build a disjoint hop chain");
  }

  w.finalize();
  return w;
}

std::vector<DocId> gold_evidence(const Question& question, const World& world) {
  std::vector<DocId> docs;
  for (FactId f : question.hop_chain) docs.push_back(world.gold_document(f));
  std::sort(docs.begin(), docs.end());
  docs.erase(std::unique(docs.begin(), docs.end()), docs.end());
  return docs;
}

std::vector<DocId> gold_evidence(QuestionId question_id, const World& world) {
  return gold_evidence(world.question(question_id), world);
}

// ---------------------------------------------------------------------------
// Serialization

std::string serialize_world(const World& world) {
  const auto& c = world.config;
  json j;
  j["config"] = {{"num_entities", c.num_entities},
                 {"num_relations", c.num_relations},
                 {"hops_min", c.hops_min},
                 {"hops_max", c.hops_max},
                 {"distractors_per_gold", c.distractors_per_gold},
                 {"vocab_noise_tokens", c.vocab_noise_tokens},
                 {"num_questions", c.num_questions},
                 {"seed", c.seed}};
  j["entities"] = json::array();
  for (const auto& e : world.entities) j["entities"].push_back({{"id", e.id}, {"name", e.name}});
  j["relations"] = world.relations;
  j["facts"] = json::array();
  for (const auto& f : world.facts)
    j["facts"].push_back({{"subject", f.subject}, {"relation", world.relations.at(f.relation)}, {"object", f.object}});
  j["documents"] = json::array();
  for (const auto& d : world.documents) {
    json doc{{"doc_id", d.doc_id}, {"tokens", d.tokens}};
    doc["carries"] = d.carries ? json(*d.carries) : json(nullptr);
    j["documents"].push_back(std::move(doc));
  }
  j["questions"] = json::array();
  for (const auto& q : world.questions)
    j["questions"].push_back({{"question_id", q.question_id},
                              {"hop_chain", q.hop_chain},
                              {"seed_entity", q.seed_entity},
                              {"gold_answer", q.gold_answer}});
  return j.dump();
}

World parse_world(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
    World w;
    const auto& c = j.at("config");
    w.config.num_entities = c.at("num_entities").get<int>();
    w.config.num_relations = c.at("num_relations").get<int>();
    w.config.hops_min = c.at("hops_min").get<int>();
    w.config.hops_max = c.at("hops_max").get<int>();
    w.config.distractors_per_gold = c.at("distractors_per_gold").get<int>();
    w.config.vocab_noise_tokens = c.at("vocab_noise_tokens").get<int>();
    w.config.num_questions = c.at("num_questions").get<int>();
    w.config.seed = c.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("entities")) w.entities.push_back({e.at("id").get<int>(), e.at("name").get<std::string>()});
    w.relations = j.at("relations").get<std::vector<std::string>>();
    std::unordered_map<std::string, RelationId> rel_index;
    for (std::size_t r = 0; r < w.relations.size(); ++r) rel_index.emplace(w.relations[r], static_cast<RelationId>(r));
    for (const auto& f : j.at("facts"))
      w.facts.push_back({f.at("subject").get<int>(), rel_index.at(f.at("relation").get<std::string>()), f.at("object").get<int>()});
    for (const auto& d : j.at("documents")) {
      Document doc;
      doc.doc_id = d.at("doc_id").get<int>();
      doc.tokens = d.at("tokens").get<std::vector<std::string>>();
      if (!d.at("carries").is_null()) doc.carries = d.at("carries").get<int>();
      w.documents.push_back(std::move(doc));
    }
    for (const auto& q : j.at("questions")) {
      Question question;
      question.question_id = q.at("question_id").get<int>();
      question.hop_chain = q.at("hop_chain").get<std::vector<int>>();
      question.seed_entity = q.at("seed_entity").get<int>();
      question.gold_answer = q.at("gold_answer").get<std::string>();
      w.questions.push_back(std::move(question));
    }
    w.finalize();
    return w;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed world file: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw std::invalid_argument(std::string("malformed world file: ") + e.what());
  }
}

void save_world(const World& world, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << serialize_world(world) << '\n';
}

World load_world(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_world(ss.str());
}

}  // namespace cwgrpo
