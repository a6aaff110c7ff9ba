#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cwgrpo {

using EntityId = int;
using RelationId = int;
using FactId = int;
using DocId = int;
using QuestionId = int;

/// Raised when a configuration cannot produce a world with disjoint hop chains.
class InfeasibleWorld : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Entity {
  EntityId id = 0;
  std::string name;
};

/// (subject, relation, object). Relations are functional: at most one fact per
/// (subject, relation), so every hop has a unique successor.
struct Fact {
  EntityId subject = 0;
  RelationId relation = 0;
  EntityId object = 0;
};

struct Document {
  DocId doc_id = 0;
  std::vector<std::string> tokens;
  std::optional<FactId> carries;  // none for distractors
};

struct Posting {
  DocId doc = 0;
  int count = 0;
};

struct Question {
  QuestionId question_id = 0;
  std::vector<FactId> hop_chain;
  EntityId seed_entity = 0;
  std::string gold_answer;

  int hops() const { return static_cast<int>(hop_chain.size()); }
};

struct WorldConfig {
  int num_entities = 60;
  int num_relations = 3;
  int hops_min = 2;
  int hops_max = 3;
  int distractors_per_gold = 4;
  int vocab_noise_tokens = 24;
  int num_questions = 64;
  std::uint64_t seed = 13;

  /// Throws std::invalid_argument on out-of-range knobs and InfeasibleWorld
  /// when hop chains of length hops_max cannot be built from num_entities.
  void validate() const;
};

/// The generated knowledge base. Data members mirror the serialized schema;
/// lookup tables are rebuilt by finalize() and are never serialized.
class World {
 public:
  WorldConfig config;
  std::vector<Entity> entities;
  std::vector<std::string> relations;
  std::vector<Fact> facts;
  std::vector<Document> documents;
  std::vector<Question> questions;

  /// Builds lookup tables. Must be called after the data members change.
  void finalize();

  const Question& question(QuestionId id) const;
  bool has_question(QuestionId id) const;

  std::optional<FactId> fact_for(EntityId subject, RelationId relation) const;
  DocId gold_document(FactId fact) const;

  std::optional<EntityId> entity_by_name(std::string_view name) const;
  std::optional<RelationId> relation_by_name(std::string_view name) const;

  /// Documents containing `token` with its occurrence count, by ascending doc id.
  std::span<const Posting> postings(std::string_view token) const;

  /// Entities named anywhere in a document's tokens, ascending.
  std::span<const EntityId> mentions(DocId doc) const { return mentions_.at(doc); }

  /// Entity reached after `hop` hops of a question's chain (0 is the seed).
  EntityId chain_entity(const Question& q, int hop) const;

  int num_entities() const { return static_cast<int>(entities.size()); }
  int num_relations() const { return static_cast<int>(relations.size()); }

 private:
  std::vector<FactId> fact_table_;  // subject * num_relations + relation, -1 if absent
  std::vector<DocId> gold_doc_;     // per fact, -1 if absent
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::unordered_map<std::string, RelationId> relation_index_;
  std::unordered_map<QuestionId, std::size_t> question_index_;
  std::vector<std::vector<EntityId>> mentions_;
};

World generate_world(const WorldConfig& config);

/// Doc ids of the gold documents for each fact of the question's hop chain.
std::vector<DocId> gold_evidence(const Question& question, const World& world);
std::vector<DocId> gold_evidence(QuestionId question_id, const World& world);

/// Canonical JSON text: sorted keys, no insignificant whitespace, so that
/// equal worlds serialize to identical bytes.
std::string serialize_world(const World& world);
World parse_world(std::string_view json_text);

void save_world(const World& world, const std::string& path);
World load_world(const std::string& path);

}  // namespace cwgrpo
