#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "oreo/kg/graph.hpp"
#include "oreo/model/sequence.hpp"
#include "oreo/model/vocab.hpp"

namespace oreo::synth {

struct EntityType {
  std::string name;
  std::size_t count = 0;
};

struct RelationSpec {
  std::string name;
  std::string source;  // entity type names
  std::string target;
  bool functional = true;
  // Share of source entities that get any edge of this relation.
  double coverage = 1.0;
  // Upper bound on targets per source when not functional.
  std::size_t max_per_source = 2;
  std::vector<std::string> noun;      // question phrase, "what is the <noun> of"
  std::vector<std::string> sentence;  // corpus template with "{s}" and "{o}" slots
};

// relation == first . second
struct RuleSpec {
  std::string relation;
  std::string first;
  std::string second;
};

struct WorldSpec {
  std::uint64_t seed = 0;
  std::vector<EntityType> types;
  std::vector<RelationSpec> relations;
  std::vector<RuleSpec> rules;
  std::size_t passages = 1200;
  std::size_t min_sentences = 2;
  std::size_t max_sentences = 4;
  double held_out_fraction = 0.3;

  static WorldSpec default_world();
  // Throws ConfigError for dangling names, type mismatches and rules that
  // reuse their own relation.
  void validate() const;
  std::size_t num_entities() const;
  // Entity names are "<type>_<index within type>", ids assigned type by type.
  std::vector<std::string> entity_names() const;
  const RelationSpec& relation(std::string_view name) const;
  bool is_composed(std::string_view relation) const;
};

void to_json(nlohmann::json& j, const WorldSpec& s);
void from_json(const nlohmann::json& j, WorldSpec& s);

// Base graph (no inverse relations), closed under every rule. Throws
// GenerationError when a rule forces two targets on a functional relation.
kg::KnowledgeGraph gen_kg(const WorldSpec& spec);

struct GroundedText {
  std::vector<std::string> tokens;
  std::vector<model::Mention> mentions;
};

// Passages chain 2..4 triple sentences through shared entities. Seeds run
// over every base triple before repeating, so coverage is complete whenever
// `passages` is at least the edge count.
std::vector<GroundedText> gen_corpus(const kg::KnowledgeGraph& base, const WorldSpec& spec);

struct QAItem {
  GroundedText question;  // one mention, ends with the answer [MASK]
  kg::EntityId source = 0;
  kg::EntityId answer = 0;
  std::size_t hops = 1;
  std::string relation;            // "r" or "r1/r2"
  std::vector<std::string> path;   // base relations walked
  bool held_out = false;
};

// 1-hop items for every base relation and 2-hop items for every type-
// compatible pair of non-composed relations, kept only when the answer is
// unique. The split is by source entity.
std::vector<QAItem> gen_qa(const kg::KnowledgeGraph& base, const WorldSpec& spec);

// Drops every edge of `relation` and, on an inverse-closed graph, of its
// inverse. Throws InputError for unknown names.
kg::KnowledgeGraph remove_relation_edges(const kg::KnowledgeGraph& kg, std::string_view relation);

model::Vocab build_vocab(const WorldSpec& spec);

nlohmann::json to_json(const GroundedText& text, const kg::KnowledgeGraph& kg);
nlohmann::json to_json(const QAItem& item, const kg::KnowledgeGraph& kg);

// The on-disk world: triples.tsv, entities.txt, relations.txt, vocab.txt,
// passages.jsonl, qa.jsonl and spec.json.
void write_world(const std::filesystem::path& dir, const WorldSpec& spec);

struct Dataset {
  WorldSpec spec;
  kg::KnowledgeGraph kg;  // inverse-closed
  model::Vocab vocab;
  std::vector<model::TokenSequence> passages;
  std::vector<QAItem> qa;
};

model::TokenSequence encode(const GroundedText& text, const model::Vocab& vocab);
// One mention plus a trailing answer slot.
model::InstrumentedSequence qa_sequence(const QAItem& item, const model::Vocab& vocab);

std::vector<QAItem> load_qa(const std::filesystem::path& path, const kg::KnowledgeGraph& kg);
Dataset load_dataset(const std::filesystem::path& dir);
// What load_dataset would return after write_world, without touching disk.
Dataset make_dataset(const WorldSpec& spec);

}  // namespace oreo::synth
