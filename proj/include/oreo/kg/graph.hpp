#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace oreo::kg {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId src = 0;
  RelationId rel = 0;
  EntityId tgt = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct OutEdge {
  RelationId rel;
  EntityId tgt;
};

// Immutable multi-relational graph. Edges keep first-seen order after
// de-duplication; adjacency is compressed per source entity and per relation.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  // Throws IndexError for out-of-range ids. Duplicate triples are dropped.
  KnowledgeGraph(std::size_t num_entities, std::vector<std::string> relation_names,
                 std::vector<Triple> edges, std::vector<std::string> entity_names = {},
                 std::size_t base_relations = 0);

  std::size_t num_entities() const noexcept { return num_entities_; }
  std::size_t num_relations() const noexcept { return relation_names_.size(); }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  const std::vector<Triple>& edges() const noexcept { return edges_; }
  const std::vector<std::string>& relation_names() const noexcept { return relation_names_; }
  const std::vector<std::string>& entity_names() const noexcept { return entity_names_; }
  const std::string& entity_name(EntityId e) const { return entity_names_.at(e); }
  const std::string& relation_name(RelationId r) const { return relation_names_.at(r); }
  std::optional<EntityId> find_entity(std::string_view name) const;
  std::optional<RelationId> find_relation(std::string_view name) const;

  // Out-edges of `e` over all relations, sorted by (rel, tgt).
  std::span<const OutEdge> out_edges(EntityId e) const;
  // Targets of `e` under relation `r`, ascending.
  std::span<const EntityId> targets(EntityId e, RelationId r) const;
  std::size_t out_degree(EntityId e) const { return out_edges(e).size(); }
  std::vector<std::size_t> out_degrees() const;
  std::size_t relation_edge_count(RelationId r) const;
  bool has_edge(EntityId s, RelationId r, EntityId t) const;

  // After add_inverse_relations: relations [0, base) are originals and
  // r + base is the inverse of r.
  bool inverse_closed() const noexcept { return base_relations_ != 0; }
  std::size_t base_relations() const noexcept {
    return inverse_closed() ? base_relations_ : num_relations();
  }
  RelationId inverse(RelationId r) const;

 private:
  std::size_t num_entities_ = 0;
  std::size_t base_relations_ = 0;
  std::vector<std::string> relation_names_;
  std::vector<std::string> entity_names_;
  std::vector<Triple> edges_;
  // CSR over sources, edges sorted by (rel, tgt) within a source.
  std::vector<std::size_t> offsets_;
  std::vector<OutEdge> adjacency_;
  // Per relation CSR: rel_offsets_[r] has num_entities + 1 entries.
  std::vector<std::vector<std::size_t>> rel_offsets_;
  std::vector<std::vector<EntityId>> rel_targets_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::unordered_map<std::string, RelationId> relation_index_;
};

// Returns the graph extended by (t, inv(r), s) for every (s, r, t); inverse
// relations are named "<name>-R". Throws InputError on an already-closed graph.
KnowledgeGraph add_inverse_relations(const KnowledgeGraph& kg);

// Triples file: "src<TAB>rel<TAB>tgt" per line, tokens resolved through
// entity and relation vocabularies (one token per line, id = line number).
KnowledgeGraph load_triples(const std::filesystem::path& triples,
                            const std::filesystem::path& entity_vocab,
                            const std::filesystem::path& relation_vocab);
std::vector<std::string> load_vocab(const std::filesystem::path& path);
// Writes the triples for relations below base_relations() and both vocabularies.
void save_triples(const KnowledgeGraph& kg, const std::filesystem::path& triples,
                  const std::filesystem::path& entity_vocab,
                  const std::filesystem::path& relation_vocab);

// Entities within `hops` directed steps of `init` (sorted, global ids) and the
// edges whose source is within hops - 1 steps, in local coordinates.
struct SubgraphIndex {
  std::vector<EntityId> entities;
  std::vector<std::size_t> i_src;
  std::vector<std::size_t> i_rel;
  std::vector<std::size_t> i_tgt;

  std::size_t size() const noexcept { return entities.size(); }
  std::size_t num_edges() const noexcept { return i_src.size(); }
  // Local position of a global id, if present.
  std::optional<std::size_t> local(EntityId e) const;
};

SubgraphIndex k_hop_subgraph(std::span<const EntityId> init, std::size_t hops,
                             const KnowledgeGraph& kg);

}  // namespace oreo::kg
