#include "oreo/kg/graph.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <set>

#include "oreo/error.hpp"

namespace oreo::kg {

KnowledgeGraph::KnowledgeGraph(std::size_t num_entities, std::vector<std::string> relation_names,
                               std::vector<Triple> edges, std::vector<std::string> entity_names,
                               std::size_t base_relations)
    : num_entities_(num_entities),
      base_relations_(base_relations),
      relation_names_(std::move(relation_names)),
      entity_names_(std::move(entity_names)) {
  if (entity_names_.empty()) {
    entity_names_.reserve(num_entities_);
    for (std::size_t e = 0; e < num_entities_; ++e) entity_names_.push_back("e" + std::to_string(e));
  }
  if (entity_names_.size() != num_entities_) throw InputError("kg: entity name count mismatch");
  if (base_relations_ != 0 && 2 * base_relations_ != relation_names_.size()) {
    throw InputError("kg: inverse-closed graph must have twice the base relations");
  }
  std::set<Triple> seen;
  edges_.reserve(edges.size());
  for (const Triple& t : edges) {
    if (t.src >= num_entities_ || t.tgt >= num_entities_ || t.rel >= relation_names_.size()) {
      throw IndexError("kg: triple (" + std::to_string(t.src) + "," + std::to_string(t.rel) + "," +
                       std::to_string(t.tgt) + ") out of range");
    }
    if (seen.insert(t).second) edges_.push_back(t);
  }

  std::vector<Triple> sorted(edges_);
  std::sort(sorted.begin(), sorted.end());
  offsets_.assign(num_entities_ + 1, 0);
  adjacency_.reserve(sorted.size());
  for (const Triple& t : sorted) {
    ++offsets_[t.src + 1];
    adjacency_.push_back({t.rel, t.tgt});
  }
  for (std::size_t e = 0; e < num_entities_; ++e) offsets_[e + 1] += offsets_[e];

  const std::size_t nr = relation_names_.size();
  rel_offsets_.assign(nr, std::vector<std::size_t>(num_entities_ + 1, 0));
  rel_targets_.assign(nr, {});
  // sorted by (src, rel, tgt) so each relation's targets come out grouped by src
  for (const Triple& t : sorted) ++rel_offsets_[t.rel][t.src + 1];
  for (std::size_t r = 0; r < nr; ++r) {
    for (std::size_t e = 0; e < num_entities_; ++e) rel_offsets_[r][e + 1] += rel_offsets_[r][e];
    rel_targets_[r].reserve(rel_offsets_[r].back());
  }
  for (const Triple& t : sorted) rel_targets_[t.rel].push_back(t.tgt);

  for (std::size_t e = 0; e < num_entities_; ++e) entity_index_.emplace(entity_names_[e], static_cast<EntityId>(e));
  for (std::size_t r = 0; r < nr; ++r) relation_index_.emplace(relation_names_[r], static_cast<RelationId>(r));
}

std::optional<EntityId> KnowledgeGraph::find_entity(std::string_view name) const {
  auto it = entity_index_.find(std::string(name));
  if (it == entity_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> KnowledgeGraph::find_relation(std::string_view name) const {
  auto it = relation_index_.find(std::string(name));
  if (it == relation_index_.end()) return std::nullopt;
  return it->second;
}

std::span<const OutEdge> KnowledgeGraph::out_edges(EntityId e) const {
  if (e >= num_entities_) throw IndexError("kg: entity " + std::to_string(e) + " out of range");
  return {adjacency_.data() + offsets_[e], offsets_[e + 1] - offsets_[e]};
}

std::span<const EntityId> KnowledgeGraph::targets(EntityId e, RelationId r) const {
  if (e >= num_entities_ || r >= num_relations()) throw IndexError("kg: targets() out of range");
  const auto& off = rel_offsets_[r];
  return {rel_targets_[r].data() + off[e], off[e + 1] - off[e]};
}

std::vector<std::size_t> KnowledgeGraph::out_degrees() const {
  std::vector<std::size_t> deg(num_entities_);
  for (std::size_t e = 0; e < num_entities_; ++e) deg[e] = offsets_[e + 1] - offsets_[e];
  return deg;
}

std::size_t KnowledgeGraph::relation_edge_count(RelationId r) const {
  if (r >= num_relations()) throw IndexError("kg: relation out of range");
  return rel_targets_[r].size();
}

bool KnowledgeGraph::has_edge(EntityId s, RelationId r, EntityId t) const {
  auto ts = targets(s, r);
  return std::binary_search(ts.begin(), ts.end(), t);
}

RelationId KnowledgeGraph::inverse(RelationId r) const {
  if (!inverse_closed()) throw InputError("kg: graph has no inverse relations");
  if (r >= num_relations()) throw IndexError("kg: relation out of range");
  return static_cast<RelationId>(r < base_relations_ ? r + base_relations_ : r - base_relations_);
}

KnowledgeGraph add_inverse_relations(const KnowledgeGraph& kg) {
  if (kg.inverse_closed()) throw InputError("kg: inverse relations already added");
  const std::size_t base = kg.num_relations();
  std::vector<std::string> names = kg.relation_names();
  for (std::size_t r = 0; r < base; ++r) names.push_back(kg.relation_names()[r] + "-R");
  std::vector<Triple> edges = kg.edges();
  edges.reserve(2 * edges.size());
  for (const Triple& t : kg.edges()) {
    edges.push_back({t.tgt, static_cast<RelationId>(t.rel + base), t.src});
  }
  return KnowledgeGraph(kg.num_entities(), std::move(names), std::move(edges), kg.entity_names(), base);
}

std::vector<std::string> load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open vocabulary " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

KnowledgeGraph load_triples(const std::filesystem::path& triples,
                            const std::filesystem::path& entity_vocab,
                            const std::filesystem::path& relation_vocab) {
  auto entities = load_vocab(entity_vocab);
  auto relations = load_vocab(relation_vocab);
  std::unordered_map<std::string, EntityId> eidx;
  std::unordered_map<std::string, RelationId> ridx;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if (!eidx.emplace(entities[i], static_cast<EntityId>(i)).second) {
      throw ParseError(entity_vocab.string() + ":" + std::to_string(i + 1) + ": duplicate entity '" + entities[i] + "'");
    }
  }
  for (std::size_t i = 0; i < relations.size(); ++i) {
    if (!ridx.emplace(relations[i], static_cast<RelationId>(i)).second) {
      throw ParseError(relation_vocab.string() + ":" + std::to_string(i + 1) + ": duplicate relation '" + relations[i] + "'");
    }
  }

  std::ifstream in(triples);
  if (!in) throw ParseError("cannot open triples file " + triples.string());
  std::vector<Triple> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = triples.string() + ":" + std::to_string(lineno) + ": ";
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
      throw ParseError(where + "expected three tab-separated fields");
    }
    const std::string s = line.substr(0, t1), r = line.substr(t1 + 1, t2 - t1 - 1), t = line.substr(t2 + 1);
    auto si = eidx.find(s), ti = eidx.find(t);
    auto ri = ridx.find(r);
    if (si == eidx.end()) throw ParseError(where + "unknown entity '" + s + "'");
    if (ti == eidx.end()) throw ParseError(where + "unknown entity '" + t + "'");
    if (ri == ridx.end()) throw ParseError(where + "unknown relation '" + r + "'");
    edges.push_back({si->second, ri->second, ti->second});
  }
  const std::size_t n = entities.size();
  return KnowledgeGraph(n, std::move(relations), std::move(edges), std::move(entities));
}

void save_triples(const KnowledgeGraph& kg, const std::filesystem::path& triples,
                  const std::filesystem::path& entity_vocab,
                  const std::filesystem::path& relation_vocab) {
  std::ofstream ev(entity_vocab), rv(relation_vocab), tv(triples);
  if (!ev || !rv || !tv) throw Error("cannot write graph files");
  for (const auto& e : kg.entity_names()) ev << e << '\n';
  const std::size_t base = kg.base_relations();
  for (std::size_t r = 0; r < base; ++r) rv << kg.relation_names()[r] << '\n';
  for (const Triple& t : kg.edges()) {
    if (t.rel >= base) continue;
    tv << kg.entity_names()[t.src] << '\t' << kg.relation_names()[t.rel] << '\t'
       << kg.entity_names()[t.tgt] << '\n';
  }
}

std::optional<std::size_t> SubgraphIndex::local(EntityId e) const {
  auto it = std::lower_bound(entities.begin(), entities.end(), e);
  if (it == entities.end() || *it != e) return std::nullopt;
  return static_cast<std::size_t>(it - entities.begin());
}

SubgraphIndex k_hop_subgraph(std::span<const EntityId> init, std::size_t hops,
                             const KnowledgeGraph& kg) {
  constexpr std::size_t kUnseen = static_cast<std::size_t>(-1);
  std::vector<std::size_t> dist(kg.num_entities(), kUnseen);
  std::deque<EntityId> frontier;
  for (EntityId e : init) {
    if (e >= kg.num_entities()) throw IndexError("k_hop_subgraph: entity out of range");
    if (dist[e] == kUnseen) {
      dist[e] = 0;
      frontier.push_back(e);
    }
  }
  while (!frontier.empty()) {
    const EntityId u = frontier.front();
    frontier.pop_front();
    if (dist[u] >= hops) continue;
    for (const OutEdge& oe : kg.out_edges(u)) {
      if (dist[oe.tgt] == kUnseen) {
        dist[oe.tgt] = dist[u] + 1;
        frontier.push_back(oe.tgt);
      }
    }
  }
  SubgraphIndex sub;
  std::vector<std::size_t> local(kg.num_entities(), kUnseen);
  for (std::size_t e = 0; e < kg.num_entities(); ++e) {
    if (dist[e] != kUnseen) {
      local[e] = sub.entities.size();
      sub.entities.push_back(static_cast<EntityId>(e));
    }
  }
  for (EntityId s : sub.entities) {
    if (dist[s] + 1 > hops) continue;
    for (const OutEdge& oe : kg.out_edges(s)) {
      sub.i_src.push_back(local[s]);
      sub.i_rel.push_back(oe.rel);
      sub.i_tgt.push_back(local[oe.tgt]);
    }
  }
  return sub;
}

}  // namespace oreo::kg
