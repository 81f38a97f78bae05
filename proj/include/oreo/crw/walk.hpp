#pragma once

// Contextualized random walk: one state transition of per-mention entity
// distributions, with edge weights modulated by a predicted relation
// distribution and learned relation importance.
//
// Sparse form (the production path):
//   p_edge[k] = pi[src_k] * wdeg[src_k] * gamma[rel_k] * w[rel_k]
//   pi'       = scatter_add(p_edge / sum(p_edge), tgt)
// A mention whose total edge mass is zero keeps pi unchanged.

#include <vector>

#include "oreo/kg/graph.hpp"
#include "oreo/numerics/ops.hpp"

namespace oreo::crw {

struct EntityDistribution {
  std::vector<double> probs;  // aligned to SubgraphIndex::entities
};

struct RelationDistribution {
  std::vector<double> probs;  // one entry per relation
};

// w_r = exp(log_weights[r]); strictly positive by construction.
struct RelationImportance {
  std::vector<double> log_weights;

  static RelationImportance uniform(std::size_t num_relations) {
    return {std::vector<double>(num_relations, 0.0)};
  }
  std::vector<double> weights() const;
};

// w_deg[e] = 1 / out_degree(e), or 0 for entities without outgoing edges.
struct DegreeWeights {
  std::vector<double> w_deg;

  static DegreeWeights from_graph(const kg::KnowledgeGraph& kg);
  // Restriction to the subgraph's local entity order.
  num::Tensor local(const kg::SubgraphIndex& sub) const;
};

// Differentiable batched transition. pi: [M x |I|], gamma: [M x |R|],
// weights: [|R|] (positive). Returns [M x |I|].
num::Var transition(num::Var pi, num::Var gamma, num::Var weights, const kg::SubgraphIndex& sub,
                    const DegreeWeights& wdeg);

EntityDistribution crw_transition(const EntityDistribution& pi, const RelationDistribution& gamma,
                                  const kg::SubgraphIndex& sub, const DegreeWeights& wdeg,
                                  const RelationImportance& w);

// One (pi, gamma) pair per mention over a shared subgraph; equivalent to
// independent crw_transition calls.
std::vector<EntityDistribution> batched_transition(const std::vector<EntityDistribution>& pis,
                                                   const std::vector<RelationDistribution>& gammas,
                                                   const kg::SubgraphIndex& sub,
                                                   const DegreeWeights& wdeg,
                                                   const RelationImportance& w);

enum class DenseNormalization {
  // Same semantics as the sparse path: 1/deg gather, global L1 over edge mass.
  kGlobal,
  // Row-normalise the weighted adjacency by its weighted out-degree, then
  // pi' = pi * D^-1 A. Differs from kGlobal when weighted degrees are uneven;
  // kept for comparison only.
  kWeightedDegreeRows,
};

inline constexpr std::size_t kDenseOracleMaxEntities = 1000;

// Dense reference over the whole graph: builds A~ = sum_r w_r gamma_r A_r as an
// |E| x |E| matrix. pi and the result are indexed by global entity id.
// Throws CapacityError above kDenseOracleMaxEntities.
EntityDistribution dense_transition_oracle(const EntityDistribution& pi,
                                           const RelationDistribution& gamma,
                                           const kg::KnowledgeGraph& kg,
                                           const RelationImportance& w,
                                           DenseNormalization mode = DenseNormalization::kGlobal);

}  // namespace oreo::crw
