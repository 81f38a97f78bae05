#pragma once

// Knowledge Interaction Layer pieces. Every function works on a batch of M
// mentions at once: rows of h_* are mention embeddings.
//
// Parameter names (checkpoint keys):
//   K_rel [|R| x d], V_ent [|E| x d_e], w_rel_log [|R|]
//   kil<t>.q_proj.{w1,b1,w2,b2}, kil<t>.q_ln.{gain,bias}
//   kil<t>.v_proj.{w1,b1,w2,b2}, kil<t>.inject_ln.{gain,bias}
//   e_proj.{w1,b1,w2,b2}, e_ln.{gain,bias}

#include <cstdint>
#include <random>
#include <string>

#include "oreo/kg/graph.hpp"
#include "oreo/numerics/ops.hpp"
#include "oreo/numerics/param.hpp"

namespace oreo::kil {

struct KilShape {
  std::size_t d = 64;
  std::size_t d_e = 32;
  std::size_t steps = 2;
  std::size_t num_relations = 0;
  std::size_t num_entities = 0;
};

// Adds every KIL parameter to `params`. Throws ConfigError on name clashes.
void init_params(num::ParamSet& params, const KilShape& shape, std::mt19937_64& rng);

std::string step_name(std::size_t step, const char* part);

// Pre-softmax relation scores LN(Q-Proj(h_rel)) . K_rel^T: [M x d] -> [M x |R|].
num::Var relation_logits(num::ParamSet& params, num::Var h_rel, std::size_t step);
// gamma = softmax(relation_logits).
num::Var relation_predict(num::ParamSet& params, num::Var h_rel, std::size_t step);
// Same logits through log_softmax, for the relation loss.
num::Var relation_log_predict(num::ParamSet& params, num::Var h_rel, std::size_t step);

// LN(h_tent + V-Proj(pi . V_ent[I])): pi [M x |I|], h_tent [M x d] -> [M x d].
num::Var knowledge_inject(num::ParamSet& params, num::Var pi, const kg::SubgraphIndex& sub,
                          num::Var h_tent, std::size_t step);

// softmax(LN(E-Proj(h)) . V_ent[entities]^T): [M x d] -> [M x |entities|].
// `entities` holds global ids; pass every id for full-vocabulary scoring.
num::Var entity_score(num::ParamSet& params, num::Var h_sent, const num::Index& entities);
num::Var entity_log_score(num::ParamSet& params, num::Var h_sent, const num::Index& entities);

num::Index subgraph_entities(const kg::SubgraphIndex& sub);

}  // namespace oreo::kil
