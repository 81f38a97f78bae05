#pragma once

#include <random>
#include <set>
#include <vector>

#include <json.hpp>

#include "oreo/kg/graph.hpp"
#include "oreo/model/model.hpp"
#include "oreo/model/sequence.hpp"
#include "oreo/numerics/ops.hpp"

namespace oreo::obj {

struct MaskPolicy {
  std::size_t max_masked_entities = 2;
  std::size_t num_spans = 1;
  std::size_t min_span = 1;
  std::size_t max_span = 5;
};

struct MaskedPassage {
  // Instrumented over the surviving mentions; masked tokens carry [MASK].
  model::InstrumentedSequence seq;
  std::vector<std::size_t> mask_positions;  // ascending, in seq.ids
  std::vector<model::TokenId> targets;      // original ids at mask_positions
  std::vector<kg::EntityId> masked_entities;   // sorted, distinct
  std::vector<kg::EntityId> context_entities;  // one per surviving mention

  friend bool operator==(const MaskedPassage&, const MaskedPassage&);
};

// Samples entity ids among the passage's mentions and masks every token of
// every mention of them (those mentions lose their special tokens), then masks
// `num_spans` runs of non-mention tokens. At least one entity stays unmasked
// when the passage mentions two or more.
MaskedPassage mask_passage(const model::TokenSequence& passage, const MaskPolicy& policy,
                           std::mt19937_64& rng);

nlohmann::json to_json(const MaskedPassage& mp);
MaskedPassage masked_passage_from_json(const nlohmann::json& j);

// sets[i][t] is R_DG(context i, step t + 1).
struct GroundedDependencyGraph {
  std::vector<std::vector<std::set<kg::RelationId>>> sets;
};

// Collects, for every walk of length <= depth from a context entity that ends
// at a masked entity, its t-th relation into step t. Intermediate nodes are
// unrestricted.
GroundedDependencyGraph build_dependency_graph(const kg::KnowledgeGraph& kg,
                                               const std::vector<kg::EntityId>& context_entities,
                                               const std::vector<kg::EntityId>& masked_entities,
                                               std::size_t depth);

// Per step: uniform rows over R_DG, zero rows where the set is empty.
struct RelationLabels {
  std::vector<num::Tensor> q;                   // [M x |R|] per step
  std::vector<std::vector<bool>> defined;       // [step][mention]
  std::size_t num_defined() const;
};

RelationLabels relation_labels(const GroundedDependencyGraph& dg, std::size_t num_relations);

// Mean token cross-entropy; a constant 0 when there are no targets.
num::Var loss_ssm(num::Tape& tape, num::Var token_logits, const std::vector<model::TokenId>& targets);

// Sum over mentions of -<log P, pi0>, with log P from the entity head over I.
num::Var loss_ent(num::Var log_scores, num::Var pi0);
num::Var loss_ent(num::ParamSet& params, num::Var h_sent, const kg::SubgraphIndex& sub, num::Var pi0);

// Sum over defined (mention, step) pairs of -<log gamma, q>. Labels whose
// defined rows do not sum to 1 raise InputError.
num::Var loss_rel(num::Tape& tape, const std::vector<num::Var>& log_gamma, const RelationLabels& labels);

// l_ssm + lambda_ent * l_ent + lambda_rel * l_rel; negative weights raise ConfigError.
num::Var total_loss(num::Var l_ssm, num::Var l_ent, num::Var l_rel, double lambda_ent, double lambda_rel);

}  // namespace oreo::obj
