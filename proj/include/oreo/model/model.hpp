#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "oreo/crw/walk.hpp"
#include "oreo/kg/graph.hpp"
#include "oreo/model/sequence.hpp"
#include "oreo/numerics/ops.hpp"
#include "oreo/numerics/param.hpp"

namespace oreo::model {

struct ModelConfig {
  std::size_t layers = 4;   // L
  std::size_t depth = 2;    // T, reasoning steps
  std::size_t spacing = 1;  // N, a KIL after every N layers
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t ff = 256;
  std::size_t d_e = 32;
  std::size_t hops = 2;  // K, subgraph radius
  std::size_t max_len = 128;
  std::size_t vocab_size = 0;
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;

  // Throws ConfigError naming the violated constraint.
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

void init_params(num::ParamSet& params, const ModelConfig& config, std::uint64_t seed);

// The graph a forward pass walks on. Swapping `kg` for an edge-removed copy is
// how missing-edge evaluation works.
struct GraphContext {
  const kg::KnowledgeGraph* kg = nullptr;
  crw::DegreeWeights wdeg;

  GraphContext() = default;
  explicit GraphContext(const kg::KnowledgeGraph& graph)
      : kg(&graph), wdeg(crw::DegreeWeights::from_graph(graph)) {}
};

// One-hot at the mention's entity, or uniform over its candidates when two or
// more are given. Throws LinkingError if an entity is outside the subgraph.
crw::EntityDistribution init_pi(const InstrumentedMention& mention, const kg::SubgraphIndex& sub);

struct ReasoningTrace {
  std::vector<kg::EntityId> entities;  // subgraph I
  std::vector<kg::EntityId> mentions;  // entity of each mention
  std::vector<num::Tensor> gamma;      // T tensors [M x |R|]
  std::vector<num::Tensor> pi;         // T + 1 tensors [M x |I|], pi[0] initial

  std::size_t steps() const noexcept { return gamma.size(); }
};

// Records of (mention, step, top-k relations, top-k entities) with names.
nlohmann::json trace_records(const ReasoningTrace& trace, const kg::KnowledgeGraph& kg,
                             std::size_t top_k = 3);

struct ForwardOptions {
  // Score the answer [MASK] over these global ids; empty means every entity.
  std::vector<std::size_t> answer_entities;
  // Override the configured depth, e.g. 0 for the plain encoder path.
  std::optional<std::size_t> depth;
};

struct ForwardResult {
  num::Var hidden;        // [n x d] after the final norm
  num::Var h_pre_kil;     // [n x d] after layer N, before any KIL
  num::Var h_sent;        // [M x d] [S-ENT] rows of h_pre_kil
  num::Var token_logits;  // [#masks x V] at seq.mask_positions()
  num::Var answer_log_scores;  // [1 x #candidates], if the sequence has an answer slot
  std::vector<num::Var> gamma;      // per step, [M x |R|]
  std::vector<num::Var> log_gamma;  // per step
  std::vector<num::Var> pi;         // pi[0] constant, then one per step
  kg::SubgraphIndex sub;
  std::vector<kg::EntityId> mention_entities;
  std::vector<std::size_t> mask_positions;

  ReasoningTrace trace() const;
};

ForwardResult forward(num::Tape& tape, num::ParamSet& params, const ModelConfig& config,
                      const InstrumentedSequence& seq, const GraphContext& graph,
                      const ForwardOptions& opts = {});

// All L layers plus the final norm, no knowledge layers: [n x d].
num::Var encode_plain(num::Tape& tape, num::ParamSet& params, const ModelConfig& config,
                      const std::vector<TokenId>& ids);

}  // namespace oreo::model
