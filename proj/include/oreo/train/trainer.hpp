#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oreo/model/model.hpp"
#include "oreo/numerics/gradcheck.hpp"
#include "oreo/numerics/param.hpp"
#include "oreo/objectives/objectives.hpp"
#include "oreo/synth/world.hpp"

namespace oreo::train {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  model::ModelConfig model;  // vocab and graph sizes are filled from the data
  AdamConfig adam;
  std::size_t batch_size = 16;
  std::size_t steps = 3000;
  double lambda_ent = 1.0;
  double lambda_rel = 1.0;
  // Share of batch slots drawn from training-split questions.
  double qa_fraction = 0.5;
  obj::MaskPolicy mask;
  std::uint64_t seed = 0;
  std::size_t log_every = 100;
  bool freeze_relation_weights = false;
  std::string data;  // dataset directory, used by the CLI

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
TrainConfig load_train_config(const std::filesystem::path& path);

// Fills vocab, entity and relation counts from the dataset.
model::ModelConfig bind_model_config(model::ModelConfig m, const synth::Dataset& data);

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  // Updates every trainable parameter from its accumulated gradient.
  void step(num::ParamSet& params);
  std::size_t steps_taken() const noexcept { return t_; }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::map<std::string, std::pair<num::Tensor, num::Tensor>, std::less<>> moments_;
};

struct LossRecord {
  std::size_t step = 0;
  double total = 0, ssm = 0, ent = 0, rel = 0, qa = 0;
  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

struct TrainResult {
  num::ParamSet params;
  model::ModelConfig model;
  std::vector<LossRecord> curve;  // one record per step, batch means
};

// Per-sequence loss terms on one tape.
struct SequenceLoss {
  num::Var total;
  double ssm = 0, ent = 0, rel = 0, qa = 0;
};

SequenceLoss passage_loss(num::Tape& tape, num::ParamSet& params, const model::ModelConfig& mc,
                          const obj::MaskedPassage& mp, const model::GraphContext& graph,
                          double lambda_ent, double lambda_rel);
SequenceLoss question_loss(num::Tape& tape, num::ParamSet& params, const model::ModelConfig& mc,
                           const model::InstrumentedSequence& seq, kg::EntityId answer,
                           const model::GraphContext& graph, double lambda_ent, double lambda_rel);

// One batch slot: a masked passage or a training-split question.
struct Slot {
  std::optional<obj::MaskedPassage> passage;
  const synth::QAItem* question = nullptr;
};

// The training stream. Slots depend only on (config.seed, data).
class BatchSampler {
 public:
  BatchSampler(const synth::Dataset& data, const TrainConfig& config);
  Slot next();

 private:
  const synth::Dataset* data_;
  const TrainConfig* config_;
  std::vector<const synth::QAItem*> questions_;
  std::mt19937_64 rng_;
};

// Deterministic given (config, data). Throws NumericalError on a non-finite
// loss after writing the offending batch to `dump_path` when it is set.
TrainResult train(const TrainConfig& config, const synth::Dataset& data, std::ostream* log = nullptr,
                  const std::filesystem::path& dump_path = {});
// Same, starting from given parameters.
TrainResult train_from(num::ParamSet params, const TrainConfig& config, const synth::Dataset& data,
                       std::ostream* log = nullptr, const std::filesystem::path& dump_path = {});

struct Metrics {
  std::size_t count = 0;
  std::size_t hits = 0;
  double hits1() const { return count == 0 ? 0.0 : double(hits) / double(count); }
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> by_hops;      // hops -> (hits, count)
  std::map<std::string, std::pair<std::size_t, std::size_t>> by_relation;  // relation -> (hits, count)
};

nlohmann::json to_json(const Metrics& m);

Metrics score_predictions(const std::vector<synth::QAItem>& items, const std::vector<kg::EntityId>& predicted);

// Top-1 over the full entity vocabulary, ties to the lowest id.
std::vector<kg::EntityId> predict(num::ParamSet& params, const model::ModelConfig& mc,
                                  const std::vector<synth::QAItem>& items, const model::Vocab& vocab,
                                  const model::GraphContext& graph);
Metrics evaluate_qa(num::ParamSet& params, const model::ModelConfig& mc, const std::vector<synth::QAItem>& items,
                    const model::Vocab& vocab, const model::GraphContext& graph);

struct RankedRelation {
  kg::RelationId relation = 0;
  std::string name;
  double mean_probability = 0;
};

struct PathReport {
  std::string relation;
  std::size_t probes = 0;
  // Per step, relations that still have edges in the evaluated graph, by
  // mean probability, descending. Mass on edgeless relations moves no
  // probability and is reported separately, so each ranking is a
  // sub-distribution of the averaged trace.
  std::vector<std::vector<RankedRelation>> ranking;
  std::vector<double> edgeless_mass;
  std::vector<std::string> path;  // per-step argmax
};

nlohmann::json to_json(const PathReport& r);

// Averages gamma over the probe questions' traces.
PathReport extract_rules(num::ParamSet& params, const model::ModelConfig& mc, std::string_view relation,
                         const std::vector<synth::QAItem>& probes, const model::Vocab& vocab,
                         const model::GraphContext& graph);
// The averaging and ranking step on already computed traces.
PathReport rules_from_traces(std::string_view relation, const std::vector<model::ReasoningTrace>& traces,
                             const kg::KnowledgeGraph& graph);

struct GradCheckBatch {
  std::vector<obj::MaskedPassage> passages;
  std::vector<std::pair<model::InstrumentedSequence, kg::EntityId>> questions;
};

// A small deterministic batch drawn from the dataset.
GradCheckBatch sample_gradcheck_batch(const synth::Dataset& data, const TrainConfig& config,
                                      std::size_t passages, std::size_t questions);

num::GradCheckResult grad_check(num::ParamSet& params, const model::ModelConfig& mc, const GradCheckBatch& batch,
                                const model::GraphContext& graph, double lambda_ent, double lambda_rel,
                                const num::GradCheckOptions& opts);

nlohmann::json checkpoint_meta(const TrainConfig& config, const TrainResult& result);
void save_trained(const std::filesystem::path& path, const TrainConfig& config, const TrainResult& result);

}  // namespace oreo::train
