#include "oreo/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "oreo/error.hpp"
#include "oreo/numerics/checkpoint.hpp"

namespace oreo::train {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (!(adam.lr > 0) || !(adam.eps > 0)) fail("lr and eps must be positive");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1)) fail("betas must lie in [0, 1)");
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(lambda_ent >= 0) || !(lambda_rel >= 0)) fail("loss weights must be >= 0");
  if (!(qa_fraction >= 0 && qa_fraction <= 1)) fail("qa_fraction must lie in [0, 1]");
  if (mask.min_span == 0 || mask.min_span > mask.max_span) fail("need 1 <= min_span <= max_span");
  if (log_every == 0) fail("log_every must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"model", c.model},
       {"adam", {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
       {"batch_size", c.batch_size},
       {"steps", c.steps},
       {"lambda_ent", c.lambda_ent},
       {"lambda_rel", c.lambda_rel},
       {"qa_fraction", c.qa_fraction},
       {"mask",
        {{"max_masked_entities", c.mask.max_masked_entities},
         {"num_spans", c.mask.num_spans},
         {"min_span", c.mask.min_span},
         {"max_span", c.mask.max_span}}},
       {"seed", c.seed},
       {"log_every", c.log_every},
       {"freeze_relation_weights", c.freeze_relation_weights},
       {"data", c.data}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const std::set<std::string> known{"model",       "adam",      "batch_size", "steps",
                                           "lambda_ent",  "lambda_rel", "qa_fraction", "mask",
                                           "seed",        "log_every", "freeze_relation_weights", "data"};
  try {
    for (const auto& [k, v] : j.items()) {
      if (!known.contains(k)) throw ConfigError("train config: unknown key '" + k + "'");
    }
    c = TrainConfig{};
    if (j.contains("model")) c.model = j.at("model").get<model::ModelConfig>();
    if (j.contains("adam")) {
      const auto& a = j.at("adam");
      c.adam.lr = a.value("lr", c.adam.lr);
      c.adam.beta1 = a.value("beta1", c.adam.beta1);
      c.adam.beta2 = a.value("beta2", c.adam.beta2);
      c.adam.eps = a.value("eps", c.adam.eps);
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.lambda_ent = j.value("lambda_ent", c.lambda_ent);
    c.lambda_rel = j.value("lambda_rel", c.lambda_rel);
    c.qa_fraction = j.value("qa_fraction", c.qa_fraction);
    if (j.contains("mask")) {
      const auto& m = j.at("mask");
      c.mask.max_masked_entities = m.value("max_masked_entities", c.mask.max_masked_entities);
      c.mask.num_spans = m.value("num_spans", c.mask.num_spans);
      c.mask.min_span = m.value("min_span", c.mask.min_span);
      c.mask.max_span = m.value("max_span", c.mask.max_span);
    }
    c.seed = j.value("seed", c.seed);
    c.log_every = j.value("log_every", c.log_every);
    c.freeze_relation_weights = j.value("freeze_relation_weights", c.freeze_relation_weights);
    c.data = j.value("data", c.data);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  auto c = j.get<TrainConfig>();
  // Relative data paths resolve against the config file.
  if (!c.data.empty() && std::filesystem::path(c.data).is_relative()) {
    c.data = (path.parent_path() / c.data).lexically_normal().string();
  }
  c.validate();
  return c;
}

model::ModelConfig bind_model_config(model::ModelConfig m, const synth::Dataset& data) {
  m.vocab_size = data.vocab.size();
  m.num_entities = data.kg.num_entities();
  m.num_relations = data.kg.num_relations();
  m.validate();
  return m;
}

void Adam::step(num::ParamSet& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  for (auto& p : params.all()) {
    if (!p.trainable) continue;
    auto it = moments_.find(p.name);
    if (it == moments_.end()) {
      it = moments_.emplace(p.name, std::pair{num::Tensor(p.value.shape()), num::Tensor(p.value.shape())}).first;
    }
    auto& [m, v] = it->second;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      p.value[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

namespace {

num::Var zero(num::Tape& t) { return t.constant(num::Tensor::scalar(0.0)); }

num::Var relation_term(num::Tape& t, const model::ForwardResult& r, const model::GraphContext& g,
                       const std::vector<kg::EntityId>& context, const std::vector<kg::EntityId>& masked,
                       std::size_t depth) {
  if (depth == 0 || context.empty() || masked.empty()) return zero(t);
  const auto dg = obj::build_dependency_graph(*g.kg, context, masked, depth);
  return obj::loss_rel(t, r.log_gamma, obj::relation_labels(dg, g.kg->num_relations()));
}

}  // namespace

SequenceLoss passage_loss(num::Tape& t, num::ParamSet& ps, const model::ModelConfig& mc,
                          const obj::MaskedPassage& mp, const model::GraphContext& g, double le, double lr) {
  const auto r = model::forward(t, ps, mc, mp.seq, g);
  SequenceLoss out;
  num::Var ssm = obj::loss_ssm(t, r.token_logits, mp.targets);
  num::Var ent = le > 0 && !mp.seq.mentions.empty() ? obj::loss_ent(ps, r.h_sent, r.sub, r.pi[0]) : zero(t);
  num::Var rel = lr > 0 ? relation_term(t, r, g, mp.context_entities, mp.masked_entities, mc.depth) : zero(t);
  out.total = obj::total_loss(ssm, ent, rel, le, lr);
  out.ssm = ssm.value().item();
  out.ent = ent.value().item();
  out.rel = rel.value().item();
  return out;
}

SequenceLoss question_loss(num::Tape& t, num::ParamSet& ps, const model::ModelConfig& mc,
                           const model::InstrumentedSequence& seq, kg::EntityId answer,
                           const model::GraphContext& g, double le, double lr) {
  if (!seq.answer_pos) throw InputError("question_loss: sequence has no answer slot");
  const auto r = model::forward(t, ps, mc, seq, g);
  SequenceLoss out;
  num::Var qa = num::scale(num::sum(num::gather(r.answer_log_scores, {answer}, 1)), -1.0);
  num::Var ent = le > 0 && !seq.mentions.empty() ? obj::loss_ent(ps, r.h_sent, r.sub, r.pi[0]) : zero(t);
  num::Var rel = lr > 0 ? relation_term(t, r, g, seq.mention_entities(), {answer}, mc.depth) : zero(t);
  out.total = obj::total_loss(qa, ent, rel, le, lr);
  out.qa = qa.value().item();
  out.ent = ent.value().item();
  out.rel = rel.value().item();
  return out;
}

BatchSampler::BatchSampler(const synth::Dataset& data, const TrainConfig& config)
    : data_(&data), config_(&config), rng_(config.seed ^ 0x9e3779b97f4a7c15ULL) {
  for (const auto& q : data.qa) {
    if (!q.held_out) questions_.push_back(&q);
  }
  if (data.passages.empty() && questions_.empty()) throw InputError("train: no passages and no questions");
}

Slot BatchSampler::next() {
  Slot s;
  const bool ask = !questions_.empty() &&
                   (data_->passages.empty() || std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < config_->qa_fraction);
  if (ask) {
    s.question = questions_[std::uniform_int_distribution<std::size_t>(0, questions_.size() - 1)(rng_)];
  } else {
    const auto& p = data_->passages[std::uniform_int_distribution<std::size_t>(0, data_->passages.size() - 1)(rng_)];
    s.passage = obj::mask_passage(p, config_->mask, rng_);
  }
  return s;
}

TrainResult train(const TrainConfig& config, const synth::Dataset& data, std::ostream* log,
                  const std::filesystem::path& dump_path) {
  const auto mc = bind_model_config(config.model, data);
  num::ParamSet params;
  model::init_params(params, mc, config.seed);
  return train_from(std::move(params), config, data, log, dump_path);
}

TrainResult train_from(num::ParamSet params, const TrainConfig& config, const synth::Dataset& data,
                       std::ostream* log, const std::filesystem::path& dump_path) {
  config.validate();
  TrainResult result;
  result.model = bind_model_config(config.model, data);
  const auto& mc = result.model;
  if (auto* w = params.find("w_rel_log")) w->trainable = !config.freeze_relation_weights;

  BatchSampler sampler(data, config);
  const model::GraphContext graph(data.kg);
  Adam adam(config.adam);
  const double inv_b = 1.0 / double(config.batch_size);

  for (std::size_t step = 0; step < config.steps; ++step) {
    params.zero_grad();
    LossRecord rec;
    rec.step = step + 1;
    nlohmann::json batch_dump = nlohmann::json::array();
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      num::Tape tape;
      SequenceLoss sl;
      const auto slot = sampler.next();
      if (slot.question) {
        const auto& q = *slot.question;
        sl = question_loss(tape, params, mc, synth::qa_sequence(q, data.vocab), q.answer, graph,
                           config.lambda_ent, config.lambda_rel);
        batch_dump.push_back({{"question", synth::to_json(q, data.kg)}});
      } else {
        sl = passage_loss(tape, params, mc, *slot.passage, graph, config.lambda_ent, config.lambda_rel);
        batch_dump.push_back({{"passage", obj::to_json(*slot.passage)}});
      }
      const double total = sl.total.value().item();
      batch_dump.back()["loss"] = {{"total", total}, {"ssm", sl.ssm}, {"ent", sl.ent}, {"rel", sl.rel}, {"qa", sl.qa}};
      if (!std::isfinite(total)) {
        if (!dump_path.empty()) {
          std::ofstream(dump_path) << nlohmann::json{{"step", step + 1}, {"slot", b}, {"batch", batch_dump}}.dump(1);
        }
        throw NumericalError("non-finite loss at step " + std::to_string(step + 1) + ", batch slot " +
                             std::to_string(b) + (dump_path.empty() ? "" : "; batch written to " + dump_path.string()));
      }
      tape.backward(num::scale(sl.total, inv_b));
      rec.total += total * inv_b;
      rec.ssm += sl.ssm * inv_b;
      rec.ent += sl.ent * inv_b;
      rec.rel += sl.rel * inv_b;
      rec.qa += sl.qa * inv_b;
    }
    adam.step(params);
    result.curve.push_back(rec);
    if (log && (rec.step % config.log_every == 0 || rec.step == 1)) {
      *log << "step " << rec.step << " loss " << rec.total << " ssm " << rec.ssm << " ent " << rec.ent << " rel "
           << rec.rel << " qa " << rec.qa << '\n';
    }
  }
  result.params = std::move(params);
  return result;
}

nlohmann::json to_json(const Metrics& m) {
  nlohmann::json hops = nlohmann::json::object(), rels = nlohmann::json::object();
  auto bucket = [](std::pair<std::size_t, std::size_t> hc) {
    return nlohmann::json{{"hits1", hc.second ? double(hc.first) / double(hc.second) : 0.0}, {"count", hc.second}};
  };
  for (const auto& [h, hc] : m.by_hops) hops[std::to_string(h)] = bucket(hc);
  for (const auto& [r, hc] : m.by_relation) rels[r] = bucket(hc);
  return {{"hits1", m.hits1()}, {"count", m.count}, {"by_hops", hops}, {"by_relation", rels}};
}

Metrics score_predictions(const std::vector<synth::QAItem>& items, const std::vector<kg::EntityId>& predicted) {
  if (items.size() != predicted.size()) throw ShapeError("score_predictions: one prediction per item");
  Metrics m;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const bool hit = predicted[i] == items[i].answer;
    ++m.count;
    m.hits += hit;
    auto& h = m.by_hops[items[i].hops];
    h.first += hit;
    ++h.second;
    auto& r = m.by_relation[items[i].relation];
    r.first += hit;
    ++r.second;
  }
  return m;
}

std::vector<kg::EntityId> predict(num::ParamSet& ps, const model::ModelConfig& mc,
                                  const std::vector<synth::QAItem>& items, const model::Vocab& vocab,
                                  const model::GraphContext& graph) {
  std::vector<kg::EntityId> out;
  out.reserve(items.size());
  for (const auto& q : items) {
    num::Tape t;
    const auto r = model::forward(t, ps, mc, synth::qa_sequence(q, vocab), graph);
    const auto row = r.answer_log_scores.value().row(0);
    out.push_back(static_cast<kg::EntityId>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return out;
}

Metrics evaluate_qa(num::ParamSet& ps, const model::ModelConfig& mc, const std::vector<synth::QAItem>& items,
                    const model::Vocab& vocab, const model::GraphContext& graph) {
  return score_predictions(items, predict(ps, mc, items, vocab, graph));
}

nlohmann::json to_json(const PathReport& r) {
  nlohmann::json steps = nlohmann::json::array();
  for (std::size_t t = 0; t < r.ranking.size(); ++t) {
    nlohmann::json ranked = nlohmann::json::array();
    for (const auto& x : r.ranking[t]) ranked.push_back({{"relation", x.name}, {"mean_probability", x.mean_probability}});
    steps.push_back({{"step", t + 1}, {"ranking", ranked}, {"edgeless_mass", r.edgeless_mass[t]}});
  }
  return {{"relation", r.relation}, {"probes", r.probes}, {"steps", steps}, {"path", r.path}};
}

PathReport rules_from_traces(std::string_view relation, const std::vector<model::ReasoningTrace>& traces,
                             const kg::KnowledgeGraph& graph) {
  if (traces.empty()) throw InputError("extract_rules: empty probe set for '" + std::string(relation) + "'");
  PathReport rep;
  rep.relation = relation;
  rep.probes = traces.size();
  const std::size_t steps = traces[0].steps();
  const std::size_t nr = graph.num_relations();
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<double> mean(nr, 0.0);
    for (const auto& tr : traces) {
      if (tr.steps() != steps || tr.gamma[t].cols() != nr) throw ShapeError("extract_rules: trace shape mismatch");
      const auto g = tr.gamma[t].row(0);
      for (std::size_t r = 0; r < nr; ++r) mean[r] += g[r];
    }
    std::vector<RankedRelation> ranked;
    double dropped = 0.0;
    for (std::size_t r = 0; r < nr; ++r) {
      mean[r] /= double(traces.size());
      const auto id = static_cast<kg::RelationId>(r);
      if (graph.relation_edge_count(id) == 0) {
        dropped += mean[r];
      } else {
        ranked.push_back({id, graph.relation_name(id), mean[r]});
      }
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const RankedRelation& a, const RankedRelation& b) { return a.mean_probability > b.mean_probability; });
    rep.path.push_back(ranked.empty() ? std::string() : ranked.front().name);
    rep.ranking.push_back(std::move(ranked));
    rep.edgeless_mass.push_back(dropped);
  }
  return rep;
}

PathReport extract_rules(num::ParamSet& ps, const model::ModelConfig& mc, std::string_view relation,
                         const std::vector<synth::QAItem>& probes, const model::Vocab& vocab,
                         const model::GraphContext& graph) {
  std::vector<model::ReasoningTrace> traces;
  for (const auto& q : probes) {
    num::Tape t;
    traces.push_back(model::forward(t, ps, mc, synth::qa_sequence(q, vocab), graph).trace());
  }
  return rules_from_traces(relation, traces, *graph.kg);
}

GradCheckBatch sample_gradcheck_batch(const synth::Dataset& data, const TrainConfig& config, std::size_t passages,
                                      std::size_t questions) {
  GradCheckBatch b;
  std::mt19937_64 rng(config.seed + 17);
  for (std::size_t i = 0; i < passages && !data.passages.empty(); ++i) {
    const auto& p = data.passages[rng() % data.passages.size()];
    b.passages.push_back(obj::mask_passage(p, config.mask, rng));
  }
  for (std::size_t i = 0; i < questions && !data.qa.empty(); ++i) {
    const auto& q = data.qa[rng() % data.qa.size()];
    b.questions.emplace_back(synth::qa_sequence(q, data.vocab), q.answer);
  }
  return b;
}

num::GradCheckResult grad_check(num::ParamSet& ps, const model::ModelConfig& mc, const GradCheckBatch& batch,
                                const model::GraphContext& graph, double le, double lr,
                                const num::GradCheckOptions& opts) {
  const std::size_t n = batch.passages.size() + batch.questions.size();
  if (n == 0) throw InputError("grad_check: empty batch");
  auto loss = [&](num::Tape& t) {
    std::vector<num::Var> terms;
    for (const auto& mp : batch.passages) terms.push_back(passage_loss(t, ps, mc, mp, graph, le, lr).total);
    for (const auto& [seq, a] : batch.questions) terms.push_back(question_loss(t, ps, mc, seq, a, graph, le, lr).total);
    return num::scale(num::add_n(t, terms), 1.0 / double(n));
  };
  return num::check_gradients(ps, loss, opts);
}

nlohmann::json checkpoint_meta(const TrainConfig& config, const TrainResult& result) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& r : result.curve) curve.push_back({r.step, r.total, r.ssm, r.ent, r.rel, r.qa});
  return {{"format", "oreo-model"}, {"model", result.model}, {"train", config}, {"loss_curve", curve}};
}

void save_trained(const std::filesystem::path& path, const TrainConfig& config, const TrainResult& result) {
  num::save_checkpoint(path, result.params, checkpoint_meta(config, result));
}

}  // namespace oreo::train
