// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.
//
//   acceptance [--config <train.json>] [--work <dir>] [--only 1,2,...]

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "oreo/crw/walk.hpp"
#include "oreo/numerics/checkpoint.hpp"
#include "oreo/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace oreo;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double secs(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << x;
  return s.str();
}

std::vector<std::string> rel_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t r = 0; r < n; ++r) out.push_back("r" + std::to_string(r));
  return out;
}

kg::KnowledgeGraph random_graph(std::mt19937_64& rng, std::size_t max_entities, std::size_t max_rel) {
  const std::size_t n = 2 + rng() % (max_entities - 1), r = 1 + rng() % max_rel, m = rng() % (4 * n + 1);
  std::vector<kg::Triple> t;
  for (std::size_t k = 0; k < m; ++k) {
    t.push_back({kg::EntityId(rng() % n), kg::RelationId(rng() % r), kg::EntityId(rng() % n)});
  }
  return kg::KnowledgeGraph(n, rel_names(r), t);
}

std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n, double zero_prob) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) {
    x = u(rng) < zero_prob ? 0.0 : u(rng) + 1e-3;
    s += x;
  }
  if (s == 0.0) v[0] = s = 1.0;
  for (auto& x : v) x /= s;
  return v;
}

// 1. Sparse transition against the dense oracle.
Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed + 7000);
    const auto g = random_graph(rng, 50, 8);
    crw::RelationImportance w;
    std::normal_distribution<double> nd(0.0, 0.7);
    for (std::size_t r = 0; r < g.num_relations(); ++r) w.log_weights.push_back(nd(rng));
    const auto gamma = random_simplex(rng, g.num_relations(), 0.3);
    const auto pi = random_simplex(rng, g.num_entities(), 0.2);
    std::vector<kg::EntityId> all(g.num_entities());
    std::iota(all.begin(), all.end(), 0u);
    const auto sub = kg::k_hop_subgraph(all, 1, g);
    const auto s = crw::crw_transition({pi}, {gamma}, sub, crw::DegreeWeights::from_graph(g), w);
    const auto d = crw::dense_transition_oracle({pi}, {gamma}, g, w);
    for (std::size_t i = 0; i < sub.size(); ++i) {
      worst = std::max(worst, std::abs(s.probs[i] - d.probs[sub.entities[i]]));
    }
  }
  const double t = secs(t0);
  return {worst < 1e-10 && t < 10.0, "max |sparse - dense| = " + fmt(worst) + " over 100 instances, " + fmt(t) + " s"};
}

const synth::Dataset& toy_data() {
  static const synth::Dataset d = [] {
    auto s = synth::WorldSpec::default_world();
    s.types = {{"person", 14}, {"city", 7}, {"country", 3}, {"organization", 4}, {"field", 3}};
    s.passages = 60;
    return synth::make_dataset(s);
  }();
  return d;
}

// 2. Every pi and gamma in a forward pass is a distribution.
Outcome distribution_invariants() {
  const auto& d = toy_data();
  double worst_sum = 0.0, most_negative = 0.0;
  std::size_t rows = 0;
  std::mt19937_64 rng(2);
  for (std::size_t pass = 0; pass < 1000; ++pass) {
    model::ModelConfig mc{.layers = 0, .depth = 1 + rng() % 3, .spacing = 1 + rng() % 2, .d = 8, .heads = 2,
                          .ff = 16, .d_e = 4, .hops = 0, .max_len = 96, .vocab_size = d.vocab.size(),
                          .num_entities = d.kg.num_entities(), .num_relations = d.kg.num_relations()};
    mc.layers = mc.depth * mc.spacing + rng() % 2;
    mc.hops = mc.depth + rng() % 2;
    num::ParamSet ps;
    model::init_params(ps, mc, rng());
    // Memories drawn wider than at init so the distributions are far from uniform.
    for (const char* name : {"K_rel", "V_ent", "w_rel_log"}) {
      for (double& x : ps.get(name).value.data()) x *= 1.0 + double(rng() % 8);
    }
    model::InstrumentedSequence seq;
    if (rng() % 2) {
      const auto& q = d.qa[rng() % d.qa.size()];
      seq = synth::qa_sequence(q, d.vocab);
    } else {
      obj::MaskPolicy policy;
      seq = obj::mask_passage(d.passages[rng() % d.passages.size()], policy, rng).seq;
    }
    num::Tape t;
    const auto r = model::forward(t, ps, mc, seq, model::GraphContext(d.kg));
    auto scan = [&](const num::Tensor& m) {
      for (std::size_t i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (double x : m.row(i)) {
          s += x;
          most_negative = std::min(most_negative, x);
        }
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
        ++rows;
      }
    };
    for (const auto& p : r.pi) scan(p.value());
    for (const auto& g : r.gamma) scan(g.value());
  }
  return {worst_sum <= 1e-9 && most_negative >= 0.0 && rows > 0,
          "1000 passes, " + std::to_string(rows) + " rows, max |sum - 1| = " + fmt(worst_sum) +
              ", min entry = " + fmt(most_negative)};
}

// 3. Finite differences on the full model with all three losses.
Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  const auto& d = toy_data();
  train::TrainConfig c;
  c.model = {.layers = 2, .depth = 2, .spacing = 1, .d = 8, .heads = 2, .ff = 16, .d_e = 4, .hops = 2,
             .max_len = 96, .vocab_size = 0, .num_entities = 0, .num_relations = 0};
  const auto mc = train::bind_model_config(c.model, d);
  num::ParamSet ps;
  model::init_params(ps, mc, 11);
  const model::GraphContext graph(d.kg);
  // A passage and a question whose entity and relation terms are both live.
  train::GradCheckBatch batch;
  std::mt19937_64 rng(3);
  for (std::size_t tries = 0; tries < 200 && batch.passages.empty(); ++tries) {
    auto mp = obj::mask_passage(d.passages[rng() % d.passages.size()], c.mask, rng);
    num::Tape t;
    const auto l = train::passage_loss(t, ps, mc, mp, graph, 1.0, 1.0);
    if (l.ent > 0 && l.rel > 0 && l.ssm > 0) batch.passages.push_back(mp);
  }
  for (const auto& q : d.qa) {
    if (q.hops != 2) continue;
    batch.questions.emplace_back(synth::qa_sequence(q, d.vocab), q.answer);
    break;
  }
  if (batch.passages.empty() || batch.questions.empty()) return {false, "could not assemble a batch with every loss active"};
  const auto r = train::grad_check(ps, mc, batch, graph, 1.0, 1.0,
                                   {.step = 1e-5, .coords_per_param = 200, .floor = 1e-6, .seed = 5});
  const double t = secs(t0);
  return {r.max_rel_error < 1e-4 && t < 300.0,
          "max rel error " + fmt(r.max_rel_error) + " over " + std::to_string(r.checked) + " coordinates (worst " +
              r.worst.param + "), " + fmt(t) + " s"};
}

// 4. T = 0 is the plain encoder.
Outcome degenerate_depth() {
  const auto& d = toy_data();
  model::ModelConfig mc{.layers = 3, .depth = 0, .spacing = 1, .d = 16, .heads = 2, .ff = 32, .d_e = 4, .hops = 2,
                        .max_len = 96, .vocab_size = d.vocab.size(), .num_entities = d.kg.num_entities(),
                        .num_relations = d.kg.num_relations()};
  num::ParamSet ps;
  model::init_params(ps, mc, 4);
  std::size_t identical = 0, total = 0;
  for (std::size_t i = 0; i < d.passages.size(); ++i) {
    const auto seq = model::instrument(d.passages[i]);
    num::Tape t1, t2;
    const auto a = model::forward(t1, ps, mc, seq, model::GraphContext(d.kg)).hidden.value();
    const auto b = model::encode_plain(t2, ps, mc, seq.ids).value();
    ++total;
    identical += a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), a.size() * sizeof(double)) == 0;
  }
  return {identical == total, std::to_string(identical) + "/" + std::to_string(total) + " sequences bit-identical"};
}

std::vector<std::set<kg::RelationId>> enumerate_paths(const kg::KnowledgeGraph& g, kg::EntityId start,
                                                      const std::set<kg::EntityId>& masked, std::size_t depth) {
  std::vector<std::set<kg::RelationId>> out(depth);
  std::vector<kg::RelationId> path;
  std::function<void(kg::EntityId)> dfs = [&](kg::EntityId u) {
    if (!path.empty() && masked.contains(u)) {
      for (std::size_t t = 0; t < path.size(); ++t) out[t].insert(path[t]);
    }
    if (path.size() == depth) return;
    for (const auto& e : g.out_edges(u)) {
      path.push_back(e.rel);
      dfs(e.tgt);
      path.pop_back();
    }
  };
  dfs(start);
  return out;
}

// 5. Dependency graph against exhaustive path enumeration.
Outcome dependency_oracle() {
  std::size_t agree = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed + 500);
    const auto g = random_graph(rng, 30, 6);
    std::vector<kg::EntityId> context, masked;
    for (kg::EntityId e = 0; e < g.num_entities(); ++e) {
      const auto u = rng() % 4;
      if (u == 0) context.push_back(e);
      if (u == 1) masked.push_back(e);
    }
    const std::size_t depth = 1 + seed % 3;
    const auto dg = obj::build_dependency_graph(g, context, masked, depth);
    const std::set<kg::EntityId> mset(masked.begin(), masked.end());
    bool ok = dg.sets.size() == context.size();
    for (std::size_t i = 0; ok && i < context.size(); ++i) ok = dg.sets[i] == enumerate_paths(g, context[i], mset, depth);
    agree += ok;
    ++total;
  }
  return {agree == total, std::to_string(agree) + "/" + std::to_string(total) + " graphs with exact set equality"};
}

// Trained models on the default world, each trained once and shared.
struct Lab {
  train::TrainConfig base;
  synth::Dataset data;
  std::vector<synth::QAItem> held_out, held_out_1hop;
  std::map<std::string, train::TrainResult> runs;
  std::map<std::string, double> seconds;

  train::TrainResult& run(const std::string& key, const train::TrainConfig& c) {
    auto it = runs.find(key);
    if (it != runs.end()) return it->second;
    std::cerr << "  training " << key << " (" << c.steps << " steps)" << std::endl;
    const auto t0 = Clock::now();
    auto r = train::train(c, data);
    seconds[key] = secs(t0);
    std::cerr << "  done " << key << " in " << fmt(seconds[key]) << " s, final loss " << r.curve.back().total
              << std::endl;
    return runs.emplace(key, std::move(r)).first->second;
  }
  train::TrainResult& depth(std::size_t t) {
    auto c = base;
    c.model.depth = t;
    return run("T=" + std::to_string(t) + " seed=" + std::to_string(c.seed), c);
  }
  double hits(train::TrainResult& r, const std::vector<synth::QAItem>& items, const kg::KnowledgeGraph& g) {
    return train::evaluate_qa(r.params, r.model, items, data.vocab, model::GraphContext(g)).hits1();
  }
  std::vector<synth::QAItem> questions_for(const std::string& relation) const {
    std::vector<synth::QAItem> out;
    for (const auto& q : data.qa) {
      if (q.relation == relation) out.push_back(q);
    }
    return out;
  }
};

// 6. Held-out 1-hop accuracy with and without walks.
Outcome desk_learning(Lab& lab) {
  auto& t2 = lab.depth(2);
  auto& t0 = lab.depth(0);
  const double h2 = lab.hits(t2, lab.held_out_1hop, lab.data.kg), h0 = lab.hits(t0, lab.held_out_1hop, lab.data.kg);
  const double t = lab.seconds["T=2 seed=" + std::to_string(lab.base.seed)];
  return {h2 >= 0.85 && h2 - h0 >= 0.15 && t < 1800.0,
          "held-out 1-hop Hits@1 T=2 " + fmt(h2) + ", T=0 " + fmt(h0) + ", gap " + fmt(h2 - h0) + " (" +
              std::to_string(lab.held_out_1hop.size()) + " items); T=2 training " + fmt(t) + " s"};
}

// 7. Dropping a composed relation hurts the 2-step model less.
Outcome edge_recovery(Lab& lab) {
  auto& t2 = lab.depth(2);
  auto& t1 = lab.depth(1);
  bool all = !lab.data.spec.rules.empty();
  std::string detail;
  for (const auto& rule : lab.data.spec.rules) {
    const auto qs = lab.questions_for(rule.relation);
    const auto cut = synth::remove_relation_edges(lab.data.kg, rule.relation);
    const double d2 = lab.hits(t2, qs, lab.data.kg) - lab.hits(t2, qs, cut);
    const double d1 = lab.hits(t1, qs, lab.data.kg) - lab.hits(t1, qs, cut);
    all = all && !qs.empty() && d1 - d2 >= 0.25;
    detail += rule.relation + ": drop T=2 " + fmt(d2) + ", T=1 " + fmt(d1) + ", margin " + fmt(d1 - d2) + " (" +
              std::to_string(qs.size()) + " items); ";
  }
  return {all, detail};
}

// 8. The planted composition shows up as the per-step argmax.
Outcome rule_extraction(Lab& lab) {
  auto& t2 = lab.depth(2);
  std::size_t found = 0;
  std::string detail;
  for (const auto& rule : lab.data.spec.rules) {
    const auto cut = synth::remove_relation_edges(lab.data.kg, rule.relation);
    const auto rep = train::extract_rules(t2.params, t2.model, rule.relation, lab.questions_for(rule.relation),
                                          lab.data.vocab, model::GraphContext(cut));
    const bool ok = rep.path == std::vector<std::string>{rule.first, rule.second};
    found += ok;
    detail += rule.relation + " -> (" + rep.path[0] + ", " + rep.path[1] + ")" + (ok ? " planted; " : " expected (" +
              rule.first + ", " + rule.second + "); ");
  }
  return {found >= 1, std::to_string(found) + "/" + std::to_string(lab.data.spec.rules.size()) + " rules: " + detail};
}

// 9. Auxiliary losses help, seed by seed.
Outcome ablation(Lab& lab) {
  std::size_t wins = 0;
  std::string detail;
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto full = lab.base;
    full.seed = lab.base.seed + s;
    auto abl = full;
    abl.lambda_ent = abl.lambda_rel = 0.0;
    const double hf = lab.hits(lab.run("T=2 seed=" + std::to_string(full.seed), full), lab.held_out, lab.data.kg);
    const double ha = lab.hits(lab.run("ablated seed=" + std::to_string(full.seed), abl), lab.held_out, lab.data.kg);
    wins += hf > ha;
    detail += fmt(hf, 3) + " vs " + fmt(ha, 3) + "; ";
    // Ablated models are not reused; release them.
    lab.runs.erase("ablated seed=" + std::to_string(full.seed));
  }
  return {wins >= 4, std::to_string(wins) + "/5 seeds full > ablated on held-out Hits@1 (" + detail + ")"};
}

// 10. Checkpoint round trip and run-to-run determinism.
Outcome determinism(Lab& lab, const fs::path& work) {
  auto& t2 = lab.depth(2);
  const auto path = work / "t2.ckpt";
  train::save_trained(path, lab.base, t2);
  auto loaded = num::load_checkpoint(path);
  const auto mc = loaded.meta.at("model").get<model::ModelConfig>();
  const model::GraphContext graph(lab.data.kg);
  const auto before = train::predict(t2.params, t2.model, lab.held_out, lab.data.vocab, graph);
  const auto after = train::predict(loaded.params, mc, lab.held_out, lab.data.vocab, graph);
  const auto m1 = train::to_json(train::score_predictions(lab.held_out, before));
  const auto m2 = train::to_json(train::score_predictions(lab.held_out, after));
  // Logits too, not just the argmax.
  bool scores_equal = true;
  for (std::size_t i = 0; i < 20 && i < lab.held_out.size(); ++i) {
    const auto seq = synth::qa_sequence(lab.held_out[i], lab.data.vocab);
    num::Tape a, b;
    const auto x = model::forward(a, t2.params, t2.model, seq, graph).answer_log_scores.value();
    const auto y = model::forward(b, loaded.params, mc, seq, graph).answer_log_scores.value();
    scores_equal = scores_equal && std::memcmp(x.ptr(), y.ptr(), x.size() * sizeof(double)) == 0;
  }
  auto c = lab.base;
  c.model.depth = 2;
  std::cerr << "  training T=2 again for the determinism check" << std::endl;
  const auto again = train::train(c, lab.data);
  const bool curves = again.curve == t2.curve;
  return {m1 == m2 && scores_equal && curves,
          std::string("metrics after reload ") + (m1 == m2 ? "identical" : "differ") + ", answer scores " +
              (scores_equal ? "bit-identical" : "differ") + ", repeated run loss curve " +
              (curves ? "identical" : "differs") + " over " + std::to_string(t2.curve.size()) + " steps"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string config = OREO_DEFAULT_CONFIG;
  std::string work = (fs::temp_directory_path() / "oreo_acceptance").string();
  std::vector<int> only;
  app.add_option("--config", config, "Train config for the learning criteria");
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::set<int> chosen(only.begin(), only.end());
  auto want = [&](int k) { return chosen.empty() || chosen.contains(k); };

  Lab lab;
  const int trained[] = {6, 7, 8, 9, 10};
  const bool need_lab = std::any_of(std::begin(trained), std::end(trained), want);
  if (need_lab) {
    lab.base = train::load_train_config(config);
    fs::remove_all(work);
    synth::write_world(fs::path(work) / "world", synth::WorldSpec::default_world());
    lab.data = synth::load_dataset(fs::path(work) / "world");
    for (const auto& q : lab.data.qa) {
      if (!q.held_out) continue;
      lab.held_out.push_back(q);
      if (q.hops == 1) lab.held_out_1hop.push_back(q);
    }
  }

  const std::vector<std::pair<int, std::pair<std::string, std::function<Outcome()>>>> criteria{
      {1, {"oracle equivalence", oracle_equivalence}},
      {2, {"distribution invariants", distribution_invariants}},
      {3, {"gradient fidelity", gradient_fidelity}},
      {4, {"degenerate-depth equivalence", degenerate_depth}},
      {5, {"dependency-graph oracle", dependency_oracle}},
      {6, {"desk-scale learning", [&] { return desk_learning(lab); }}},
      {7, {"missing-edge recovery", [&] { return edge_recovery(lab); }}},
      {8, {"rule extraction", [&] { return rule_extraction(lab); }}},
      {9, {"ablation direction", [&] { return ablation(lab); }}},
      {10, {"determinism and serialization", [&] { return determinism(lab, work); }}},
  };

  int failed = 0;
  for (const auto& [k, named] : criteria) {
    if (!want(k)) continue;
    Outcome o;
    try {
      o = named.second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << k << " (" << named.first << "): " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
