#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "oreo/error.hpp"
#include "oreo/train/trainer.hpp"

using namespace oreo;
using namespace oreo::train;

namespace {

const synth::Dataset& tiny() {
  static const synth::Dataset d = [] {
    auto s = synth::WorldSpec::default_world();
    s.types = {{"person", 12}, {"city", 6}, {"country", 3}, {"organization", 4}, {"field", 3}};
    s.passages = 40;
    return synth::make_dataset(s);
  }();
  return d;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.model = {.layers = 2, .depth = 2, .spacing = 1, .d = 16, .heads = 2, .ff = 32, .d_e = 8,
             .hops = 2, .max_len = 64, .vocab_size = 0, .num_entities = 0, .num_relations = 0};
  c.batch_size = 4;
  c.steps = 3;
  c.seed = 5;
  return c;
}

bool same_values(const num::ParamSet& a, const num::ParamSet& b) {
  if (a.size() != b.size()) return false;
  for (const auto& p : a.all()) {
    const auto* q = b.find(p.name);
    if (!q || q->value.shape() != p.value.shape()) return false;
    if (std::memcmp(p.value.ptr(), q->value.ptr(), p.value.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("adam matches a hand-written update") {
  num::ParamSet ps;
  ps.add("p", num::Tensor({2}, {1.0, 2.0}));
  AdamConfig cfg{.lr = 0.1, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8};
  Adam adam(cfg);
  const double g1[2] = {0.5, -1.0}, g2[2] = {-0.25, 3.0};
  double x[2] = {1.0, 2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 2; ++t) {
    const double* g = t == 1 ? g1 : g2;
    auto& p = ps.get("p");
    for (int i = 0; i < 2; ++i) {
      p.grad[i] = g[i];
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      x[i] -= 0.1 * (m[i] / (1 - std::pow(0.9, t))) / (std::sqrt(v[i] / (1 - std::pow(0.999, t))) + 1e-8);
    }
    adam.step(ps);
    for (int i = 0; i < 2; ++i) CHECK(p.value[i] == doctest::Approx(x[i]).epsilon(1e-14));
  }
  CHECK(adam.steps_taken() == 2);

  ps.get("p").trainable = false;
  const double before = ps.get("p").value[0];
  adam.step(ps);
  CHECK(ps.get("p").value[0] == before);
}

TEST_CASE("train: zero steps, determinism, config") {
  const auto& d = tiny();
  auto c = tiny_config();
  c.steps = 0;
  const auto r0 = train::train(c, d);
  num::ParamSet init;
  model::init_params(init, bind_model_config(c.model, d), c.seed);
  CHECK(same_values(r0.params, init));
  CHECK(r0.curve.empty());

  c.steps = 3;
  const auto a = train::train(c, d), b = train::train(c, d);
  CHECK(same_values(a.params, b.params));
  CHECK(a.curve == b.curve);
  CHECK_FALSE(same_values(a.params, init));
  for (const auto& r : a.curve) CHECK(std::isfinite(r.total));

  auto c2 = c;
  c2.seed = 6;
  CHECK_FALSE(same_values(train::train(c2, d).params, a.params));

  const nlohmann::json j = c;
  CHECK(nlohmann::json(j.get<TrainConfig>()) == j);
  auto bad = j;
  bad["bogus"] = 1;
  CHECK_THROWS_AS(bad.get<TrainConfig>(), ConfigError);
  c2.adam.lr = 0;
  CHECK_THROWS_AS(c2.validate(), ConfigError);
  c2 = c;
  c2.qa_fraction = 1.5;
  CHECK_THROWS_AS(c2.validate(), ConfigError);
}

TEST_CASE("one step with no auxiliary losses follows the SSM gradient") {
  const auto& d = tiny();
  auto c = tiny_config();
  c.steps = 1;
  c.batch_size = 1;
  c.lambda_ent = c.lambda_rel = 0;
  c.qa_fraction = 0;
  c.adam.lr = 1e-2;
  const auto mc = bind_model_config(c.model, d);

  BatchSampler sampler(d, c);
  const auto slot = sampler.next();
  REQUIRE(slot.passage);
  num::ParamSet ps;
  model::init_params(ps, mc, c.seed);
  const model::GraphContext graph(d.kg);
  {
    num::Tape t;
    const auto r = model::forward(t, ps, mc, slot.passage->seq, graph);
    t.backward(obj::loss_ssm(t, r.token_logits, slot.passage->targets));
  }
  const auto out = train::train(c, d);
  std::size_t moved = 0, still = 0;
  for (const auto& p : ps.all()) {
    const auto& q = out.params.get(p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      // First Adam step: m/c1 = g, v/c2 = g^2.
      const double expect = p.value[i] - c.adam.lr * g / (std::abs(g) + c.adam.eps);
      if (g == 0.0) {
        ++still;
        CHECK(q.value[i] == p.value[i]);
      } else {
        ++moved;
        CHECK(q.value[i] == doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }
  CHECK(moved > 0);
  CHECK(still > 0);  // KIL and entity memories get nothing from token cross-entropy
}

TEST_CASE("non-finite loss aborts with a dump") {
  const auto& d = tiny();
  auto c = tiny_config();
  const auto mc = bind_model_config(c.model, d);
  num::ParamSet ps;
  model::init_params(ps, mc, c.seed);
  ps.get("mlm.b").value[0] = std::nan("");
  const auto dump = std::filesystem::temp_directory_path() / "oreo_nan_batch.json";
  std::filesystem::remove(dump);
  CHECK_THROWS_AS(train_from(std::move(ps), c, d, nullptr, dump), NumericalError);
  CHECK(std::filesystem::exists(dump));
  std::filesystem::remove(dump);
}

TEST_CASE("frozen relation weights stay put") {
  const auto& d = tiny();
  auto c = tiny_config();
  c.freeze_relation_weights = true;
  const auto r = train::train(c, d);
  for (double x : r.params.get("w_rel_log").value.data()) CHECK(x == 0.0);
}

TEST_CASE("qa metrics") {
  const auto d = synth::make_dataset(synth::WorldSpec::default_world());
  REQUIRE(d.kg.num_entities() == 200);
  std::vector<kg::EntityId> gold;
  for (const auto& q : d.qa) gold.push_back(q.answer);
  const auto g = score_predictions(d.qa, gold);
  CHECK(g.hits1() == 1.0);

  // Uniform guesses over 200 entities; 20 passes over the item set.
  std::mt19937_64 rng(3);
  std::vector<synth::QAItem> many;
  std::vector<kg::EntityId> guess;
  for (int rep = 0; rep < 20; ++rep) {
    for (const auto& q : d.qa) {
      many.push_back(q);
      guess.push_back(static_cast<kg::EntityId>(rng() % 200));
    }
  }
  const auto u = score_predictions(many, guess);
  CHECK(std::abs(u.hits1() - 1.0 / 200) < 0.02);

  for (const auto* m : {&g, &u}) {
    std::size_t by_rel = 0, by_hops = 0;
    for (const auto& [_, hc] : m->by_relation) by_rel += hc.second;
    for (const auto& [_, hc] : m->by_hops) by_hops += hc.second;
    CHECK(by_rel == m->count);
    CHECK(by_hops == m->count);
  }
  CHECK(g.by_hops.at(1).first == g.by_hops.at(1).second);
  CHECK_THROWS_AS(score_predictions(d.qa, {}), ShapeError);
  CHECK(to_json(g)["hits1"] == 1.0);
}

TEST_CASE("evaluation is deterministic and leaves weights alone") {
  const auto& d = tiny();
  auto c = tiny_config();
  const auto mc = bind_model_config(c.model, d);
  num::ParamSet ps;
  model::init_params(ps, mc, c.seed);
  const auto before = ps.clone();
  const model::GraphContext graph(d.kg);
  const auto a = predict(ps, mc, d.qa, d.vocab, graph);
  const auto b = predict(ps, mc, d.qa, d.vocab, graph);
  CHECK(a == b);
  CHECK(same_values(ps, before));
  CHECK(evaluate_qa(ps, mc, d.qa, d.vocab, graph).count == d.qa.size());
}

TEST_CASE("rules from traces") {
  // Relations 0..3; relation 3 has no edges.
  const kg::KnowledgeGraph g(3, {"a", "b", "c", "dead"}, {{0, 0, 1}, {1, 1, 2}, {2, 2, 0}}, {"x", "y", "z"});
  auto trace = [](std::vector<double> s1, std::vector<double> s2) {
    model::ReasoningTrace t;
    t.gamma = {num::Tensor({1, 4}, s1), num::Tensor({1, 4}, s2)};
    return t;
  };
  const auto one = rules_from_traces("c", {trace({0.7, 0.1, 0.1, 0.1}, {0.05, 0.9, 0.05, 0.0})}, g);
  CHECK(one.path == std::vector<std::string>{"a", "b"});
  CHECK(one.probes == 1);

  const auto two = rules_from_traces(
      "c", {trace({0.6, 0.2, 0.1, 0.1}, {0.1, 0.2, 0.3, 0.4}), trace({0.2, 0.4, 0.2, 0.2}, {0.5, 0.2, 0.1, 0.2})}, g);
  REQUIRE(two.ranking.size() == 2);
  CHECK(two.ranking[0][0].name == "a");
  CHECK(two.ranking[0][0].mean_probability == doctest::Approx(0.4));
  CHECK(two.ranking[0][1].mean_probability == doctest::Approx(0.3));
  CHECK(two.ranking[0][2].mean_probability == doctest::Approx(0.15));
  CHECK(two.ranking[0].size() == 3);
  CHECK(two.edgeless_mass[0] == doctest::Approx(0.15));
  // "dead" holds the most mass at step 2 but moves nothing.
  CHECK(two.edgeless_mass[1] == doctest::Approx(0.3));
  CHECK(two.path[1] == "a");
  for (std::size_t t = 0; t < 2; ++t) {
    double s = two.edgeless_mass[t];
    for (std::size_t i = 0; i < two.ranking[t].size(); ++i) {
      s += two.ranking[t][i].mean_probability;
      if (i) CHECK(two.ranking[t][i - 1].mean_probability >= two.ranking[t][i].mean_probability);
    }
    CHECK(s == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(rules_from_traces("c", {}, g), InputError);
}

TEST_CASE("gradient check: quadratic toy and an unused row") {
  num::ParamSet ps;
  ps.add("a", num::Tensor({3, 2}, {0.3, -1.2, 0.8, 2.0, -0.5, 0.1}));
  ps.add("b", num::Tensor({2}, {1.5, -0.7}));
  auto loss = [&](num::Tape& t) {
    auto a = t.param(ps.get("a")), b = t.param(ps.get("b"));
    auto row = num::gather(a, {0}, 0);
    return num::add(num::sum(num::mul(row, row)), num::sum(num::mul(b, b)));
  };
  const auto r = num::check_gradients(ps, loss, {});
  CHECK(r.max_rel_error < 1e-8);
  std::size_t unused = 0;
  for (const auto& e : r.entries) {
    if (e.param == "a" && e.coord >= 2) {
      ++unused;
      CHECK(e.analytic == 0.0);
      CHECK(std::abs(e.numeric) < 1e-12);
    }
  }
  CHECK(unused == 4);
}

TEST_CASE("gradient check: full model, all losses") {
  const auto& d = tiny();
  auto c = tiny_config();
  c.model.d = 8;
  c.model.ff = 16;
  c.model.d_e = 4;
  const auto mc = bind_model_config(c.model, d);
  num::ParamSet ps;
  model::init_params(ps, mc, c.seed);
  const auto batch = sample_gradcheck_batch(d, c, 1, 1);
  const model::GraphContext graph(d.kg);
  const auto r = grad_check(ps, mc, batch, graph, 1.0, 1.0, {.step = 1e-5, .coords_per_param = 8, .floor = 1e-6, .seed = 1});
  CHECK(r.checked > 0);
  INFO(r.worst.param, " ", r.worst.coord, " ", r.worst.analytic, " ", r.worst.numeric);
  CHECK(r.max_rel_error < 1e-4);
}
