#include "oreo/kil/kil.hpp"

#include <cmath>

#include "oreo/error.hpp"

namespace oreo::kil {

namespace {

using num::Var;

void add_mlp(num::ParamSet& ps, const std::string& prefix, std::size_t in, std::size_t out,
             std::mt19937_64& rng) {
  // Hidden width equals the output width.
  ps.add(prefix + ".w1", num::normal_tensor({in, out}, 1.0 / std::sqrt(double(in)), rng));
  ps.add(prefix + ".b1", num::Tensor({out}));
  ps.add(prefix + ".w2", num::normal_tensor({out, out}, 1.0 / std::sqrt(double(out)), rng));
  ps.add(prefix + ".b2", num::Tensor({out}));
}

void add_ln(num::ParamSet& ps, const std::string& prefix, std::size_t width) {
  ps.add(prefix + ".gain", num::Tensor({width}, 1.0));
  ps.add(prefix + ".bias", num::Tensor({width}));
}

Var mlp(num::ParamSet& ps, num::Tape& t, const std::string& prefix, Var x) {
  return num::mlp_project(x, t.param(ps.get(prefix + ".w1")), t.param(ps.get(prefix + ".b1")),
                          t.param(ps.get(prefix + ".w2")), t.param(ps.get(prefix + ".b2")));
}

Var ln(num::ParamSet& ps, num::Tape& t, const std::string& prefix, Var x) {
  return num::layer_norm(x, t.param(ps.get(prefix + ".gain")), t.param(ps.get(prefix + ".bias")));
}

void require_width(Var h, std::size_t d, const char* what) {
  if (h.value().rank() != 2 || h.value().dim(1) != d) {
    throw ShapeError(std::string(what) + ": expected [M x " + std::to_string(d) + "], got " +
                     num::shape_str(h.value().shape()));
  }
}

Var entity_logits(num::ParamSet& ps, Var h, const num::Index& entities) {
  num::Tape& t = h.tape();
  Var v_ent = t.param(ps.get("V_ent"));
  if (entities.empty()) throw ShapeError("entity_score: empty entity index");
  const std::size_t n = v_ent.value().dim(0);
  for (std::size_t e : entities) {
    if (e >= n) throw IndexError("entity_score: entity " + std::to_string(e) + " outside V_ent");
  }
  require_width(h, ps.get("e_proj.w1").value.dim(0), "entity_score");
  Var q = ln(ps, t, "e_ln", mlp(ps, t, "e_proj", h));
  return num::matmul_nt(q, num::gather(v_ent, entities, 0));
}

}  // namespace

std::string step_name(std::size_t step, const char* part) {
  return "kil" + std::to_string(step) + "." + part;
}

void init_params(num::ParamSet& ps, const KilShape& s, std::mt19937_64& rng) {
  if (s.d == 0 || s.d_e == 0 || s.num_relations == 0 || s.num_entities == 0) {
    throw ConfigError("kil: widths and vocabulary sizes must be positive");
  }
  ps.add("K_rel", num::normal_tensor({s.num_relations, s.d}, 1.0 / std::sqrt(double(s.d)), rng));
  ps.add("V_ent", num::normal_tensor({s.num_entities, s.d_e}, 1.0 / std::sqrt(double(s.d_e)), rng));
  ps.add("w_rel_log", num::Tensor({s.num_relations}));
  for (std::size_t t = 0; t < s.steps; ++t) {
    add_mlp(ps, step_name(t, "q_proj"), s.d, s.d, rng);
    add_ln(ps, step_name(t, "q_ln"), s.d);
    add_mlp(ps, step_name(t, "v_proj"), s.d_e, s.d, rng);
    add_ln(ps, step_name(t, "inject_ln"), s.d);
  }
  add_mlp(ps, "e_proj", s.d, s.d_e, rng);
  add_ln(ps, "e_ln", s.d_e);
}

Var relation_logits(num::ParamSet& ps, Var h_rel, std::size_t step) {
  num::Tape& t = h_rel.tape();
  Var k_rel = t.param(ps.get("K_rel"));
  require_width(h_rel, k_rel.value().dim(1), "relation_predict");
  Var q = ln(ps, t, step_name(step, "q_ln"), mlp(ps, t, step_name(step, "q_proj"), h_rel));
  return num::matmul_nt(q, k_rel);
}

Var relation_predict(num::ParamSet& ps, Var h_rel, std::size_t step) {
  return num::softmax(relation_logits(ps, h_rel, step), 1);
}

Var relation_log_predict(num::ParamSet& ps, Var h_rel, std::size_t step) {
  return num::log_softmax(relation_logits(ps, h_rel, step), 1);
}

Var knowledge_inject(num::ParamSet& ps, Var pi, const kg::SubgraphIndex& sub, Var h_tent,
                     std::size_t step) {
  num::Tape& t = h_tent.tape();
  if (pi.value().rank() != 2 || pi.value().dim(1) != sub.size() ||
      pi.value().dim(0) != h_tent.value().dim(0)) {
    throw ShapeError("knowledge_inject: pi " + num::shape_str(pi.value().shape()) +
                     " does not match " + std::to_string(sub.size()) + " subgraph entities");
  }
  require_width(h_tent, ps.get(step_name(step, "inject_ln.gain")).value.size(), "knowledge_inject");
  Var rows = num::gather(t.param(ps.get("V_ent")), subgraph_entities(sub), 0);
  Var v = mlp(ps, t, step_name(step, "v_proj"), num::matmul(pi, rows));
  return ln(ps, t, step_name(step, "inject_ln"), num::add(h_tent, v));
}

Var entity_score(num::ParamSet& ps, Var h_sent, const num::Index& entities) {
  return num::softmax(entity_logits(ps, h_sent, entities), 1);
}

Var entity_log_score(num::ParamSet& ps, Var h_sent, const num::Index& entities) {
  return num::log_softmax(entity_logits(ps, h_sent, entities), 1);
}

num::Index subgraph_entities(const kg::SubgraphIndex& sub) {
  return num::Index(sub.entities.begin(), sub.entities.end());
}

}  // namespace oreo::kil
