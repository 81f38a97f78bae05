#include "oreo/crw/walk.hpp"

#include <cmath>

#include "oreo/error.hpp"

namespace oreo::crw {

std::vector<double> RelationImportance::weights() const {
  std::vector<double> w(log_weights.size());
  for (std::size_t r = 0; r < w.size(); ++r) w[r] = std::exp(log_weights[r]);
  return w;
}

DegreeWeights DegreeWeights::from_graph(const kg::KnowledgeGraph& kg) {
  DegreeWeights d;
  d.w_deg.resize(kg.num_entities());
  for (std::size_t e = 0; e < kg.num_entities(); ++e) {
    const std::size_t deg = kg.out_degree(static_cast<kg::EntityId>(e));
    d.w_deg[e] = deg == 0 ? 0.0 : 1.0 / static_cast<double>(deg);
  }
  return d;
}

num::Tensor DegreeWeights::local(const kg::SubgraphIndex& sub) const {
  num::Tensor out(num::Shape{sub.size()});
  for (std::size_t i = 0; i < sub.size(); ++i) {
    if (sub.entities[i] >= w_deg.size()) throw IndexError("degree weights: entity out of range");
    out[i] = w_deg[sub.entities[i]];
  }
  return out;
}

num::Var transition(num::Var pi, num::Var gamma, num::Var weights, const kg::SubgraphIndex& sub,
                    const DegreeWeights& wdeg) {
  using namespace num;
  const Tensor& pv = pi.value();
  const Tensor& gv = gamma.value();
  if (pv.rank() != 2 || gv.rank() != 2 || pv.dim(0) != gv.dim(0)) {
    throw ShapeError("crw: pi and gamma must be [M x |I|] and [M x |R|] with equal M");
  }
  if (pv.dim(1) != sub.size()) {
    throw ShapeError("crw: pi has " + std::to_string(pv.dim(1)) + " columns for a subgraph of " +
                     std::to_string(sub.size()) + " entities");
  }
  if (weights.value().size() != gv.dim(1)) throw ShapeError("crw: relation weight count mismatch");
  for (std::size_t r : sub.i_rel) {
    if (r >= gv.dim(1)) throw ShapeError("crw: subgraph relation outside gamma");
  }
  Tape& tape = pi.tape();
  Var src_mass = gather(mul_cols(pi, tape.constant(wdeg.local(sub))), sub.i_src, 1);
  Var rel_mass = gather(mul_cols(gamma, weights), sub.i_rel, 1);
  // Scattering first and normalising per mention afterwards equals
  // normalising the edge vector then scattering: scatter preserves the sum.
  Var mass = scatter_add(mul(src_mass, rel_mass), sub.i_tgt, sub.size(), 1);
  return l1_normalize(mass, 1, pi);
}

namespace {

num::Tensor stack(const std::vector<std::vector<double>>& rows, std::size_t width, const char* what) {
  num::Tensor t(num::Shape{rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != width) {
      throw ShapeError(std::string("crw: ") + what + " length " + std::to_string(rows[r].size()) +
                       ", expected " + std::to_string(width));
    }
    std::copy(rows[r].begin(), rows[r].end(), t.row(r).begin());
  }
  return t;
}

}  // namespace

std::vector<EntityDistribution> batched_transition(const std::vector<EntityDistribution>& pis,
                                                   const std::vector<RelationDistribution>& gammas,
                                                   const kg::SubgraphIndex& sub,
                                                   const DegreeWeights& wdeg,
                                                   const RelationImportance& w) {
  if (pis.size() != gammas.size()) throw ShapeError("crw: one gamma per pi required");
  if (pis.empty()) return {};
  std::vector<std::vector<double>> prow, grow;
  for (const auto& p : pis) prow.push_back(p.probs);
  for (const auto& g : gammas) grow.push_back(g.probs);
  num::Tape tape;
  auto out = transition(tape.constant(stack(prow, sub.size(), "pi")),
                        tape.constant(stack(grow, w.log_weights.size(), "gamma")),
                        tape.constant(num::Tensor::vector(w.weights())), sub, wdeg)
                 .value();
  std::vector<EntityDistribution> result(pis.size());
  for (std::size_t m = 0; m < pis.size(); ++m) {
    result[m].probs.assign(out.row(m).begin(), out.row(m).end());
  }
  return result;
}

EntityDistribution crw_transition(const EntityDistribution& pi, const RelationDistribution& gamma,
                                  const kg::SubgraphIndex& sub, const DegreeWeights& wdeg,
                                  const RelationImportance& w) {
  return batched_transition({pi}, {gamma}, sub, wdeg, w).front();
}

EntityDistribution dense_transition_oracle(const EntityDistribution& pi,
                                           const RelationDistribution& gamma,
                                           const kg::KnowledgeGraph& kg,
                                           const RelationImportance& w, DenseNormalization mode) {
  const std::size_t n = kg.num_entities();
  if (n > kDenseOracleMaxEntities) {
    throw CapacityError("dense oracle: " + std::to_string(n) + " entities exceeds " +
                        std::to_string(kDenseOracleMaxEntities));
  }
  if (pi.probs.size() != n) throw ShapeError("dense oracle: pi must cover every entity");
  if (gamma.probs.size() != kg.num_relations() || w.log_weights.size() != kg.num_relations()) {
    throw ShapeError("dense oracle: gamma / weights must cover every relation");
  }
  const auto weights = w.weights();
  std::vector<double> adj(n * n, 0.0);
  for (const kg::Triple& t : kg.edges()) {
    adj[t.src * n + t.tgt] += weights[t.rel] * gamma.probs[t.rel];
  }
  const auto deg = DegreeWeights::from_graph(kg).w_deg;
  std::vector<double> mass(n, 0.0);
  if (mode == DenseNormalization::kGlobal) {
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t t = 0; t < n; ++t) mass[t] += pi.probs[s] * deg[s] * adj[s * n + t];
    }
  } else {
    for (std::size_t s = 0; s < n; ++s) {
      double row = 0.0;
      for (std::size_t t = 0; t < n; ++t) row += adj[s * n + t];
      if (row == 0.0) continue;
      for (std::size_t t = 0; t < n; ++t) mass[t] += pi.probs[s] * adj[s * n + t] / row;
    }
  }
  double total = 0.0;
  for (double m : mass) total += m;
  if (total == 0.0) return pi;
  EntityDistribution out;
  out.probs.resize(n);
  for (std::size_t t = 0; t < n; ++t) out.probs[t] = mass[t] / total;
  return out;
}

}  // namespace oreo::crw
