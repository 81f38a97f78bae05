#include "oreo/objectives/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "oreo/error.hpp"
#include "oreo/kil/kil.hpp"

namespace oreo::obj {

bool operator==(const MaskedPassage& a, const MaskedPassage& b) {
  auto mention_eq = [](const model::InstrumentedMention& x, const model::InstrumentedMention& y) {
    return x.entity == y.entity && x.sent == y.sent && x.span_begin == y.span_begin &&
           x.span_end == y.span_end && x.rel == y.rel && x.tent == y.tent && x.candidates == y.candidates;
  };
  return a.seq.ids == b.seq.ids && a.seq.answer_pos == b.seq.answer_pos &&
         std::equal(a.seq.mentions.begin(), a.seq.mentions.end(), b.seq.mentions.begin(),
                    b.seq.mentions.end(), mention_eq) &&
         a.mask_positions == b.mask_positions && a.targets == b.targets &&
         a.masked_entities == b.masked_entities && a.context_entities == b.context_entities;
}

MaskedPassage mask_passage(const model::TokenSequence& passage, const MaskPolicy& policy,
                           std::mt19937_64& rng) {
  if (policy.min_span == 0 || policy.min_span > policy.max_span) {
    throw ConfigError("mask policy: need 1 <= min_span <= max_span");
  }
  const std::size_t n = passage.ids.size();
  std::vector<bool> in_mention(n, false), masked(n, false);
  for (const auto& m : passage.mentions) {
    if (m.end > n || m.begin >= m.end) throw InputError("mask_passage: invalid mention span");
    for (std::size_t i = m.begin; i < m.end; ++i) in_mention[i] = true;
  }

  std::vector<kg::EntityId> distinct;
  for (const auto& m : passage.mentions) {
    if (std::find(distinct.begin(), distinct.end(), m.entity) == distinct.end()) distinct.push_back(m.entity);
  }
  std::size_t take = std::min(policy.max_masked_entities, distinct.size());
  if (distinct.size() >= 2) take = std::min(take, distinct.size() - 1);
  std::shuffle(distinct.begin(), distinct.end(), rng);
  std::vector<kg::EntityId> chosen(distinct.begin(), distinct.begin() + take);
  std::sort(chosen.begin(), chosen.end());

  model::TokenSequence kept;
  kept.ids = passage.ids;
  for (const auto& m : passage.mentions) {
    if (std::binary_search(chosen.begin(), chosen.end(), m.entity)) {
      for (std::size_t i = m.begin; i < m.end; ++i) masked[i] = true;
    } else {
      kept.mentions.push_back(m);
    }
  }

  std::vector<std::size_t> free_tokens;
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_mention[i]) free_tokens.push_back(i);
  }
  std::uniform_int_distribution<std::size_t> len_dist(policy.min_span, policy.max_span);
  for (std::size_t s = 0; s < policy.num_spans && !free_tokens.empty(); ++s) {
    std::uniform_int_distribution<std::size_t> start_dist(0, free_tokens.size() - 1);
    const std::size_t start = free_tokens[start_dist(rng)];
    const std::size_t len = len_dist(rng);
    for (std::size_t i = start; i < n && i < start + len && !in_mention[i]; ++i) masked[i] = true;
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (masked[i]) kept.ids[i] = model::Vocab::kMask;
  }
  MaskedPassage out;
  out.seq = model::instrument(kept);
  // Raw position -> instrumented position: each surviving mention adds one
  // token before its span and two after.
  std::vector<std::size_t> shift(n, 0);
  for (const auto& m : kept.mentions) {
    for (std::size_t i = m.begin; i < n; ++i) shift[i] += 1;
    for (std::size_t i = m.end; i < n; ++i) shift[i] += 2;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!masked[i]) continue;
    out.mask_positions.push_back(i + shift[i]);
    out.targets.push_back(passage.ids[i]);
  }
  out.masked_entities = chosen;
  out.context_entities = out.seq.mention_entities();
  return out;
}

nlohmann::json to_json(const MaskedPassage& mp) {
  nlohmann::json mentions = nlohmann::json::array();
  for (const auto& m : mp.seq.mentions) {
    mentions.push_back({{"entity", m.entity}, {"sent", m.sent}, {"span", {m.span_begin, m.span_end}},
                        {"rel", m.rel}, {"tent", m.tent}});
  }
  return {{"ids", mp.seq.ids},
          {"mentions", mentions},
          {"mask_positions", mp.mask_positions},
          {"targets", mp.targets},
          {"masked_entities", mp.masked_entities},
          {"context_entities", mp.context_entities}};
}

MaskedPassage masked_passage_from_json(const nlohmann::json& j) {
  try {
    MaskedPassage mp;
    mp.seq.ids = j.at("ids").get<std::vector<model::TokenId>>();
    for (const auto& m : j.at("mentions")) {
      model::InstrumentedMention im;
      im.entity = m.at("entity").get<kg::EntityId>();
      im.sent = m.at("sent").get<std::size_t>();
      im.span_begin = m.at("span").at(0).get<std::size_t>();
      im.span_end = m.at("span").at(1).get<std::size_t>();
      im.rel = m.at("rel").get<std::size_t>();
      im.tent = m.at("tent").get<std::size_t>();
      mp.seq.mentions.push_back(im);
    }
    mp.mask_positions = j.at("mask_positions").get<std::vector<std::size_t>>();
    mp.targets = j.at("targets").get<std::vector<model::TokenId>>();
    mp.masked_entities = j.at("masked_entities").get<std::vector<kg::EntityId>>();
    mp.context_entities = j.at("context_entities").get<std::vector<kg::EntityId>>();
    if (mp.mask_positions.size() != mp.targets.size()) throw ParseError("masked passage: targets misaligned");
    return mp;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("masked passage: ") + e.what());
  }
}

GroundedDependencyGraph build_dependency_graph(const kg::KnowledgeGraph& kg,
                                               const std::vector<kg::EntityId>& context,
                                               const std::vector<kg::EntityId>& masked,
                                               std::size_t depth) {
  if (depth == 0) throw ConfigError("dependency graph: depth must be at least 1");
  const std::size_t n = kg.num_entities();
  // ends[k][v]: some walk of exactly k edges from v stops at a masked entity.
  std::vector<std::vector<char>> ends(depth + 1, std::vector<char>(n, 0));
  for (auto e : masked) {
    if (e >= n) throw IndexError("dependency graph: masked entity out of range");
    ends[0][e] = 1;
  }
  for (std::size_t k = 1; k <= depth; ++k) {
    for (kg::EntityId v = 0; v < n; ++v) {
      for (const auto& oe : kg.out_edges(v)) {
        if (ends[k - 1][oe.tgt]) {
          ends[k][v] = 1;
          break;
        }
      }
    }
  }
  // finish[t][v]: a walk of 0..depth-t more edges from v ends at a masked entity.
  std::vector<std::vector<char>> finish(depth + 1, std::vector<char>(n, 0));
  for (std::size_t t = 0; t <= depth; ++t) {
    for (std::size_t k = 0; k + t <= depth; ++k) {
      for (std::size_t v = 0; v < n; ++v) finish[t][v] |= ends[k][v];
    }
  }

  GroundedDependencyGraph dg;
  for (auto c : context) {
    if (c >= n) throw IndexError("dependency graph: context entity out of range");
    std::vector<std::set<kg::RelationId>> steps(depth);
    std::vector<char> frontier(n, 0);
    frontier[c] = 1;
    for (std::size_t t = 1; t <= depth; ++t) {
      std::vector<char> next(n, 0);
      for (kg::EntityId u = 0; u < n; ++u) {
        if (!frontier[u]) continue;
        for (const auto& oe : kg.out_edges(u)) {
          next[oe.tgt] = 1;
          if (finish[t][oe.tgt]) steps[t - 1].insert(oe.rel);
        }
      }
      frontier.swap(next);
    }
    dg.sets.push_back(std::move(steps));
  }
  return dg;
}

std::size_t RelationLabels::num_defined() const {
  std::size_t c = 0;
  for (const auto& step : defined) c += std::count(step.begin(), step.end(), true);
  return c;
}

RelationLabels relation_labels(const GroundedDependencyGraph& dg, std::size_t num_relations) {
  RelationLabels out;
  const std::size_t m = dg.sets.size();
  const std::size_t depth = m == 0 ? 0 : dg.sets[0].size();
  for (std::size_t t = 0; t < depth; ++t) {
    num::Tensor q({m, num_relations});
    std::vector<bool> def(m, false);
    for (std::size_t i = 0; i < m; ++i) {
      const auto& s = dg.sets[i].at(t);
      if (s.empty()) continue;
      def[i] = true;
      for (auto r : s) {
        if (r >= num_relations) throw IndexError("relation labels: relation out of range");
        q.at(i, r) = 1.0 / static_cast<double>(s.size());
      }
    }
    out.q.push_back(std::move(q));
    out.defined.push_back(std::move(def));
  }
  return out;
}

num::Var loss_ssm(num::Tape& tape, num::Var token_logits, const std::vector<model::TokenId>& targets) {
  if (targets.empty()) return tape.constant(num::Tensor::scalar(0.0));
  if (!token_logits.valid() || token_logits.value().dim(0) != targets.size()) {
    throw ShapeError("loss_ssm: one logit row per target required");
  }
  return num::cross_entropy(token_logits, num::Index(targets.begin(), targets.end()));
}

num::Var loss_ent(num::Var log_scores, num::Var pi0) {
  if (log_scores.value().shape() != pi0.value().shape()) throw ShapeError("loss_ent: shape mismatch");
  return num::scale(num::sum(num::mul(log_scores, pi0)), -1.0);
}

num::Var loss_ent(num::ParamSet& params, num::Var h_sent, const kg::SubgraphIndex& sub, num::Var pi0) {
  return loss_ent(kil::entity_log_score(params, h_sent, kil::subgraph_entities(sub)), pi0);
}

num::Var loss_rel(num::Tape& tape, const std::vector<num::Var>& log_gamma, const RelationLabels& labels) {
  if (labels.q.size() > log_gamma.size()) throw ShapeError("loss_rel: more label steps than trace steps");
  std::vector<num::Var> terms;
  for (std::size_t t = 0; t < labels.q.size(); ++t) {
    const num::Tensor& q = labels.q[t];
    if (q.shape() != log_gamma[t].value().shape()) throw ShapeError("loss_rel: label shape mismatch");
    bool any = false;
    for (std::size_t i = 0; i < q.rows(); ++i) {
      double s = 0.0;
      for (double v : q.row(i)) {
        if (v < 0.0) throw InputError("loss_rel: negative label entry");
        s += v;
      }
      const bool def = labels.defined[t][i];
      if (def && std::abs(s - 1.0) > 1e-9) throw InputError("loss_rel: label row does not sum to 1");
      if (!def && s != 0.0) throw InputError("loss_rel: undefined label row must be zero");
      any = any || def;
    }
    if (any) terms.push_back(num::sum(num::mul(log_gamma[t], tape.constant(q))));
  }
  if (terms.empty()) return tape.constant(num::Tensor::scalar(0.0));
  return num::scale(num::add_n(tape, terms), -1.0);
}

num::Var total_loss(num::Var l_ssm, num::Var l_ent, num::Var l_rel, double lambda_ent, double lambda_rel) {
  if (!(lambda_ent >= 0.0) || !(lambda_rel >= 0.0)) throw ConfigError("total_loss: weights must be >= 0");
  return num::add(num::add(l_ssm, num::scale(l_ent, lambda_ent)), num::scale(l_rel, lambda_rel));
}

}  // namespace oreo::obj
