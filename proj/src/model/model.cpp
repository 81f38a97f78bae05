#include "oreo/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oreo/error.hpp"
#include "oreo/kil/kil.hpp"

namespace oreo::model {

namespace {

using num::Var;

std::string layer_name(std::size_t l, const char* part) {
  return "layer" + std::to_string(l) + "." + part;
}

Var p(num::Tape& t, num::ParamSet& ps, const std::string& name) { return t.param(ps.get(name)); }

Var ln(num::Tape& t, num::ParamSet& ps, const std::string& prefix, Var x) {
  return num::layer_norm(x, p(t, ps, prefix + ".gain"), p(t, ps, prefix + ".bias"));
}

Var embed(num::Tape& t, num::ParamSet& ps, const ModelConfig& c, const std::vector<TokenId>& ids) {
  if (ids.empty()) throw InputError("model: empty sequence");
  if (ids.size() > c.max_len) {
    throw InputError("model: sequence of " + std::to_string(ids.size()) + " tokens exceeds max_len " +
                     std::to_string(c.max_len));
  }
  num::Index tok(ids.begin(), ids.end()), pos(ids.size());
  for (std::size_t id : tok) {
    if (id >= c.vocab_size) throw IndexError("model: token id " + std::to_string(id) + " outside vocabulary");
  }
  std::iota(pos.begin(), pos.end(), 0);
  return num::add(num::gather(p(t, ps, "tok_emb"), tok, 0), num::gather(p(t, ps, "pos_emb"), pos, 0));
}

// Pre-norm block: x + Attn(LN(x)), then x + FF(LN(x)).
Var block(num::Tape& t, num::ParamSet& ps, const ModelConfig& c, std::size_t l, Var x) {
  auto name = [l](const char* part) { return layer_name(l, part); };
  Var h = ln(t, ps, name("ln1"), x);
  Var q = num::linear(h, p(t, ps, name("attn.wq")), p(t, ps, name("attn.bq")));
  // No key bias: softmax over keys is shift-invariant, so it would get an exactly zero gradient.
  Var k = num::matmul(h, p(t, ps, name("attn.wk")));
  Var v = num::linear(h, p(t, ps, name("attn.wv")), p(t, ps, name("attn.bv")));
  Var a = num::attention(q, k, v, c.heads);
  x = num::add(x, num::linear(a, p(t, ps, name("attn.wo")), p(t, ps, name("attn.bo"))));
  h = ln(t, ps, name("ln2"), x);
  Var f = num::gelu(num::linear(h, p(t, ps, name("ff.w1")), p(t, ps, name("ff.b1"))));
  return num::add(x, num::linear(f, p(t, ps, name("ff.w2")), p(t, ps, name("ff.b2"))));
}

num::Index positions(const std::vector<InstrumentedMention>& ms, std::size_t InstrumentedMention::*field) {
  num::Index out;
  for (const auto& m : ms) out.push_back(m.*field);
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (layers == 0 || d == 0 || heads == 0 || ff == 0 || d_e == 0 || max_len == 0) {
    fail("layers, d, heads, ff, d_e and max_len must be positive");
  }
  if (d % heads != 0) fail("d must be divisible by heads");
  if (spacing == 0) fail("spacing N must be positive");
  if (depth * spacing > layers) fail("depth T times spacing N exceeds layers L");
  if (hops < depth) fail("subgraph hops K must be at least depth T");
  if (vocab_size <= Vocab::kUnk) fail("vocab_size must cover the special tokens");
  if (num_entities == 0 || num_relations == 0) fail("num_entities and num_relations must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"layers", c.layers},     {"depth", c.depth},           {"spacing", c.spacing},
       {"d", c.d},               {"heads", c.heads},           {"ff", c.ff},
       {"d_e", c.d_e},           {"hops", c.hops},             {"max_len", c.max_len},
       {"vocab_size", c.vocab_size}, {"num_entities", c.num_entities},
       {"num_relations", c.num_relations}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const char* keys[] = {"layers", "depth", "spacing", "d", "heads", "ff", "d_e", "hops",
                               "max_len", "vocab_size", "num_entities", "num_relations"};
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(std::begin(keys), std::end(keys), [&](const char* s) { return k == s; }) ==
        std::end(keys)) {
      throw ConfigError("model config: unknown key '" + k + "'");
    }
    if (!v.is_number_unsigned()) throw ConfigError("model config: '" + k + "' must be a non-negative integer");
  }
  auto get = [&](const char* key, std::size_t& field) {
    if (j.contains(key)) field = j.at(key).get<std::size_t>();
  };
  get("layers", c.layers);
  get("depth", c.depth);
  get("spacing", c.spacing);
  get("d", c.d);
  get("heads", c.heads);
  get("ff", c.ff);
  get("d_e", c.d_e);
  get("hops", c.hops);
  get("max_len", c.max_len);
  get("vocab_size", c.vocab_size);
  get("num_entities", c.num_entities);
  get("num_relations", c.num_relations);
}

void init_params(num::ParamSet& ps, const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  std::mt19937_64 rng(seed);
  const double emb_std = 0.1;
  const double in_d = 1.0 / std::sqrt(double(c.d));
  const double out_scale = 1.0 / std::sqrt(2.0 * double(c.layers));
  ps.add("tok_emb", num::normal_tensor({c.vocab_size, c.d}, emb_std, rng));
  ps.add("pos_emb", num::normal_tensor({c.max_len, c.d}, emb_std, rng));
  for (std::size_t l = 0; l < c.layers; ++l) {
    auto name = [l](const char* part) { return layer_name(l, part); };
    ps.add(name("ln1.gain"), num::Tensor({c.d}, 1.0));
    ps.add(name("ln1.bias"), num::Tensor({c.d}));
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv"}) {
      ps.add(name(w), num::normal_tensor({c.d, c.d}, in_d, rng));
    }
    ps.add(name("attn.wo"), num::normal_tensor({c.d, c.d}, in_d * out_scale, rng));
    for (const char* b : {"attn.bq", "attn.bv", "attn.bo"}) ps.add(name(b), num::Tensor({c.d}));
    ps.add(name("ln2.gain"), num::Tensor({c.d}, 1.0));
    ps.add(name("ln2.bias"), num::Tensor({c.d}));
    ps.add(name("ff.w1"), num::normal_tensor({c.d, c.ff}, in_d, rng));
    ps.add(name("ff.b1"), num::Tensor({c.ff}));
    ps.add(name("ff.w2"), num::normal_tensor({c.ff, c.d}, out_scale / std::sqrt(double(c.ff)), rng));
    ps.add(name("ff.b2"), num::Tensor({c.d}));
  }
  ps.add("final_ln.gain", num::Tensor({c.d}, 1.0));
  ps.add("final_ln.bias", num::Tensor({c.d}));
  ps.add("mlm.w", num::normal_tensor({c.d, c.vocab_size}, in_d, rng));
  ps.add("mlm.b", num::Tensor({c.vocab_size}));
  kil::init_params(ps,
                   {.d = c.d, .d_e = c.d_e, .steps = c.depth, .num_relations = c.num_relations,
                    .num_entities = c.num_entities},
                   rng);
}

crw::EntityDistribution init_pi(const InstrumentedMention& m, const kg::SubgraphIndex& sub) {
  crw::EntityDistribution out;
  out.probs.assign(sub.size(), 0.0);
  auto locate = [&](kg::EntityId e) {
    auto loc = sub.local(e);
    if (!loc) throw LinkingError("init_pi: entity " + std::to_string(e) + " is not in the subgraph");
    return *loc;
  };
  if (m.candidates.size() >= 2) {
    std::vector<kg::EntityId> c = m.candidates;
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    for (auto e : c) out.probs[locate(e)] = 1.0 / static_cast<double>(c.size());
  } else {
    out.probs[locate(m.candidates.size() == 1 ? m.candidates[0] : m.entity)] = 1.0;
  }
  return out;
}

Var encode_plain(num::Tape& t, num::ParamSet& ps, const ModelConfig& c, const std::vector<TokenId>& ids) {
  Var x = embed(t, ps, c, ids);
  for (std::size_t l = 0; l < c.layers; ++l) x = block(t, ps, c, l, x);
  return ln(t, ps, "final_ln", x);
}

ForwardResult forward(num::Tape& t, num::ParamSet& ps, const ModelConfig& c,
                      const InstrumentedSequence& seq, const GraphContext& graph,
                      const ForwardOptions& opts) {
  const std::size_t depth = opts.depth.value_or(c.depth);
  if (depth * c.spacing > c.layers) throw ConfigError("model: depth T times spacing N exceeds layers L");
  const std::size_t m_count = seq.mentions.size();
  for (const auto& m : seq.mentions) {
    if (m.sent >= seq.ids.size() || m.rel >= seq.ids.size() || m.tent >= seq.ids.size() ||
        !(m.sent < m.span_begin && m.span_begin < m.span_end && m.span_end <= m.rel && m.rel < m.tent)) {
      throw InputError("model: malformed mention positions");
    }
  }

  ForwardResult r;
  r.mention_entities = seq.mention_entities();
  if (m_count > 0) {
    if (graph.kg == nullptr) throw InputError("model: mentions present but no graph supplied");
    const auto ents = seq.mention_entities();
    for (auto e : ents) {
      if (e >= graph.kg->num_entities()) throw LinkingError("model: entity id outside the graph");
    }
    r.sub = kg::k_hop_subgraph(ents, depth == 0 ? 0 : c.hops, *graph.kg);
  }

  const num::Index sent_pos = positions(seq.mentions, &InstrumentedMention::sent);
  const num::Index rel_pos = positions(seq.mentions, &InstrumentedMention::rel);
  const num::Index tent_pos = positions(seq.mentions, &InstrumentedMention::tent);

  Var x = embed(t, ps, c, seq.ids);
  std::size_t step = 0;
  const std::size_t pre = std::min(c.spacing, c.layers);
  Var w;
  for (std::size_t l = 0; l < c.layers; ++l) {
    x = block(t, ps, c, l, x);
    if (l + 1 == pre) {
      r.h_pre_kil = x;
      if (m_count > 0) {
        r.h_sent = num::gather(x, sent_pos, 0);
        num::Tensor pi0({m_count, r.sub.size()});
        for (std::size_t i = 0; i < m_count; ++i) {
          auto row = init_pi(seq.mentions[i], r.sub).probs;
          std::copy(row.begin(), row.end(), pi0.row(i).begin());
        }
        r.pi.push_back(t.constant(std::move(pi0)));
      }
    }
    if (m_count > 0 && step < depth && (l + 1) % c.spacing == 0) {
      if (!w.valid()) w = num::exp(p(t, ps, "w_rel_log"));
      Var logits = kil::relation_logits(ps, num::gather(x, rel_pos, 0), step);
      r.log_gamma.push_back(num::log_softmax(logits, 1));
      r.gamma.push_back(num::softmax(logits, 1));
      r.pi.push_back(crw::transition(r.pi.back(), r.gamma.back(), w, r.sub, graph.wdeg));
      Var injected = kil::knowledge_inject(ps, r.pi.back(), r.sub, num::gather(x, tent_pos, 0), step);
      x = num::set_rows(x, tent_pos, injected);
      ++step;
    }
  }
  r.hidden = ln(t, ps, "final_ln", x);

  r.mask_positions = seq.mask_positions();
  if (!r.mask_positions.empty()) {
    r.token_logits = num::linear(num::gather(r.hidden, r.mask_positions, 0), p(t, ps, "mlm.w"),
                                 p(t, ps, "mlm.b"));
  }
  if (seq.answer_pos) {
    if (*seq.answer_pos >= seq.ids.size()) throw InputError("model: answer position out of range");
    num::Index cands = opts.answer_entities;
    if (cands.empty()) {
      cands.resize(c.num_entities);
      std::iota(cands.begin(), cands.end(), 0);
    }
    r.answer_log_scores = kil::entity_log_score(ps, num::gather(r.hidden, {*seq.answer_pos}, 0), cands);
  }
  return r;
}

ReasoningTrace ForwardResult::trace() const {
  ReasoningTrace tr;
  tr.entities = sub.entities;
  tr.mentions = mention_entities;
  for (const auto& g : gamma) tr.gamma.push_back(g.value());
  for (const auto& p : pi) tr.pi.push_back(p.value());
  return tr;
}

nlohmann::json trace_records(const ReasoningTrace& tr, const kg::KnowledgeGraph& kg, std::size_t top_k) {
  auto top = [top_k](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t k = std::min(top_k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                      [&](std::size_t a, std::size_t b) { return v[a] > v[b] || (v[a] == v[b] && a < b); });
    idx.resize(k);
    return idx;
  };
  auto entity_label = [&](kg::EntityId e) {
    return e < kg.entity_names().size() ? kg.entity_name(e) : std::to_string(e);
  };
  nlohmann::json out = nlohmann::json::array();
  const std::size_t m_count = tr.pi.empty() ? 0 : tr.pi[0].dim(0);
  for (std::size_t i = 0; i < m_count; ++i) {
    for (std::size_t s = 0; s < tr.steps(); ++s) {
      nlohmann::json rels = nlohmann::json::array(), ents = nlohmann::json::array();
      const auto g = tr.gamma[s].row(i);
      for (auto r : top(g)) rels.push_back({kg.relation_name(static_cast<kg::RelationId>(r)), g[r]});
      const auto pv = tr.pi[s + 1].row(i);
      for (auto e : top(pv)) ents.push_back({entity_label(tr.entities[e]), pv[e]});
      const auto p0 = tr.pi[0].row(i);
      const auto start = std::max_element(p0.begin(), p0.end()) - p0.begin();
      out.push_back({{"mention", i},
                     {"entity", entity_label(tr.entities[start])},
                     {"step", s + 1},
                     {"relations", rels},
                     {"entities", ents}});
    }
  }
  return out;
}

}  // namespace oreo::model
