#include "oreo/synth/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "oreo/error.hpp"

namespace oreo::synth {

namespace {

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ') ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

RelationSpec rel(std::string name, std::string src, std::string tgt, std::string noun, std::string sentence) {
  RelationSpec r;
  r.name = std::move(name);
  r.source = std::move(src);
  r.target = std::move(tgt);
  r.noun = words(noun);
  r.sentence = words(sentence);
  return r;
}

struct TypeTable {
  std::vector<std::size_t> offset;  // first id per type
  std::map<std::string, std::size_t, std::less<>> index;
  std::vector<std::size_t> type_of;  // per entity
};

TypeTable type_table(const WorldSpec& spec) {
  TypeTable t;
  std::size_t next = 0;
  for (std::size_t i = 0; i < spec.types.size(); ++i) {
    t.offset.push_back(next);
    t.index.emplace(spec.types[i].name, i);
    for (std::size_t k = 0; k < spec.types[i].count; ++k) t.type_of.push_back(i);
    next += spec.types[i].count;
  }
  return t;
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{seed, salt};
  return std::mt19937_64(seq);
}

}  // namespace

WorldSpec WorldSpec::default_world() {
  WorldSpec s;
  s.types = {{"person", 80}, {"city", 50}, {"country", 20}, {"organization", 30}, {"field", 20}};
  s.relations = {
      rel("born_in", "person", "city", "birthplace", "{s} was born in {o} ."),
      rel("citizen_of", "person", "country", "citizenship", "{s} is a citizen of {o} ."),
      rel("located_in", "city", "country", "country", "{s} is located in {o} ."),
      rel("capital", "country", "city", "capital", "the capital of {s} is {o} ."),
      rel("lives_in", "person", "city", "residence", "{s} lives in {o} ."),
      rel("works_for", "person", "organization", "employer", "{s} works for {o} ."),
      rel("headquarters", "organization", "city", "headquarters", "{s} is headquartered in {o} ."),
      rel("work_location", "person", "city", "workplace", "{s} works in {o} ."),
      rel("birth_country", "person", "country", "birth country", "{s} was born in the country {o} ."),
      rel("field_of_work", "person", "field", "field", "{s} studies {o} ."),
      rel("founded_by", "organization", "person", "founder", "{s} was founded by {o} ."),
      rel("friend_of", "person", "person", "friend", "{s} is a friend of {o} ."),
  };
  for (auto& r : s.relations) {
    if (r.name == "works_for") r.coverage = 0.9;
    if (r.name == "friend_of") r.functional = false;
  }
  s.rules = {{"work_location", "works_for", "headquarters"}, {"birth_country", "born_in", "located_in"}};
  return s;
}

std::size_t WorldSpec::num_entities() const {
  std::size_t n = 0;
  for (const auto& t : types) n += t.count;
  return n;
}

std::vector<std::string> WorldSpec::entity_names() const {
  std::vector<std::string> out;
  for (const auto& t : types) {
    for (std::size_t k = 0; k < t.count; ++k) out.push_back(t.name + "_" + std::to_string(k));
  }
  return out;
}

const RelationSpec& WorldSpec::relation(std::string_view name) const {
  for (const auto& r : relations) {
    if (r.name == name) return r;
  }
  throw ConfigError("world spec: unknown relation '" + std::string(name) + "'");
}

bool WorldSpec::is_composed(std::string_view relation) const {
  return std::any_of(rules.begin(), rules.end(), [&](const RuleSpec& r) { return r.relation == relation; });
}

void WorldSpec::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("world spec: " + m); };
  if (types.empty() || relations.empty()) fail("needs entity types and relations");
  std::set<std::string> type_names, rel_names;
  for (const auto& t : types) {
    if (t.name.empty() || t.name.find_first_of(" \t_") != std::string::npos) {
      fail("type names must be non-empty without spaces or underscores");
    }
    if (!type_names.insert(t.name).second) fail("duplicate type '" + t.name + "'");
  }
  for (const auto& r : relations) {
    if (r.name.empty() || r.name.find_first_of(" \t") != std::string::npos) fail("bad relation name");
    if (!rel_names.insert(r.name).second) fail("duplicate relation '" + r.name + "'");
    if (!type_names.contains(r.source) || !type_names.contains(r.target)) {
      fail("relation '" + r.name + "' uses an unknown type");
    }
    if (!(r.coverage >= 0.0 && r.coverage <= 1.0)) fail("coverage of '" + r.name + "' outside [0, 1]");
    if (!r.functional && r.max_per_source == 0) fail("max_per_source of '" + r.name + "' must be positive");
    if (r.noun.empty()) fail("relation '" + r.name + "' needs a question noun");
    if (std::count(r.sentence.begin(), r.sentence.end(), "{s}") != 1 ||
        std::count(r.sentence.begin(), r.sentence.end(), "{o}") != 1) {
      fail("sentence of '" + r.name + "' needs exactly one {s} and one {o}");
    }
  }
  for (const auto& rule : rules) {
    for (const auto* n : {&rule.relation, &rule.first, &rule.second}) {
      if (!rel_names.contains(*n)) fail("rule mentions unknown relation '" + *n + "'");
    }
    if (rule.relation == rule.first || rule.relation == rule.second) {
      fail("rule for '" + rule.relation + "' composes itself");
    }
    const auto &r = relation(rule.relation), &a = relation(rule.first), &b = relation(rule.second);
    if (r.source != a.source || a.target != b.source || b.target != r.target) {
      fail("rule for '" + rule.relation + "' has incompatible types");
    }
  }
  if (min_sentences == 0 || min_sentences > max_sentences) fail("need 1 <= min_sentences <= max_sentences");
  if (!(held_out_fraction >= 0.0 && held_out_fraction < 1.0)) fail("held_out_fraction outside [0, 1)");
}

void to_json(nlohmann::json& j, const WorldSpec& s) {
  j = nlohmann::json::object();
  j["seed"] = s.seed;
  for (const auto& t : s.types) j["types"].push_back({{"name", t.name}, {"count", t.count}});
  for (const auto& r : s.relations) {
    j["relations"].push_back({{"name", r.name},
                              {"source", r.source},
                              {"target", r.target},
                              {"functional", r.functional},
                              {"coverage", r.coverage},
                              {"max_per_source", r.max_per_source},
                              {"noun", r.noun},
                              {"sentence", r.sentence}});
  }
  j["rules"] = nlohmann::json::array();
  for (const auto& r : s.rules) j["rules"].push_back({r.relation, r.first, r.second});
  j["passages"] = s.passages;
  j["min_sentences"] = s.min_sentences;
  j["max_sentences"] = s.max_sentences;
  j["held_out_fraction"] = s.held_out_fraction;
}

void from_json(const nlohmann::json& j, WorldSpec& s) {
  try {
    s = WorldSpec{};
    s.seed = j.value("seed", std::uint64_t{0});
    for (const auto& t : j.at("types")) s.types.push_back({t.at("name"), t.at("count")});
    for (const auto& r : j.at("relations")) {
      RelationSpec rs;
      rs.name = r.at("name");
      rs.source = r.at("source");
      rs.target = r.at("target");
      rs.functional = r.value("functional", true);
      rs.coverage = r.value("coverage", 1.0);
      rs.max_per_source = r.value("max_per_source", std::size_t{2});
      rs.noun = r.at("noun").is_string() ? words(r.at("noun").get<std::string>())
                                         : r.at("noun").get<std::vector<std::string>>();
      rs.sentence = r.at("sentence").is_string() ? words(r.at("sentence").get<std::string>())
                                                 : r.at("sentence").get<std::vector<std::string>>();
      s.relations.push_back(std::move(rs));
    }
    if (j.contains("rules")) {
      for (const auto& r : j.at("rules")) s.rules.push_back({r.at(0), r.at(1), r.at(2)});
    }
    s.passages = j.value("passages", s.passages);
    s.min_sentences = j.value("min_sentences", s.min_sentences);
    s.max_sentences = j.value("max_sentences", s.max_sentences);
    s.held_out_fraction = j.value("held_out_fraction", s.held_out_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("world spec: ") + e.what());
  }
}

kg::KnowledgeGraph gen_kg(const WorldSpec& spec) {
  spec.validate();
  const TypeTable types = type_table(spec);
  const std::size_t n_rel = spec.relations.size();
  std::map<std::string, kg::RelationId, std::less<>> rid;
  std::vector<std::string> names;
  for (std::size_t r = 0; r < n_rel; ++r) {
    rid.emplace(spec.relations[r].name, static_cast<kg::RelationId>(r));
    names.push_back(spec.relations[r].name);
  }

  // adj[r][s] = sorted targets
  std::vector<std::vector<std::set<kg::EntityId>>> adj(n_rel,
                                                       std::vector<std::set<kg::EntityId>>(spec.num_entities()));
  for (std::size_t r = 0; r < n_rel; ++r) {
    const auto& rs = spec.relations[r];
    if (spec.is_composed(rs.name)) continue;
    auto rng = stream(spec.seed, 1000 + r);
    const std::size_t st = types.index.at(rs.source), tt = types.index.at(rs.target);
    const std::size_t tcount = spec.types[tt].count;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, tcount == 0 ? 0 : tcount - 1);
    for (std::size_t k = 0; k < spec.types[st].count; ++k) {
      const auto s = static_cast<kg::EntityId>(types.offset[st] + k);
      if (u(rng) >= rs.coverage) continue;
      const bool self_ok = st != tt;
      if (tcount == 0 || (!self_ok && tcount == 1)) {
        throw GenerationError("relation '" + rs.name + "' has no admissible targets");
      }
      std::size_t want = 1;
      if (!rs.functional) {
        std::uniform_int_distribution<std::size_t> cnt(1, rs.max_per_source);
        want = std::min(cnt(rng), tcount - (self_ok ? 0 : 1));
      }
      while (adj[r][s].size() < want) {
        const auto t = static_cast<kg::EntityId>(types.offset[tt] + pick(rng));
        if (t != s) adj[r][s].insert(t);
      }
    }
  }

  // Close under the rules until nothing changes.
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& rule : spec.rules) {
      const auto r = rid.at(rule.relation), a = rid.at(rule.first), b = rid.at(rule.second);
      for (kg::EntityId s = 0; s < spec.num_entities(); ++s) {
        for (auto mid : adj[a][s]) {
          for (auto t : adj[b][mid]) changed |= adj[r][s].insert(t).second;
        }
      }
    }
  }
  for (std::size_t r = 0; r < n_rel; ++r) {
    if (!spec.relations[r].functional) continue;
    for (kg::EntityId s = 0; s < spec.num_entities(); ++s) {
      if (adj[r][s].size() > 1) {
        throw GenerationError("functional relation '" + names[r] + "' forced to " +
                              std::to_string(adj[r][s].size()) + " targets for entity " + std::to_string(s) +
                              " by rule closure");
      }
    }
  }

  std::vector<kg::Triple> edges;
  for (kg::EntityId s = 0; s < spec.num_entities(); ++s) {
    for (std::size_t r = 0; r < n_rel; ++r) {
      for (auto t : adj[r][s]) edges.push_back({s, static_cast<kg::RelationId>(r), t});
    }
  }
  return kg::KnowledgeGraph(spec.num_entities(), names, edges, spec.entity_names());
}

namespace {

void append_sentence(GroundedText& text, const RelationSpec& rs, const kg::Triple& t,
                     const kg::KnowledgeGraph& g) {
  for (const auto& w : rs.sentence) {
    if (w == "{s}" || w == "{o}") {
      const auto e = w == "{s}" ? t.src : t.tgt;
      text.mentions.push_back({text.tokens.size(), text.tokens.size() + 1, e});
      text.tokens.push_back(g.entity_name(e));
    } else {
      text.tokens.push_back(w);
    }
  }
}

}  // namespace

std::vector<GroundedText> gen_corpus(const kg::KnowledgeGraph& base, const WorldSpec& spec) {
  spec.validate();
  if (base.inverse_closed()) throw InputError("gen_corpus: expects the base graph");
  auto rng = stream(spec.seed, 2);
  const auto& edges = base.edges();
  if (edges.empty()) return {};
  // Triples touching each entity, as subject or object.
  std::vector<std::vector<std::size_t>> touching(base.num_entities());
  for (std::size_t k = 0; k < edges.size(); ++k) {
    touching[edges[k].src].push_back(k);
    touching[edges[k].tgt].push_back(k);
  }
  std::vector<std::size_t> order(edges.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> covered(edges.size(), false);
  std::uniform_int_distribution<std::size_t> len(spec.min_sentences, spec.max_sentences);
  std::uniform_int_distribution<std::size_t> any_edge(0, edges.size() - 1);

  std::vector<GroundedText> out;
  std::size_t cursor = 0;
  while (out.size() < spec.passages || cursor < order.size()) {
    std::size_t seed_edge;
    if (cursor < order.size()) {
      while (cursor < order.size() && covered[order[cursor]]) ++cursor;
      if (cursor == order.size()) continue;
      seed_edge = order[cursor];
    } else {
      seed_edge = any_edge(rng);
    }
    GroundedText text;
    std::vector<std::size_t> used{seed_edge};
    const std::size_t n = len(rng);
    for (std::size_t s = 1; s < n; ++s) {
      // Continue from an entity of the previous sentence, preferring its object.
      const auto& prev = edges[used.back()];
      std::uniform_int_distribution<int> coin(0, 3);
      const kg::EntityId hub = coin(rng) == 0 ? prev.src : prev.tgt;
      std::vector<std::size_t> options;
      for (auto k : touching[hub]) {
        if (std::find(used.begin(), used.end(), k) == used.end()) options.push_back(k);
      }
      if (options.empty()) break;
      std::vector<std::size_t> fresh;
      for (auto k : options) {
        if (!covered[k]) fresh.push_back(k);
      }
      const auto& pool = fresh.empty() ? options : fresh;
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      used.push_back(pool[pick(rng)]);
    }
    for (auto k : used) {
      covered[k] = true;
      append_sentence(text, spec.relation(base.relation_name(edges[k].rel)), edges[k], base);
    }
    out.push_back(std::move(text));
  }
  return out;
}

namespace {

GroundedText question_text(const std::vector<const RelationSpec*>& path, kg::EntityId source,
                           const kg::KnowledgeGraph& g) {
  // what is the <noun_k> of the <noun_k-1> of ... X ? [MASK]
  GroundedText q;
  q.tokens = {"what", "is"};
  for (std::size_t i = path.size(); i-- > 0;) {
    q.tokens.push_back("the");
    q.tokens.insert(q.tokens.end(), path[i]->noun.begin(), path[i]->noun.end());
    q.tokens.push_back("of");
  }
  q.mentions.push_back({q.tokens.size(), q.tokens.size() + 1, source});
  q.tokens.push_back(g.entity_name(source));
  q.tokens.push_back("?");
  q.tokens.push_back("[MASK]");
  return q;
}

}  // namespace

std::vector<QAItem> gen_qa(const kg::KnowledgeGraph& base, const WorldSpec& spec) {
  spec.validate();
  if (base.inverse_closed()) throw InputError("gen_qa: expects the base graph");
  const std::size_t n = base.num_entities();
  auto rng = stream(spec.seed, 3);
  std::vector<kg::EntityId> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<bool> held(n, false);
  const auto n_held = static_cast<std::size_t>(std::llround(spec.held_out_fraction * double(n)));
  for (std::size_t i = 0; i < n_held; ++i) held[perm[i]] = true;

  std::vector<QAItem> out;
  const std::size_t n_rel = base.num_relations();
  for (std::size_t r = 0; r < n_rel; ++r) {
    const auto& rs = spec.relation(base.relation_name(static_cast<kg::RelationId>(r)));
    for (kg::EntityId s = 0; s < n; ++s) {
      const auto t = base.targets(s, static_cast<kg::RelationId>(r));
      if (t.size() != 1) continue;
      QAItem item;
      item.question = question_text({&rs}, s, base);
      item.source = s;
      item.answer = t[0];
      item.relation = rs.name;
      item.path = {rs.name};
      item.held_out = held[s];
      out.push_back(std::move(item));
    }
  }
  for (std::size_t a = 0; a < n_rel; ++a) {
    const auto& ra = spec.relation(base.relation_name(static_cast<kg::RelationId>(a)));
    if (spec.is_composed(ra.name)) continue;
    for (std::size_t b = 0; b < n_rel; ++b) {
      const auto& rb = spec.relation(base.relation_name(static_cast<kg::RelationId>(b)));
      if (spec.is_composed(rb.name) || ra.target != rb.source) continue;
      for (kg::EntityId s = 0; s < n; ++s) {
        std::set<kg::EntityId> ends;
        for (auto mid : base.targets(s, static_cast<kg::RelationId>(a))) {
          for (auto t : base.targets(mid, static_cast<kg::RelationId>(b))) ends.insert(t);
        }
        if (ends.size() != 1 || *ends.begin() == s) continue;
        QAItem item;
        item.question = question_text({&ra, &rb}, s, base);
        item.source = s;
        item.answer = *ends.begin();
        item.hops = 2;
        item.relation = ra.name + "/" + rb.name;
        item.path = {ra.name, rb.name};
        item.held_out = held[s];
        out.push_back(std::move(item));
      }
    }
  }
  return out;
}

kg::KnowledgeGraph remove_relation_edges(const kg::KnowledgeGraph& g, std::string_view relation) {
  const auto r = g.find_relation(relation);
  if (!r) throw InputError("remove_relation_edges: unknown relation '" + std::string(relation) + "'");
  std::optional<kg::RelationId> inv;
  if (g.inverse_closed()) inv = g.inverse(*r);
  std::vector<kg::Triple> kept;
  kept.reserve(g.num_edges());
  for (const auto& t : g.edges()) {
    if (t.rel != *r && t.rel != inv) kept.push_back(t);
  }
  return kg::KnowledgeGraph(g.num_entities(), g.relation_names(), kept, g.entity_names(),
                            g.inverse_closed() ? g.base_relations() : 0);
}

model::Vocab build_vocab(const WorldSpec& spec) {
  std::set<std::string> ws{"what", "is", "the", "of", "?"};
  for (const auto& r : spec.relations) {
    for (const auto& w : r.noun) ws.insert(w);
    for (const auto& w : r.sentence) {
      if (w != "{s}" && w != "{o}") ws.insert(w);
    }
  }
  model::Vocab v;
  for (const auto& e : spec.entity_names()) v.add(e);
  for (const auto& w : ws) v.add(w);
  return v;
}

nlohmann::json to_json(const GroundedText& text, const kg::KnowledgeGraph& g) {
  nlohmann::json m = nlohmann::json::array();
  for (const auto& x : text.mentions) {
    m.push_back({{"begin", x.begin}, {"end", x.end}, {"entity", g.entity_name(x.entity)}});
  }
  return {{"tokens", text.tokens}, {"mentions", m}};
}

nlohmann::json to_json(const QAItem& item, const kg::KnowledgeGraph& g) {
  auto j = to_json(item.question, g);
  j["answer"] = g.entity_name(item.answer);
  j["hops"] = item.hops;
  j["relation"] = item.relation;
  j["path"] = item.path;
  j["split"] = item.held_out ? "heldout" : "train";
  return j;
}

void write_world(const std::filesystem::path& dir, const WorldSpec& spec) {
  std::filesystem::create_directories(dir);
  const auto base = gen_kg(spec);
  kg::save_triples(base, dir / "triples.tsv", dir / "entities.txt", dir / "relations.txt");
  build_vocab(spec).save(dir / "vocab.txt");
  auto write_lines = [&](const char* name, const auto& rows) {
    std::ofstream out(dir / name);
    if (!out) throw InputError("cannot write " + (dir / name).string());
    for (const auto& r : rows) out << to_json(r, base).dump() << '\n';
  };
  write_lines("passages.jsonl", gen_corpus(base, spec));
  write_lines("qa.jsonl", gen_qa(base, spec));
  std::ofstream(dir / "spec.json") << nlohmann::json(spec).dump(2) << '\n';
}

model::TokenSequence encode(const GroundedText& text, const model::Vocab& vocab) {
  return {vocab.encode(text.tokens), text.mentions};
}

model::InstrumentedSequence qa_sequence(const QAItem& item, const model::Vocab& vocab) {
  auto seq = model::instrument(encode(item.question, vocab));
  if (seq.ids.empty() || seq.ids.back() != model::Vocab::kMask) {
    throw InputError("qa item: question must end with the answer [MASK]");
  }
  seq.answer_pos = seq.ids.size() - 1;
  return seq;
}

namespace {

GroundedText grounded_from_json(const nlohmann::json& j, const kg::KnowledgeGraph& g) {
  GroundedText t;
  t.tokens = j.at("tokens").get<std::vector<std::string>>();
  for (const auto& m : j.at("mentions")) {
    const std::string name = m.at("entity");
    const auto e = g.find_entity(name);
    if (!e) throw LinkingError("unknown entity '" + name + "'");
    t.mentions.push_back({m.at("begin").get<std::size_t>(), m.at("end").get<std::size_t>(), *e});
  }
  return t;
}

template <class Fn>
void read_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<QAItem> load_qa(const std::filesystem::path& path, const kg::KnowledgeGraph& g) {
  std::vector<QAItem> out;
  read_jsonl(path, [&](const nlohmann::json& j) {
    QAItem item;
    item.question = grounded_from_json(j, g);
    if (item.question.mentions.size() != 1) throw InputError("qa item needs exactly one mention");
    item.source = item.question.mentions[0].entity;
    const std::string answer = j.at("answer");
    const auto a = g.find_entity(answer);
    if (!a) throw LinkingError("unknown answer entity '" + answer + "'");
    item.answer = *a;
    item.hops = j.at("hops");
    item.relation = j.at("relation");
    item.path = j.at("path").get<std::vector<std::string>>();
    const std::string split = j.at("split");
    if (split != "train" && split != "heldout") throw InputError("qa split must be train or heldout");
    item.held_out = split == "heldout";
    out.push_back(std::move(item));
  });
  return out;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  {
    std::ifstream in(dir / "spec.json");
    if (!in) throw InputError("cannot read " + (dir / "spec.json").string());
    try {
      d.spec = nlohmann::json::parse(in).get<WorldSpec>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError((dir / "spec.json").string() + ": " + e.what());
    }
  }
  d.kg = kg::add_inverse_relations(
      kg::load_triples(dir / "triples.tsv", dir / "entities.txt", dir / "relations.txt"));
  d.vocab = model::Vocab::load(dir / "vocab.txt");
  read_jsonl(dir / "passages.jsonl",
             [&](const nlohmann::json& j) { d.passages.push_back(encode(grounded_from_json(j, d.kg), d.vocab)); });
  d.qa = load_qa(dir / "qa.jsonl", d.kg);
  return d;
}

Dataset make_dataset(const WorldSpec& spec) {
  Dataset d;
  d.spec = spec;
  const auto base = gen_kg(spec);
  d.kg = kg::add_inverse_relations(base);
  d.vocab = build_vocab(spec);
  for (const auto& p : gen_corpus(base, spec)) d.passages.push_back(encode(p, d.vocab));
  d.qa = gen_qa(base, spec);
  return d;
}

}  // namespace oreo::synth
