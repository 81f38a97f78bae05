#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "oreo/error.hpp"
#include "oreo/kg/graph.hpp"

using namespace oreo;
using namespace oreo::kg;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  void write(const char* file, const std::string& text) const { std::ofstream(path / file) << text; }
};

KnowledgeGraph chain() {
  // a -r-> b -r-> c
  return KnowledgeGraph(3, {"r"}, {{0, 0, 1}, {1, 0, 2}}, {"a", "b", "c"});
}

KnowledgeGraph random_graph(std::mt19937_64& rng, std::size_t n, std::size_t nrel, std::size_t m) {
  std::vector<Triple> edges;
  for (std::size_t i = 0; i < m; ++i) {
    edges.push_back({static_cast<EntityId>(rng() % n), static_cast<RelationId>(rng() % nrel),
                     static_cast<EntityId>(rng() % n)});
  }
  std::vector<std::string> rels;
  for (std::size_t r = 0; r < nrel; ++r) rels.push_back("r" + std::to_string(r));
  return KnowledgeGraph(n, rels, edges);
}

// Distance oracle by repeated relaxation over the raw edge list.
std::vector<int> relax_distances(const KnowledgeGraph& kg, const std::vector<EntityId>& init, std::size_t hops) {
  std::vector<int> dist(kg.num_entities(), -1);
  for (EntityId e : init) dist[e] = 0;
  for (std::size_t round = 1; round <= hops; ++round) {
    std::vector<int> next = dist;
    for (const Triple& t : kg.edges()) {
      if (dist[t.src] == static_cast<int>(round) - 1 && next[t.tgt] == -1) next[t.tgt] = static_cast<int>(round);
    }
    dist = next;
  }
  return dist;
}

}  // namespace

TEST_CASE("graph construction deduplicates and counts degrees") {
  KnowledgeGraph g(3, {"r"}, {{0, 0, 1}, {0, 0, 1}, {1, 0, 2}});
  CHECK(g.num_edges() == 2);
  CHECK(g.out_degrees() == std::vector<std::size_t>{1, 1, 0});
  CHECK(g.has_edge(0, 0, 1));
  CHECK_FALSE(g.has_edge(1, 0, 0));
  CHECK_THROWS_AS(KnowledgeGraph(2, {"r"}, {{0, 0, 5}}), IndexError);
  CHECK_THROWS_AS(KnowledgeGraph(2, {"r"}, {{0, 1, 1}}), IndexError);
}

TEST_CASE("out_degree matches edge count per source on random graphs") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = random_graph(rng, 30, 4, 80);
    std::vector<std::size_t> count(30, 0);
    for (const Triple& t : g.edges()) ++count[t.src];
    CHECK(g.out_degrees() == count);
  }
}

TEST_CASE("load_triples examples") {
  TempDir dir("oreo_kg_load");
  dir.write("ent.txt", "a\nb\nc\n");
  dir.write("rel.txt", "r\n");

  dir.write("empty.tsv", "");
  CHECK(load_triples(dir.path / "empty.tsv", dir.path / "ent.txt", dir.path / "rel.txt").num_edges() == 0);

  dir.write("dup.tsv", "a\tr\tb\na\tr\tb\n");
  CHECK(load_triples(dir.path / "dup.tsv", dir.path / "ent.txt", dir.path / "rel.txt").num_edges() == 1);

  dir.write("chain.tsv", "a\tr\tb\nb\tr\tc\n");
  auto g = load_triples(dir.path / "chain.tsv", dir.path / "ent.txt", dir.path / "rel.txt");
  CHECK(g.out_degrees() == std::vector<std::size_t>{1, 1, 0});
  CHECK(g.find_entity("c") == 2u);

  dir.write("bad.tsv", "a\tr\tb\na\tr\tzzz\n");
  try {
    load_triples(dir.path / "bad.tsv", dir.path / "ent.txt", dir.path / "rel.txt");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  dir.write("badrel.tsv", "a\tq\tb\n");
  CHECK_THROWS_AS(load_triples(dir.path / "badrel.tsv", dir.path / "ent.txt", dir.path / "rel.txt"), ParseError);
}

TEST_CASE("save then load reproduces the graph") {
  TempDir dir("oreo_kg_roundtrip");
  std::mt19937_64 rng(8);
  auto g = random_graph(rng, 20, 3, 50);
  save_triples(g, dir.path / "t.tsv", dir.path / "e.txt", dir.path / "r.txt");
  auto h = load_triples(dir.path / "t.tsv", dir.path / "e.txt", dir.path / "r.txt");
  CHECK(h.edges() == g.edges());
  CHECK(h.relation_names() == g.relation_names());
}

TEST_CASE("graph construction is insensitive to line order") {
  std::mt19937_64 rng(12);
  TempDir dir("oreo_kg_perm");
  auto g = random_graph(rng, 15, 3, 40);
  save_triples(g, dir.path / "t.tsv", dir.path / "e.txt", dir.path / "r.txt");
  std::vector<std::string> lines;
  {
    std::ifstream in(dir.path / "t.tsv");
    for (std::string l; std::getline(in, l);) lines.push_back(l);
  }
  auto ents = load_vocab(dir.path / "e.txt");
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(lines.begin(), lines.end(), rng);
    std::shuffle(ents.begin(), ents.end(), rng);
    {
      std::ofstream out(dir.path / "p.tsv");
      for (auto& l : lines) out << l << '\n';
      std::ofstream ev(dir.path / "pe.txt");
      for (auto& e : ents) ev << e << '\n';
    }
    auto h = load_triples(dir.path / "p.tsv", dir.path / "pe.txt", dir.path / "r.txt");
    // canonical form: name triples, sorted
    auto canon = [](const KnowledgeGraph& k) {
      std::set<std::tuple<std::string, std::string, std::string>> s;
      for (const Triple& t : k.edges()) s.emplace(k.entity_name(t.src), k.relation_name(t.rel), k.entity_name(t.tgt));
      return s;
    };
    CHECK(canon(h) == canon(g));
    CHECK(h.num_edges() == g.num_edges());
  }
}

TEST_CASE("inverse closure") {
  auto g = add_inverse_relations(chain());
  CHECK(g.num_relations() == 2);
  CHECK(g.relation_name(1) == "r-R");
  CHECK(g.num_edges() == 4);
  CHECK(g.has_edge(1, 1, 0));
  CHECK(g.inverse(0) == 1);
  CHECK(g.inverse(1) == 0);
  CHECK(g.out_degrees() == std::vector<std::size_t>{1, 2, 1});
  CHECK_THROWS_AS(add_inverse_relations(g), InputError);

  // exhaustive membership check on random graphs
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto base = random_graph(rng, 12, 3, 30);
    auto closed = add_inverse_relations(base);
    CHECK(closed.num_edges() == 2 * base.num_edges());
    for (EntityId s = 0; s < 12; ++s)
      for (EntityId t = 0; t < 12; ++t)
        for (RelationId r = 0; r < 6; ++r)
          CHECK(closed.has_edge(s, r, t) == closed.has_edge(t, closed.inverse(r), s));
  }
}

TEST_CASE("k_hop_subgraph examples") {
  auto g = chain();
  const EntityId a = 0, c = 2;
  auto s2 = k_hop_subgraph(std::vector<EntityId>{a}, 2, g);
  CHECK(s2.entities == std::vector<EntityId>{0, 1, 2});
  CHECK(s2.num_edges() == 2);

  auto s0 = k_hop_subgraph(std::vector<EntityId>{a}, 0, g);
  CHECK(s0.entities == std::vector<EntityId>{0});
  CHECK(s0.num_edges() == 0);

  auto s1 = k_hop_subgraph(std::vector<EntityId>{a, c}, 1, g);
  CHECK(s1.entities == std::vector<EntityId>{0, 1, 2});
  REQUIRE(s1.num_edges() == 1);
  CHECK(s1.entities[s1.i_src[0]] == a);
  CHECK(s1.entities[s1.i_tgt[0]] == 1);
}

TEST_CASE("k_hop_subgraph agrees with a relaxation oracle on random graphs") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 50;
    auto g = random_graph(rng, n, 1 + rng() % 4, rng() % (3 * n));
    std::vector<EntityId> init;
    const std::size_t k = 1 + rng() % 3;
    for (std::size_t i = 0; i < k; ++i) init.push_back(static_cast<EntityId>(rng() % n));
    const std::size_t hops = rng() % 4;
    auto sub = k_hop_subgraph(init, hops, g);
    auto dist = relax_distances(g, init, hops);

    std::vector<EntityId> expect_nodes;
    std::multiset<Triple> expect_edges;
    for (EntityId e = 0; e < n; ++e) {
      if (dist[e] >= 0) expect_nodes.push_back(e);
    }
    for (const Triple& t : g.edges()) {
      if (dist[t.src] >= 0 && dist[t.src] + 1 <= static_cast<int>(hops)) expect_edges.insert(t);
    }
    CHECK(sub.entities == expect_nodes);
    std::multiset<Triple> got;
    for (std::size_t i = 0; i < sub.num_edges(); ++i) {
      REQUIRE(sub.i_src[i] < sub.size());
      REQUIRE(sub.i_tgt[i] < sub.size());
      Triple t{sub.entities[sub.i_src[i]], static_cast<RelationId>(sub.i_rel[i]), sub.entities[sub.i_tgt[i]]};
      CHECK(g.has_edge(t.src, t.rel, t.tgt));
      got.insert(t);
    }
    CHECK(got == expect_edges);
    for (EntityId e : init) CHECK(sub.local(e).has_value());
  }
}
