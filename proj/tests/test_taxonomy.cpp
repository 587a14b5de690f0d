// Taxonomy graph: TSV edge lists, interning, traversal queries, leaf splits,
// embedding tables, and the synthetic generator.

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fuse/io.hpp"
#include "fuse/taxonomy.hpp"

namespace fs = std::filesystem;

using fuse::EmbeddingTable;
using fuse::SplitResult;
using fuse::Taxonomy;
using fuse::TestQuery;

namespace {

using Edge = std::pair<std::string, std::string>;

// root -> {a, b}; a -> {c, d}; b -> {e}
std::vector<Edge> small_edges() {
  return {{"a", "root"}, {"b", "root"}, {"c", "a"}, {"d", "a"}, {"e", "b"}};
}

fs::path temp_dir() {
  const fs::path dir =
      fs::temp_directory_path() / "fuse_taxonomy_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("build interns terms in first-appearance order") {
  const Taxonomy t = fuse::build_taxonomy(small_edges());
  REQUIRE(t.node_count() == 6);
  REQUIRE(t.edge_count() == 5);
  // (child, parent) per edge: a, root, b, c, d, e
  REQUIRE(t.term(0) == "a");
  REQUIRE(t.term(1) == "root");
  REQUIRE(t.term(2) == "b");
  REQUIRE(t.id("root") == 1);
  REQUIRE(t.root == t.id("root"));
}

TEST_CASE("duplicate edges collapse") {
  auto edges = small_edges();
  edges.push_back({"c", "a"});
  const Taxonomy t = fuse::build_taxonomy(edges);
  REQUIRE(t.edge_count() == 5);
}

TEST_CASE("parents and children are sorted and correct") {
  const Taxonomy t = fuse::build_taxonomy(small_edges());
  const int a = t.id("a");
  const int root = t.id("root");
  REQUIRE(t.parents_of(a) == std::vector<int>{root});
  const std::vector<int> rc = t.children_of(root);
  REQUIRE(rc.size() == 2);
  REQUIRE(std::is_sorted(rc.begin(), rc.end()));
  REQUIRE(t.is_leaf(t.id("c")));
  REQUIRE(!t.is_leaf(a));
  const std::vector<int> leaves = t.leaves();
  REQUIRE(leaves.size() == 3);  // c, d, e
}

TEST_CASE("depth counts nodes on the path from the root") {
  const Taxonomy t = fuse::build_taxonomy(small_edges());
  REQUIRE(t.depth(t.root) == 1);
  REQUIRE(t.depth(t.id("a")) == 2);
  REQUIRE(t.depth(t.id("c")) == 3);
}

TEST_CASE("lowest common ancestor via canonical chains") {
  const Taxonomy t = fuse::build_taxonomy(small_edges());
  REQUIRE(t.lca(t.id("c"), t.id("d")) == t.id("a"));
  REQUIRE(t.lca(t.id("c"), t.id("e")) == t.root);
  REQUIRE(t.lca(t.id("c"), t.id("c")) == t.id("c"));
  REQUIRE(t.lca(t.id("a"), t.id("c")) == t.id("a"));
}

TEST_CASE("cycles are reported with the offending edge") {
  std::vector<Edge> edges{{"a", "root"}, {"b", "a"}, {"a", "b"}};
  REQUIRE_THROWS_WITH(fuse::build_taxonomy(edges),
                      Catch::Matchers::ContainsSubstring("cycle"));
}

TEST_CASE("zero or multiple roots are rejected") {
  // a <-> b cycle means no root exists.
  std::vector<Edge> cyc{{"a", "b"}, {"b", "a"}};
  REQUIRE_THROWS(fuse::build_taxonomy(cyc));
  std::vector<Edge> multi{{"a", "r1"}, {"b", "r2"}};
  REQUIRE_THROWS_WITH(fuse::build_taxonomy(multi),
                      Catch::Matchers::ContainsSubstring("r1"));
}

TEST_CASE("unknown terms raise lookup errors") {
  const Taxonomy t = fuse::build_taxonomy(small_edges());
  REQUIRE_THROWS_AS(t.id("missing"), fuse::io_error);
}

TEST_CASE("taxonomy file round-trips byte-for-byte semantics") {
  const fs::path dir = temp_dir();
  const fs::path path = dir / "roundtrip.tsv";
  const Taxonomy t = fuse::build_taxonomy(small_edges());
  fuse::save_taxonomy(path, t);
  const Taxonomy u = fuse::load_taxonomy(path);
  REQUIRE(t == u);
  // Saving again produces identical bytes.
  const std::string first = fuse::read_text_file(path);
  fuse::save_taxonomy(path, u);
  REQUIRE(fuse::read_text_file(path) == first);
}

TEST_CASE("taxonomy loader skips comments and reports bad lines") {
  const fs::path dir = temp_dir();
  const fs::path path = dir / "comments.tsv";
  fuse::write_text_file(path,
                        "# edge list\n"
                        "a\troot\n"
                        "\n"
                        "b\troot\n");
  const Taxonomy t = fuse::load_taxonomy(path);
  REQUIRE(t.node_count() == 3);

  const fs::path bad = dir / "bad.tsv";
  fuse::write_text_file(bad, "a\troot\nmalformed-line\n");
  REQUIRE_THROWS_WITH(fuse::load_taxonomy(bad),
                      Catch::Matchers::ContainsSubstring(":2"));
}

TEST_CASE("missing files are reported with the path") {
  REQUIRE_THROWS_WITH(
      fuse::load_taxonomy("/nonexistent/nope.tsv"),
      Catch::Matchers::ContainsSubstring("nope.tsv"));
}

TEST_CASE("embedding table enforces coverage, dimension, and uniqueness") {
  const fs::path dir = temp_dir();
  const Taxonomy t = fuse::build_taxonomy(small_edges());

  const fs::path good = dir / "good_embed.tsv";
  std::string text;
  for (std::size_t i = 0; i < t.node_count(); ++i) {
    text += t.term(int(i)) + "\t0.5 0.25 -1\n";
  }
  fuse::write_text_file(good, text);
  const EmbeddingTable table = fuse::load_embeddings(good, t);
  REQUIRE(table.dim == 3);
  REQUIRE(table.at("a") == std::vector<double>{0.5, 0.25, -1.0});

  const fs::path short_dim = dir / "short_embed.tsv";
  fuse::write_text_file(short_dim, text + "extra\t0.5 0.25\n");
  REQUIRE_THROWS_WITH(fuse::load_embeddings(short_dim, t),
                      Catch::Matchers::ContainsSubstring("dimension mismatch"));

  const fs::path dup = dir / "dup_embed.tsv";
  fuse::write_text_file(dup, text + "a\t1 2 3\n");
  REQUIRE_THROWS_WITH(fuse::load_embeddings(dup, t),
                      Catch::Matchers::ContainsSubstring("duplicate"));

  const fs::path missing = dir / "missing_embed.tsv";
  fuse::write_text_file(missing, "a\t0.5 0.25 -1\n");
  REQUIRE_THROWS_WITH(fuse::load_embeddings(missing, t),
                      Catch::Matchers::ContainsSubstring("missing embedding"));
}

TEST_CASE("embedding save/load round-trip preserves exact values") {
  const fs::path dir = temp_dir();
  const Taxonomy t = fuse::build_taxonomy(small_edges());
  EmbeddingTable table;
  table.dim = 2;
  double v = 0.1234567890123456789;
  for (std::size_t i = 0; i < t.node_count(); ++i) {
    table.vectors[t.term(int(i))] = {v, -v * 3.0};
    v *= 1.7;
  }
  const fs::path path = dir / "embed_rt.tsv";
  fuse::save_embeddings(path, t, table);
  const EmbeddingTable back = fuse::load_embeddings(path, t);
  for (const auto& [term, vec] : table.vectors) {
    REQUIRE(back.at(term) == vec);  // shortest round-trip formatting
  }
}

TEST_CASE("query file round-trips") {
  const fs::path dir = temp_dir();
  const fs::path path = dir / "queries.tsv";
  const std::vector<TestQuery> queries{{"c", "a"}, {"e", "b"}};
  fuse::save_queries(path, queries);
  const std::vector<TestQuery> back = fuse::load_queries(path);
  REQUIRE(back.size() == 2);
  REQUIRE(back[0].query == "c");
  REQUIRE(back[0].parent == "a");
  REQUIRE(back[1].query == "e");
  REQUIRE(back[1].parent == "b");
}

TEST_CASE("leaf split removes the requested fraction of leaves") {
  fuse::SynthConfig cfg;
  cfg.depth = 3;
  cfg.branching = 4;
  const Taxonomy t = fuse::synth_taxonomy(cfg).taxonomy;
  const std::size_t n_leaves = t.leaves().size();
  REQUIRE(n_leaves == 64);

  const SplitResult split = fuse::split_leaves(t, 0.25, 11);
  REQUIRE(split.queries.size() == 16);  // floor(0.25 * 64)
  REQUIRE(split.train.node_count() == t.node_count() - 16);
  REQUIRE(split.train.edge_count() == t.edge_count() - 16);

  // Every removed leaf appears as a query whose parent stays in train.
  for (const auto& q : split.queries) {
    REQUIRE(!split.train.has_term(q.query));
    REQUIRE(split.train.has_term(q.parent));
    REQUIRE(t.has_term(q.query));
  }
}

TEST_CASE("leaf split is deterministic in the seed") {
  fuse::SynthConfig cfg;
  const Taxonomy t = fuse::synth_taxonomy(cfg).taxonomy;
  const SplitResult a = fuse::split_leaves(t, 0.15, 5);
  const SplitResult b = fuse::split_leaves(t, 0.15, 5);
  const SplitResult c = fuse::split_leaves(t, 0.15, 6);
  REQUIRE(a.train == b.train);
  REQUIRE(a.queries.size() == b.queries.size());
  bool same = a.queries.size() == c.queries.size();
  if (same) {
    for (std::size_t i = 0; i < a.queries.size(); ++i) {
      same = same && a.queries[i].query == c.queries[i].query;
    }
  }
  REQUIRE(!same);
}

TEST_CASE("split validation") {
  const Taxonomy tiny = fuse::build_taxonomy(small_edges());
  REQUIRE_THROWS_AS(fuse::split_leaves(tiny, 0.5, 1), std::invalid_argument);
  fuse::SynthConfig cfg;
  const Taxonomy t = fuse::synth_taxonomy(cfg).taxonomy;
  REQUIRE_THROWS_AS(fuse::split_leaves(t, 0.0, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(fuse::split_leaves(t, 1.0, 1), std::invalid_argument);
}

TEST_CASE("synthetic taxonomy has the closed-form node and edge counts") {
  fuse::SynthConfig cfg;
  cfg.depth = 3;
  cfg.branching = 4;
  const fuse::SynthResult r = fuse::synth_taxonomy(cfg);
  // 1 + 4 + 16 + 64
  REQUIRE(r.taxonomy.node_count() == 85);
  REQUIRE(r.taxonomy.edge_count() == 84);
  REQUIRE(r.embeddings.dim == cfg.embed_dim);
  REQUIRE(r.embeddings.vectors.size() == 85);

  fuse::SynthConfig deep;
  deep.depth = 2;
  deep.branching = 3;
  const fuse::SynthResult r2 = fuse::synth_taxonomy(deep);
  REQUIRE(r2.taxonomy.node_count() == 13);  // 1 + 3 + 9
  REQUIRE(r2.taxonomy.edge_count() == 12);
}

TEST_CASE("synthetic generation is deterministic in the seed") {
  fuse::SynthConfig cfg;
  cfg.seed = 123;
  const fuse::SynthResult a = fuse::synth_taxonomy(cfg);
  const fuse::SynthResult b = fuse::synth_taxonomy(cfg);
  REQUIRE(a.taxonomy == b.taxonomy);
  REQUIRE(a.embeddings.vectors == b.embeddings.vectors);
  cfg.seed = 124;
  const fuse::SynthResult c = fuse::synth_taxonomy(cfg);
  REQUIRE(a.embeddings.vectors != c.embeddings.vectors);
}

TEST_CASE("synthetic embeddings reflect shared ancestry") {
  // Siblings share all ancestors; nodes in different top-level subtrees share
  // only the root. With small noise, sibling embeddings must on average be
  // closer than cross-subtree pairs.
  fuse::SynthConfig cfg;
  cfg.depth = 3;
  cfg.branching = 4;
  cfg.noise = 0.05;
  const fuse::SynthResult r = fuse::synth_taxonomy(cfg);
  const Taxonomy& t = r.taxonomy;

  const auto dist2 = [&](const std::string& x, const std::string& y) {
    const auto& a = r.embeddings.at(x);
    const auto& b = r.embeddings.at(y);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    return s;
  };

  double sibling_sum = 0.0;
  int sibling_n = 0;
  double cross_sum = 0.0;
  int cross_n = 0;
  const std::vector<int> leaves = t.leaves();
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    for (std::size_t j = i + 1; j < leaves.size(); ++j) {
      const int lca = t.lca(leaves[i], leaves[j]);
      const double d = dist2(t.term(leaves[i]), t.term(leaves[j]));
      if (t.canonical_parent(leaves[i]) == t.canonical_parent(leaves[j])) {
        sibling_sum += d;
        ++sibling_n;
      } else if (lca == t.root) {
        cross_sum += d;
        ++cross_n;
      }
    }
  }
  REQUIRE(sibling_n > 0);
  REQUIRE(cross_n > 0);
  REQUIRE(sibling_sum / sibling_n < cross_sum / cross_n);
}

TEST_CASE("synthetic config is validated") {
  fuse::SynthConfig cfg;
  cfg.depth = 1;
  REQUIRE_THROWS_AS(fuse::synth_taxonomy(cfg), std::invalid_argument);
  cfg.depth = 3;
  cfg.branching = 1;
  REQUIRE_THROWS_AS(fuse::synth_taxonomy(cfg), std::invalid_argument);
}
