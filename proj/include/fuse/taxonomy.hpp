#pragma once

// Taxonomy ingestion and derived structure. A taxonomy is a single-rooted
// DAG given as child<TAB>parent edges; node ids are dense and assigned in
// first-appearance order, which keeps every downstream computation
// deterministic for a fixed edge list. Also here: embedding tables, the
// leaf train/test split, and a synthetic taxonomy generator.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fuse/io.hpp"
#include "fuse/numeric.hpp"
#include "fuse/rng.hpp"

namespace fuse {

class Taxonomy {
 public:
  // Assembled by build_taxonomy below.
  std::vector<std::string> terms;
  std::vector<std::pair<int, int>> edge_list;  // (child, parent), input order
  std::vector<std::vector<int>> parents;       // ascending ids
  std::vector<std::vector<int>> children;      // ascending ids
  int root = -1;

  std::size_t node_count() const { return terms.size(); }
  std::size_t edge_count() const { return edge_list.size(); }

  const std::string& term(int id) const { return terms[std::size_t(id)]; }

  bool has_term(const std::string& t) const { return id_of_.count(t) != 0; }

  int id(const std::string& t) const {
    const auto it = id_of_.find(t);
    if (it == id_of_.end()) {
      throw io_error("unknown taxonomy term: '" + t + "'");
    }
    return it->second;
  }

  const std::vector<int>& parents_of(int id) const {
    return parents[std::size_t(id)];
  }
  const std::vector<int>& children_of(int id) const {
    return children[std::size_t(id)];
  }

  bool is_leaf(int id) const { return children[std::size_t(id)].empty(); }

  std::vector<int> leaves() const {
    std::vector<int> out;
    for (int v = 0; v < int(node_count()); ++v) {
      if (is_leaf(v)) out.push_back(v);
    }
    return out;
  }

  // Depth of the root is 1; for multi-parent nodes the depth follows the
  // shallowest parent.
  int depth(int id) const { return depth_[std::size_t(id)]; }

  // Shallowest parent, ties broken toward the smaller id; -1 for the root.
  int canonical_parent(int id) const { return canon_[std::size_t(id)]; }

  // Lowest common ancestor along canonical-parent chains.
  int lca(int a, int b) const {
    while (depth(a) > depth(b)) a = canon_[std::size_t(a)];
    while (depth(b) > depth(a)) b = canon_[std::size_t(b)];
    while (a != b) {
      a = canon_[std::size_t(a)];
      b = canon_[std::size_t(b)];
    }
    return a;
  }

  friend bool operator==(const Taxonomy& a, const Taxonomy& b) {
    return a.terms == b.terms && a.edge_list == b.edge_list;
  }

 private:
  friend Taxonomy build_taxonomy(
      std::span<const std::pair<std::string, std::string>> edges);

  std::unordered_map<std::string, int> id_of_;
  std::vector<int> depth_;
  std::vector<int> canon_;
};

// Validates and indexes an edge list: duplicate edges collapse, exactly one
// root must remain, and any parent-ward cycle is an error naming one of its
// edges.
inline Taxonomy build_taxonomy(
    std::span<const std::pair<std::string, std::string>> edges) {
  if (edges.empty()) {
    throw io_error("taxonomy: no edges");
  }
  Taxonomy t;
  const auto intern = [&t](const std::string& term) {
    const auto it = t.id_of_.find(term);
    if (it != t.id_of_.end()) return it->second;
    const int id = int(t.terms.size());
    t.terms.push_back(term);
    t.id_of_.emplace(term, id);
    return id;
  };

  std::vector<std::vector<int>> parent_sets;
  for (const auto& [child_term, parent_term] : edges) {
    const int c = intern(child_term);
    const int p = intern(parent_term);
    parent_sets.resize(t.terms.size());
    auto& ps = parent_sets[std::size_t(c)];
    if (std::find(ps.begin(), ps.end(), p) != ps.end()) {
      continue;  // duplicate edge
    }
    ps.push_back(p);
    t.edge_list.emplace_back(c, p);
  }
  parent_sets.resize(t.terms.size());

  const int n = int(t.node_count());
  t.parents.assign(std::size_t(n), {});
  t.children.assign(std::size_t(n), {});
  for (const auto& [c, p] : t.edge_list) {
    t.parents[std::size_t(c)].push_back(p);
    t.children[std::size_t(p)].push_back(c);
  }
  for (auto& v : t.parents) std::sort(v.begin(), v.end());
  for (auto& v : t.children) std::sort(v.begin(), v.end());

  // Parent-ward DFS cycle check (iterative, deterministic order).
  // color: 0 unvisited, 1 on stack, 2 done.
  std::vector<int> color(std::size_t(n), 0);
  for (int start = 0; start < n; ++start) {
    if (color[std::size_t(start)] != 0) continue;
    std::vector<std::pair<int, std::size_t>> stack{{start, 0}};
    color[std::size_t(start)] = 1;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      const auto& ps = t.parents[std::size_t(v)];
      if (next < ps.size()) {
        const int p = ps[next++];
        if (color[std::size_t(p)] == 1) {
          throw io_error("taxonomy: cycle through edge " + t.terms[std::size_t(v)] +
                         " -> " + t.terms[std::size_t(p)]);
        }
        if (color[std::size_t(p)] == 0) {
          color[std::size_t(p)] = 1;
          stack.emplace_back(p, 0);
        }
      } else {
        color[std::size_t(v)] = 2;
        stack.pop_back();
      }
    }
  }

  // Root detection.
  std::vector<int> roots;
  for (int v = 0; v < n; ++v) {
    if (t.parents[std::size_t(v)].empty()) roots.push_back(v);
  }
  if (roots.empty()) {
    throw io_error("taxonomy: no root node");
  }
  if (roots.size() > 1) {
    std::string msg = "taxonomy: multiple roots:";
    for (int r : roots) msg += " " + t.terms[std::size_t(r)];
    throw io_error(msg);
  }
  t.root = roots[0];

  // BFS over child edges gives min-depth (root depth 1).
  t.depth_.assign(std::size_t(n), 0);
  t.canon_.assign(std::size_t(n), -1);
  std::vector<int> queue{t.root};
  t.depth_[std::size_t(t.root)] = 1;
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    const int u = queue[qi];
    for (int v : t.children[std::size_t(u)]) {
      if (t.depth_[std::size_t(v)] == 0) {
        t.depth_[std::size_t(v)] = t.depth_[std::size_t(u)] + 1;
        queue.push_back(v);
      }
    }
  }
  for (int v = 0; v < n; ++v) {
    if (t.depth_[std::size_t(v)] == 0) {
      throw io_error("taxonomy: node not reachable from root: " +
                     t.terms[std::size_t(v)]);
    }
  }
  for (int v = 0; v < n; ++v) {
    if (v == t.root) continue;
    for (int p : t.parents[std::size_t(v)]) {  // ascending, first hit wins
      if (t.depth_[std::size_t(p)] == t.depth_[std::size_t(v)] - 1) {
        t.canon_[std::size_t(v)] = p;
        break;
      }
    }
  }
  return t;
}

// child<TAB>parent per line; blank lines and lines starting with '#' are
// ignored.
inline Taxonomy load_taxonomy(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::vector<std::pair<std::string, std::string>> edges;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(lines[i], '\t');
    if (fields.size() != 2) {
      throw io_error(path.string() + ":" + std::to_string(i + 1) +
                     ": expected child<TAB>parent, got " +
                     std::to_string(fields.size()) + " fields");
    }
    const std::string child(trim(fields[0]));
    const std::string parent(trim(fields[1]));
    if (child.empty() || parent.empty()) {
      throw io_error(path.string() + ":" + std::to_string(i + 1) +
                     ": empty term");
    }
    edges.emplace_back(child, parent);
  }
  try {
    return build_taxonomy(edges);
  } catch (const io_error& e) {
    throw io_error(path.string() + ": " + e.what());
  }
}

inline void save_taxonomy(const std::filesystem::path& path,
                          const Taxonomy& t) {
  std::string out;
  for (const auto& [c, p] : t.edge_list) {
    out += t.term(c);
    out += '\t';
    out += t.term(p);
    out += '\n';
  }
  write_text_file(path, out);
}

struct EmbeddingTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;

  const std::vector<double>& at(const std::string& term) const {
    const auto it = vectors.find(term);
    if (it == vectors.end()) {
      throw io_error("no embedding for term: '" + term + "'");
    }
    return it->second;
  }

  bool contains(const std::string& term) const {
    return vectors.count(term) != 0;
  }
};

// term<TAB>v1 v2 ... ve per line; every taxonomy term must be covered and
// all rows must share one dimension.
inline EmbeddingTable load_embeddings(const std::filesystem::path& path,
                                      const Taxonomy& taxonomy) {
  const std::string text = read_text_file(path);
  EmbeddingTable table;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(lines[i], '\t');
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    if (fields.size() != 2) {
      throw io_error(where + ": expected term<TAB>values, got " +
                     std::to_string(fields.size()) + " fields");
    }
    const std::string term(trim(fields[0]));
    if (term.empty()) {
      throw io_error(where + ": empty term");
    }
    const auto tokens = split_spaces(fields[1]);
    if (tokens.empty()) {
      throw io_error(where + ": no embedding values");
    }
    std::vector<double> vec;
    vec.reserve(tokens.size());
    for (const auto& tok : tokens) vec.push_back(parse_double(tok, where));
    if (!all_finite(vec)) {
      throw io_error(where + ": non-finite embedding value");
    }
    if (table.dim == 0) {
      table.dim = vec.size();
    } else if (vec.size() != table.dim) {
      throw io_error(where + ": dimension mismatch (expected " +
                     std::to_string(table.dim) + ", got " +
                     std::to_string(vec.size()) + ")");
    }
    if (!table.vectors.emplace(term, std::move(vec)).second) {
      throw io_error(where + ": duplicate embedding for term '" + term + "'");
    }
  }
  if (table.vectors.empty()) {
    throw io_error(path.string() + ": no embeddings");
  }
  for (const auto& term : taxonomy.terms) {
    if (!table.contains(term)) {
      throw io_error(path.string() + ": missing embedding for taxonomy term '" +
                     term + "'");
    }
  }
  return table;
}

// Rows follow taxonomy id order so identical inputs serialize identically.
inline void save_embeddings(const std::filesystem::path& path,
                            const Taxonomy& taxonomy,
                            const EmbeddingTable& table) {
  std::string out;
  for (const auto& term : taxonomy.terms) {
    const auto& vec = table.at(term);
    out += term;
    out += '\t';
    for (std::size_t i = 0; i < vec.size(); ++i) {
      if (i) out += ' ';
      out += format_double(vec[i]);
    }
    out += '\n';
  }
  write_text_file(path, out);
}

// One test query per (removed leaf, parent) pair.
struct TestQuery {
  std::string query;
  std::string parent;
};

// query<TAB>true-parent per line, same conventions as the taxonomy format.
inline std::vector<TestQuery> load_queries(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::vector<TestQuery> out;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(lines[i], '\t');
    if (fields.size() != 2) {
      throw io_error(path.string() + ":" + std::to_string(i + 1) +
                     ": expected query<TAB>parent, got " +
                     std::to_string(fields.size()) + " fields");
    }
    const std::string query(trim(fields[0]));
    const std::string parent(trim(fields[1]));
    if (query.empty() || parent.empty()) {
      throw io_error(path.string() + ":" + std::to_string(i + 1) +
                     ": empty term");
    }
    out.push_back(TestQuery{query, parent});
  }
  if (out.empty()) {
    throw io_error(path.string() + ": no queries");
  }
  return out;
}

inline void save_queries(const std::filesystem::path& path,
                         std::span<const TestQuery> queries) {
  std::string out;
  for (const auto& q : queries) {
    out += q.query;
    out += '\t';
    out += q.parent;
    out += '\n';
  }
  write_text_file(path, out);
}

struct SplitResult {
  Taxonomy train;
  std::vector<TestQuery> queries;
};

// Removes floor(fraction * #leaves) leaves (chosen by seeded shuffle) from
// the graph; each removed leaf contributes one query per parent edge.
inline SplitResult split_leaves(const Taxonomy& t, double fraction,
                                std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("split_leaves: fraction must be in (0,1)");
  }
  const std::vector<int> all_leaves = t.leaves();
  if (all_leaves.size() < 5) {
    throw std::invalid_argument(
        "split_leaves: need at least 5 leaves, have " +
        std::to_string(all_leaves.size()));
  }
  const std::size_t n_test =
      std::size_t(fraction * double(all_leaves.size()));

  std::vector<int> pool = all_leaves;
  Rng rng(seed);
  rng.shuffle(pool);
  std::vector<int> removed(pool.begin(), pool.begin() + std::ptrdiff_t(n_test));
  std::sort(removed.begin(), removed.end());

  std::vector<char> is_removed(t.node_count(), 0);
  for (int v : removed) is_removed[std::size_t(v)] = 1;

  std::vector<std::pair<std::string, std::string>> kept;
  kept.reserve(t.edge_count());
  for (const auto& [c, p] : t.edge_list) {
    if (is_removed[std::size_t(c)] || is_removed[std::size_t(p)]) continue;
    kept.emplace_back(t.term(c), t.term(p));
  }

  SplitResult out{build_taxonomy(kept), {}};
  for (int v : removed) {
    for (int p : t.parents_of(v)) {
      out.queries.push_back(TestQuery{t.term(v), t.term(p)});
    }
  }
  return out;
}

struct SynthConfig {
  std::size_t depth = 3;      // generations below the root
  std::size_t branching = 4;  // children per internal node
  std::size_t embed_dim = 32;
  double noise = 0.05;
  std::uint64_t seed = 7;
};

struct SynthResult {
  Taxonomy taxonomy;
  EmbeddingTable embeddings;
};

// Complete B-ary tree of the requested depth. Embeddings are a fixed random
// projection of each node's ancestor-indicator vector plus Gaussian noise,
// so siblings share most of their signal and unrelated nodes share none.
inline SynthResult synth_taxonomy(const SynthConfig& cfg) {
  if (cfg.depth < 2 || cfg.branching < 2) {
    throw std::invalid_argument("synth_taxonomy: need depth >= 2 and branching >= 2");
  }
  if (cfg.embed_dim == 0) {
    throw std::invalid_argument("synth_taxonomy: embed_dim must be >= 1");
  }
  if (cfg.noise < 0.0) {
    throw std::invalid_argument("synth_taxonomy: noise must be >= 0");
  }

  // BFS construction: node 0 is the root "n0", children named
  // parent + "." + index.
  std::vector<std::string> names{"n0"};
  std::vector<int> parent_of{-1};
  std::vector<std::pair<std::string, std::string>> edges;
  std::size_t level_start = 0;
  for (std::size_t level = 0; level < cfg.depth; ++level) {
    const std::size_t level_end = names.size();
    for (std::size_t u = level_start; u < level_end; ++u) {
      for (std::size_t j = 0; j < cfg.branching; ++j) {
        names.push_back(names[u] + "." + std::to_string(j));
        parent_of.push_back(int(u));
        edges.emplace_back(names.back(), names[u]);
      }
    }
    level_start = level_end;
  }

  const std::size_t n_nodes = names.size();
  Rng rng(cfg.seed);

  // Projection matrix (embed_dim x n_nodes), scaled so leaf embeddings have
  // roughly unit-variance coordinates.
  const double scale = 1.0 / std::sqrt(double(cfg.depth + 1));
  std::vector<double> proj(cfg.embed_dim * n_nodes);
  for (double& v : proj) v = rng.normal() * scale;

  SynthResult out;
  out.taxonomy = build_taxonomy(edges);
  out.embeddings.dim = cfg.embed_dim;
  for (std::size_t v = 0; v < n_nodes; ++v) {
    std::vector<double> x(cfg.embed_dim, 0.0);
    for (int a = int(v); a != -1; a = parent_of[std::size_t(a)]) {
      for (std::size_t i = 0; i < cfg.embed_dim; ++i) {
        x[i] += proj[i * n_nodes + std::size_t(a)];
      }
    }
    for (std::size_t i = 0; i < cfg.embed_dim; ++i) {
      x[i] += cfg.noise * rng.normal();
    }
    out.embeddings.vectors.emplace(names[v], std::move(x));
  }
  return out;
}

}  // namespace fuse
