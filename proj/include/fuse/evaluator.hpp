#pragma once

// Evaluation of trained models on taxonomy expansion: rank candidate
// anchors for held-out queries (accuracy / MRR / Wu&Palmer), plus the two
// set-operation probes that predict a parent from the union of its children
// and a missing sibling from parent-minus-child.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fuse/algebra.hpp"
#include "fuse/io.hpp"
#include "fuse/mapper.hpp"
#include "fuse/taxonomy.hpp"
#include "fuse/trainer.hpp"

namespace fuse {

enum class ScoreMode { Containment, Psi, Sum };

inline std::string_view to_string(ScoreMode m) {
  switch (m) {
    case ScoreMode::Containment: return "containment";
    case ScoreMode::Psi: return "psi";
    case ScoreMode::Sum: return "sum";
  }
  return "containment";
}

inline ScoreMode parse_score_mode(std::string_view s) {
  if (s == "containment") return ScoreMode::Containment;
  if (s == "psi") return ScoreMode::Psi;
  if (s == "sum") return ScoreMode::Sum;
  throw std::invalid_argument("unknown score mode: '" + std::string(s) + "'");
}

// Membership vectors for every taxonomy node, by node id. `scored` carries
// the Euclid-normalized copies when the model was trained with that flag;
// set-operation distances always use `raw`.
struct NodeVectors {
  std::vector<std::vector<double>> raw;
  std::vector<std::vector<double>> scored;
};

namespace detail {

inline std::vector<double> maybe_normalize(std::vector<double> v,
                                           bool euclid) {
  if (!euclid) return v;
  CompensatedSum sq;
  for (double x : v) sq.add(x * x);
  const double norm = std::sqrt(sq.value());
  if (norm > 1e-12) {
    for (double& x : v) x /= norm;
  }
  return v;
}

inline double squared_distance(std::span<const double> a,
                               std::span<const double> b) {
  CompensatedSum s;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s.add(d * d);
  }
  return s.value();
}

}  // namespace detail

inline NodeVectors embed_nodes(const ModelCheckpoint& ckpt,
                               const Taxonomy& taxonomy,
                               const EmbeddingTable& embeddings) {
  NodeVectors out;
  out.raw.reserve(taxonomy.node_count());
  out.scored.reserve(taxonomy.node_count());
  for (int v = 0; v < int(taxonomy.node_count()); ++v) {
    const FuzzyVec u =
        map_entity(embeddings.at(taxonomy.term(v)), ckpt.model.mapper);
    out.raw.push_back(u.values());
    out.scored.push_back(detail::maybe_normalize(
        u.values(), ckpt.config.euclid_norm_in_score));
  }
  return out;
}

struct RankedPrediction {
  std::vector<int> order;      // anchor ids, best first
  std::vector<double> scores;  // aligned with order
  int predicted = -1;
  std::size_t rank = 0;        // 1-based rank of the true anchor
  bool psi_fallback = false;
};

// Scores every anchor against the query and sorts descending, ties toward
// the smaller anchor id. Under Containment (or Sum) a query whose measure
// is degenerate falls back to the Psi score for all anchors.
inline RankedPrediction rank_anchors(std::span<const double> query_scored,
                                     std::span<const int> anchor_ids,
                                     const NodeVectors& nodes,
                                     std::span<const double> xi,
                                     LogicSystem logic, ScoreMode mode,
                                     int true_anchor) {
  if (anchor_ids.empty()) {
    throw std::invalid_argument("rank_anchors: empty anchor set");
  }
  RankedPrediction out;

  double query_measure = 0.0;
  bool degenerate = false;
  if (mode != ScoreMode::Psi) {
    query_measure = measure_span(query_scored, xi);
    degenerate = query_measure <= kDegenerateMeasureEps;
    out.psi_fallback = degenerate;
  }

  std::vector<std::pair<double, int>> scored;
  scored.reserve(anchor_ids.size());
  for (int a : anchor_ids) {
    const double psi =
        psi_span(nodes.scored[std::size_t(a)], query_scored, xi, logic);
    double score = psi;
    if (mode != ScoreMode::Psi && !degenerate) {
      const double containment = psi / query_measure;
      score = mode == ScoreMode::Containment ? containment : containment + psi;
    }
    scored.emplace_back(score, a);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return x.second < y.second;
  });

  out.order.reserve(scored.size());
  out.scores.reserve(scored.size());
  for (const auto& [score, a] : scored) {
    out.order.push_back(a);
    out.scores.push_back(score);
  }
  out.predicted = out.order.front();
  for (std::size_t i = 0; i < out.order.size(); ++i) {
    if (out.order[i] == true_anchor) {
      out.rank = i + 1;
      break;
    }
  }
  return out;
}

// 2 * depth(lca) / (depth(a) + depth(b)), root depth 1.
inline double wu_palmer(const Taxonomy& t, int a, int b) {
  const int l = t.lca(a, b);
  return 2.0 * double(t.depth(l)) / double(t.depth(a) + t.depth(b));
}

struct Metrics {
  double acc = 0.0;
  double mrr = 0.0;
  double wup = 0.0;
  std::size_t query_count = 0;
  std::size_t psi_fallbacks = 0;
};

struct QueryDetail {
  std::string query;
  std::string predicted;
  std::size_t rank = 0;
  double wup = 0.0;
};

struct EvalResult {
  Metrics metrics;
  std::vector<QueryDetail> details;
};

// Ranks every train-graph node as a candidate anchor for each query.
// Query terms must have embeddings; true parents must be in the train graph.
inline EvalResult evaluate(const ModelCheckpoint& ckpt, const Taxonomy& train,
                           const EmbeddingTable& embeddings,
                           std::span<const TestQuery> queries,
                           ScoreMode mode) {
  if (queries.empty()) {
    throw std::invalid_argument("evaluate: no queries");
  }
  const NodeVectors nodes = embed_nodes(ckpt, train, embeddings);
  const std::vector<double> xi = ckpt.model.weights.effective();

  std::vector<int> anchors(train.node_count());
  for (int v = 0; v < int(train.node_count()); ++v) anchors[std::size_t(v)] = v;

  EvalResult out;
  CompensatedSum acc, mrr, wup;
  for (const auto& q : queries) {
    const int true_anchor = train.id(q.parent);  // throws if absent
    const std::vector<double> query_scored = detail::maybe_normalize(
        map_entity(embeddings.at(q.query), ckpt.model.mapper).values(),
        ckpt.config.euclid_norm_in_score);
    const RankedPrediction pred =
        rank_anchors(query_scored, anchors, nodes, xi, ckpt.config.logic,
                     mode, true_anchor);

    acc.add(pred.predicted == true_anchor ? 1.0 : 0.0);
    mrr.add(1.0 / double(pred.rank));
    const double w = wu_palmer(train, pred.predicted, true_anchor);
    wup.add(w);
    if (pred.psi_fallback) ++out.metrics.psi_fallbacks;
    out.details.push_back(
        QueryDetail{q.query, train.term(pred.predicted), pred.rank, w});
  }
  const double inv = 1.0 / double(queries.size());
  out.metrics.acc = acc.value() * inv;
  out.metrics.mrr = mrr.value() * inv;
  out.metrics.wup = wup.value() * inv;
  out.metrics.query_count = queries.size();
  return out;
}

struct SetOpMetrics {
  double acc = 0.0;
  double mrr = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

// Union probe: the product-t-conorm union of a parent's child vectors
// should land nearest the parent itself. Candidates are all nodes with at
// least one child; parents with fewer than two children are skipped.
inline SetOpMetrics union_inference(const ModelCheckpoint& ckpt,
                                    const Taxonomy& taxonomy,
                                    const EmbeddingTable& embeddings) {
  const NodeVectors nodes = embed_nodes(ckpt, taxonomy, embeddings);
  const std::size_t d = ckpt.config.partitions;

  std::vector<int> candidates;
  for (int v = 0; v < int(taxonomy.node_count()); ++v) {
    if (!taxonomy.children_of(v).empty()) candidates.push_back(v);
  }

  SetOpMetrics out;
  CompensatedSum acc, mrr;
  for (int parent : candidates) {
    const auto& kids = taxonomy.children_of(parent);
    if (kids.size() < 2) {
      ++out.skipped;
      continue;
    }
    std::vector<double> u = nodes.raw[std::size_t(kids[0])];
    for (std::size_t k = 1; k < kids.size(); ++k) {
      const auto& c = nodes.raw[std::size_t(kids[k])];
      for (std::size_t i = 0; i < d; ++i) {
        u[i] = std::min(u[i] + c[i] - u[i] * c[i], 1.0);
      }
    }

    std::vector<std::pair<double, int>> ranking;
    ranking.reserve(candidates.size());
    for (int c : candidates) {
      ranking.emplace_back(detail::squared_distance(u, nodes.raw[std::size_t(c)]),
                           c);
    }
    std::sort(ranking.begin(), ranking.end());
    acc.add(ranking.front().second == parent ? 1.0 : 0.0);
    for (std::size_t i = 0; i < ranking.size(); ++i) {
      if (ranking[i].second == parent) {
        mrr.add(1.0 / double(i + 1));
        break;
      }
    }
    ++out.evaluated;
  }
  if (out.evaluated > 0) {
    out.acc = acc.value() / double(out.evaluated);
    out.mrr = mrr.value() / double(out.evaluated);
  }
  return out;
}

// Complement probe: parent minus one held-out child should land near the
// remaining children. One evaluation per (parent, held-out child) pair;
// candidates are all non-root nodes. Credit when the nearest candidate is
// any remaining child; the MRR rank is the best rank among them.
inline SetOpMetrics complement_inference(const ModelCheckpoint& ckpt,
                                         const Taxonomy& taxonomy,
                                         const EmbeddingTable& embeddings) {
  const NodeVectors nodes = embed_nodes(ckpt, taxonomy, embeddings);
  const std::size_t d = ckpt.config.partitions;

  std::vector<int> candidates;
  for (int v = 0; v < int(taxonomy.node_count()); ++v) {
    if (v != taxonomy.root) candidates.push_back(v);
  }

  SetOpMetrics out;
  CompensatedSum acc, mrr;
  for (int parent = 0; parent < int(taxonomy.node_count()); ++parent) {
    const auto& kids = taxonomy.children_of(parent);
    if (kids.empty()) continue;
    if (kids.size() < 2) {
      ++out.skipped;
      continue;
    }
    for (int held_out : kids) {
      std::vector<double> s(d);
      const auto& up = nodes.raw[std::size_t(parent)];
      const auto& ub = nodes.raw[std::size_t(held_out)];
      for (std::size_t i = 0; i < d; ++i) s[i] = up[i] * (1.0 - ub[i]);

      std::vector<std::pair<double, int>> ranking;
      ranking.reserve(candidates.size());
      for (int c : candidates) {
        ranking.emplace_back(
            detail::squared_distance(s, nodes.raw[std::size_t(c)]), c);
      }
      std::sort(ranking.begin(), ranking.end());

      bool top_is_remaining = false;
      std::size_t best_rank = 0;
      for (std::size_t i = 0; i < ranking.size(); ++i) {
        const int c = ranking[i].second;
        const bool remaining =
            c != held_out &&
            std::find(kids.begin(), kids.end(), c) != kids.end();
        if (remaining) {
          if (i == 0) top_is_remaining = true;
          best_rank = i + 1;
          break;
        }
      }
      acc.add(top_is_remaining ? 1.0 : 0.0);
      mrr.add(1.0 / double(best_rank));
      ++out.evaluated;
    }
  }
  if (out.evaluated > 0) {
    out.acc = acc.value() / double(out.evaluated);
    out.mrr = mrr.value() / double(out.evaluated);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report serialization (shared by the CLI and tests so bytes match).

inline std::string serialize_metrics(const Metrics& m) {
  std::string out;
  out += "acc\t" + format_double(m.acc) + "\n";
  out += "mrr\t" + format_double(m.mrr) + "\n";
  out += "wup\t" + format_double(m.wup) + "\n";
  return out;
}

inline void write_metrics_tsv(const std::filesystem::path& path,
                              const Metrics& m) {
  write_text_file(path, serialize_metrics(m));
}

inline std::string serialize_setop_metrics(const SetOpMetrics& m) {
  std::string out;
  out += "acc\t" + format_double(m.acc) + "\n";
  out += "mrr\t" + format_double(m.mrr) + "\n";
  return out;
}

inline void write_setop_metrics_tsv(const std::filesystem::path& path,
                                    const SetOpMetrics& m) {
  write_text_file(path, serialize_setop_metrics(m));
}

inline std::string serialize_query_details(
    std::span<const QueryDetail> details) {
  std::string out = "query\tpredicted\trank\twup\n";
  for (const auto& q : details) {
    out += q.query;
    out += '\t';
    out += q.predicted;
    out += '\t';
    out += std::to_string(q.rank);
    out += '\t';
    out += format_double(q.wup);
    out += '\n';
  }
  return out;
}

inline void write_query_details_tsv(const std::filesystem::path& path,
                                    std::span<const QueryDetail> details) {
  write_text_file(path, serialize_query_details(details));
}

}  // namespace fuse
