// Evaluator: anchor ranking for taxonomy expansion plus the union and
// complement set-operation probes, verified on hand-computable fixtures.

#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "fuse/evaluator.hpp"
#include "fuse/taxonomy.hpp"
#include "fuse/trainer.hpp"

using fuse::EmbeddingTable;
using fuse::EvalResult;
using fuse::LogicSystem;
using fuse::Metrics;
using fuse::ModelCheckpoint;
using fuse::NodeVectors;
using fuse::OutputNorm;
using fuse::QueryDetail;
using fuse::RankedPrediction;
using fuse::ScoreMode;
using fuse::SetOpMetrics;
using fuse::Taxonomy;
using fuse::TestQuery;
using fuse::WeightNorm;

namespace {

// A checkpoint whose mapper is the identity with clamp01, so membership
// vectors equal the (unit-box) embeddings and every score is hand-computable.
ModelCheckpoint identity_checkpoint(std::size_t d) {
  ModelCheckpoint ckpt;
  ckpt.config.partitions = d;
  ckpt.config.hidden = {};
  ckpt.config.output_norm = OutputNorm::Clamp01;
  ckpt.config.weight_norm = WeightNorm::None;
  ckpt.config.logic = LogicSystem::Product;
  ckpt.config.euclid_norm_in_score = false;

  fuse::DenseLayer layer;
  layer.in = d;
  layer.out = d;
  layer.weight.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) layer.weight[i * d + i] = 1.0;
  layer.bias.assign(d, 0.0);
  ckpt.model.mapper.layers = {layer};
  ckpt.model.mapper.output_norm = OutputNorm::Clamp01;
  ckpt.model.weights.raw.assign(d, 1.0 / double(d));
  ckpt.model.weights.mode = WeightNorm::None;
  return ckpt;
}

using Edge = std::pair<std::string, std::string>;

struct World {
  Taxonomy taxonomy;
  EmbeddingTable embeddings;
  ModelCheckpoint ckpt;
};

// root with children p1, p2; ids: p1=0, root=1, p2=2.
World rank_world() {
  World w;
  w.taxonomy =
      fuse::build_taxonomy(std::vector<Edge>{{"p1", "root"}, {"p2", "root"}});
  w.embeddings.dim = 4;
  w.embeddings.vectors["root"] = {1.0, 1.0, 1.0, 1.0};
  w.embeddings.vectors["p1"] = {1.0, 1.0, 0.0, 0.0};
  w.embeddings.vectors["p2"] = {0.0, 0.0, 1.0, 1.0};
  w.embeddings.vectors["q"] = {1.0, 0.0, 0.0, 0.0};
  w.embeddings.vectors["r"] = {0.0, 0.0, 1.0, 0.0};
  w.embeddings.vectors["z"] = {0.0, 0.0, 0.0, 0.0};
  w.ckpt = identity_checkpoint(4);
  return w;
}

// Two balanced subtrees: root -> {a, b}, a -> {a1, a2}, b -> {b1, b2}.
// Every parent's membership vector is exactly the union of its children's.
World setop_world() {
  World w;
  w.taxonomy = fuse::build_taxonomy(std::vector<Edge>{{"a", "root"},
                                                      {"b", "root"},
                                                      {"a1", "a"},
                                                      {"a2", "a"},
                                                      {"b1", "b"},
                                                      {"b2", "b"}});
  w.embeddings.dim = 4;
  w.embeddings.vectors["root"] = {1.0, 1.0, 1.0, 1.0};
  w.embeddings.vectors["a"] = {1.0, 1.0, 0.0, 0.0};
  w.embeddings.vectors["b"] = {0.0, 0.0, 1.0, 1.0};
  w.embeddings.vectors["a1"] = {1.0, 0.0, 0.0, 0.0};
  w.embeddings.vectors["a2"] = {0.0, 1.0, 0.0, 0.0};
  w.embeddings.vectors["b1"] = {0.0, 0.0, 1.0, 0.0};
  w.embeddings.vectors["b2"] = {0.0, 0.0, 0.0, 1.0};
  w.ckpt = identity_checkpoint(4);
  return w;
}

}  // namespace

TEST_CASE("an all-ones anchor has containment exactly one") {
  const World w = rank_world();
  const NodeVectors nodes = fuse::embed_nodes(w.ckpt, w.taxonomy, w.embeddings);
  const std::vector<double> xi = w.ckpt.model.weights.effective();
  const std::vector<int> anchors{0, 1, 2};

  // Query [1,0,0,0]: psi(root) = measure(query), so containment(root) = 1.
  const RankedPrediction pred = fuse::rank_anchors(
      w.embeddings.at("q"), anchors, nodes, xi, LogicSystem::Product,
      ScoreMode::Containment, /*true_anchor=*/0);
  const std::size_t root_pos =
      std::find(pred.order.begin(), pred.order.end(), 1) - pred.order.begin();
  REQUIRE(pred.scores[root_pos] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("score ties break toward the smaller anchor id") {
  const World w = rank_world();
  const NodeVectors nodes = fuse::embed_nodes(w.ckpt, w.taxonomy, w.embeddings);
  const std::vector<double> xi = w.ckpt.model.weights.effective();
  const std::vector<int> anchors{0, 1, 2};

  // Query q scores: p1 (id 0) = 1, root (id 1) = 1, p2 (id 2) = 0.
  const RankedPrediction pred = fuse::rank_anchors(
      w.embeddings.at("q"), anchors, nodes, xi, LogicSystem::Product,
      ScoreMode::Containment, 0);
  REQUIRE(pred.order == std::vector<int>{0, 1, 2});
  REQUIRE(pred.predicted == 0);
  REQUIRE(pred.rank == 1);
}

TEST_CASE("a degenerate query falls back to the psi score") {
  const World w = rank_world();
  const NodeVectors nodes = fuse::embed_nodes(w.ckpt, w.taxonomy, w.embeddings);
  const std::vector<double> xi = w.ckpt.model.weights.effective();
  const std::vector<int> anchors{0, 1, 2};

  const RankedPrediction pred = fuse::rank_anchors(
      w.embeddings.at("z"), anchors, nodes, xi, LogicSystem::Product,
      ScoreMode::Containment, 2);
  REQUIRE(pred.psi_fallback);
  REQUIRE(pred.predicted == 0);  // all scores zero -> smallest id wins
  REQUIRE(pred.rank == 3);

  const RankedPrediction psi_pred = fuse::rank_anchors(
      w.embeddings.at("z"), anchors, nodes, xi, LogicSystem::Product,
      ScoreMode::Psi, 2);
  REQUIRE(!psi_pred.psi_fallback);  // psi mode never needs the fallback
}

TEST_CASE("evaluate aggregates accuracy, mrr, and wu-palmer") {
  const World w = rank_world();
  const std::vector<TestQuery> queries{{"q", "p1"}, {"r", "p2"}};
  const EvalResult result = fuse::evaluate(w.ckpt, w.taxonomy, w.embeddings,
                                           queries, ScoreMode::Containment);
  // q: predicted p1 (rank 1, wup 1). r: ties (root, p2) -> root predicted,
  // true parent p2 at rank 2, wup(root, p2) = 2*1/(1+2).
  REQUIRE(result.metrics.query_count == 2);
  REQUIRE(result.metrics.acc == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(result.metrics.mrr == Catch::Approx(0.75).margin(1e-12));
  REQUIRE(result.metrics.wup ==
          Catch::Approx((1.0 + 2.0 / 3.0) / 2.0).margin(1e-12));
  REQUIRE(result.metrics.psi_fallbacks == 0);
  REQUIRE(result.details.size() == 2);
  REQUIRE(result.details[0].predicted == "p1");
  REQUIRE(result.details[0].rank == 1);
  REQUIRE(result.details[1].predicted == "root");
  REQUIRE(result.details[1].rank == 2);
}

TEST_CASE("evaluate counts psi fallbacks") {
  const World w = rank_world();
  const std::vector<TestQuery> queries{{"z", "p2"}};
  const EvalResult result = fuse::evaluate(w.ckpt, w.taxonomy, w.embeddings,
                                           queries, ScoreMode::Containment);
  REQUIRE(result.metrics.psi_fallbacks == 1);
  REQUIRE(result.metrics.mrr == Catch::Approx(1.0 / 3.0).margin(1e-12));
}

TEST_CASE("evaluate validates its inputs") {
  const World w = rank_world();
  const std::vector<TestQuery> none;
  REQUIRE_THROWS_AS(fuse::evaluate(w.ckpt, w.taxonomy, w.embeddings, none,
                                   ScoreMode::Containment),
                    std::invalid_argument);
  const std::vector<TestQuery> bad_parent{{"q", "nonexistent"}};
  REQUIRE_THROWS_AS(fuse::evaluate(w.ckpt, w.taxonomy, w.embeddings,
                                   bad_parent, ScoreMode::Containment),
                    fuse::io_error);
}

TEST_CASE("wu-palmer similarity on a known tree") {
  const World w = setop_world();
  const Taxonomy& t = w.taxonomy;
  // Siblings at depth 2 under the root: 2*1 / (2+2).
  REQUIRE(fuse::wu_palmer(t, t.id("a"), t.id("b")) ==
          Catch::Approx(0.5).margin(1e-12));
  // Siblings at depth 3: lca is their parent at depth 2.
  REQUIRE(fuse::wu_palmer(t, t.id("a1"), t.id("a2")) ==
          Catch::Approx(2.0 / 3.0).margin(1e-12));
  // Identical nodes: similarity 1.
  REQUIRE(fuse::wu_palmer(t, t.id("b1"), t.id("b1")) == 1.0);
  // Cross-subtree leaves: lca is the root.
  REQUIRE(fuse::wu_palmer(t, t.id("a1"), t.id("b1")) ==
          Catch::Approx(2.0 / 6.0).margin(1e-12));
}

TEST_CASE("union of child vectors identifies the parent") {
  const World w = setop_world();
  const SetOpMetrics m =
      fuse::union_inference(w.ckpt, w.taxonomy, w.embeddings);
  // Each parent's vector is exactly the t-conorm union of its children's.
  REQUIRE(m.evaluated == 3);
  REQUIRE(m.skipped == 0);
  REQUIRE(m.acc == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(m.mrr == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("union skips parents with a single child") {
  World w;
  w.taxonomy = fuse::build_taxonomy(
      std::vector<Edge>{{"a", "root"}, {"b", "root"}, {"c1", "a"}});
  w.embeddings.dim = 4;
  w.embeddings.vectors["root"] = {1.0, 1.0, 1.0, 1.0};
  w.embeddings.vectors["a"] = {1.0, 1.0, 0.0, 0.0};
  w.embeddings.vectors["b"] = {0.0, 0.0, 1.0, 1.0};
  w.embeddings.vectors["c1"] = {1.0, 0.0, 0.0, 0.0};
  w.ckpt = identity_checkpoint(4);
  const SetOpMetrics m =
      fuse::union_inference(w.ckpt, w.taxonomy, w.embeddings);
  REQUIRE(m.evaluated == 1);  // root
  REQUIRE(m.skipped == 1);    // a has one child
}

TEST_CASE("complement of one child against its parent finds the sibling") {
  const World w = setop_world();
  const SetOpMetrics m =
      fuse::complement_inference(w.ckpt, w.taxonomy, w.embeddings);
  // parent * (1 - held_out) equals the remaining sibling exactly, for all
  // six (parent, held-out child) pairs.
  REQUIRE(m.evaluated == 6);
  REQUIRE(m.skipped == 0);
  REQUIRE(m.acc == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(m.mrr == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("score mode names round-trip and reject junk") {
  for (ScoreMode m :
       {ScoreMode::Containment, ScoreMode::Psi, ScoreMode::Sum}) {
    REQUIRE(fuse::parse_score_mode(fuse::to_string(m)) == m);
  }
  REQUIRE_THROWS_AS(fuse::parse_score_mode("bogus"), std::invalid_argument);
}

TEST_CASE("sum mode adds the membership score to the containment") {
  const World w = rank_world();
  const NodeVectors nodes = fuse::embed_nodes(w.ckpt, w.taxonomy, w.embeddings);
  const std::vector<double> xi = w.ckpt.model.weights.effective();
  const std::vector<int> anchors{0, 1, 2};
  const RankedPrediction c = fuse::rank_anchors(
      w.embeddings.at("q"), anchors, nodes, xi, LogicSystem::Product,
      ScoreMode::Containment, 0);
  const RankedPrediction s = fuse::rank_anchors(
      w.embeddings.at("q"), anchors, nodes, xi, LogicSystem::Product,
      ScoreMode::Sum, 0);
  // psi(p1) = psi(root) = 0.25 here, so Sum preserves the top-1 tie-break
  // while strictly increasing every nonzero score.
  REQUIRE(s.predicted == c.predicted);
  REQUIRE(s.scores[0] == Catch::Approx(1.25).margin(1e-12));
}

TEST_CASE("metric serialization is stable") {
  Metrics m;
  m.acc = 0.5;
  m.mrr = 0.75;
  m.wup = 5.0 / 6.0;
  REQUIRE(fuse::serialize_metrics(m) ==
          "acc\t0.5\nmrr\t0.75\nwup\t0.8333333333333334\n");

  SetOpMetrics sm;
  sm.acc = 1.0;
  sm.mrr = 0.25;
  REQUIRE(fuse::serialize_setop_metrics(sm) == "acc\t1\nmrr\t0.25\n");

  const std::vector<QueryDetail> details{{"q", "p1", 1, 1.0},
                                         {"r", "root", 2, 2.0 / 3.0}};
  REQUIRE(fuse::serialize_query_details(details) ==
          "query\tpredicted\trank\twup\n"
          "q\tp1\t1\t1\n"
          "r\troot\t2\t0.6666666666666666\n");
}

TEST_CASE("embedded nodes observe the euclid-norm scoring flag") {
  World w = rank_world();
  w.ckpt.config.euclid_norm_in_score = true;
  const NodeVectors nodes = fuse::embed_nodes(w.ckpt, w.taxonomy, w.embeddings);
  // raw is untouched; scored has unit Euclidean norm for nonzero vectors.
  REQUIRE(nodes.raw[1] == std::vector<double>{1.0, 1.0, 1.0, 1.0});
  double sq = 0.0;
  for (double v : nodes.scored[1]) sq += v * v;
  REQUIRE(sq == Catch::Approx(1.0).margin(1e-12));
}
