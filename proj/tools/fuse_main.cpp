// fuse: command-line front end for the fuzzy-set embedding toolkit.
//
// Subcommands: train, eval, approx, synth, gradcheck. Exit codes:
//   0 ok, 1 assertion/abort, 2 input error, 3 checkpoint error, 64 usage.

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>

#include "fuse/algebra.hpp"
#include "fuse/approximation.hpp"
#include "fuse/evaluator.hpp"
#include "fuse/mapper.hpp"
#include "fuse/objectives.hpp"
#include "fuse/taxonomy.hpp"
#include "fuse/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAssert = 1;
constexpr int kExitInput = 2;
constexpr int kExitCheckpoint = 3;
constexpr int kExitUsage = 64;

namespace fs = std::filesystem;

struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const fs::path& path, const char* what) {
  if (!fs::exists(path)) {
    throw fuse::io_error(std::string(what) + " file does not exist: " +
                         path.string());
  }
}

void require_arg(const std::string& value, const char* flag) {
  if (value.empty()) {
    throw usage_error(std::string("missing required option ") + flag);
  }
}

std::vector<std::size_t> parse_size_list(const std::string& s,
                                         const std::string& context) {
  std::vector<std::size_t> out;
  if (fuse::trim(s).empty()) return out;
  for (const auto& tok : fuse::split(s, ',')) {
    out.push_back(fuse::parse_uint(fuse::trim(tok), context));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& s,
                                      const std::string& context) {
  std::vector<double> out;
  if (fuse::trim(s).empty()) return out;
  for (const auto& tok : fuse::split(s, ',')) {
    out.push_back(fuse::parse_double(fuse::trim(tok), context));
  }
  return out;
}

// Line-oriented key=value configuration; '#' comments and blank lines are
// ignored. Keys are the long flag names without the leading dashes.
std::map<std::string, std::string> load_config_file(const fs::path& path) {
  require_file(path, "config");
  std::map<std::string, std::string> out;
  const std::string text = fuse::read_text_file(path);
  const auto lines = fuse::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = fuse::trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw fuse::io_error(path.string() + ":" + std::to_string(i + 1) +
                           ": expected key=value");
    }
    const std::string key(fuse::trim(line.substr(0, eq)));
    const std::string value(fuse::trim(line.substr(eq + 1)));
    if (key.empty()) {
      throw fuse::io_error(path.string() + ":" + std::to_string(i + 1) +
                           ": empty key");
    }
    out[key] = value;
  }
  return out;
}

// Maps config-file keys onto the same storage the flags write to. Values
// from the file are applied before CLI11 parses argv, so explicit flags
// override them.
class ConfigBinder {
 public:
  void bind(const std::string& key, std::string* slot) {
    setters_[key] = [slot](const std::string& v) { *slot = v; };
  }
  void bind(const std::string& key, double* slot) {
    setters_[key] = [slot, key](const std::string& v) {
      *slot = fuse::parse_double(v, "config key " + key);
    };
  }
  template <typename T>
    requires(std::unsigned_integral<T> && !std::same_as<T, bool>)
  void bind(const std::string& key, T* slot) {
    setters_[key] = [slot, key](const std::string& v) {
      *slot = static_cast<T>(fuse::parse_uint(v, "config key " + key));
    };
  }
  void bind(const std::string& key, bool* slot) {
    setters_[key] = [slot, key](const std::string& v) {
      if (v == "1" || v == "true") {
        *slot = true;
      } else if (v == "0" || v == "false") {
        *slot = false;
      } else {
        throw fuse::io_error("config key " + key +
                             ": expected 0/1/true/false, got '" + v + "'");
      }
    };
  }

  void apply(const std::map<std::string, std::string>& kv) const {
    for (const auto& [key, value] : kv) {
      const auto it = setters_.find(key);
      if (it == setters_.end()) {
        throw fuse::io_error("unknown config key: '" + key + "'");
      }
      it->second(value);
    }
  }

 private:
  std::map<std::string, std::function<void(const std::string&)>> setters_;
};

std::optional<fs::path> find_config_arg(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string_view arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return fs::path(argv[i + 1]);
    if (arg.rfind("--config=", 0) == 0) {
      return fs::path(std::string(arg.substr(9)));
    }
  }
  return std::nullopt;
}

std::string find_subcommand_arg(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string_view arg = argv[i];
    if (!arg.empty() && arg.front() != '-') return std::string(arg);
  }
  return {};
}

// ---------------------------------------------------------------------------
// train

// CLI defaults mirror the library's TrainConfig so there is one source of
// truth for what an unconfigured run means.
const fuse::TrainConfig kDefaultTrain{};

struct TrainArgs {
  std::string taxonomy;
  std::string embeddings;
  std::string out_dir;
  std::size_t partitions = kDefaultTrain.partitions;
  std::string hidden = "256";
  std::string output_norm = "sigmoid";
  std::string weight_norm = "none";
  std::string logic = "product";
  double lambda = kDefaultTrain.lambda;
  double gamma_p = kDefaultTrain.margins.gamma_p;
  double gamma_n = kDefaultTrain.margins.gamma_n;
  std::size_t k_rank = kDefaultTrain.k_rank_negatives;
  std::size_t k_asym = kDefaultTrain.k_asym_negatives;
  double learning_rate = kDefaultTrain.learning_rate;
  std::size_t epochs = kDefaultTrain.epochs;
  std::size_t batch_size = kDefaultTrain.batch_size;
  std::uint64_t seed = kDefaultTrain.seed;
  bool euclid_norm = kDefaultTrain.euclid_norm_in_score;
};

fuse::TrainConfig to_train_config(const TrainArgs& a) {
  fuse::TrainConfig cfg;
  cfg.partitions = a.partitions;
  cfg.hidden = parse_size_list(a.hidden, "hidden");
  cfg.output_norm = fuse::parse_output_norm(a.output_norm);
  cfg.weight_norm = fuse::parse_weight_norm(a.weight_norm);
  cfg.logic = fuse::parse_logic(a.logic);
  cfg.lambda = a.lambda;
  cfg.margins = fuse::Margins{a.gamma_p, a.gamma_n};
  cfg.k_rank_negatives = a.k_rank;
  cfg.k_asym_negatives = a.k_asym;
  cfg.learning_rate = a.learning_rate;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.seed = a.seed;
  cfg.euclid_norm_in_score = a.euclid_norm;
  return cfg;
}

int cmd_train(const TrainArgs& a) {
  require_arg(a.taxonomy, "--taxonomy");
  require_arg(a.embeddings, "--embeddings");
  require_arg(a.out_dir, "--out-dir");
  require_file(a.taxonomy, "taxonomy");
  require_file(a.embeddings, "embeddings");
  const fuse::TrainConfig cfg = to_train_config(a);
  cfg.validate();

  const fuse::Taxonomy taxonomy = fuse::load_taxonomy(a.taxonomy);
  const fuse::EmbeddingTable embeddings =
      fuse::load_embeddings(a.embeddings, taxonomy);

  const fuse::TrainResult result = fuse::train(cfg, taxonomy, embeddings);

  fs::create_directories(a.out_dir);
  fuse::save_checkpoint(fs::path(a.out_dir) / "checkpoint.txt",
                        result.checkpoint);
  fuse::write_train_log(fs::path(a.out_dir) / "train_log.tsv", result.log);

  if (result.degenerate_skips > 0) {
    std::cerr << "note: skipped containment terms for "
              << result.degenerate_skips << " degenerate child sets\n";
  }
  if (result.log.empty()) {
    std::cout << "trained 0 steps (epochs=0); checkpoint equals init\n";
  } else {
    const fuse::LossBreakdown& last = result.log.back().loss;
    std::cout << "final ranking=" << fuse::format_double(last.ranking)
              << " asym_pos=" << fuse::format_double(last.asym_pos)
              << " asym_neg=" << fuse::format_double(last.asym_neg)
              << " total=" << fuse::format_double(last.total) << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint;
  std::string taxonomy;
  std::string embeddings;
  std::string queries;
  std::string out_dir;
  std::string score_mode = "containment";
  bool details = false;
  bool union_study = false;
  bool complement_study = false;
};

int cmd_eval(const EvalArgs& a) {
  require_arg(a.checkpoint, "--checkpoint");
  require_arg(a.taxonomy, "--taxonomy");
  require_arg(a.embeddings, "--embeddings");
  require_arg(a.out_dir, "--out-dir");
  require_file(a.checkpoint, "checkpoint");
  require_file(a.taxonomy, "taxonomy");
  require_file(a.embeddings, "embeddings");
  if (a.queries.empty() && !a.union_study && !a.complement_study) {
    throw usage_error(
        "eval: need --queries and/or --union/--complement studies");
  }

  const fuse::ModelCheckpoint ckpt = fuse::load_checkpoint(a.checkpoint);
  const fuse::Taxonomy taxonomy = fuse::load_taxonomy(a.taxonomy);
  const fuse::EmbeddingTable embeddings =
      fuse::load_embeddings(a.embeddings, taxonomy);
  const fuse::ScoreMode mode = fuse::parse_score_mode(a.score_mode);

  fs::create_directories(a.out_dir);

  if (!a.queries.empty()) {
    require_file(a.queries, "queries");
    const std::vector<fuse::TestQuery> queries = fuse::load_queries(a.queries);
    for (const auto& q : queries) {
      if (!embeddings.contains(q.query)) {
        throw fuse::io_error("no embedding for query term: '" + q.query + "'");
      }
    }
    const fuse::EvalResult result =
        fuse::evaluate(ckpt, taxonomy, embeddings, queries, mode);
    fuse::write_metrics_tsv(fs::path(a.out_dir) / "metrics.tsv",
                            result.metrics);
    if (a.details) {
      fuse::write_query_details_tsv(fs::path(a.out_dir) / "details.tsv",
                                    result.details);
    }
    std::cout << "queries=" << result.metrics.query_count
              << " acc=" << fuse::format_double(result.metrics.acc)
              << " mrr=" << fuse::format_double(result.metrics.mrr)
              << " wup=" << fuse::format_double(result.metrics.wup) << "\n";
    if (result.metrics.psi_fallbacks > 0) {
      std::cerr << "note: " << result.metrics.psi_fallbacks
                << " queries fell back to the psi score (degenerate measure)\n";
    }
  }

  if (a.union_study) {
    const fuse::SetOpMetrics m =
        fuse::union_inference(ckpt, taxonomy, embeddings);
    fuse::write_setop_metrics_tsv(fs::path(a.out_dir) / "union_metrics.tsv", m);
    std::cout << "union evaluated=" << m.evaluated << " skipped=" << m.skipped
              << " acc=" << fuse::format_double(m.acc)
              << " mrr=" << fuse::format_double(m.mrr) << "\n";
  }
  if (a.complement_study) {
    const fuse::SetOpMetrics m =
        fuse::complement_inference(ckpt, taxonomy, embeddings);
    fuse::write_setop_metrics_tsv(
        fs::path(a.out_dir) / "complement_metrics.tsv", m);
    std::cout << "complement evaluated=" << m.evaluated
              << " skipped=" << m.skipped
              << " acc=" << fuse::format_double(m.acc)
              << " mrr=" << fuse::format_double(m.mrr) << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// approx

struct ApproxArgs {
  std::string fn = "gaussian";
  double lo = 0.0;
  double hi = 1.0;
  double value = 0.5;
  double slope = 1.0;
  double intercept = 0.0;
  double center = 0.5;
  double width = 0.02;
  double amplitude = 1.0;
  std::string boundaries = "0,0.25,0.5,0.75,1";
  std::string values = "0.2,0.9,0.4,0.7";
  std::string samples;
  std::string ns = "64,128,256,512";
  std::size_t resolution = 1000000;
  bool grid_sup = false;
  std::size_t grid_points = 4096;
  std::string out;
  bool assert_bounds = false;
};

fuse::MembershipFunction build_membership(const ApproxArgs& a,
                                          const fuse::Universe& u) {
  if (a.fn == "identity") {
    // lo -> 0, hi -> 1 on the given universe.
    const double slope = 1.0 / u.length();
    return fuse::MembershipFunction::linear(slope, -u.lo * slope, u);
  }
  if (a.fn == "constant") {
    return fuse::MembershipFunction::constant(a.value, u);
  }
  if (a.fn == "linear") {
    return fuse::MembershipFunction::linear(a.slope, a.intercept, u);
  }
  if (a.fn == "gaussian") {
    return fuse::MembershipFunction::gaussian(a.center, a.width, a.amplitude);
  }
  if (a.fn == "piecewise") {
    return fuse::MembershipFunction::piecewise_constant(
        parse_double_list(a.boundaries, "boundaries"),
        parse_double_list(a.values, "values"));
  }
  if (a.fn == "tabulated") {
    if (a.samples.empty()) {
      throw fuse::io_error("tabulated function needs --samples");
    }
    return fuse::MembershipFunction::tabulated(
        u, parse_double_list(a.samples, "samples"));
  }
  throw fuse::io_error(
      "unknown function kind: '" + a.fn +
      "' (expected identity|constant|linear|gaussian|piecewise|tabulated)");
}

int cmd_approx(const ApproxArgs& a) {
  const fuse::Universe u(a.lo, a.hi);
  const fuse::MembershipFunction m = build_membership(a, u);
  const std::vector<std::size_t> sizes = parse_size_list(a.ns, "ns");

  fuse::ProjectOptions opts;
  opts.force_grid = a.grid_sup;
  opts.grid_points_per_cell = a.grid_points;

  const std::vector<fuse::ConvergenceRow> rows =
      fuse::convergence_study(m, u, sizes, a.resolution, opts);
  const std::string report = fuse::serialize_convergence(rows);
  if (a.out.empty() || a.out == "-") {
    std::cout << report;
  } else {
    fuse::write_text_file(a.out, report);
  }

  if (a.assert_bounds) {
    const std::string violation =
        fuse::convergence_violation(rows, m.is_lipschitz());
    if (!violation.empty()) {
      std::cerr << "assert failed: " << violation << "\n";
      return kExitAssert;
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::size_t depth = 3;
  std::size_t branching = 4;
  std::size_t embed_dim = 32;
  double noise = 0.05;
  std::uint64_t seed = 7;
  std::string out_dir;
  double split_fraction = 0.0;
  std::uint64_t split_seed = 1;
};

int cmd_synth(const SynthArgs& a) {
  require_arg(a.out_dir, "--out-dir");
  fuse::SynthConfig cfg;
  cfg.depth = a.depth;
  cfg.branching = a.branching;
  cfg.embed_dim = a.embed_dim;
  cfg.noise = a.noise;
  cfg.seed = a.seed;

  const fuse::SynthResult result = fuse::synth_taxonomy(cfg);
  fs::create_directories(a.out_dir);
  fuse::save_taxonomy(fs::path(a.out_dir) / "taxonomy.tsv", result.taxonomy);
  fuse::save_embeddings(fs::path(a.out_dir) / "embeddings.tsv",
                        result.taxonomy, result.embeddings);
  {
    std::string manifest =
        "depth\tbranching\tembed_dim\tnoise\tseed\tnodes\tedges\n";
    manifest += std::to_string(a.depth) + "\t" + std::to_string(a.branching) +
                "\t" + std::to_string(a.embed_dim) + "\t" +
                fuse::format_double(a.noise) + "\t" + std::to_string(a.seed) +
                "\t" + std::to_string(result.taxonomy.node_count()) + "\t" +
                std::to_string(result.taxonomy.edge_count()) + "\n";
    fuse::write_text_file(fs::path(a.out_dir) / "manifest.tsv", manifest);
  }

  if (a.split_fraction > 0.0) {
    const fuse::SplitResult split =
        fuse::split_leaves(result.taxonomy, a.split_fraction, a.split_seed);
    fuse::save_taxonomy(fs::path(a.out_dir) / "train.tsv", split.train);
    fuse::save_queries(fs::path(a.out_dir) / "queries.tsv", split.queries);
    std::cout << "nodes=" << result.taxonomy.node_count()
              << " edges=" << result.taxonomy.edge_count()
              << " train_edges=" << split.train.edge_count()
              << " queries=" << split.queries.size() << "\n";
  } else {
    std::cout << "nodes=" << result.taxonomy.node_count()
              << " edges=" << result.taxonomy.edge_count() << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
  std::string checkpoint;
  std::size_t dim = 8;
  std::size_t embed_dim = 16;
  std::string hidden = "12";
  std::size_t k_rank = 4;
  std::size_t k_asym = 1;
  std::size_t batch = 8;
  std::string output_norm = "sigmoid";
  std::string weight_norm = "none";
  std::string logic = "product";
  double lambda = 1.0;
  bool euclid_norm = false;
  std::uint64_t seed = 17;
  double step = 1e-5;
  double tol = 1e-4;
  std::string init = "random";
  bool break_gradient = false;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  fuse::TrainConfig cfg;
  cfg.partitions = a.dim;
  cfg.hidden = parse_size_list(a.hidden, "hidden");
  cfg.output_norm = fuse::parse_output_norm(a.output_norm);
  cfg.weight_norm = fuse::parse_weight_norm(a.weight_norm);
  cfg.logic = fuse::parse_logic(a.logic);
  cfg.lambda = a.lambda;
  cfg.k_rank_negatives = a.k_rank;
  cfg.k_asym_negatives = a.k_asym;
  cfg.euclid_norm_in_score = a.euclid_norm;
  cfg.seed = a.seed;

  fuse::FuseModel model;
  std::size_t embed_dim = a.embed_dim;
  if (!a.checkpoint.empty()) {
    require_file(a.checkpoint, "checkpoint");
    fuse::ModelCheckpoint ckpt = fuse::load_checkpoint(a.checkpoint);
    cfg = ckpt.config;
    model = std::move(ckpt.model);
    embed_dim = model.mapper.input_dim();
  } else {
    model = fuse::init_model(cfg, embed_dim);
    if (a.init == "zero") {
      for (auto& layer : model.mapper.layers) {
        std::fill(layer.weight.begin(), layer.weight.end(), 0.0);
        std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
      }
    } else if (a.init == "random") {
      // Volume weights start on the clamp boundary by default; draw them
      // strictly inside the differentiable region so the check covers the
      // weight gradient path as well.
      fuse::Rng wrng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
      for (double& r : model.weights.raw) {
        r = 0.1 + 0.8 * wrng.uniform01();
      }
    } else {
      throw usage_error("unknown init: '" + a.init + "' (expected random|zero)");
    }
  }

  // Synthetic batch: random entities, one edge sample per batch element.
  fuse::Rng rng(a.seed ^ 0x2545f4914f6cdd1dull);
  const std::size_t n_entities =
      a.batch + cfg.k_rank_negatives + cfg.k_asym_negatives + 4;
  std::vector<fuse::EntityEmbedding> xs(n_entities);
  for (auto& x : xs) {
    x.resize(embed_dim);
    for (double& v : x) v = rng.normal();
  }
  std::vector<fuse::EdgeSample> samples(a.batch);
  for (auto& s : samples) {
    s.child = int(rng.below(n_entities));
    do {
      s.parent = int(rng.below(n_entities));
    } while (s.parent == s.child);
    const auto draw_distinct = [&](std::size_t k, std::vector<int>& out) {
      while (out.size() < k) {
        const int v = int(rng.below(n_entities));
        if (v == s.child || v == s.parent) continue;
        if (std::find(out.begin(), out.end(), v) != out.end()) continue;
        out.push_back(v);
      }
      std::sort(out.begin(), out.end());
    };
    draw_distinct(cfg.k_rank_negatives, s.rank_negatives);
    draw_distinct(cfg.k_asym_negatives, s.asym_negatives);
  }

  fuse::GradCheckOptions opts;
  opts.step = a.step;
  opts.seed = a.seed;
  if (a.break_gradient) opts.corrupt_analytic = 0.05;

  const fuse::GradCheckReport report =
      fuse::grad_check_objective(model, cfg, xs, samples, opts);
  std::cout << "checked=" << report.coords_checked
            << " max_rel_error=" << fuse::format_double(report.max_rel_error)
            << " (worst coord " << report.worst_coord
            << ": analytic=" << fuse::format_double(report.worst_analytic)
            << " numeric=" << fuse::format_double(report.worst_numeric)
            << ")\n";
  if (!report.pass(a.tol)) {
    std::cerr << "gradient check failed: max relative error "
              << fuse::format_double(report.max_rel_error)
              << " >= " << fuse::format_double(a.tol) << "\n";
    return kExitAssert;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int run(int argc, char** argv) {
  CLI::App app{"Fuzzy-set embedding toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::map<std::string, ConfigBinder> binders;

  TrainArgs train_args;
  CLI::App* train_cmd =
      app.add_subcommand("train", "Train a model on a taxonomy edge list");
  {
    ConfigBinder& b = binders["train"];
    train_cmd->add_option("--taxonomy", train_args.taxonomy,
                          "Taxonomy TSV (child<TAB>parent)");
    train_cmd->add_option("--embeddings", train_args.embeddings,
                          "Embedding TSV (term<TAB>v1 v2 ...)");
    train_cmd->add_option("--out-dir", train_args.out_dir,
                          "Output directory (checkpoint.txt, train_log.tsv)");
    train_cmd->add_option("--config", config_path,
                          "key=value config file; flags override");
    train_cmd->add_option("--partitions", train_args.partitions,
                          "Membership vector dimension d");
    train_cmd->add_option("--hidden", train_args.hidden,
                          "Comma-separated hidden widths (empty for linear)");
    train_cmd->add_option("--output-norm", train_args.output_norm,
                          "sigmoid|clamp01|layernorm_sigmoid");
    train_cmd->add_option("--weight-norm", train_args.weight_norm,
                          "none|sigmoid|softmax|clamp01");
    train_cmd->add_option("--logic", train_args.logic, "product|goedel");
    train_cmd->add_option("--lambda", train_args.lambda,
                          "Weight of the asymmetry losses");
    train_cmd->add_option("--gamma-p", train_args.gamma_p,
                          "Positive ranking margin");
    train_cmd->add_option("--gamma-n", train_args.gamma_n,
                          "Negative ranking margin");
    train_cmd->add_option("--k-rank", train_args.k_rank,
                          "Negatives per edge for the ranking loss");
    train_cmd->add_option("--k-asym", train_args.k_asym,
                          "Negatives per edge for the asymmetry loss");
    train_cmd->add_option("--lr", train_args.learning_rate,
                          "Adam learning rate");
    train_cmd->add_option("--epochs", train_args.epochs, "Training epochs");
    train_cmd->add_option("--batch-size", train_args.batch_size,
                          "Edges per optimizer step");
    train_cmd->add_option("--seed", train_args.seed, "Random seed");
    train_cmd->add_flag("--euclid-norm", train_args.euclid_norm,
                        "Euclid-normalize membership vectors inside scoring");
    b.bind("taxonomy", &train_args.taxonomy);
    b.bind("embeddings", &train_args.embeddings);
    b.bind("out-dir", &train_args.out_dir);
    b.bind("partitions", &train_args.partitions);
    b.bind("hidden", &train_args.hidden);
    b.bind("output-norm", &train_args.output_norm);
    b.bind("weight-norm", &train_args.weight_norm);
    b.bind("logic", &train_args.logic);
    b.bind("lambda", &train_args.lambda);
    b.bind("gamma-p", &train_args.gamma_p);
    b.bind("gamma-n", &train_args.gamma_n);
    b.bind("k-rank", &train_args.k_rank);
    b.bind("k-asym", &train_args.k_asym);
    b.bind("lr", &train_args.learning_rate);
    b.bind("epochs", &train_args.epochs);
    b.bind("batch-size", &train_args.batch_size);
    b.bind("seed", &train_args.seed);
    b.bind("euclid-norm", &train_args.euclid_norm);
  }

  EvalArgs eval_args;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Evaluate a checkpoint on held-out queries");
  {
    ConfigBinder& b = binders["eval"];
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint,
                         "Model checkpoint");
    eval_cmd->add_option("--taxonomy", eval_args.taxonomy,
                         "Train-graph taxonomy TSV");
    eval_cmd->add_option("--embeddings", eval_args.embeddings, "Embedding TSV");
    eval_cmd->add_option("--queries", eval_args.queries,
                         "Query TSV (query<TAB>true-parent)");
    eval_cmd->add_option("--out-dir", eval_args.out_dir, "Output directory");
    eval_cmd->add_option("--score-mode", eval_args.score_mode,
                         "containment|psi|sum");
    eval_cmd->add_flag("--details", eval_args.details,
                       "Also write per-query details.tsv");
    eval_cmd->add_flag("--union", eval_args.union_study,
                       "Run the union-inference study");
    eval_cmd->add_flag("--complement", eval_args.complement_study,
                       "Run the complement-inference study");
    eval_cmd->add_option("--config", config_path,
                         "key=value config file; flags override");
    b.bind("checkpoint", &eval_args.checkpoint);
    b.bind("taxonomy", &eval_args.taxonomy);
    b.bind("embeddings", &eval_args.embeddings);
    b.bind("queries", &eval_args.queries);
    b.bind("out-dir", &eval_args.out_dir);
    b.bind("score-mode", &eval_args.score_mode);
    b.bind("details", &eval_args.details);
    b.bind("union", &eval_args.union_study);
    b.bind("complement", &eval_args.complement_study);
  }

  ApproxArgs approx_args;
  CLI::App* approx_cmd =
      app.add_subcommand("approx", "Measure-approximation convergence study");
  {
    ConfigBinder& b = binders["approx"];
    approx_cmd->add_option(
        "--fn", approx_args.fn,
        "identity|constant|linear|gaussian|piecewise|tabulated");
    approx_cmd->add_option("--lo", approx_args.lo, "Universe lower bound");
    approx_cmd->add_option("--hi", approx_args.hi, "Universe upper bound");
    approx_cmd->add_option("--value", approx_args.value, "Constant value");
    approx_cmd->add_option("--slope", approx_args.slope, "Linear slope");
    approx_cmd->add_option("--intercept", approx_args.intercept,
                           "Linear intercept");
    approx_cmd->add_option("--center", approx_args.center, "Gaussian center");
    approx_cmd->add_option("--width", approx_args.width, "Gaussian width");
    approx_cmd->add_option("--amplitude", approx_args.amplitude,
                           "Gaussian amplitude");
    approx_cmd->add_option("--boundaries", approx_args.boundaries,
                           "Piecewise boundaries (comma list)");
    approx_cmd->add_option("--values", approx_args.values,
                           "Piecewise values (comma list)");
    approx_cmd->add_option("--samples", approx_args.samples,
                           "Tabulated samples (comma list)");
    approx_cmd->add_option("--ns", approx_args.ns,
                           "Partition sizes (comma list, increasing)");
    approx_cmd->add_option("--resolution", approx_args.resolution,
                           "Reference quadrature resolution");
    approx_cmd->add_flag("--grid-sup", approx_args.grid_sup,
                         "Use the dense-grid supremum instead of analytic");
    approx_cmd->add_option("--grid-points", approx_args.grid_points,
                           "Grid points per cell for --grid-sup");
    approx_cmd->add_option("--out", approx_args.out,
                           "Report path ('-' or empty for stdout)");
    approx_cmd->add_flag("--assert", approx_args.assert_bounds,
                         "Exit 1 if the bound or convergence rate is violated");
    approx_cmd->add_option("--config", config_path,
                           "key=value config file; flags override");
    b.bind("fn", &approx_args.fn);
    b.bind("lo", &approx_args.lo);
    b.bind("hi", &approx_args.hi);
    b.bind("value", &approx_args.value);
    b.bind("slope", &approx_args.slope);
    b.bind("intercept", &approx_args.intercept);
    b.bind("center", &approx_args.center);
    b.bind("width", &approx_args.width);
    b.bind("amplitude", &approx_args.amplitude);
    b.bind("boundaries", &approx_args.boundaries);
    b.bind("values", &approx_args.values);
    b.bind("samples", &approx_args.samples);
    b.bind("ns", &approx_args.ns);
    b.bind("resolution", &approx_args.resolution);
    b.bind("grid-sup", &approx_args.grid_sup);
    b.bind("grid-points", &approx_args.grid_points);
    b.bind("out", &approx_args.out);
    b.bind("assert", &approx_args.assert_bounds);
  }

  SynthArgs synth_args;
  CLI::App* synth_cmd =
      app.add_subcommand("synth", "Generate a synthetic taxonomy + embeddings");
  {
    ConfigBinder& b = binders["synth"];
    synth_cmd->add_option("--depth", synth_args.depth,
                          "Generations below the root");
    synth_cmd->add_option("--branching", synth_args.branching,
                          "Children per internal node");
    synth_cmd->add_option("--embed-dim", synth_args.embed_dim,
                          "Embedding dimension");
    synth_cmd->add_option("--noise", synth_args.noise, "Gaussian noise scale");
    synth_cmd->add_option("--seed", synth_args.seed, "Random seed");
    synth_cmd->add_option("--out-dir", synth_args.out_dir, "Output directory");
    synth_cmd->add_option("--split-fraction", synth_args.split_fraction,
                          "Also write train.tsv/queries.tsv splitting this "
                          "fraction of leaves");
    synth_cmd->add_option("--split-seed", synth_args.split_seed, "Split seed");
    synth_cmd->add_option("--config", config_path,
                          "key=value config file; flags override");
    b.bind("depth", &synth_args.depth);
    b.bind("branching", &synth_args.branching);
    b.bind("embed-dim", &synth_args.embed_dim);
    b.bind("noise", &synth_args.noise);
    b.bind("seed", &synth_args.seed);
    b.bind("out-dir", &synth_args.out_dir);
    b.bind("split-fraction", &synth_args.split_fraction);
    b.bind("split-seed", &synth_args.split_seed);
  }

  GradcheckArgs gc_args;
  CLI::App* gc_cmd = app.add_subcommand(
      "gradcheck", "Finite-difference check of the objective's gradients");
  {
    ConfigBinder& b = binders["gradcheck"];
    gc_cmd->add_option("--checkpoint", gc_args.checkpoint,
                       "Check a saved model instead of a fresh one");
    gc_cmd->add_option("--dim", gc_args.dim, "Membership dimension d");
    gc_cmd->add_option("--embed-dim", gc_args.embed_dim,
                       "Embedding dimension");
    gc_cmd->add_option("--hidden", gc_args.hidden, "Hidden widths (comma list)");
    gc_cmd->add_option("--k-rank", gc_args.k_rank, "Ranking negatives");
    gc_cmd->add_option("--k-asym", gc_args.k_asym, "Asymmetry negatives");
    gc_cmd->add_option("--batch", gc_args.batch, "Edge samples in the batch");
    gc_cmd->add_option("--output-norm", gc_args.output_norm,
                       "sigmoid|clamp01|layernorm_sigmoid");
    gc_cmd->add_option("--weight-norm", gc_args.weight_norm,
                       "none|sigmoid|softmax|clamp01");
    gc_cmd->add_option("--logic", gc_args.logic, "product|goedel");
    gc_cmd->add_option("--lambda", gc_args.lambda, "Asymmetry loss weight");
    gc_cmd->add_flag("--euclid-norm", gc_args.euclid_norm,
                     "Euclid-normalize inside scoring");
    gc_cmd->add_option("--seed", gc_args.seed, "Random seed");
    gc_cmd->add_option("--step", gc_args.step, "Finite-difference step");
    gc_cmd->add_option("--tol", gc_args.tol, "Pass threshold");
    gc_cmd->add_option("--init", gc_args.init, "random|zero");
    gc_cmd->add_flag("--break-gradient", gc_args.break_gradient,
                     "Negative control: corrupt the analytic gradient");
    gc_cmd->add_option("--config", config_path,
                       "key=value config file; flags override");
    b.bind("checkpoint", &gc_args.checkpoint);
    b.bind("dim", &gc_args.dim);
    b.bind("embed-dim", &gc_args.embed_dim);
    b.bind("hidden", &gc_args.hidden);
    b.bind("k-rank", &gc_args.k_rank);
    b.bind("k-asym", &gc_args.k_asym);
    b.bind("batch", &gc_args.batch);
    b.bind("output-norm", &gc_args.output_norm);
    b.bind("weight-norm", &gc_args.weight_norm);
    b.bind("logic", &gc_args.logic);
    b.bind("lambda", &gc_args.lambda);
    b.bind("euclid-norm", &gc_args.euclid_norm);
    b.bind("seed", &gc_args.seed);
    b.bind("step", &gc_args.step);
    b.bind("tol", &gc_args.tol);
    b.bind("init", &gc_args.init);
    b.bind("break-gradient", &gc_args.break_gradient);
  }

  // Config file acts as defaults for the invoked subcommand, flags override.
  if (const auto cfg_file = find_config_arg(argc, argv)) {
    const std::string sub = find_subcommand_arg(argc, argv);
    const auto it = binders.find(sub);
    if (it != binders.end()) {
      it->second.apply(load_config_file(*cfg_file));
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  if (*train_cmd) return cmd_train(train_args);
  if (*eval_cmd) return cmd_eval(eval_args);
  if (*approx_cmd) return cmd_approx(approx_args);
  if (*synth_cmd) return cmd_synth(synth_args);
  if (*gc_cmd) return cmd_gradcheck(gc_args);
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const usage_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fuse::checkpoint_error& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const fuse::io_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAssert;
  }
}
