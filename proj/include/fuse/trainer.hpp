#pragma once

// Training for taxonomy expansion: a FuseModel (mapper + volume weights) is
// fit on taxonomy edges with the combined ranking/asymmetry objective.
// Also here: negative sampling, Adam, the versioned text checkpoint format,
// and a finite-difference check of the full objective's gradients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fuse/algebra.hpp"
#include "fuse/io.hpp"
#include "fuse/mapper.hpp"
#include "fuse/numeric.hpp"
#include "fuse/objectives.hpp"
#include "fuse/rng.hpp"
#include "fuse/taxonomy.hpp"

namespace fuse {

struct checkpoint_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t partitions = 350;        // membership vector dimension d
  std::vector<std::size_t> hidden = {256};
  OutputNorm output_norm = OutputNorm::Sigmoid;
  WeightNorm weight_norm = WeightNorm::None;
  LogicSystem logic = LogicSystem::Product;
  double lambda = 1.0;
  Margins margins{0.6, 0.4};
  std::size_t k_rank_negatives = 8;
  std::size_t k_asym_negatives = 1;
  double learning_rate = 1e-3;
  std::size_t epochs = 400;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  bool euclid_norm_in_score = false;

  void validate() const {
    if (partitions == 0) {
      throw std::invalid_argument("TrainConfig: partitions must be >= 1");
    }
    for (std::size_t h : hidden) {
      if (h == 0) {
        throw std::invalid_argument("TrainConfig: hidden width must be >= 1");
      }
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
      throw std::invalid_argument("TrainConfig: lambda must be >= 0");
    }
    if (!(margins.gamma_p > 0.0 && margins.gamma_p < 1.0) ||
        !(margins.gamma_n > 0.0 && margins.gamma_n < 1.0) ||
        margins.gamma_p < margins.gamma_n) {
      throw std::invalid_argument(
          "TrainConfig: margins must satisfy 0 < gamma_n <= gamma_p < 1");
    }
    if (k_rank_negatives == 0) {
      throw std::invalid_argument("TrainConfig: k_rank_negatives must be >= 1");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    }
    if (batch_size == 0) {
      throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    }
  }
};

struct FuseModel {
  MapperParams mapper;
  VolumeWeights weights;
};

// Raw volume weights start at 0: a symmetric state where no partition is
// privileged (Sigmoid/Softmax start uniform, None starts with an empty
// measure and lifts off through the lower clamp's right-derivative on the
// first step). Clamp01 is the exception: both of its clamp boundaries carry
// zero subgradient, so a raw-0 start could never train; it starts mid-range.
inline double initial_raw_weight(WeightNorm mode, std::size_t /*d*/) {
  switch (mode) {
    case WeightNorm::Clamp01:
      return 0.5;
    case WeightNorm::None:
    case WeightNorm::Sigmoid:
    case WeightNorm::Softmax:
      return 0.0;
  }
  return 0.0;
}

inline FuseModel init_model(const TrainConfig& cfg, std::size_t input_dim) {
  cfg.validate();
  FuseModel model;
  model.mapper = init_mapper(input_dim, cfg.hidden, cfg.partitions,
                             cfg.output_norm, cfg.seed);
  model.weights.mode = cfg.weight_norm;
  model.weights.raw.assign(cfg.partitions,
                           initial_raw_weight(cfg.weight_norm, cfg.partitions));
  return model;
}

// k distinct uniform draws over nodes, excluding the child and all of its
// parents; returned sorted ascending. Draws fewer than k only when the
// eligible pool is smaller than k.
inline std::vector<int> sample_negatives(const Taxonomy& t, int child,
                                         std::size_t k, Rng& rng) {
  const std::size_t n = t.node_count();
  std::vector<char> excluded(n, 0);
  excluded[std::size_t(child)] = 1;
  std::size_t eligible = n - 1;
  for (int p : t.parents_of(child)) {
    if (!excluded[std::size_t(p)]) {
      excluded[std::size_t(p)] = 1;
      --eligible;
    }
  }
  if (eligible == 0) {
    throw std::invalid_argument(
        "sample_negatives: no eligible negatives for '" + t.term(child) + "'");
  }
  const std::size_t want = std::min(k, eligible);
  std::vector<int> out;
  out.reserve(want);
  while (out.size() < want) {
    const int v = int(rng.below(n));
    if (excluded[std::size_t(v)]) continue;
    excluded[std::size_t(v)] = 1;
    out.push_back(v);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// One training example: a true edge plus its sampled corruptions.
struct EdgeSample {
  int child = -1;
  int parent = -1;
  std::vector<int> rank_negatives;  // corrupted anchors for the ranking loss
  std::vector<int> asym_negatives;  // corrupted parents for the asymmetry loss
};

namespace detail {

struct ModelGrad {
  GradientBundle mapper;
  std::vector<double> d_xi;

  static ModelGrad zeros_like(const FuseModel& model) {
    ModelGrad g;
    g.mapper = GradientBundle::zeros_like(model.mapper);
    g.d_xi.assign(model.weights.size(), 0.0);
    return g;
  }
};

// d(psi)/d(anchor), d(candidate), d(xi) for scalar upstream g.
inline void psi_backward(std::span<const double> anchor,
                         std::span<const double> candidate,
                         std::span<const double> xi, LogicSystem logic,
                         double g, std::span<double> d_anchor,
                         std::span<double> d_candidate,
                         std::span<double> d_xi) {
  const std::size_t d = anchor.size();
  if (logic == LogicSystem::Product) {
    for (std::size_t i = 0; i < d; ++i) {
      d_anchor[i] += g * candidate[i] * xi[i];
      d_candidate[i] += g * anchor[i] * xi[i];
      d_xi[i] += g * anchor[i] * candidate[i];
    }
  } else {
    // Subgradient of min: ties route to the anchor side.
    for (std::size_t i = 0; i < d; ++i) {
      if (anchor[i] <= candidate[i]) {
        d_anchor[i] += g * xi[i];
        d_xi[i] += g * anchor[i];
      } else {
        d_candidate[i] += g * xi[i];
        d_xi[i] += g * candidate[i];
      }
    }
  }
}

inline void measure_backward(std::span<const double> membership,
                             std::span<const double> xi, double g,
                             std::span<double> d_membership,
                             std::span<double> d_xi) {
  for (std::size_t i = 0; i < membership.size(); ++i) {
    d_membership[i] += g * xi[i];
    d_xi[i] += g * membership[i];
  }
}

// Chain d(loss)/d(effective weights) back to the raw weights.
inline void chain_weight_grads(const VolumeWeights& w,
                               std::span<const double> xi,
                               std::span<const double> d_xi,
                               std::span<double> d_raw) {
  const std::size_t d = w.size();
  switch (w.mode) {
    case WeightNorm::None:
      // Lower clamp at 0. At the boundary itself the right-derivative (1)
      // is used: the feasible direction at a lower bound points up, so a
      // raw-0 start can leave the clamp instead of being pinned forever.
      for (std::size_t i = 0; i < d; ++i) {
        d_raw[i] += w.raw[i] >= 0.0 ? d_xi[i] : 0.0;
      }
      break;
    case WeightNorm::Sigmoid:
      for (std::size_t i = 0; i < d; ++i) {
        d_raw[i] += d_xi[i] * xi[i] * (1.0 - xi[i]);
      }
      break;
    case WeightNorm::Softmax: {
      CompensatedSum dot;
      for (std::size_t i = 0; i < d; ++i) dot.add(d_xi[i] * xi[i]);
      const double mean = dot.value();
      for (std::size_t i = 0; i < d; ++i) {
        d_raw[i] += xi[i] * (d_xi[i] - mean);
      }
      break;
    }
    case WeightNorm::Clamp01:
      for (std::size_t i = 0; i < d; ++i) {
        d_raw[i] += (w.raw[i] > 0.0 && w.raw[i] < 1.0) ? d_xi[i] : 0.0;
      }
      break;
  }
}

struct EntityForward {
  int id = -1;
  ForwardTrace trace;
  std::vector<double> scored;  // output, Euclid-normalized when enabled
  double norm = 0.0;           // Euclidean norm of the raw output
  bool normalized = false;
};

// Loss (and optionally gradients) for one edge sample. Degenerate child
// sets skip the containment terms; `degenerate` counts those skips.
inline LossBreakdown edge_loss(const FuseModel& model,
                               std::span<const double> xi,
                               const TrainConfig& cfg,
                               std::span<const EntityEmbedding> xs,
                               const EdgeSample& s, ModelGrad* grad,
                               std::size_t* degenerate) {
  // Unique entities touched by this sample.
  std::vector<int> ids{s.child, s.parent};
  const auto add_unique = [&ids](int v) {
    if (std::find(ids.begin(), ids.end(), v) == ids.end()) ids.push_back(v);
  };
  for (int v : s.rank_negatives) add_unique(v);
  for (int v : s.asym_negatives) add_unique(v);

  std::vector<EntityForward> ents(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ents[i].id = ids[i];
    const FuzzyVec u =
        map_entity(xs[std::size_t(ids[i])], model.mapper,
                   grad ? &ents[i].trace : nullptr);
    ents[i].scored = u.values();
    if (cfg.euclid_norm_in_score) {
      CompensatedSum sq;
      for (double v : ents[i].scored) sq.add(v * v);
      const double norm = std::sqrt(sq.value());
      ents[i].norm = norm;
      if (norm > 1e-12) {
        for (double& v : ents[i].scored) v /= norm;
        ents[i].normalized = true;
      }
    }
  }
  const auto slot_of = [&ids](int v) {
    return std::size_t(std::find(ids.begin(), ids.end(), v) - ids.begin());
  };
  const std::size_t child_slot = slot_of(s.child);
  const std::size_t parent_slot = slot_of(s.parent);
  const auto& child_v = ents[child_slot].scored;

  CombinedInputs in;
  in.pos_score = psi_span(ents[parent_slot].scored, child_v, xi, cfg.logic);
  in.neg_scores.reserve(s.rank_negatives.size());
  for (int v : s.rank_negatives) {
    in.neg_scores.push_back(
        psi_span(ents[slot_of(v)].scored, child_v, xi, cfg.logic));
  }

  const double child_measure = measure_span(child_v, xi);
  in.have_containment = child_measure > kDegenerateMeasureEps;
  std::vector<double> asym_nums;
  if (in.have_containment) {
    in.p_pos = in.pos_score / child_measure;
    asym_nums.reserve(s.asym_negatives.size());
    for (int v : s.asym_negatives) {
      asym_nums.push_back(
          psi_span(ents[slot_of(v)].scored, child_v, xi, cfg.logic));
      in.p_negs.push_back(asym_nums.back() / child_measure);
    }
  } else if (degenerate) {
    ++*degenerate;
  }

  CombinedGrads g;
  const LossBreakdown out =
      total_loss(in, cfg.margins, cfg.lambda, grad ? &g : nullptr);
  if (!grad) return out;

  std::vector<std::vector<double>> dv(ents.size(),
                                      std::vector<double>(xi.size(), 0.0));
  auto& d_xi = grad->d_xi;

  psi_backward(ents[parent_slot].scored, child_v, xi, cfg.logic,
               g.d_pos_score, dv[parent_slot], dv[child_slot], d_xi);
  for (std::size_t j = 0; j < s.rank_negatives.size(); ++j) {
    const std::size_t slot = slot_of(s.rank_negatives[j]);
    psi_backward(ents[slot].scored, child_v, xi, cfg.logic, g.d_neg_scores[j],
                 dv[slot], dv[child_slot], d_xi);
  }

  if (in.have_containment) {
    // P = N / D with N the intersection measure and D the child measure.
    const double inv_d = 1.0 / child_measure;
    {
      const double g_num = g.d_p_pos * inv_d;
      const double g_den = -g.d_p_pos * in.pos_score * inv_d * inv_d;
      psi_backward(ents[parent_slot].scored, child_v, xi, cfg.logic, g_num,
                   dv[parent_slot], dv[child_slot], d_xi);
      measure_backward(child_v, xi, g_den, dv[child_slot], d_xi);
    }
    for (std::size_t j = 0; j < s.asym_negatives.size(); ++j) {
      const std::size_t slot = slot_of(s.asym_negatives[j]);
      const double g_num = g.d_p_negs[j] * inv_d;
      const double g_den = -g.d_p_negs[j] * asym_nums[j] * inv_d * inv_d;
      psi_backward(ents[slot].scored, child_v, xi, cfg.logic, g_num, dv[slot],
                   dv[child_slot], d_xi);
      measure_backward(child_v, xi, g_den, dv[child_slot], d_xi);
    }
  }

  for (std::size_t i = 0; i < ents.size(); ++i) {
    std::vector<double>& du = dv[i];
    if (ents[i].normalized) {
      // v = u / |u|; du = (dv - v (v . dv)) / |u|
      CompensatedSum dot;
      for (std::size_t c = 0; c < du.size(); ++c) {
        dot.add(ents[i].scored[c] * du[c]);
      }
      const double vdv = dot.value();
      for (std::size_t c = 0; c < du.size(); ++c) {
        du[c] = (du[c] - ents[i].scored[c] * vdv) / ents[i].norm;
      }
    }
    accumulate_backward(model.mapper, ents[i].trace, du, grad->mapper);
  }
  return out;
}

}  // namespace detail

class Adam {
 public:
  Adam(double lr, std::size_t n_params)
      : lr_(lr), m_(n_params, 0.0), v_(n_params, 0.0) {}

  void step(std::span<double* const> params, std::span<const double> grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, double(t_));
    const double bc2 = 1.0 - std::pow(kBeta2, double(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grads[i];
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g;
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g * g;
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      *params[i] -= lr_ * mhat / (std::sqrt(vhat) + kEps);
    }
  }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  double lr_;
  std::size_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

struct StepLog {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // 1-based within the epoch
  LossBreakdown loss;
};

struct ModelCheckpoint {
  TrainConfig config;
  FuseModel model;
};

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<StepLog> log;
  std::size_t degenerate_skips = 0;
};

inline std::vector<double*> collect_parameters(FuseModel& model) {
  std::vector<double*> out = collect_parameters(model.mapper);
  for (double& r : model.weights.raw) out.push_back(&r);
  return out;
}

// Mini-batch training over the taxonomy's edges. Batches are contiguous
// chunks of a per-epoch shuffled edge order; negatives are drawn per edge
// per epoch; one Adam step per batch on the mean loss.
inline TrainResult train(const TrainConfig& cfg, const Taxonomy& taxonomy,
                         const EmbeddingTable& embeddings) {
  cfg.validate();
  if (taxonomy.node_count() < 3) {
    throw std::invalid_argument("train: taxonomy too small to sample negatives");
  }

  std::vector<EntityEmbedding> xs(taxonomy.node_count());
  for (int v = 0; v < int(taxonomy.node_count()); ++v) {
    xs[std::size_t(v)] = embeddings.at(taxonomy.term(v));
    if (xs[std::size_t(v)].size() != embeddings.dim) {
      throw io_error("train: embedding dimension mismatch for term '" +
                     taxonomy.term(v) + "'");
    }
  }

  TrainResult result;
  result.checkpoint.config = cfg;
  FuseModel& model = result.checkpoint.model;
  model = init_model(cfg, embeddings.dim);

  auto slots = collect_parameters(model);
  Adam adam(cfg.learning_rate, slots.size());
  Rng rng(cfg.seed ^ 0x517cc1b727220a95ull);  // decouple from init stream

  const std::size_t n_edges = taxonomy.edge_count();
  std::vector<std::size_t> order(n_edges);
  for (std::size_t i = 0; i < n_edges; ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    std::size_t step = 0;
    for (std::size_t start = 0; start < n_edges; start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, n_edges);
      const std::size_t count = end - start;
      ++step;

      const std::vector<double> xi = model.weights.effective();
      detail::ModelGrad grad = detail::ModelGrad::zeros_like(model);
      LossBreakdown batch{};
      for (std::size_t bi = start; bi < end; ++bi) {
        const auto& [child, parent] = taxonomy.edge_list[order[bi]];
        EdgeSample sample;
        sample.child = child;
        sample.parent = parent;
        sample.rank_negatives =
            sample_negatives(taxonomy, child, cfg.k_rank_negatives, rng);
        if (cfg.k_asym_negatives > 0) {
          sample.asym_negatives =
              sample_negatives(taxonomy, child, cfg.k_asym_negatives, rng);
        }
        const LossBreakdown one = detail::edge_loss(
            model, xi, cfg, xs, sample, &grad, &result.degenerate_skips);
        if (!std::isfinite(one.total)) {
          throw std::runtime_error(
              "train: non-finite loss at epoch " + std::to_string(epoch) +
              " step " + std::to_string(step) + " (edge " +
              taxonomy.term(child) + " -> " + taxonomy.term(parent) + ")");
        }
        batch.ranking += one.ranking;
        batch.asym_pos += one.asym_pos;
        batch.asym_neg += one.asym_neg;
        batch.total += one.total;
      }

      const double inv = 1.0 / double(count);
      batch.ranking *= inv;
      batch.asym_pos *= inv;
      batch.asym_neg *= inv;
      batch.total *= inv;

      std::vector<double> flat = flatten_gradients(grad.mapper);
      std::vector<double> d_raw(model.weights.size(), 0.0);
      detail::chain_weight_grads(model.weights, xi, grad.d_xi, d_raw);
      flat.insert(flat.end(), d_raw.begin(), d_raw.end());
      for (double& g : flat) g *= inv;

      adam.step(slots, flat);
      result.log.push_back(StepLog{epoch, step, batch});
    }
  }
  return result;
}

// epoch, step, ranking, asym_pos, asym_neg, total
inline void write_train_log(const std::filesystem::path& path,
                            std::span<const StepLog> log) {
  std::string out = "epoch\tstep\tranking\tasym_pos\tasym_neg\ttotal\n";
  for (const auto& row : log) {
    out += std::to_string(row.epoch);
    out += '\t';
    out += std::to_string(row.step);
    out += '\t';
    out += format_double(row.loss.ranking);
    out += '\t';
    out += format_double(row.loss.asym_pos);
    out += '\t';
    out += format_double(row.loss.asym_neg);
    out += '\t';
    out += format_double(row.loss.total);
    out += '\n';
  }
  write_text_file(path, out);
}

// ---------------------------------------------------------------------------
// Checkpoint format: versioned, line-oriented text with named sections and
// hexfloat numerals (bit-exact round trips), closed by an FNV-1a checksum of
// everything above it.

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "fuse-checkpoint";

inline std::string_view to_string(OutputNorm n) {
  switch (n) {
    case OutputNorm::Sigmoid: return "sigmoid";
    case OutputNorm::Clamp01: return "clamp01";
    case OutputNorm::LayerNormSigmoid: return "layernorm_sigmoid";
  }
  return "sigmoid";
}

inline std::string_view to_string(WeightNorm n) {
  switch (n) {
    case WeightNorm::None: return "none";
    case WeightNorm::Sigmoid: return "sigmoid";
    case WeightNorm::Softmax: return "softmax";
    case WeightNorm::Clamp01: return "clamp01";
  }
  return "none";
}

inline std::string_view to_string(LogicSystem l) {
  return l == LogicSystem::Product ? "product" : "goedel";
}

inline OutputNorm parse_output_norm(std::string_view s) {
  if (s == "sigmoid") return OutputNorm::Sigmoid;
  if (s == "clamp01") return OutputNorm::Clamp01;
  if (s == "layernorm_sigmoid") return OutputNorm::LayerNormSigmoid;
  throw std::invalid_argument("unknown output norm: '" + std::string(s) + "'");
}

inline WeightNorm parse_weight_norm(std::string_view s) {
  if (s == "none") return WeightNorm::None;
  if (s == "sigmoid") return WeightNorm::Sigmoid;
  if (s == "softmax") return WeightNorm::Softmax;
  if (s == "clamp01") return WeightNorm::Clamp01;
  throw std::invalid_argument("unknown weight norm: '" + std::string(s) + "'");
}

inline LogicSystem parse_logic(std::string_view s) {
  if (s == "product") return LogicSystem::Product;
  if (s == "goedel") return LogicSystem::Goedel;
  throw std::invalid_argument("unknown logic system: '" + std::string(s) + "'");
}

namespace detail {

inline void append_kv(std::string& out, std::string_view key,
                      std::string_view value) {
  out += key;
  out += '\t';
  out += value;
  out += '\n';
}

inline void append_values_hex(std::string& out, std::string_view key,
                              std::span<const double> values) {
  out += key;
  out += '\t';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += format_double_hex(values[i]);
  }
  out += '\n';
}

inline std::string checksum_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[std::size_t(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

}  // namespace detail

inline std::string serialize_checkpoint(const ModelCheckpoint& ckpt) {
  using detail::append_kv;
  using detail::append_values_hex;
  const TrainConfig& c = ckpt.config;
  std::string body;
  body += kCheckpointMagic;
  body += '\t';
  body += std::to_string(kCheckpointVersion);
  body += '\n';

  body += "[config]\n";
  append_kv(body, "partitions", std::to_string(c.partitions));
  {
    std::string h;
    for (std::size_t i = 0; i < c.hidden.size(); ++i) {
      if (i) h += ',';
      h += std::to_string(c.hidden[i]);
    }
    append_kv(body, "hidden", h);
  }
  append_kv(body, "output_norm", to_string(c.output_norm));
  append_kv(body, "weight_norm", to_string(c.weight_norm));
  append_kv(body, "logic", to_string(c.logic));
  append_kv(body, "lambda", format_double_hex(c.lambda));
  append_kv(body, "gamma_p", format_double_hex(c.margins.gamma_p));
  append_kv(body, "gamma_n", format_double_hex(c.margins.gamma_n));
  append_kv(body, "k_rank_negatives", std::to_string(c.k_rank_negatives));
  append_kv(body, "k_asym_negatives", std::to_string(c.k_asym_negatives));
  append_kv(body, "learning_rate", format_double_hex(c.learning_rate));
  append_kv(body, "epochs", std::to_string(c.epochs));
  append_kv(body, "batch_size", std::to_string(c.batch_size));
  append_kv(body, "seed", std::to_string(c.seed));
  append_kv(body, "euclid_norm_in_score",
            c.euclid_norm_in_score ? "1" : "0");

  body += "[volume_weights]\n";
  append_kv(body, "mode", to_string(ckpt.model.weights.mode));
  append_values_hex(body, "raw", ckpt.model.weights.raw);

  body += "[mapper]\n";
  append_kv(body, "output_norm", to_string(ckpt.model.mapper.output_norm));
  append_kv(body, "layers", std::to_string(ckpt.model.mapper.layers.size()));
  for (const auto& layer : ckpt.model.mapper.layers) {
    body += "[layer]\n";
    append_kv(body, "in", std::to_string(layer.in));
    append_kv(body, "out", std::to_string(layer.out));
    for (std::size_t r = 0; r < layer.out; ++r) {
      append_values_hex(
          body, "w",
          std::span<const double>(layer.weight.data() + r * layer.in, layer.in));
    }
    append_values_hex(body, "b", layer.bias);
  }

  std::string out = body;
  out += "[checksum]\n";
  out += "fnv1a64\t";
  out += detail::checksum_hex(fnv1a64(body));
  out += '\n';
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const ModelCheckpoint& ckpt) {
  write_text_file(path, serialize_checkpoint(ckpt));
}

namespace detail {

class CheckpointReader {
 public:
  explicit CheckpointReader(std::vector<std::string_view> lines)
      : lines_(std::move(lines)) {}

  std::string_view next(const std::string& what) {
    if (pos_ >= lines_.size()) {
      throw checkpoint_error("truncated checkpoint: expected " + what);
    }
    return lines_[pos_++];
  }

  void expect_literal(std::string_view lit) {
    const std::string_view line = next(std::string(lit));
    if (line != lit) {
      throw checkpoint_error("malformed checkpoint: expected '" +
                             std::string(lit) + "', got '" + std::string(line) +
                             "'");
    }
  }

  std::string_view value(std::string_view key) {
    const std::string_view line = next("key '" + std::string(key) + "'");
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos || line.substr(0, tab) != key) {
      throw checkpoint_error("malformed checkpoint: expected key '" +
                             std::string(key) + "', got '" + std::string(line) +
                             "'");
    }
    return line.substr(tab + 1);
  }

  std::vector<double> values_hex(std::string_view key, std::size_t expected) {
    const std::string_view payload = value(key);
    const auto tokens = split_spaces(payload);
    if (tokens.size() != expected) {
      throw checkpoint_error("malformed checkpoint: key '" + std::string(key) +
                             "' has " + std::to_string(tokens.size()) +
                             " values, expected " + std::to_string(expected));
    }
    std::vector<double> out;
    out.reserve(expected);
    for (const auto& tok : tokens) {
      out.push_back(parse_double_hex(tok, "checkpoint"));
    }
    return out;
  }

 private:
  std::vector<std::string_view> lines_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline ModelCheckpoint parse_checkpoint(const std::string& text) {
  const std::size_t mark = text.rfind("[checksum]\nfnv1a64\t");
  if (mark == std::string::npos) {
    throw checkpoint_error("truncated checkpoint: missing checksum section");
  }
  const std::string body = text.substr(0, mark);
  {
    const std::string tail = text.substr(mark);
    const auto tail_lines = split_lines(tail);
    if (tail_lines.size() != 2) {
      throw checkpoint_error("malformed checkpoint: bad checksum section");
    }
    const auto fields = split(tail_lines[1], '\t');
    if (fields.size() != 2 || fields[0] != "fnv1a64") {
      throw checkpoint_error("malformed checkpoint: bad checksum line");
    }
    if (std::string(fields[1]) != detail::checksum_hex(fnv1a64(body))) {
      throw checkpoint_error("checkpoint checksum mismatch");
    }
  }

  detail::CheckpointReader r(split_lines(body));
  try {
    {
      const std::string_view header = r.next("header");
      const auto fields = split(header, '\t');
      if (fields.size() != 2 || fields[0] != kCheckpointMagic) {
        throw checkpoint_error("not a checkpoint file");
      }
      const std::uint64_t version = parse_uint(fields[1], "checkpoint version");
      if (version != kCheckpointVersion) {
        throw checkpoint_error("unsupported checkpoint version: " +
                               std::to_string(version));
      }
    }

    ModelCheckpoint ckpt;
    TrainConfig& c = ckpt.config;
    r.expect_literal("[config]");
    c.partitions = parse_uint(r.value("partitions"), "partitions");
    {
      c.hidden.clear();
      const std::string_view h = r.value("hidden");
      if (!h.empty()) {
        for (const auto& tok : split(h, ',')) {
          c.hidden.push_back(parse_uint(tok, "hidden"));
        }
      }
    }
    c.output_norm = parse_output_norm(r.value("output_norm"));
    c.weight_norm = parse_weight_norm(r.value("weight_norm"));
    c.logic = parse_logic(r.value("logic"));
    c.lambda = parse_double_hex(r.value("lambda"), "lambda");
    c.margins.gamma_p = parse_double_hex(r.value("gamma_p"), "gamma_p");
    c.margins.gamma_n = parse_double_hex(r.value("gamma_n"), "gamma_n");
    c.k_rank_negatives =
        parse_uint(r.value("k_rank_negatives"), "k_rank_negatives");
    c.k_asym_negatives =
        parse_uint(r.value("k_asym_negatives"), "k_asym_negatives");
    c.learning_rate =
        parse_double_hex(r.value("learning_rate"), "learning_rate");
    c.epochs = parse_uint(r.value("epochs"), "epochs");
    c.batch_size = parse_uint(r.value("batch_size"), "batch_size");
    c.seed = parse_uint(r.value("seed"), "seed");
    c.euclid_norm_in_score = r.value("euclid_norm_in_score") == "1";

    r.expect_literal("[volume_weights]");
    ckpt.model.weights.mode = parse_weight_norm(r.value("mode"));
    ckpt.model.weights.raw = r.values_hex("raw", c.partitions);

    r.expect_literal("[mapper]");
    ckpt.model.mapper.output_norm = parse_output_norm(r.value("output_norm"));
    const std::uint64_t n_layers = parse_uint(r.value("layers"), "layers");
    for (std::uint64_t l = 0; l < n_layers; ++l) {
      r.expect_literal("[layer]");
      DenseLayer layer;
      layer.in = parse_uint(r.value("in"), "in");
      layer.out = parse_uint(r.value("out"), "out");
      if (layer.in == 0 || layer.out == 0) {
        throw checkpoint_error("malformed checkpoint: zero layer dimension");
      }
      layer.weight.reserve(layer.in * layer.out);
      for (std::size_t row = 0; row < layer.out; ++row) {
        const auto vals = r.values_hex("w", layer.in);
        layer.weight.insert(layer.weight.end(), vals.begin(), vals.end());
      }
      layer.bias = r.values_hex("b", layer.out);
      ckpt.model.mapper.layers.push_back(std::move(layer));
    }
    ckpt.model.mapper.validate();
    ckpt.config.validate();
    return ckpt;
  } catch (const io_error& e) {
    throw checkpoint_error(std::string("malformed checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw checkpoint_error(std::string("malformed checkpoint: ") + e.what());
  }
}

inline ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const io_error& e) {
    throw checkpoint_error(e.what());
  }
  return parse_checkpoint(text);
}

// ---------------------------------------------------------------------------
// Full-objective gradient check: analytic gradients of the mean combined
// loss over a fixed batch of edge samples, against central differences, for
// every mapper parameter and raw volume weight.

inline GradCheckReport grad_check_objective(
    const FuseModel& model, const TrainConfig& cfg,
    std::span<const EntityEmbedding> xs, std::span<const EdgeSample> samples,
    const GradCheckOptions& opts = {}) {
  if (samples.empty()) {
    throw std::invalid_argument("grad_check_objective: empty batch");
  }
  model.mapper.validate();

  FuseModel work = model;
  const double inv = 1.0 / double(samples.size());

  const auto mean_loss = [&](detail::ModelGrad* grad) {
    const std::vector<double> xi = work.weights.effective();
    CompensatedSum total;
    for (const auto& s : samples) {
      total.add(
          detail::edge_loss(work, xi, cfg, xs, s, grad, nullptr).total);
    }
    return total.value() * inv;
  };

  detail::ModelGrad grad = detail::ModelGrad::zeros_like(work);
  mean_loss(&grad);
  std::vector<double> analytic = flatten_gradients(grad.mapper);
  {
    const std::vector<double> xi = work.weights.effective();
    std::vector<double> d_raw(work.weights.size(), 0.0);
    detail::chain_weight_grads(work.weights, xi, grad.d_xi, d_raw);
    analytic.insert(analytic.end(), d_raw.begin(), d_raw.end());
  }
  for (double& g : analytic) g *= inv;

  const auto slots = collect_parameters(work);
  const auto value = [&]() { return mean_loss(nullptr); };

  // Raw volume weights sitting exactly on a clamp boundary are excluded:
  // central differences straddle the kink there, so no subgradient choice
  // can match them. The check is asserted on the differentiable region.
  GradCheckOptions effective_opts = opts;
  const std::size_t mapper_slots = work.mapper.parameter_count();
  for (std::size_t i = 0; i < work.weights.size(); ++i) {
    const double r = work.weights.raw[i];
    const bool kink =
        (work.weights.mode == WeightNorm::None && r == 0.0) ||
        (work.weights.mode == WeightNorm::Clamp01 && (r == 0.0 || r == 1.0));
    if (kink) effective_opts.skip_coords.push_back(mapper_slots + i);
  }
  return detail::grad_check_slots(slots, analytic, value, effective_opts);
}

}  // namespace fuse
