#pragma once

// Maps entity embeddings (R^e) to membership vectors ([0,1]^d) with a small
// dense network: tanh hidden layers and a squashing output stage. Forward,
// reverse-mode gradients, and a finite-difference gradient check live here.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fuse/algebra.hpp"
#include "fuse/numeric.hpp"
#include "fuse/rng.hpp"

namespace fuse {

using EntityEmbedding = std::vector<double>;

enum class OutputNorm { Sigmoid, Clamp01, LayerNormSigmoid };

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // row-major, out x in
  std::vector<double> bias;    // out
};

struct MapperParams {
  std::vector<DenseLayer> layers;
  OutputNorm output_norm = OutputNorm::Sigmoid;

  std::size_t input_dim() const { return layers.front().in; }
  std::size_t output_dim() const { return layers.back().out; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  void validate() const {
    if (layers.empty()) {
      throw std::invalid_argument("MapperParams: no layers");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.in == 0 || l.out == 0 || l.weight.size() != l.in * l.out ||
          l.bias.size() != l.out) {
        throw std::invalid_argument("MapperParams: layer " + std::to_string(i) +
                                    " has inconsistent shape");
      }
      if (i > 0 && l.in != layers[i - 1].out) {
        throw std::invalid_argument("MapperParams: layer " + std::to_string(i) +
                                    " input does not match previous output");
      }
      if (!all_finite(l.weight) || !all_finite(l.bias)) {
        throw std::invalid_argument("MapperParams: layer " + std::to_string(i) +
                                    " has non-finite parameters");
      }
    }
  }
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init for weights and biases.
inline MapperParams init_mapper(std::size_t input_dim,
                                std::span<const std::size_t> hidden,
                                std::size_t output_dim, OutputNorm norm,
                                std::uint64_t seed) {
  if (input_dim == 0 || output_dim == 0) {
    throw std::invalid_argument("init_mapper: zero dimension");
  }
  std::vector<std::size_t> dims;
  dims.push_back(input_dim);
  for (std::size_t h : hidden) {
    if (h == 0) throw std::invalid_argument("init_mapper: zero hidden width");
    dims.push_back(h);
  }
  dims.push_back(output_dim);

  Rng rng(seed);
  MapperParams params;
  params.output_norm = norm;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.in = dims[l];
    layer.out = dims[l + 1];
    const double bound = 1.0 / std::sqrt(double(layer.in));
    layer.weight.resize(layer.in * layer.out);
    layer.bias.resize(layer.out);
    for (double& w : layer.weight) w = rng.uniform(-bound, bound);
    for (double& b : layer.bias) b = rng.uniform(-bound, bound);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

inline constexpr double kLayerNormEps = 1e-5;

struct ForwardTrace {
  // inputs[l] is the activation fed into layer l; inputs[0] is x itself.
  std::vector<std::vector<double>> inputs;
  // Pre-activation of the final layer (before the output squash).
  std::vector<double> final_preact;
  // Layer-norm intermediates, used only for LayerNormSigmoid.
  std::vector<double> ln_normalized;
  double ln_inv_std = 0.0;
  std::vector<double> output;
};

namespace detail {

inline void dense_forward(const DenseLayer& l, std::span<const double> x,
                          std::vector<double>& out) {
  out.assign(l.out, 0.0);
  for (std::size_t r = 0; r < l.out; ++r) {
    const double* w = l.weight.data() + r * l.in;
    double acc = l.bias[r];
    for (std::size_t c = 0; c < l.in; ++c) acc += w[c] * x[c];
    out[r] = acc;
  }
}

}  // namespace detail

inline FuzzyVec map_entity(const EntityEmbedding& x, const MapperParams& params,
                           ForwardTrace* trace = nullptr) {
  if (x.size() != params.input_dim()) {
    throw std::invalid_argument(
        "map_entity: embedding dimension " + std::to_string(x.size()) +
        " does not match mapper input " + std::to_string(params.input_dim()));
  }
  if (!all_finite(x)) {
    throw std::invalid_argument("map_entity: non-finite input embedding");
  }
  if (trace) {
    trace->inputs.clear();
    trace->inputs.push_back(x);
  }

  std::vector<double> cur = x;
  std::vector<double> next;
  const std::size_t L = params.layers.size();
  for (std::size_t l = 0; l < L; ++l) {
    detail::dense_forward(params.layers[l], cur, next);
    if (!all_finite(next)) {
      throw std::runtime_error("map_entity: non-finite pre-activation in layer " +
                               std::to_string(l));
    }
    if (l + 1 < L) {
      for (double& v : next) v = std::tanh(v);
      if (trace) trace->inputs.push_back(next);
      cur = next;
    } else {
      if (trace) trace->final_preact = next;
      cur = std::move(next);
    }
  }

  const std::size_t d = cur.size();
  std::vector<double> out(d);
  switch (params.output_norm) {
    case OutputNorm::Sigmoid:
      for (std::size_t i = 0; i < d; ++i) out[i] = sigmoid(cur[i]);
      break;
    case OutputNorm::Clamp01:
      for (std::size_t i = 0; i < d; ++i) out[i] = std::clamp(cur[i], 0.0, 1.0);
      break;
    case OutputNorm::LayerNormSigmoid: {
      CompensatedSum mean_s;
      for (double v : cur) mean_s.add(v);
      const double mean = mean_s.value() / double(d);
      CompensatedSum var_s;
      for (double v : cur) var_s.add((v - mean) * (v - mean));
      const double inv_std = 1.0 / std::sqrt(var_s.value() / double(d) +
                                             kLayerNormEps);
      std::vector<double> normed(d);
      for (std::size_t i = 0; i < d; ++i) normed[i] = (cur[i] - mean) * inv_std;
      for (std::size_t i = 0; i < d; ++i) out[i] = sigmoid(normed[i]);
      if (trace) {
        trace->ln_normalized = std::move(normed);
        trace->ln_inv_std = inv_std;
      }
      break;
    }
  }
  if (trace) trace->output = out;
  return FuzzyVec::unchecked(std::move(out));
}

struct LayerGrad {
  std::vector<double> d_weight;
  std::vector<double> d_bias;
};

struct GradientBundle {
  std::vector<LayerGrad> layers;
  std::vector<double> d_input;

  static GradientBundle zeros_like(const MapperParams& params) {
    GradientBundle g;
    g.layers.resize(params.layers.size());
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      g.layers[l].d_weight.assign(params.layers[l].weight.size(), 0.0);
      g.layers[l].d_bias.assign(params.layers[l].bias.size(), 0.0);
    }
    g.d_input.assign(params.input_dim(), 0.0);
    return g;
  }
};

// Accumulates d(loss)/d(params) and d(loss)/d(input) into `accum` given
// upstream = d(loss)/d(output). The trace must come from map_entity on the
// same parameters.
inline void accumulate_backward(const MapperParams& params,
                                const ForwardTrace& trace,
                                std::span<const double> upstream,
                                GradientBundle& accum) {
  const std::size_t L = params.layers.size();
  const std::size_t d = params.output_dim();
  if (upstream.size() != d) {
    throw std::invalid_argument("accumulate_backward: upstream size mismatch");
  }

  // Output squash backward: dz = d(loss)/d(final pre-activation).
  std::vector<double> dz(d);
  switch (params.output_norm) {
    case OutputNorm::Sigmoid:
      for (std::size_t i = 0; i < d; ++i) {
        const double u = trace.output[i];
        dz[i] = upstream[i] * u * (1.0 - u);
      }
      break;
    case OutputNorm::Clamp01:
      for (std::size_t i = 0; i < d; ++i) {
        const double z = trace.final_preact[i];
        dz[i] = (z > 0.0 && z < 1.0) ? upstream[i] : 0.0;
      }
      break;
    case OutputNorm::LayerNormSigmoid: {
      // Through the sigmoid first, then the layer norm.
      std::vector<double> dy(d);
      for (std::size_t i = 0; i < d; ++i) {
        const double u = trace.output[i];
        dy[i] = upstream[i] * u * (1.0 - u);
      }
      CompensatedSum sum_dy_s;
      CompensatedSum sum_dyy_s;
      for (std::size_t i = 0; i < d; ++i) {
        sum_dy_s.add(dy[i]);
        sum_dyy_s.add(dy[i] * trace.ln_normalized[i]);
      }
      const double mean_dy = sum_dy_s.value() / double(d);
      const double mean_dyy = sum_dyy_s.value() / double(d);
      for (std::size_t i = 0; i < d; ++i) {
        dz[i] = trace.ln_inv_std *
                (dy[i] - mean_dy - trace.ln_normalized[i] * mean_dyy);
      }
      break;
    }
  }

  // Dense layers backward, last to first.
  for (std::size_t li = L; li-- > 0;) {
    const DenseLayer& layer = params.layers[li];
    LayerGrad& grad = accum.layers[li];
    const std::vector<double>& a = trace.inputs[li];
    std::vector<double> da(layer.in, 0.0);
    for (std::size_t r = 0; r < layer.out; ++r) {
      const double g = dz[r];
      grad.d_bias[r] += g;
      double* dw = grad.d_weight.data() + r * layer.in;
      const double* w = layer.weight.data() + r * layer.in;
      for (std::size_t c = 0; c < layer.in; ++c) {
        dw[c] += g * a[c];
        da[c] += g * w[c];
      }
    }
    if (li > 0) {
      // a is tanh output of the previous layer; tanh' = 1 - a^2.
      dz.resize(layer.in);
      for (std::size_t c = 0; c < layer.in; ++c) {
        dz[c] = da[c] * (1.0 - a[c] * a[c]);
      }
    } else {
      for (std::size_t c = 0; c < layer.in; ++c) accum.d_input[c] += da[c];
    }
  }
}

// One-shot convenience: forward + backward for a single input.
inline GradientBundle map_entity_backward(const EntityEmbedding& x,
                                          const MapperParams& params,
                                          std::span<const double> upstream) {
  ForwardTrace trace;
  map_entity(x, params, &trace);
  GradientBundle g = GradientBundle::zeros_like(params);
  accumulate_backward(params, trace, upstream, g);
  return g;
}

// Flat views over all trainable scalars, layer by layer (weights then bias).
inline std::vector<double*> collect_parameters(MapperParams& params) {
  std::vector<double*> out;
  out.reserve(params.parameter_count());
  for (auto& l : params.layers) {
    for (double& w : l.weight) out.push_back(&w);
    for (double& b : l.bias) out.push_back(&b);
  }
  return out;
}

inline std::vector<double> flatten_gradients(const GradientBundle& g) {
  std::vector<double> out;
  for (const auto& l : g.layers) {
    out.insert(out.end(), l.d_weight.begin(), l.d_weight.end());
    out.insert(out.end(), l.d_bias.begin(), l.d_bias.end());
  }
  return out;
}

struct GradCheckOptions {
  double step = 1e-5;
  double denom_floor = 1e-8;
  // All coordinates are checked up to this count; beyond it a seeded random
  // subsample of at least `subsample` coordinates is used.
  std::size_t max_exhaustive = 1000;
  std::size_t subsample = 200;
  std::uint64_t seed = 17;
  // Negative-control hook: added to every analytic gradient before the
  // comparison, so a nonzero value must make the check fail.
  double corrupt_analytic = 0.0;
  // Coordinates excluded from the comparison because the loss is not
  // differentiable there (parameters sitting exactly on a clamp boundary,
  // where central differences straddle the kink). Projected-gradient
  // convention: the check is asserted on the differentiable region only.
  std::vector<std::size_t> skip_coords;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_coord = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  bool pass(double tol = 1e-4) const { return max_rel_error < tol; }
};

namespace detail {

inline std::vector<std::size_t> gradcheck_coords(std::size_t total,
                                                 const GradCheckOptions& opts) {
  std::vector<std::size_t> coords(total);
  for (std::size_t i = 0; i < total; ++i) coords[i] = i;
  if (!opts.skip_coords.empty()) {
    std::vector<std::size_t> skip = opts.skip_coords;
    std::sort(skip.begin(), skip.end());
    std::erase_if(coords, [&](std::size_t c) {
      return std::binary_search(skip.begin(), skip.end(), c);
    });
  }
  if (coords.size() > opts.max_exhaustive) {
    Rng rng(opts.seed);
    rng.shuffle(coords);
    coords.resize(std::max(opts.subsample, std::size_t(1)));
    std::sort(coords.begin(), coords.end());
  }
  return coords;
}

// Central-difference check of `analytic` against `value` over the given
// parameter slots.
template <class ValueFn>
inline GradCheckReport grad_check_slots(std::span<double* const> slots,
                                        std::span<const double> analytic,
                                        ValueFn&& value,
                                        const GradCheckOptions& opts) {
  GradCheckReport report;
  const auto coords = gradcheck_coords(slots.size(), opts);
  for (std::size_t idx : coords) {
    double* slot = slots[idx];
    const double saved = *slot;
    *slot = saved + opts.step;
    const double up = value();
    *slot = saved - opts.step;
    const double down = value();
    *slot = saved;
    const double numeric = (up - down) / (2.0 * opts.step);
    const double a = analytic[idx] + opts.corrupt_analytic;
    const double denom =
        std::max({std::abs(a), std::abs(numeric), opts.denom_floor});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_coord = idx;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
    ++report.coords_checked;
  }
  return report;
}

}  // namespace detail

// Loss defined on the batch of mapper outputs, with its gradient w.r.t.
// each output.
struct OutputLoss {
  double value = 0.0;
  std::vector<std::vector<double>> d_outputs;
};

// Checks analytic parameter gradients of loss(map_entity(x_1..x_B)) against
// central finite differences. The loss functor must fill d_outputs with one
// gradient vector per input.
template <class LossFn>
inline GradCheckReport grad_check(const MapperParams& params,
                                  std::span<const EntityEmbedding> xs,
                                  LossFn&& loss,
                                  const GradCheckOptions& opts = {}) {
  if (xs.empty()) {
    throw std::invalid_argument("grad_check: empty batch");
  }
  params.validate();

  MapperParams work = params;

  const auto eval_outputs = [&](std::vector<FuzzyVec>& outs) {
    outs.clear();
    outs.reserve(xs.size());
    for (const auto& x : xs) outs.push_back(map_entity(x, work));
  };

  // Analytic gradient.
  std::vector<ForwardTrace> traces(xs.size());
  std::vector<FuzzyVec> outputs;
  outputs.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    outputs.push_back(map_entity(xs[i], work, &traces[i]));
  }
  OutputLoss l = loss(outputs);
  if (l.d_outputs.size() != xs.size()) {
    throw std::invalid_argument("grad_check: loss returned wrong batch size");
  }
  GradientBundle bundle = GradientBundle::zeros_like(work);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    accumulate_backward(work, traces[i], l.d_outputs[i], bundle);
  }
  const std::vector<double> analytic = flatten_gradients(bundle);

  const auto slots = collect_parameters(work);
  const auto value = [&]() {
    std::vector<FuzzyVec> outs;
    eval_outputs(outs);
    return loss(outs).value;
  };
  return detail::grad_check_slots(slots, analytic, value, opts);
}

}  // namespace fuse
