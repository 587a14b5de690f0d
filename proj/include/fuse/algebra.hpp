#pragma once

// Fuzzy-set algebra on membership vectors in [0,1]^d: element-wise set
// operations under product or Goedel logic, volume-weight normalization,
// and the measure-based scores built on them. All operations are closed
// over [0,1]^d by construction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fuse/numeric.hpp"

namespace fuse {

enum class LogicSystem { Product, Goedel };

enum class WeightNorm { None, Sigmoid, Softmax, Clamp01 };

// A child set whose measure is (numerically) zero has no well-defined
// containment probability.
struct degenerate_set_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Below this, a set's measure is treated as zero when it appears in a
// denominator.
inline constexpr double kDegenerateMeasureEps = 1e-12;

// Membership vector over d partition cells; every entry lies in [0,1].
class FuzzyVec {
 public:
  explicit FuzzyVec(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) {
      throw std::invalid_argument("FuzzyVec: dimension must be at least 1");
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const double v = values_[i];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument("FuzzyVec: entry " + std::to_string(i) +
                                    " = " + std::to_string(v) +
                                    " outside [0,1]");
      }
    }
  }

  // For values already guaranteed in range (outputs of closed operations).
  static FuzzyVec unchecked(std::vector<double> values) {
    FuzzyVec v;
    v.values_ = std::move(values);
    return v;
  }

  static FuzzyVec zeros(std::size_t d) {
    return unchecked(std::vector<double>(d, 0.0));
  }

  static FuzzyVec ones(std::size_t d) {
    return unchecked(std::vector<double>(d, 1.0));
  }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const { return values_; }
  operator std::span<const double>() const { return values_; }

  friend bool operator==(const FuzzyVec& a, const FuzzyVec& b) {
    return a.values_ == b.values_;
  }

 private:
  FuzzyVec() = default;
  std::vector<double> values_;
};

namespace detail {

inline void require_same_dim(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw std::invalid_argument(std::string(op) + ": dimension mismatch (" +
                                std::to_string(a) + " vs " +
                                std::to_string(b) + ")");
  }
}

}  // namespace detail

// Element-wise t-norm: product a*b or Goedel min(a,b).
inline FuzzyVec intersect(const FuzzyVec& a, const FuzzyVec& b,
                          LogicSystem logic = LogicSystem::Product) {
  detail::require_same_dim(a.size(), b.size(), "intersect");
  std::vector<double> r(a.size());
  if (logic == LogicSystem::Product) {
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = a[i] * b[i];
  } else {
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = std::min(a[i], b[i]);
  }
  return FuzzyVec::unchecked(std::move(r));
}

// Element-wise t-conorm: probabilistic sum a+b-ab or Goedel max(a,b).
// The min() guard absorbs the rare rounding excursion above 1 while
// keeping union(a, 0) == a bit-exact.
inline FuzzyVec set_union(const FuzzyVec& a, const FuzzyVec& b,
                          LogicSystem logic = LogicSystem::Product) {
  detail::require_same_dim(a.size(), b.size(), "set_union");
  std::vector<double> r(a.size());
  if (logic == LogicSystem::Product) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      r[i] = std::min(a[i] + b[i] - a[i] * b[i], 1.0);
    }
  } else {
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = std::max(a[i], b[i]);
  }
  return FuzzyVec::unchecked(std::move(r));
}

inline FuzzyVec complement(const FuzzyVec& a) {
  std::vector<double> r(a.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = 1.0 - a[i];
  return FuzzyVec::unchecked(std::move(r));
}

// Maps raw (unconstrained) weights to effective non-negative cell volumes.
inline std::vector<double> normalize_weights(std::span<const double> raw,
                                             WeightNorm mode) {
  if (raw.empty()) {
    throw std::invalid_argument("normalize_weights: empty weight vector");
  }
  std::vector<double> out(raw.size());
  switch (mode) {
    case WeightNorm::None:
      for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = std::max(raw[i], 0.0);
      }
      break;
    case WeightNorm::Sigmoid:
      for (std::size_t i = 0; i < raw.size(); ++i) out[i] = sigmoid(raw[i]);
      break;
    case WeightNorm::Softmax: {
      const double m = *std::max_element(raw.begin(), raw.end());
      CompensatedSum total;
      for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = std::exp(raw[i] - m);
        total.add(out[i]);
      }
      const double denom = total.value();
      for (double& v : out) v /= denom;
      break;
    }
    case WeightNorm::Clamp01:
      for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = std::clamp(raw[i], 0.0, 1.0);
      }
      break;
  }
  return out;
}

// Trainable cell volumes; `raw` is what the optimizer touches, `effective()`
// is what the measure uses.
struct VolumeWeights {
  std::vector<double> raw;
  WeightNorm mode = WeightNorm::None;

  std::vector<double> effective() const { return normalize_weights(raw, mode); }
  std::size_t size() const { return raw.size(); }
};

// Weighted mass of a membership vector: sum_i a_i * xi_i.
inline double measure_span(std::span<const double> membership,
                           std::span<const double> xi) {
  detail::require_same_dim(membership.size(), xi.size(), "measure");
  CompensatedSum s;
  for (std::size_t i = 0; i < membership.size(); ++i) {
    s.add(membership[i] * xi[i]);
  }
  return s.value();
}

inline double measure(const FuzzyVec& a, const VolumeWeights& w) {
  return measure_span(a.values(), w.effective());
}

// Measure of the intersection of anchor and candidate: sum_i t(a_i, y_i) * xi_i.
inline double psi_span(std::span<const double> anchor,
                       std::span<const double> candidate,
                       std::span<const double> xi,
                       LogicSystem logic = LogicSystem::Product) {
  detail::require_same_dim(anchor.size(), candidate.size(), "psi");
  detail::require_same_dim(anchor.size(), xi.size(), "psi");
  CompensatedSum s;
  if (logic == LogicSystem::Product) {
    for (std::size_t i = 0; i < anchor.size(); ++i) {
      s.add(anchor[i] * candidate[i] * xi[i]);
    }
  } else {
    for (std::size_t i = 0; i < anchor.size(); ++i) {
      s.add(std::min(anchor[i], candidate[i]) * xi[i]);
    }
  }
  return s.value();
}

inline double membership_score(const FuzzyVec& candidate, const FuzzyVec& anchor,
                               const VolumeWeights& w) {
  return psi_span(anchor.values(), candidate.values(), w.effective());
}

// P(parent | child) = measure(parent ∩ child) / measure(child). Throws
// degenerate_set_error when the child's measure is numerically zero. The
// result is clipped into [0,1] against rounding.
inline double containment_span(std::span<const double> parent,
                               std::span<const double> child,
                               std::span<const double> xi,
                               LogicSystem logic = LogicSystem::Product) {
  const double denom = measure_span(child, xi);
  if (denom <= kDegenerateMeasureEps) {
    throw degenerate_set_error(
        "containment: child set has measure " + std::to_string(denom) +
        " (degenerate)");
  }
  const double num = psi_span(parent, child, xi, logic);
  return std::clamp(num / denom, 0.0, 1.0);
}

inline double containment_probability(const FuzzyVec& parent,
                                      const FuzzyVec& child,
                                      const VolumeWeights& w) {
  return containment_span(parent.values(), child.values(), w.effective());
}

}  // namespace fuse
