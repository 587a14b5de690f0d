#pragma once

// Empirical study of how well the per-cell supremum representation
// approximates the true fuzzy measure. A membership function over a 1-D
// universe is projected onto a partition by taking cell-wise suprema; the
// simple fuzzy measure of that projection is an upper Darboux sum of the
// reference integral, so the gap is nonnegative and shrinks as the
// partition refines (O(1/n) for Lipschitz functions).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fuse/io.hpp"
#include "fuse/numeric.hpp"

namespace fuse {

struct Universe {
  Universe(double lo_, double hi_) : lo(lo_), hi(hi_) {
    if (!(std::isfinite(lo) && std::isfinite(hi)) || !(hi > lo)) {
      throw std::invalid_argument("Universe: need finite lo < hi");
    }
  }
  double lo;
  double hi;
  double length() const { return hi - lo; }
};

// m(x) = slope*x + intercept, validated to stay in [0,1] on the universe.
struct LinearFn {
  double slope;
  double intercept;
};

// m(x) = amplitude * exp(-(x-center)^2 / width)
struct GaussianFn {
  double center;
  double width;
  double amplitude;
};

// Right-continuous step function: value[i] on [boundaries[i], boundaries[i+1]),
// the last piece closed.
struct PiecewiseConstantFn {
  std::vector<double> boundaries;
  std::vector<double> values;
};

// Linear interpolation through uniformly spaced samples on [lo, hi].
struct TabulatedFn {
  double lo;
  double hi;
  std::vector<double> samples;
  double spacing() const { return (hi - lo) / double(samples.size() - 1); }
};

class MembershipFunction {
 public:
  static MembershipFunction linear(double slope, double intercept,
                                   const Universe& u) {
    const double at_lo = slope * u.lo + intercept;
    const double at_hi = slope * u.hi + intercept;
    if (!in_unit(at_lo) || !in_unit(at_hi)) {
      throw std::invalid_argument(
          "linear membership: values leave [0,1] on the universe");
    }
    return MembershipFunction(LinearFn{slope, intercept});
  }

  static MembershipFunction constant(double value, const Universe& u) {
    return linear(0.0, value, u);
  }

  static MembershipFunction gaussian(double center, double width,
                                     double amplitude) {
    if (!(width > 0.0) || !std::isfinite(center)) {
      throw std::invalid_argument("gaussian membership: need width > 0");
    }
    if (!in_unit(amplitude) || amplitude == 0.0) {
      throw std::invalid_argument(
          "gaussian membership: amplitude must be in (0,1]");
    }
    return MembershipFunction(GaussianFn{center, width, amplitude});
  }

  static MembershipFunction piecewise_constant(std::vector<double> boundaries,
                                               std::vector<double> values) {
    if (boundaries.size() < 2 || values.size() + 1 != boundaries.size()) {
      throw std::invalid_argument(
          "piecewise membership: need k+1 boundaries for k values");
    }
    for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) {
      if (!(boundaries[i] < boundaries[i + 1])) {
        throw std::invalid_argument(
            "piecewise membership: boundaries must be strictly increasing");
      }
    }
    for (double v : values) {
      if (!in_unit(v)) {
        throw std::invalid_argument(
            "piecewise membership: values must lie in [0,1]");
      }
    }
    return MembershipFunction(
        PiecewiseConstantFn{std::move(boundaries), std::move(values)});
  }

  static MembershipFunction tabulated(const Universe& u,
                                      std::vector<double> samples) {
    if (samples.size() < 2) {
      throw std::invalid_argument("tabulated membership: need >= 2 samples");
    }
    for (double v : samples) {
      if (!in_unit(v)) {
        throw std::invalid_argument(
            "tabulated membership: samples must lie in [0,1]");
      }
    }
    return MembershipFunction(TabulatedFn{u.lo, u.hi, std::move(samples)});
  }

  double operator()(double x) const {
    return std::visit([x](const auto& fn) { return eval(fn, x); }, fn_);
  }

  // Supremum over the half-open cell [a, b). For the continuous kinds the
  // half-open sup equals the closed sup; for step functions the open right
  // end keeps cell boundaries aligned with jumps exact.
  double sup_on(double a, double b) const {
    return std::visit([&](const auto& fn) { return sup(fn, a, b); }, fn_);
  }

  bool is_tabulated() const {
    return std::holds_alternative<TabulatedFn>(fn_);
  }
  bool is_lipschitz() const {
    return !std::holds_alternative<PiecewiseConstantFn>(fn_);
  }
  const TabulatedFn* as_tabulated() const {
    return std::get_if<TabulatedFn>(&fn_);
  }

 private:
  using Fn = std::variant<LinearFn, GaussianFn, PiecewiseConstantFn, TabulatedFn>;

  explicit MembershipFunction(Fn fn) : fn_(std::move(fn)) {}

  static bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

  static double eval(const LinearFn& f, double x) {
    return f.slope * x + f.intercept;
  }

  static double eval(const GaussianFn& f, double x) {
    const double d = x - f.center;
    return f.amplitude * std::exp(-d * d / f.width);
  }

  static double eval(const PiecewiseConstantFn& f, double x) {
    // Outside the boundary range the nearest piece extends.
    if (x < f.boundaries.front()) return f.values.front();
    if (x >= f.boundaries.back()) return f.values.back();
    const auto it =
        std::upper_bound(f.boundaries.begin(), f.boundaries.end(), x);
    const std::size_t piece = std::size_t(it - f.boundaries.begin()) - 1;
    return f.values[std::min(piece, f.values.size() - 1)];
  }

  static double eval(const TabulatedFn& f, double x) {
    const std::size_t n = f.samples.size();
    if (x <= f.lo) return f.samples.front();
    if (x >= f.hi) return f.samples.back();
    const double t = (x - f.lo) / (f.hi - f.lo) * double(n - 1);
    std::size_t i = std::min(std::size_t(t), n - 2);
    const double frac = t - double(i);
    return f.samples[i] + frac * (f.samples[i + 1] - f.samples[i]);
  }

  static double sup(const LinearFn& f, double a, double b) {
    return std::max(eval(f, a), eval(f, b));
  }

  static double sup(const GaussianFn& f, double a, double b) {
    if (f.center >= a && f.center <= b) return f.amplitude;
    return std::max(eval(f, a), eval(f, b));
  }

  static double sup(const PiecewiseConstantFn& f, double a, double b) {
    // Max over pieces overlapping [a, b): piece [p, q) overlaps iff p < b
    // and q > a; the last (closed) piece also counts when a falls at or
    // beyond its start.
    double best = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t i = 0; i < f.values.size(); ++i) {
      const double p = f.boundaries[i];
      const double q = f.boundaries[i + 1];
      const bool last = (i + 1 == f.values.size());
      const bool overlaps = last ? (p < b && q >= a) : (p < b && q > a);
      if (overlaps) {
        best = std::max(best, f.values[i]);
        any = true;
      }
    }
    if (!any) return eval(f, a);  // cell outside boundary range
    return best;
  }

  static double sup(const TabulatedFn& f, double a, double b) {
    // A piecewise-linear interpolant attains its sup at the cell ends or at
    // sample points inside the cell.
    double best = std::max(eval(f, a), eval(f, b));
    const double spacing = f.spacing();
    double kf = std::ceil((a - f.lo) / spacing);
    if (kf < 0.0) kf = 0.0;
    for (std::size_t k = std::size_t(kf); k < f.samples.size(); ++k) {
      const double x = f.lo + double(k) * spacing;
      if (x >= b) break;
      if (x > a) best = std::max(best, f.samples[k]);
    }
    return best;
  }

  Fn fn_;
};

// Strictly increasing cell boundaries; cell i spans
// [boundaries[i], boundaries[i+1]).
struct Partition {
  explicit Partition(std::vector<double> bounds)
      : boundaries(std::move(bounds)) {
    if (boundaries.size() < 2) {
      throw std::invalid_argument("Partition: need at least one cell");
    }
    for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) {
      if (!(boundaries[i] < boundaries[i + 1])) {
        throw std::invalid_argument(
            "Partition: boundaries must be strictly increasing");
      }
    }
  }

  std::vector<double> boundaries;

  std::size_t cells() const { return boundaries.size() - 1; }
  double cell_lo(std::size_t i) const { return boundaries[i]; }
  double cell_hi(std::size_t i) const { return boundaries[i + 1]; }
  double cell_length(std::size_t i) const {
    return boundaries[i + 1] - boundaries[i];
  }
  double min_cell_length() const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cells(); ++i) m = std::min(m, cell_length(i));
    return m;
  }
  Universe universe() const {
    return Universe(boundaries.front(), boundaries.back());
  }
};

inline Partition build_uniform_partition(const Universe& u, std::size_t n) {
  if (n == 0) {
    throw std::invalid_argument("build_uniform_partition: n must be >= 1");
  }
  std::vector<double> b(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    b[i] = u.lo + (u.hi - u.lo) * (double(i) / double(n));
  }
  b.front() = u.lo;
  b.back() = u.hi;
  return Partition(std::move(b));
}

// Splits every cell into `factor` equal parts; original boundaries are kept
// bit-exact, so the result is a strict refinement.
inline Partition refine(const Partition& p, std::size_t factor) {
  if (factor < 2) {
    throw std::invalid_argument("refine: factor must be >= 2");
  }
  std::vector<double> b;
  b.reserve(p.cells() * factor + 1);
  for (std::size_t i = 0; i < p.cells(); ++i) {
    const double lo = p.cell_lo(i);
    const double len = p.cell_length(i);
    b.push_back(lo);
    for (std::size_t j = 1; j < factor; ++j) {
      b.push_back(lo + len * (double(j) / double(factor)));
    }
  }
  b.push_back(p.boundaries.back());
  return Partition(std::move(b));
}

// Projection of a membership function onto a partition: one supremum per cell.
struct SimpleFuzzySet {
  Partition partition;
  std::vector<double> sup_values;
};

struct ProjectOptions {
  // Dense-grid fallback resolution (points per cell) when analytic suprema
  // are disabled.
  std::size_t grid_points_per_cell = 4096;
  bool force_grid = false;
};

// Grid search for the supremum with one refinement pass around the argmax.
inline double grid_sup(const MembershipFunction& m, double a, double b,
                       std::size_t points) {
  if (points < 2) points = 2;
  double best = -std::numeric_limits<double>::infinity();
  double best_x = a;
  for (std::size_t j = 0; j <= points; ++j) {
    const double x = a + (b - a) * (double(j) / double(points));
    const double v = m(x);
    if (v > best) {
      best = v;
      best_x = x;
    }
  }
  const double h = (b - a) / double(points);
  const double lo = std::max(a, best_x - h);
  const double hi = std::min(b, best_x + h);
  for (std::size_t j = 0; j <= 64; ++j) {
    const double x = lo + (hi - lo) * (double(j) / 64.0);
    best = std::max(best, m(x));
  }
  return best;
}

inline SimpleFuzzySet project(const MembershipFunction& m, const Partition& p,
                              const ProjectOptions& opts = {}) {
  if (const TabulatedFn* tab = m.as_tabulated()) {
    if (tab->spacing() > p.min_cell_length()) {
      throw std::invalid_argument(
          "project: insufficient resolution (tabulated sample spacing " +
          std::to_string(tab->spacing()) + " exceeds smallest cell length " +
          std::to_string(p.min_cell_length()) + ")");
    }
  }
  std::vector<double> sups(p.cells());
  for (std::size_t i = 0; i < p.cells(); ++i) {
    sups[i] = opts.force_grid
                  ? grid_sup(m, p.cell_lo(i), p.cell_hi(i),
                             opts.grid_points_per_cell)
                  : m.sup_on(p.cell_lo(i), p.cell_hi(i));
  }
  return SimpleFuzzySet{p, std::move(sups)};
}

// Upper Darboux sum: sum_i sup_i * cell_length_i.
inline double simple_fuzzy_measure(const SimpleFuzzySet& s) {
  CompensatedSum total;
  for (std::size_t i = 0; i < s.partition.cells(); ++i) {
    total.add(s.sup_values[i] * s.partition.cell_length(i));
  }
  return total.value();
}

// Midpoint-rule integral of the membership function; the oracle the simple
// measure is compared against.
inline double reference_fuzzy_measure(const MembershipFunction& m,
                                      const Universe& u,
                                      std::size_t resolution = 1000000) {
  if (resolution < 1000) {
    throw std::invalid_argument(
        "reference_fuzzy_measure: resolution must be >= 1000");
  }
  const double h = u.length() / double(resolution);
  CompensatedSum total;
  for (std::size_t i = 0; i < resolution; ++i) {
    const double x = u.lo + (double(i) + 0.5) * h;
    total.add(m(x));
  }
  return total.value() * h;
}

// Trapezoid-rule variant used to cross-check the midpoint oracle.
inline double reference_fuzzy_measure_trapezoid(const MembershipFunction& m,
                                                const Universe& u,
                                                std::size_t resolution = 1000000) {
  if (resolution < 1000) {
    throw std::invalid_argument(
        "reference_fuzzy_measure_trapezoid: resolution must be >= 1000");
  }
  const double h = u.length() / double(resolution);
  CompensatedSum total;
  total.add(0.5 * m(u.lo));
  total.add(0.5 * m(u.hi));
  for (std::size_t i = 1; i < resolution; ++i) {
    total.add(m(u.lo + double(i) * h));
  }
  return total.value() * h;
}

struct ConvergenceRow {
  std::size_t n;
  double p_mu;
  double p_ref;
  double gap;
  double ratio_to_prev;  // gap(n) / gap(previous n); NaN for the first row
                         // or when the previous gap is zero
};

// Runs the projection at each partition size against a single high-resolution
// reference. Sizes must be strictly increasing.
inline std::vector<ConvergenceRow> convergence_study(
    const MembershipFunction& m, const Universe& u,
    std::span<const std::size_t> sizes, std::size_t resolution = 1000000,
    const ProjectOptions& opts = {}) {
  if (sizes.empty()) {
    throw std::invalid_argument("convergence_study: no partition sizes");
  }
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    if (!(sizes[i] < sizes[i + 1])) {
      throw std::invalid_argument(
          "convergence_study: sizes must be strictly increasing");
    }
  }
  const double p_ref = reference_fuzzy_measure(m, u, resolution);
  std::vector<ConvergenceRow> rows;
  rows.reserve(sizes.size());
  double prev_gap = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t n : sizes) {
    const Partition p = build_uniform_partition(u, n);
    const double p_mu = simple_fuzzy_measure(project(m, p, opts));
    const double gap = p_mu - p_ref;
    double ratio = std::numeric_limits<double>::quiet_NaN();
    if (!std::isnan(prev_gap) && prev_gap != 0.0) {
      ratio = gap / prev_gap;
    }
    rows.push_back(ConvergenceRow{n, p_mu, p_ref, gap, ratio});
    prev_gap = gap;
  }
  return rows;
}

// Checks a study against the theory: every gap must stay above -1e-9 (the
// simple measure is an upper bound), and for Lipschitz functions each
// doubling step with n >= 64 must roughly halve the gap. Returns a
// description of the first violation, or an empty string.
inline std::string convergence_violation(std::span<const ConvergenceRow> rows,
                                         bool lipschitz_rate_check) {
  for (const auto& r : rows) {
    if (r.gap <= -1e-9) {
      return "gap " + format_double(r.gap) + " at n=" + std::to_string(r.n) +
             " is not an upper bound";
    }
  }
  if (lipschitz_rate_check) {
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& prev = rows[i - 1];
      const auto& r = rows[i];
      if (r.n != 2 * prev.n || prev.n < 64) continue;
      // Gaps at quadrature-noise level carry no rate information.
      if (std::abs(prev.gap) <= 1e-9 && std::abs(r.gap) <= 1e-9) continue;
      if (!(r.ratio_to_prev >= 0.4 && r.ratio_to_prev <= 0.6)) {
        return "ratio gap(" + std::to_string(r.n) + ")/gap(" +
               std::to_string(prev.n) + ") = " +
               format_double(r.ratio_to_prev) + " outside [0.4, 0.6]";
      }
    }
  }
  return {};
}

inline std::string serialize_convergence(std::span<const ConvergenceRow> rows) {
  std::string out = "n\tp_mu\tp_ref\tgap\tratio_to_prev\n";
  for (const auto& r : rows) {
    out += std::to_string(r.n);
    out += '\t';
    out += format_double(r.p_mu);
    out += '\t';
    out += format_double(r.p_ref);
    out += '\t';
    out += format_double(r.gap);
    out += '\t';
    out += format_double(r.ratio_to_prev);
    out += '\n';
  }
  return out;
}

inline void write_convergence_tsv(const std::filesystem::path& path,
                                  std::span<const ConvergenceRow> rows) {
  write_text_file(path, serialize_convergence(rows));
}

}  // namespace fuse
