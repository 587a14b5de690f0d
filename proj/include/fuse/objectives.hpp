#pragma once

// Training objectives: margin ranking loss on membership scores, squared
// asymmetry penalties on containment probabilities, and their weighted
// combination. Every loss has an analytic-gradient variant used by the
// trainer and checked numerically in tests.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "fuse/numeric.hpp"

namespace fuse {

struct Margins {
  double gamma_p = 0.6;
  double gamma_n = 0.4;
};

// -log sigmoid(pos - gamma_p) - (1/k) sum_j log sigmoid(gamma_n - neg_j)
inline double ranking_loss(double pos_score, std::span<const double> neg_scores,
                           const Margins& m) {
  if (neg_scores.empty()) {
    throw std::invalid_argument("ranking_loss: need at least one negative");
  }
  double loss = softplus(m.gamma_p - pos_score);
  CompensatedSum negs;
  for (double s : neg_scores) negs.add(softplus(s - m.gamma_n));
  return loss + negs.value() / double(neg_scores.size());
}

struct RankingGrad {
  double d_pos;
  std::vector<double> d_negs;
};

inline double ranking_loss(double pos_score, std::span<const double> neg_scores,
                           const Margins& m, RankingGrad& grad) {
  const double loss = ranking_loss(pos_score, neg_scores, m);
  grad.d_pos = -sigmoid(m.gamma_p - pos_score);
  grad.d_negs.resize(neg_scores.size());
  const double inv_k = 1.0 / double(neg_scores.size());
  for (std::size_t j = 0; j < neg_scores.size(); ++j) {
    grad.d_negs[j] = inv_k * sigmoid(neg_scores[j] - m.gamma_n);
  }
  return loss;
}

// Pushes P(parent|child) toward 1 for true edges and toward 0 for corrupted
// ones: (p_pos - 1)^2 and the mean of p_neg^2.
struct AsymmetryLosses {
  double positive;
  double negative;
};

inline AsymmetryLosses asymmetry_losses(double p_pos,
                                        std::span<const double> p_negs) {
  AsymmetryLosses out;
  out.positive = (p_pos - 1.0) * (p_pos - 1.0);
  if (p_negs.empty()) {
    out.negative = 0.0;
  } else {
    CompensatedSum s;
    for (double p : p_negs) s.add(p * p);
    out.negative = s.value() / double(p_negs.size());
  }
  return out;
}

struct AsymmetryGrad {
  double d_p_pos;
  std::vector<double> d_p_negs;
};

inline AsymmetryLosses asymmetry_losses(double p_pos,
                                        std::span<const double> p_negs,
                                        AsymmetryGrad& grad) {
  const AsymmetryLosses out = asymmetry_losses(p_pos, p_negs);
  grad.d_p_pos = 2.0 * (p_pos - 1.0);
  grad.d_p_negs.resize(p_negs.size());
  if (!p_negs.empty()) {
    const double inv_k = 1.0 / double(p_negs.size());
    for (std::size_t j = 0; j < p_negs.size(); ++j) {
      grad.d_p_negs[j] = 2.0 * p_negs[j] * inv_k;
    }
  }
  return out;
}

struct LossBreakdown {
  double ranking = 0.0;
  double asym_pos = 0.0;
  double asym_neg = 0.0;
  double total = 0.0;
};

struct CombinedInputs {
  double pos_score = 0.0;
  std::vector<double> neg_scores;
  // Containment probabilities; may be absent when the child set is
  // degenerate (the asymmetry terms are then skipped).
  bool have_containment = true;
  double p_pos = 0.0;
  std::vector<double> p_negs;
};

struct CombinedGrads {
  double d_pos_score = 0.0;
  std::vector<double> d_neg_scores;
  double d_p_pos = 0.0;
  std::vector<double> d_p_negs;
};

// total = ranking + lambda * (asym_pos + asym_neg)
inline LossBreakdown total_loss(const CombinedInputs& in, const Margins& m,
                                double lambda, CombinedGrads* grads = nullptr) {
  if (lambda < 0.0) {
    throw std::invalid_argument("total_loss: lambda must be >= 0");
  }
  LossBreakdown out;
  if (grads) {
    RankingGrad rg;
    out.ranking = ranking_loss(in.pos_score, in.neg_scores, m, rg);
    grads->d_pos_score = rg.d_pos;
    grads->d_neg_scores = std::move(rg.d_negs);
    grads->d_p_pos = 0.0;
    grads->d_p_negs.assign(in.p_negs.size(), 0.0);
    if (in.have_containment) {
      AsymmetryGrad ag;
      const AsymmetryLosses a = asymmetry_losses(in.p_pos, in.p_negs, ag);
      out.asym_pos = a.positive;
      out.asym_neg = a.negative;
      grads->d_p_pos = lambda * ag.d_p_pos;
      for (std::size_t j = 0; j < ag.d_p_negs.size(); ++j) {
        grads->d_p_negs[j] = lambda * ag.d_p_negs[j];
      }
    }
  } else {
    out.ranking = ranking_loss(in.pos_score, in.neg_scores, m);
    if (in.have_containment) {
      const AsymmetryLosses a = asymmetry_losses(in.p_pos, in.p_negs);
      out.asym_pos = a.positive;
      out.asym_neg = a.negative;
    }
  }
  out.total = out.ranking + lambda * (out.asym_pos + out.asym_neg);
  return out;
}

}  // namespace fuse
