// Training objectives: margin ranking loss, asymmetry penalties, and the
// combined total with analytic gradients.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fuse/objectives.hpp"
#include "fuse/rng.hpp"

using fuse::AsymmetryGrad;
using fuse::AsymmetryLosses;
using fuse::CombinedGrads;
using fuse::CombinedInputs;
using fuse::LossBreakdown;
using fuse::Margins;
using fuse::RankingGrad;

namespace {
constexpr double kLn2 = 0.6931471805599453;
}

TEST_CASE("ranking loss at the margins is exactly softplus(0) twice") {
  const Margins m{0.6, 0.4};
  const std::vector<double> negs{0.4};
  // softplus(0) = ln 2 for the positive term and for the one negative.
  REQUIRE(fuse::ranking_loss(0.6, negs, m) ==
          Catch::Approx(2.0 * kLn2).margin(1e-12));
}

TEST_CASE("a deeply satisfied positive contributes nothing") {
  const Margins m{0.6, 0.4};
  const std::vector<double> negs{0.4};
  REQUIRE(fuse::ranking_loss(50.6, negs, m) ==
          Catch::Approx(kLn2).margin(1e-12));
}

TEST_CASE("a deeply violating negative contributes linearly") {
  const Margins m{0.6, 0.4};
  const std::vector<double> negs{40.4};
  // softplus(40) ~= 40 to within exp(-40).
  REQUIRE(fuse::ranking_loss(50.6, negs, m) ==
          Catch::Approx(40.0).margin(1e-12));
}

TEST_CASE("negatives are averaged, not summed") {
  const Margins m{0.6, 0.4};
  const std::vector<double> one{0.4};
  const std::vector<double> four{0.4, 0.4, 0.4, 0.4};
  REQUIRE(fuse::ranking_loss(0.6, one, m) ==
          Catch::Approx(fuse::ranking_loss(0.6, four, m)).margin(1e-12));
}

TEST_CASE("ranking loss requires at least one negative") {
  const Margins m{0.6, 0.4};
  const std::vector<double> none;
  REQUIRE_THROWS_AS(fuse::ranking_loss(0.5, none, m), std::invalid_argument);
}

TEST_CASE("asymmetry losses at one half") {
  const std::vector<double> p_negs{0.5};
  const AsymmetryLosses a = fuse::asymmetry_losses(0.5, p_negs);
  REQUIRE(a.positive == Catch::Approx(0.25).margin(1e-12));
  REQUIRE(a.negative == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("asymmetry losses vanish at the ideal containment values") {
  const std::vector<double> p_negs{0.0, 0.0};
  const AsymmetryLosses a = fuse::asymmetry_losses(1.0, p_negs);
  REQUIRE(a.positive == 0.0);
  REQUIRE(a.negative == 0.0);
}

TEST_CASE("combined total at the reference point") {
  const Margins m{0.6, 0.4};
  CombinedInputs in;
  in.pos_score = 0.6;
  in.neg_scores = {0.4};
  in.have_containment = true;
  in.p_pos = 0.5;
  in.p_negs = {0.5};
  const LossBreakdown out = fuse::total_loss(in, m, 1.0, nullptr);
  REQUIRE(out.ranking == Catch::Approx(2.0 * kLn2).margin(1e-12));
  REQUIRE(out.asym_pos == Catch::Approx(0.25).margin(1e-12));
  REQUIRE(out.asym_neg == Catch::Approx(0.25).margin(1e-12));
  REQUIRE(out.total == Catch::Approx(2.0 * kLn2 + 0.5).margin(1e-12));
}

TEST_CASE("lambda scales only the asymmetry terms") {
  const Margins m{0.6, 0.4};
  CombinedInputs in;
  in.pos_score = 0.3;
  in.neg_scores = {0.7, 0.2};
  in.have_containment = true;
  in.p_pos = 0.8;
  in.p_negs = {0.1, 0.6};
  const LossBreakdown l0 = fuse::total_loss(in, m, 0.0, nullptr);
  const LossBreakdown l1 = fuse::total_loss(in, m, 1.0, nullptr);
  const LossBreakdown lh = fuse::total_loss(in, m, 0.5, nullptr);
  REQUIRE(l0.total == Catch::Approx(l0.ranking).margin(1e-12));
  REQUIRE(l1.total ==
          Catch::Approx(l1.ranking + l1.asym_pos + l1.asym_neg).margin(1e-12));
  REQUIRE(lh.total - lh.ranking ==
          Catch::Approx(0.5 * (l1.asym_pos + l1.asym_neg)).margin(1e-12));
}

TEST_CASE("degenerate containment skips the asymmetry terms") {
  const Margins m{0.6, 0.4};
  CombinedInputs in;
  in.pos_score = 0.3;
  in.neg_scores = {0.7};
  in.have_containment = false;
  const LossBreakdown out = fuse::total_loss(in, m, 1.0, nullptr);
  REQUIRE(out.asym_pos == 0.0);
  REQUIRE(out.asym_neg == 0.0);
  REQUIRE(out.total == Catch::Approx(out.ranking).margin(1e-12));
}

TEST_CASE("ranking gradients match finite differences") {
  const Margins m{0.55, 0.35};
  fuse::Rng rng(21);
  const double h = 1e-6;
  for (int trial = 0; trial < 200; ++trial) {
    const double pos = rng.uniform(-1.0, 2.0);
    std::vector<double> negs(1 + rng.below(4));
    for (double& v : negs) v = rng.uniform(-1.0, 2.0);

    RankingGrad grad;
    fuse::ranking_loss(pos, negs, m, grad);

    const double fp = fuse::ranking_loss(pos + h, negs, m);
    const double fm = fuse::ranking_loss(pos - h, negs, m);
    REQUIRE(grad.d_pos == Catch::Approx((fp - fm) / (2 * h)).margin(1e-6));

    for (std::size_t j = 0; j < negs.size(); ++j) {
      std::vector<double> up = negs, dn = negs;
      up[j] += h;
      dn[j] -= h;
      const double num =
          (fuse::ranking_loss(pos, up, m) - fuse::ranking_loss(pos, dn, m)) /
          (2 * h);
      REQUIRE(grad.d_negs[j] == Catch::Approx(num).margin(1e-6));
    }
  }
}

TEST_CASE("combined gradients match finite differences") {
  const Margins m{0.6, 0.4};
  fuse::Rng rng(22);
  const double h = 1e-6;
  const double lambda = 0.7;
  for (int trial = 0; trial < 200; ++trial) {
    CombinedInputs in;
    in.pos_score = rng.uniform(-1.0, 2.0);
    in.neg_scores.resize(1 + rng.below(3));
    for (double& v : in.neg_scores) v = rng.uniform(-1.0, 2.0);
    in.have_containment = true;
    in.p_pos = rng.uniform01();
    in.p_negs.resize(1 + rng.below(3));
    for (double& v : in.p_negs) v = rng.uniform01();

    CombinedGrads grads;
    fuse::total_loss(in, m, lambda, &grads);

    const auto value = [&](const CombinedInputs& x) {
      return fuse::total_loss(x, m, lambda, nullptr).total;
    };

    {
      CombinedInputs up = in, dn = in;
      up.pos_score += h;
      dn.pos_score -= h;
      REQUIRE(grads.d_pos_score ==
              Catch::Approx((value(up) - value(dn)) / (2 * h)).margin(1e-6));
    }
    {
      CombinedInputs up = in, dn = in;
      up.p_pos += h;
      dn.p_pos -= h;
      REQUIRE(grads.d_p_pos ==
              Catch::Approx((value(up) - value(dn)) / (2 * h)).margin(1e-6));
    }
    for (std::size_t j = 0; j < in.neg_scores.size(); ++j) {
      CombinedInputs up = in, dn = in;
      up.neg_scores[j] += h;
      dn.neg_scores[j] -= h;
      REQUIRE(grads.d_neg_scores[j] ==
              Catch::Approx((value(up) - value(dn)) / (2 * h)).margin(1e-6));
    }
    for (std::size_t j = 0; j < in.p_negs.size(); ++j) {
      CombinedInputs up = in, dn = in;
      up.p_negs[j] += h;
      dn.p_negs[j] -= h;
      REQUIRE(grads.d_p_negs[j] ==
              Catch::Approx((value(up) - value(dn)) / (2 * h)).margin(1e-6));
    }
  }
}

TEST_CASE("softplus and sigmoid are stable at extreme arguments") {
  REQUIRE(fuse::softplus(800.0) == 800.0);
  REQUIRE(fuse::softplus(-800.0) == 0.0);
  REQUIRE(std::isfinite(fuse::sigmoid(800.0)));
  REQUIRE(std::isfinite(fuse::sigmoid(-800.0)));
  REQUIRE(fuse::sigmoid(800.0) == 1.0);
  REQUIRE(fuse::sigmoid(-800.0) >= 0.0);
  REQUIRE(fuse::sigmoid(0.0) == 0.5);
}
