#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "evifuse/evidence.hpp"
#include "evifuse/rng.hpp"

namespace {

using evifuse::DirichletOpinion;
using evifuse::MassSet;

MassSet random_mass(evifuse::Rng& rng, std::size_t k) {
  // random opinion -> mass guarantees validity (u > 0)
  std::vector<double> e(k);
  for (double& v : e) v = rng.uniform(0.0, 8.0);
  return evifuse::opinion_to_mass(evifuse::evidence_to_opinion(e));
}

double max_abs_diff(const MassSet& a, const MassSet& b) {
  double m = std::abs(a.u - b.u);
  for (std::size_t j = 0; j < a.b.size(); ++j) m = std::max(m, std::abs(a.b[j] - b.b[j]));
  return m;
}

TEST(Evidence, HandCombinationExample) {
  const MassSet m1{{0.6, 0.2, 0.0}, 0.2};
  const MassSet m2{{0.5, 0.0, 0.2}, 0.3};
  EXPECT_NEAR(evifuse::conflict_between(m1, m2), 0.26, 1e-12);
  const MassSet fused = evifuse::combine(m1, m2);
  EXPECT_NEAR(fused.b[0], 0.78378, 1e-5);
  EXPECT_NEAR(fused.b[1], 0.08108, 1e-5);
  EXPECT_NEAR(fused.b[2], 0.05405, 1e-5);
  EXPECT_NEAR(fused.u, 0.08108, 1e-5);
}

TEST(Evidence, ClosureCommutativityAssociativity) {
  evifuse::Rng rng(101);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + trial % 4;
    const MassSet a = random_mass(rng, k);
    const MassSet b = random_mass(rng, k);
    const MassSet c = random_mass(rng, k);

    const MassSet ab = evifuse::combine(a, b);
    double sum = ab.u;
    for (const double v : ab.b) sum += v;
    ASSERT_NEAR(sum, 1.0, 1e-9);
    ASSERT_NO_THROW(ab.validate());

    ASSERT_LT(max_abs_diff(ab, evifuse::combine(b, a)), 1e-9);
    const MassSet left = evifuse::combine(ab, c);
    const MassSet right = evifuse::combine(a, evifuse::combine(b, c));
    ASSERT_LT(max_abs_diff(left, right), 1e-9);

    // fusing can only sharpen: uncertainty never exceeds either input's
    ASSERT_LE(ab.u, std::min(a.u, b.u) + 1e-12);
  }
}

TEST(Evidence, VacuousIsExactIdentity) {
  evifuse::Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    const MassSet a = random_mass(rng, 3);
    const MassSet fused = evifuse::combine(a, MassSet::vacuous(3));
    for (std::size_t j = 0; j < 3; ++j) ASSERT_EQ(fused.b[j], a.b[j]);
    ASSERT_EQ(fused.u, a.u);
  }
}

TEST(Evidence, OpinionMassRoundtrip) {
  evifuse::Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + trial % 5;
    std::vector<double> e(k);
    for (double& v : e) v = rng.uniform(0.0, 20.0);
    const DirichletOpinion o = evifuse::evidence_to_opinion(e);
    const DirichletOpinion back = evifuse::mass_to_opinion(evifuse::opinion_to_mass(o));
    for (std::size_t j = 0; j < k; ++j) ASSERT_NEAR(back.alpha[j], o.alpha[j], 1e-9);

    const MassSet m = random_mass(rng, k);
    const MassSet back_m = evifuse::opinion_to_mass(evifuse::mass_to_opinion(m));
    ASSERT_LT(max_abs_diff(m, back_m), 1e-9);
  }
}

TEST(Evidence, EvidenceToOpinionAddsOne) {
  const DirichletOpinion o = evifuse::evidence_to_opinion({0.0, 2.5, 7.0});
  EXPECT_EQ(o.alpha[0], 1.0);
  EXPECT_EQ(o.alpha[1], 3.5);
  EXPECT_EQ(o.alpha[2], 8.0);
  EXPECT_NEAR(o.strength(), 12.5, 1e-15);
}

TEST(Evidence, MassFromUniformEvidence) {
  // e = (1,1,1): S = 6, b_j = 1/6, u = 1/2
  const MassSet m = evifuse::opinion_to_mass(evifuse::evidence_to_opinion({1.0, 1.0, 1.0}));
  for (const double b : m.b) EXPECT_NEAR(b, 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(m.u, 0.5, 1e-15);
}

TEST(Evidence, TotalConflictThrows) {
  // nearly certain, fully contradictory opinions
  const MassSet a{{1.0 - 1e-13, 0.0}, 1e-13};
  const MassSet b{{0.0, 1.0 - 1e-13}, 1e-13};
  EXPECT_THROW(evifuse::combine(a, b), evifuse::TotalConflictError);
}

TEST(Evidence, FuseAllMatchesFoldAndValidates) {
  evifuse::Rng rng(13);
  const MassSet a = random_mass(rng, 3);
  const MassSet b = random_mass(rng, 3);
  const MassSet c = random_mass(rng, 3);
  const MassSet folded = evifuse::combine(evifuse::combine(a, b), c);
  const MassSet fused = evifuse::fuse_all({a, b, c});
  EXPECT_LT(max_abs_diff(folded, fused), 1e-15);
  EXPECT_LT(max_abs_diff(evifuse::fuse_all({a}), a), 1e-15);
  EXPECT_THROW(evifuse::fuse_all({}), std::invalid_argument);
}

TEST(Evidence, PredictionProbsAndTieBreak) {
  const evifuse::Prediction p = evifuse::predict(DirichletOpinion{{4.0, 4.0, 2.0}});
  EXPECT_EQ(p.class_index, 0u);  // tie between 0 and 1 -> lowest index
  EXPECT_NEAR(p.probs[0], 0.4, 1e-15);
  EXPECT_NEAR(p.probs[2], 0.2, 1e-15);
  EXPECT_NEAR(p.uncertainty, 0.3, 1e-15);
}

TEST(Evidence, ValidationRejectsBadInputs) {
  EXPECT_THROW(evifuse::validate_evidence({1.0}), std::invalid_argument);
  EXPECT_THROW(evifuse::validate_evidence({1.0, -0.5}), std::invalid_argument);
  EXPECT_THROW(evifuse::validate_evidence({1.0, std::nan("")}), std::invalid_argument);
  EXPECT_THROW(DirichletOpinion({{0.5, 2.0}}).validate(), std::invalid_argument);
  EXPECT_THROW((MassSet{{0.5, 0.6}, 0.2}).validate(), std::invalid_argument);  // sums to 1.3
  EXPECT_THROW((MassSet{{0.5, 0.5}, 0.0}).validate(), std::invalid_argument);  // u must be > 0
  const MassSet a{{0.6, 0.2, 0.0}, 0.2};
  const MassSet b{{0.5, 0.2}, 0.3};
  EXPECT_THROW(evifuse::combine(a, b), std::invalid_argument);
}

}  // namespace
