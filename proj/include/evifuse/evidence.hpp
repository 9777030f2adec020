#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "evifuse/errors.hpp"

// Subjective-logic primitives over K exclusive classes. An opinion is a
// Dirichlet distribution with parameters alpha_j = evidence_j + 1; its mass
// representation splits certainty into per-class beliefs b_j = e_j / S and a
// residual uncertainty u = K / S, with S the Dirichlet strength. Mass sets
// combine by Dempster's rule restricted to the singleton + universe family,
// which that family is closed under.

namespace evifuse {

inline constexpr double kMassTolerance = 1e-9;
inline constexpr double kConflictEpsilon = 1e-12;

/// Non-negative support per class as produced by an evidence head.
using EvidenceVector = std::vector<double>;

inline void validate_evidence(const EvidenceVector& e) {
  if (e.size() < 2) {
    throw std::invalid_argument("evidence: need at least 2 classes");
  }
  for (const double v : e) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("evidence: entries must be finite and >= 0");
    }
  }
}

struct DirichletOpinion {
  std::vector<double> alpha;

  std::size_t num_classes() const { return alpha.size(); }

  /// Dirichlet strength S = sum_j alpha_j.
  double strength() const {
    return std::accumulate(alpha.begin(), alpha.end(), 0.0);
  }

  void validate() const {
    if (alpha.size() < 2) {
      throw std::invalid_argument("opinion: need at least 2 classes");
    }
    for (const double a : alpha) {
      if (!std::isfinite(a) || a < 1.0) {
        throw std::invalid_argument(
            "opinion: alpha entries must be finite and >= 1");
      }
    }
  }
};

/// Belief masses plus uncertainty mass; components sum to one.
struct MassSet {
  std::vector<double> b;
  double u = 0.0;

  std::size_t num_classes() const { return b.size(); }

  /// Totally ignorant opinion: zero belief, full uncertainty.
  static MassSet vacuous(std::size_t num_classes) {
    return MassSet{std::vector<double>(num_classes, 0.0), 1.0};
  }

  void validate() const {
    if (b.size() < 2) {
      throw std::invalid_argument("mass set: need at least 2 classes");
    }
    double sum = u;
    for (const double v : b) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw std::invalid_argument("mass set: beliefs must lie in [0, 1]");
      }
      sum += v;
    }
    if (!std::isfinite(u) || u <= 0.0 || u > 1.0) {
      throw std::invalid_argument("mass set: uncertainty must lie in (0, 1]");
    }
    if (std::abs(sum - 1.0) > kMassTolerance) {
      throw std::invalid_argument("mass set: beliefs and uncertainty must sum to 1");
    }
  }
};

struct Prediction {
  std::size_t class_index = 0;
  std::vector<double> probs;        // expected class probabilities alpha_j / S
  double uncertainty = 0.0;         // K / S
};

/// alpha_j = e_j + 1.
inline DirichletOpinion evidence_to_opinion(const EvidenceVector& e) {
  validate_evidence(e);
  DirichletOpinion o;
  o.alpha.reserve(e.size());
  for (const double v : e) o.alpha.push_back(v + 1.0);
  return o;
}

/// b_j = (alpha_j - 1) / S, u = K / S.
inline MassSet opinion_to_mass(const DirichletOpinion& o) {
  o.validate();
  const double strength = o.strength();
  MassSet m;
  m.b.reserve(o.alpha.size());
  for (const double a : o.alpha) m.b.push_back((a - 1.0) / strength);
  m.u = static_cast<double>(o.num_classes()) / strength;
  return m;
}

/// Inverse of opinion_to_mass: S = K / u, alpha_j = b_j * S + 1.
inline DirichletOpinion mass_to_opinion(const MassSet& m) {
  m.validate();
  const double strength = static_cast<double>(m.num_classes()) / m.u;
  DirichletOpinion o;
  o.alpha.reserve(m.b.size());
  for (const double belief : m.b) o.alpha.push_back(belief * strength + 1.0);
  return o;
}

/// Conflict between two mass sets: the product mass assigned to incompatible
/// singletons, sum_{j != i} b1_j * b2_i.
inline double conflict_between(const MassSet& m1, const MassSet& m2) {
  double sum1 = 0.0, sum2 = 0.0, dot = 0.0;
  for (std::size_t j = 0; j < m1.b.size(); ++j) {
    sum1 += m1.b[j];
    sum2 += m2.b[j];
    dot += m1.b[j] * m2.b[j];
  }
  return sum1 * sum2 - dot;
}

/// Reduced Dempster combination:
///   b_j = (b1_j b2_j + b1_j u2 + b2_j u1) / (1 - conflict)
///   u   = u1 u2 / (1 - conflict)
/// Throws TotalConflictError when 1 - conflict vanishes.
inline MassSet combine(const MassSet& m1, const MassSet& m2) {
  m1.validate();
  m2.validate();
  if (m1.num_classes() != m2.num_classes()) {
    throw std::invalid_argument("combine: class counts differ");
  }
  const double conflict = conflict_between(m1, m2);
  const double denom = 1.0 - conflict;
  if (denom <= kConflictEpsilon) {
    throw TotalConflictError("combine: total conflict between mass sets");
  }
  MassSet fused;
  fused.b.reserve(m1.b.size());
  for (std::size_t j = 0; j < m1.b.size(); ++j) {
    fused.b.push_back(
        (m1.b[j] * m2.b[j] + m1.b[j] * m2.u + m2.b[j] * m1.u) / denom);
  }
  fused.u = m1.u * m2.u / denom;
  return fused;
}

/// Left fold of combine in list order.
inline MassSet fuse_all(const std::vector<MassSet>& masses) {
  if (masses.empty()) {
    throw std::invalid_argument("fuse_all: need at least one mass set");
  }
  MassSet acc = masses.front();
  acc.validate();
  for (std::size_t i = 1; i < masses.size(); ++i) {
    acc = combine(acc, masses[i]);
  }
  return acc;
}

/// Expected class probabilities alpha_j / S; argmax with lowest-index
/// tie-break; uncertainty K / S.
inline Prediction predict(const DirichletOpinion& o) {
  o.validate();
  const double strength = o.strength();
  Prediction p;
  p.probs.reserve(o.alpha.size());
  for (const double a : o.alpha) p.probs.push_back(a / strength);
  p.class_index = static_cast<std::size_t>(std::distance(
      p.probs.begin(), std::max_element(p.probs.begin(), p.probs.end())));
  p.uncertainty = static_cast<double>(o.num_classes()) / strength;
  return p;
}

}  // namespace evifuse
