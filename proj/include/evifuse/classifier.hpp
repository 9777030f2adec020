#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "evifuse/evidence.hpp"
#include "evifuse/loss.hpp"
#include "evifuse/nn.hpp"
#include "evifuse/rng.hpp"

// Stage-two evidential classification: one Softplus evidence head per branch,
// trained jointly with a full-batch Adam loop whose loss flows through the
// belief-mass fusion. All fusion derivatives are analytic (quotient rule over
// 1 - conflict) and are validated against finite differences in the tests.

namespace evifuse {

constexpr std::size_t kNumBranches = 3;  // cfp, oct, vessel — fused in this order

/// Adjoint of a MassSet: gradient of some scalar with respect to (b, u).
struct MassGradient {
  std::vector<double> b;
  double u = 0.0;

  static MassGradient zeros(std::size_t k) { return MassGradient{std::vector<double>(k, 0.0), 0.0}; }
};

/// Pulls a gradient on the fused mass back to both operands of combine().
/// With D = 1 - conflict, bF_m = (b1_m b2_m + b1_m u2 + b2_m u1)/D and
/// uF = u1 u2 / D; dD/db1_j = -(sum(b2) - b2_j) feeds the quotient rule.
inline std::pair<MassGradient, MassGradient> combine_pullback(const MassSet& m1,
                                                              const MassSet& m2,
                                                              const MassSet& fused,
                                                              const MassGradient& fused_grad) {
  const std::size_t k = m1.b.size();
  const double conflict = conflict_between(m1, m2);
  const double d = 1.0 - conflict;

  double sum1 = 0.0;
  double sum2 = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    sum1 += m1.b[j];
    sum2 += m2.b[j];
  }
  // shared factor from dD: sum_m gbF_m * bF_m + guF * uF, divided by D
  double quotient_dot = fused_grad.u * fused.u;
  for (std::size_t j = 0; j < k; ++j) quotient_dot += fused_grad.b[j] * fused.b[j];
  quotient_dot /= d;

  MassGradient g1 = MassGradient::zeros(k);
  MassGradient g2 = MassGradient::zeros(k);
  for (std::size_t j = 0; j < k; ++j) {
    g1.b[j] = fused_grad.b[j] * (m2.b[j] + m2.u) / d + (sum2 - m2.b[j]) * quotient_dot;
    g2.b[j] = fused_grad.b[j] * (m1.b[j] + m1.u) / d + (sum1 - m1.b[j]) * quotient_dot;
    g1.u += fused_grad.b[j] * m2.b[j] / d;
    g2.u += fused_grad.b[j] * m1.b[j] / d;
  }
  g1.u += fused_grad.u * m2.u / d;
  g2.u += fused_grad.u * m1.u / d;
  return {std::move(g1), std::move(g2)};
}

/// Pulls a gradient on the recovered opinion (alpha_j = b_j K/u + 1) back to
/// the mass it came from.
inline MassGradient mass_to_opinion_pullback(const MassSet& mass,
                                             const std::vector<double>& alpha_grad) {
  const std::size_t k = mass.b.size();
  const double strength = static_cast<double>(k) / mass.u;
  MassGradient grad = MassGradient::zeros(k);
  for (std::size_t j = 0; j < k; ++j) {
    grad.b[j] = alpha_grad[j] * strength;
    grad.u -= alpha_grad[j] * mass.b[j] * strength / mass.u;
  }
  return grad;
}

/// Pulls a gradient on a branch mass (b = e/S, u = K/S, S = sum e + K) back
/// to the evidence vector that produced it.
inline std::vector<double> evidence_to_mass_pullback(const EvidenceVector& evidence,
                                                     const MassSet& mass,
                                                     const MassGradient& mass_grad) {
  const std::size_t k = evidence.size();
  double strength = static_cast<double>(k);
  for (const double e : evidence) strength += e;
  double dot = mass_grad.u * mass.u;
  for (std::size_t j = 0; j < k; ++j) dot += mass_grad.b[j] * mass.b[j];
  std::vector<double> grad(k);
  for (std::size_t j = 0; j < k; ++j) grad[j] = (mass_grad.b[j] - dot) / strength;
  return grad;
}

/// Fuses per-branch evidence vectors into a single opinion: evidence ->
/// mass per branch, left-fold combine, fused mass -> opinion.
inline DirichletOpinion fuse_evidence(const std::vector<EvidenceVector>& evidences) {
  if (evidences.empty()) {
    throw std::invalid_argument("fuse_evidence: need at least one branch");
  }
  std::vector<MassSet> masses;
  masses.reserve(evidences.size());
  for (const auto& e : evidences) {
    masses.push_back(opinion_to_mass(evidence_to_opinion(e)));
  }
  return mass_to_opinion(fuse_all(masses));
}

struct ClassifierConfig {
  int epochs = 200;
  double learning_rate = 1e-3;
  int anneal_epochs = 10;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden{};  // optional hidden ReLU layers before the evidence layer
  std::size_t num_classes = 3;
  bool kl_on_adjusted = true;
};

struct TrainedClassifier {
  std::array<MlpParams, kNumBranches> heads;
  std::vector<LossReport> history;  // one report per epoch, losses summed over samples
};

namespace detail {

inline MlpParams init_head(std::size_t input_dim, const ClassifierConfig& config, Rng& rng) {
  std::vector<std::size_t> dims{input_dim};
  std::vector<Activation> acts;
  for (const std::size_t h : config.hidden) {
    dims.push_back(h);
    acts.push_back(Activation::ReLU);
  }
  dims.push_back(config.num_classes);
  acts.push_back(Activation::Softplus);
  return init_mlp(dims, acts, rng);
}

}  // namespace detail

/// Joint stage-two training: per epoch (full batch), every sample runs three
/// heads -> opinions -> masses -> (cfp (+) oct) (+) vessel -> fused opinion;
/// the loss sums the three branch terms plus the fused term and its gradient
/// flows back through the fusion into all heads.
inline TrainedClassifier train_classifier(
    const std::array<std::vector<std::vector<double>>, kNumBranches>& embeddings,
    const std::vector<std::size_t>& labels, const ClassifierConfig& config) {
  const std::size_t n = labels.size();
  for (const auto& branch : embeddings) {
    if (branch.size() != n) {
      throw std::invalid_argument("train_classifier: branch/label length mismatch");
    }
  }
  if (n == 0) throw std::invalid_argument("train_classifier: empty dataset");
  if (config.num_classes < 2) {
    throw std::invalid_argument("train_classifier: need at least two classes");
  }
  for (const std::size_t l : labels) {
    if (l >= config.num_classes) {
      throw std::invalid_argument("train_classifier: label out of range");
    }
  }

  TrainedClassifier result;
  for (std::size_t br = 0; br < kNumBranches; ++br) {
    Rng rng(substream_seed(config.seed, "init", br));
    result.heads[br] = detail::init_head(embeddings[br].front().size(), config, rng);
  }
  if (config.epochs == 0) return result;

  std::array<AdamState, kNumBranches> adam{
      AdamState::for_params(result.heads[0], config.learning_rate),
      AdamState::for_params(result.heads[1], config.learning_rate),
      AdamState::for_params(result.heads[2], config.learning_rate)};
  const std::size_t k = config.num_classes;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lambda = anneal_coefficient(epoch, config.anneal_epochs);
    LossReport report;
    report.lambda = lambda;
    std::array<MlpGradients, kNumBranches> grads{
        MlpGradients::zeros_like(result.heads[0]), MlpGradients::zeros_like(result.heads[1]),
        MlpGradients::zeros_like(result.heads[2])};

    for (std::size_t i = 0; i < n; ++i) {
      const OneHot y = one_hot(k, labels[i]);
      std::array<ForwardCache, kNumBranches> caches;
      std::array<EvidenceVector, kNumBranches> evidence;
      std::array<DirichletOpinion, kNumBranches> opinions;
      std::array<MassSet, kNumBranches> masses;
      for (std::size_t br = 0; br < kNumBranches; ++br) {
        evidence[br] = forward(result.heads[br], embeddings[br][i], &caches[br]);
        opinions[br] = evidence_to_opinion(evidence[br]);
        masses[br] = opinion_to_mass(opinions[br]);
      }

      MassSet pair_mass;
      MassSet fused_mass;
      try {
        pair_mass = combine(masses[0], masses[1]);
        fused_mass = combine(pair_mass, masses[2]);
      } catch (const TotalConflictError& e) {
        throw TotalConflictError(std::string(e.what()) + " (sample " + std::to_string(i) + ")");
      }
      const DirichletOpinion fused = mass_to_opinion(fused_mass);

      report.l_cfp += sample_loss(opinions[0], y, lambda, config.kl_on_adjusted);
      report.l_oct += sample_loss(opinions[1], y, lambda, config.kl_on_adjusted);
      report.l_vessel += sample_loss(opinions[2], y, lambda, config.kl_on_adjusted);
      report.l_fusion += sample_loss(fused, y, lambda, config.kl_on_adjusted);

      // fused-loss gradient pulled back through both combines
      const std::vector<double> fused_alpha_grad =
          sample_loss_gradient_wrt_alpha(fused, y, lambda, config.kl_on_adjusted);
      const MassGradient fused_mass_grad = mass_to_opinion_pullback(fused_mass, fused_alpha_grad);
      const auto [pair_grad, vessel_grad] =
          combine_pullback(pair_mass, masses[2], fused_mass, fused_mass_grad);
      const auto [cfp_grad, oct_grad] =
          combine_pullback(masses[0], masses[1], pair_mass, pair_grad);
      const std::array<const MassGradient*, kNumBranches> mass_grads{&cfp_grad, &oct_grad,
                                                                     &vessel_grad};

      for (std::size_t br = 0; br < kNumBranches; ++br) {
        std::vector<double> evidence_grad =
            evidence_to_mass_pullback(evidence[br], masses[br], *mass_grads[br]);
        // branch loss acts on alpha = evidence + 1, so its gradient adds directly
        const std::vector<double> branch_grad =
            sample_loss_gradient_wrt_alpha(opinions[br], y, lambda, config.kl_on_adjusted);
        for (std::size_t j = 0; j < k; ++j) evidence_grad[j] += branch_grad[j];
        backward(result.heads[br], caches[br], evidence_grad, grads[br]);
      }
    }

    report.total = report.l_cfp + report.l_oct + report.l_vessel + report.l_fusion;
    result.history.push_back(report);
    for (std::size_t br = 0; br < kNumBranches; ++br) {
      adam_step(adam[br], result.heads[br], grads[br]);
    }
  }
  return result;
}

}  // namespace evifuse
