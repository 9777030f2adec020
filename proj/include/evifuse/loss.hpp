#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "evifuse/evidence.hpp"
#include "evifuse/special_functions.hpp"

// Closed-form evidential training objectives. The per-sample loss is the
// Dirichlet expected squared error plus an annealed KL penalty that pulls the
// off-label concentration back towards the uniform prior.

namespace evifuse {

using OneHot = std::vector<double>;

inline OneHot one_hot(std::size_t num_classes, std::size_t label) {
  if (label >= num_classes) {
    throw std::invalid_argument("one_hot: label out of range");
  }
  OneHot y(num_classes, 0.0);
  y[label] = 1.0;
  return y;
}

inline void validate_one_hot(const OneHot& y) {
  std::size_t ones = 0;
  for (const double v : y) {
    if (v == 1.0) {
      ++ones;
    } else if (v != 0.0) {
      throw std::invalid_argument("label: entries must be exactly 0 or 1");
    }
  }
  if (ones != 1) {
    throw std::invalid_argument("label: exactly one entry must be 1");
  }
}

/// Four loss components of one training step plus their total.
struct LossReport {
  double l_cfp = 0.0;
  double l_oct = 0.0;
  double l_vessel = 0.0;
  double l_fusion = 0.0;
  double total = 0.0;
  double lambda = 0.0;  // annealing coefficient used for this step
};

/// Expected squared error under Dir(alpha):
///   sum_j (y_j - alpha_j/S)^2 + alpha_j (S - alpha_j) / (S^2 (S + 1))
inline double mse_term(const DirichletOpinion& o, const OneHot& y) {
  o.validate();
  validate_one_hot(y);
  if (y.size() != o.num_classes()) {
    throw std::invalid_argument("mse_term: label dimension mismatch");
  }
  const double strength = o.strength();
  double loss = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    const double a = o.alpha[j];
    const double err = y[j] - a / strength;
    loss += err * err + a * (strength - a) / (strength * strength * (strength + 1.0));
  }
  return loss;
}

/// KL[Dir(alpha) || Dir(1)] in closed form via log-gamma and digamma.
inline double kl_to_uniform(const DirichletOpinion& o) {
  o.validate();
  const double strength = o.strength();
  const double k = static_cast<double>(o.num_classes());
  double value = log_gamma(strength) - log_gamma(k);
  const double psi_strength = digamma(strength);
  for (const double a : o.alpha) {
    value -= log_gamma(a);
    value += (a - 1.0) * (digamma(a) - psi_strength);
  }
  return value;
}

/// Removes the true-class concentration before the KL penalty:
/// alpha~ = y + (1 - y) . alpha, so correct evidence is never punished.
inline DirichletOpinion adjusted_alpha(const DirichletOpinion& o, const OneHot& y) {
  o.validate();
  validate_one_hot(y);
  if (y.size() != o.num_classes()) {
    throw std::invalid_argument("adjusted_alpha: label dimension mismatch");
  }
  DirichletOpinion adjusted = o;
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (y[j] == 1.0) adjusted.alpha[j] = 1.0;
  }
  return adjusted;
}

/// Linear warm-up lambda = min(1, epoch / anneal_epochs).
inline double anneal_coefficient(int epoch, int anneal_epochs) {
  if (epoch < 0) {
    throw std::invalid_argument("anneal_coefficient: epoch must be >= 0");
  }
  if (anneal_epochs < 1) {
    throw std::invalid_argument("anneal_coefficient: anneal_epochs must be >= 1");
  }
  return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(anneal_epochs));
}

/// Per-sample loss, Dirichlet MSE plus annealed KL. `kl_on_adjusted` selects
/// whether the penalty sees the label-adjusted alpha (default) or the raw one.
inline double sample_loss(const DirichletOpinion& o, const OneHot& y, double lambda,
                          bool kl_on_adjusted = true) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("sample_loss: lambda must lie in [0, 1]");
  }
  double loss = mse_term(o, y);
  if (lambda > 0.0) {
    loss += lambda * kl_to_uniform(kl_on_adjusted ? adjusted_alpha(o, y) : o);
  }
  return loss;
}

/// Batch loss of the three modality branches plus the fused branch; every
/// component is a plain sum over samples in index order.
inline LossReport total_loss(const std::array<std::vector<DirichletOpinion>, 3>& per_modality,
                             const std::vector<DirichletOpinion>& fused,
                             const std::vector<OneHot>& labels, double lambda,
                             bool kl_on_adjusted = true) {
  const std::size_t n = labels.size();
  for (const auto& branch : per_modality) {
    if (branch.size() != n) {
      throw std::invalid_argument("total_loss: branch length mismatch");
    }
  }
  if (fused.size() != n) {
    throw std::invalid_argument("total_loss: fused length mismatch");
  }
  LossReport report;
  report.lambda = lambda;
  for (std::size_t i = 0; i < n; ++i) {
    report.l_cfp += sample_loss(per_modality[0][i], labels[i], lambda, kl_on_adjusted);
    report.l_oct += sample_loss(per_modality[1][i], labels[i], lambda, kl_on_adjusted);
    report.l_vessel += sample_loss(per_modality[2][i], labels[i], lambda, kl_on_adjusted);
    report.l_fusion += sample_loss(fused[i], labels[i], lambda, kl_on_adjusted);
  }
  report.total = report.l_cfp + report.l_oct + report.l_vessel + report.l_fusion;
  return report;
}

/// d sample_loss / d alpha, the building block for both gradient paths
/// (direct branch loss and the fused branch pulled back through combination).
inline std::vector<double> sample_loss_gradient_wrt_alpha(const DirichletOpinion& o,
                                                          const OneHot& y, double lambda,
                                                          bool kl_on_adjusted = true) {
  o.validate();
  validate_one_hot(y);
  if (y.size() != o.num_classes()) {
    throw std::invalid_argument("loss gradient: label dimension mismatch");
  }
  const std::size_t k = o.num_classes();
  const double strength = o.strength();
  std::vector<double> grad(k, 0.0);

  // MSE part. With p_j = alpha_j / S:
  //   d/d alpha_m sum_j (y_j - p_j)^2 = (2/S) [(p_m - y_m) - sum_j (p_j - y_j) p_j]
  // and for the variance part, with Q = sum alpha_j^2:
  //   d/d alpha_m (S^2 - Q)/(S^2 (S+1))
  //     = [(2S - 2 alpha_m) S^2 (S+1) - (S^2 - Q)(3S^2 + 2S)] / (S^2 (S+1))^2
  double cross = 0.0;
  double sq = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const double p = o.alpha[j] / strength;
    cross += (p - y[j]) * p;
    sq += o.alpha[j] * o.alpha[j];
  }
  const double var_num = strength * strength - sq;
  const double var_den = strength * strength * (strength + 1.0);
  for (std::size_t m = 0; m < k; ++m) {
    const double p = o.alpha[m] / strength;
    grad[m] += 2.0 / strength * ((p - y[m]) - cross);
    grad[m] += ((2.0 * strength - 2.0 * o.alpha[m]) * var_den -
                var_num * (3.0 * strength * strength + 2.0 * strength)) /
               (var_den * var_den);
  }

  // KL part: d KL[Dir(a) || Dir(1)] / d a_m = (a_m - 1) psi'(a_m) - (Sa - K) psi'(Sa),
  // chained through the label adjustment (the true-class coordinate is frozen).
  if (lambda > 0.0) {
    const DirichletOpinion target = kl_on_adjusted ? adjusted_alpha(o, y) : o;
    const double t_strength = target.strength();
    const double trigamma_strength = trigamma(t_strength);
    const double excess = t_strength - static_cast<double>(k);
    for (std::size_t m = 0; m < k; ++m) {
      if (kl_on_adjusted && y[m] == 1.0) continue;
      const double a = target.alpha[m];
      grad[m] += lambda * ((a - 1.0) * trigamma(a) - excess * trigamma_strength);
    }
  }
  return grad;
}

/// Analytic d sample_loss / d evidence through alpha = e + 1.
inline std::vector<double> loss_gradient_wrt_evidence(const EvidenceVector& e,
                                                      const OneHot& y, double lambda,
                                                      bool kl_on_adjusted = true) {
  return sample_loss_gradient_wrt_alpha(evidence_to_opinion(e), y, lambda, kl_on_adjusted);
}

}  // namespace evifuse
