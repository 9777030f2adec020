#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "evifuse/nn.hpp"
#include "evifuse/rng.hpp"

// Stage-one feature learning: each modality gets its own encoder trained with
// the supervised contrastive objective over an augmented batch of 2N
// unit-normalized embeddings. Sums are accumulated in sorted order so the
// loss is bit-invariant under batch permutation.

namespace evifuse {

/// 2N augmented views: unit embeddings, class labels, and the source-sample
/// index pairing the two views of each sample.
struct EmbeddingBatch {
  std::vector<std::vector<double>> z;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> origin;

  std::size_t size() const { return z.size(); }

  void validate() const {
    const std::size_t n = z.size();
    if (n < 2 || labels.size() != n || origin.size() != n) {
      throw std::invalid_argument("embedding batch: need 2N views with labels and origins");
    }
    const std::size_t dim = z.front().size();
    for (const auto& v : z) {
      if (v.size() != dim) {
        throw std::invalid_argument("embedding batch: inconsistent dimensions");
      }
      double sq = 0.0;
      for (const double x : v) sq += x * x;
      if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
        throw std::invalid_argument("embedding batch: views must be unit-normalized");
      }
    }
    std::map<std::size_t, std::vector<std::size_t>> views_per_origin;
    for (std::size_t i = 0; i < n; ++i) views_per_origin[origin[i]].push_back(i);
    for (const auto& [src, views] : views_per_origin) {
      if (views.size() != 2) {
        throw std::invalid_argument("embedding batch: every origin must appear exactly twice");
      }
      if (labels[views[0]] != labels[views[1]]) {
        throw std::invalid_argument("embedding batch: paired views must share a label");
      }
    }
  }
};

/// Two independently jittered views x + eps, eps ~ N(0, sigma^2 I), fully
/// determined by the seed.
inline std::pair<std::vector<double>, std::vector<double>> augment_views(
    const std::vector<double>& x, std::uint64_t rng_seed, double jitter_sigma) {
  if (jitter_sigma < 0.0) {
    throw std::invalid_argument("augment_views: jitter_sigma must be >= 0");
  }
  Rng rng(rng_seed);
  std::pair<std::vector<double>, std::vector<double>> views{x, x};
  for (double& v : views.first) v += jitter_sigma == 0.0 ? 0.0 : jitter_sigma * rng.normal();
  for (double& v : views.second) v += jitter_sigma == 0.0 ? 0.0 : jitter_sigma * rng.normal();
  return views;
}

namespace detail {

// Sort-then-accumulate so the result does not depend on input order.
inline double sorted_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double acc = 0.0;
  for (const double t : terms) acc += t;
  return acc;
}

inline void validate_contrastive_inputs(const EmbeddingBatch& batch, double tau) {
  batch.validate();
  if (!(tau > 0.0)) {
    throw std::invalid_argument("supcon: tau must be positive");
  }
  std::map<std::size_t, std::size_t> label_counts;
  for (const std::size_t l : batch.labels) ++label_counts[l];
  for (const auto& [label, count] : label_counts) {
    if (count < 2) {
      throw std::invalid_argument("supcon: label " + std::to_string(label) +
                                  " has a single view, no positives exist");
    }
  }
}

// Unvalidated math cores; public wrappers check preconditions first. Tests
// finite-difference these directly (a perturbed view is no longer unit-norm).
inline double supcon_loss_impl(const std::vector<std::vector<double>>& z,
                               const std::vector<std::size_t>& labels, double tau) {
  const std::size_t n = z.size();
  std::vector<double> anchor_losses;
  anchor_losses.reserve(n);
  std::vector<double> logits(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      double dot = 0.0;
      for (std::size_t d = 0; d < z[i].size(); ++d) dot += z[i][d] * z[a][d];
      logits[a] = dot / tau;
      max_logit = std::max(max_logit, logits[a]);
    }
    std::vector<double> denom_terms;
    denom_terms.reserve(n - 1);
    for (std::size_t a = 0; a < n; ++a) {
      if (a != i) denom_terms.push_back(std::exp(logits[a] - max_logit));
    }
    const double log_denom = max_logit + std::log(sorted_sum(denom_terms));
    std::vector<double> positive_terms;
    for (std::size_t p = 0; p < n; ++p) {
      if (p != i && labels[p] == labels[i]) {
        positive_terms.push_back(log_denom - logits[p]);
      }
    }
    const double count = static_cast<double>(positive_terms.size());
    anchor_losses.push_back(sorted_sum(positive_terms) / count);
  }
  return sorted_sum(anchor_losses);
}

inline std::vector<std::vector<double>> supcon_gradient_impl(
    const std::vector<std::vector<double>>& z, const std::vector<std::size_t>& labels,
    double tau) {
  const std::size_t n = z.size();
  const std::size_t dim = z.front().size();

  // softmax rows and positive counts
  std::vector<std::vector<double>> softmax(n, std::vector<double>(n, 0.0));
  std::vector<double> positives(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double max_logit = -std::numeric_limits<double>::infinity();
    std::vector<double> logits(n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      double dot = 0.0;
      for (std::size_t d = 0; d < dim; ++d) dot += z[i][d] * z[a][d];
      logits[a] = dot / tau;
      max_logit = std::max(max_logit, logits[a]);
    }
    double denom = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      softmax[i][a] = std::exp(logits[a] - max_logit);
      denom += softmax[i][a];
    }
    for (std::size_t a = 0; a < n; ++a) softmax[i][a] /= denom;
    for (std::size_t p = 0; p < n; ++p) {
      if (p != i && labels[p] == labels[i]) positives[i] += 1.0;
    }
  }

  std::vector<std::vector<double>> grad(n, std::vector<double>(dim, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    // k as the anchor
    for (std::size_t a = 0; a < n; ++a) {
      if (a == k) continue;
      double coeff = softmax[k][a];
      if (labels[a] == labels[k]) coeff -= 1.0 / positives[k];
      for (std::size_t d = 0; d < dim; ++d) grad[k][d] += coeff * z[a][d] / tau;
    }
    // k inside other anchors' terms
    for (std::size_t i = 0; i < n; ++i) {
      if (i == k) continue;
      double coeff = softmax[i][k];
      if (labels[i] == labels[k]) coeff -= 1.0 / positives[i];
      for (std::size_t d = 0; d < dim; ++d) grad[k][d] += coeff * z[i][d] / tau;
    }
  }
  return grad;
}

}  // namespace detail

/// Supervised contrastive loss:
///   L = sum_i (-1/|P(i)|) sum_{p in P(i)} log( exp(z_i.z_p / tau)
///                                              / sum_{a != i} exp(z_i.z_a / tau) )
/// where P(i) are the other views sharing sample i's label.
inline double supcon_loss(const EmbeddingBatch& batch, double tau) {
  detail::validate_contrastive_inputs(batch, tau);
  return detail::supcon_loss_impl(batch.z, batch.labels, tau);
}

/// Analytic dL/dz_i for every view. Writing s_ia for the softmax of the
/// logits z_i.z_a / tau over a != i, the anchor term of view k is
///   (1/tau) [ sum_a s_ka z_a - (1/|P(k)|) sum_p z_p ]
/// and every other anchor i contributes (s_ik - [k in P(i)]/|P(i)|) z_i / tau.
inline std::vector<std::vector<double>> supcon_gradient(const EmbeddingBatch& batch,
                                                        double tau) {
  detail::validate_contrastive_inputs(batch, tau);
  return detail::supcon_gradient_impl(batch.z, batch.labels, tau);
}

/// Forward pass through the encoder followed by L2 normalization.
inline std::vector<double> embed(const MlpParams& params, const std::vector<double>& x,
                                 ForwardCache* cache = nullptr) {
  std::vector<double> out = forward(params, x, cache);
  double sq = 0.0;
  for (const double v : out) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm < 1e-12) {
    throw std::domain_error("embed: degenerate embedding (zero vector)");
  }
  for (double& v : out) v /= norm;
  return out;
}

/// Pulls a gradient with respect to the normalized output back through the
/// normalization: dL/dv = (g - (g.z) z) / |v|.
inline std::vector<double> normalize_backward(const std::vector<double>& raw,
                                              const std::vector<double>& grad_normalized) {
  double sq = 0.0;
  for (const double v : raw) sq += v * v;
  const double norm = std::sqrt(sq);
  double dot = 0.0;
  std::vector<double> unit(raw.size());
  for (std::size_t d = 0; d < raw.size(); ++d) {
    unit[d] = raw[d] / norm;
    dot += grad_normalized[d] * unit[d];
  }
  std::vector<double> out(raw.size());
  for (std::size_t d = 0; d < raw.size(); ++d) {
    out[d] = (grad_normalized[d] - dot * unit[d]) / norm;
  }
  return out;
}

struct EncoderConfig {
  int epochs = 10;
  std::size_t batch_size = 14;      // samples per batch; views are 2x
  double learning_rate = 1e-3;
  double tau = 0.05;
  double jitter_sigma = 0.1;
  std::uint64_t seed = 0;
  std::vector<std::size_t> encoder_hidden{256, 128};
  std::size_t projection_dim = 128;
  bool normalize_embeddings = true;
};

struct TrainedEncoder {
  MlpParams params;
  std::vector<double> epoch_mean_loss;  // mean per-batch loss, one entry per epoch
};

namespace detail {

inline MlpParams init_encoder(std::size_t input_dim, const EncoderConfig& config, Rng& rng) {
  // encoder trunk (ReLU) followed by a two-layer projection head whose final
  // affine output is left linear and normalized afterwards
  std::vector<std::size_t> dims{input_dim};
  std::vector<Activation> acts;
  for (const std::size_t h : config.encoder_hidden) {
    dims.push_back(h);
    acts.push_back(Activation::ReLU);
  }
  dims.push_back(config.projection_dim);
  acts.push_back(Activation::ReLU);
  dims.push_back(config.projection_dim);
  acts.push_back(Activation::Identity);
  return init_mlp(dims, acts, rng);
}

}  // namespace detail

/// Trains one modality encoder with the supervised contrastive loss. The run
/// is a pure function of the dataset and the config seed.
inline TrainedEncoder train_encoder(const std::vector<std::vector<double>>& features,
                                    const std::vector<std::size_t>& labels,
                                    const EncoderConfig& config) {
  if (features.empty() || features.size() != labels.size()) {
    throw std::invalid_argument("train_encoder: empty dataset or label mismatch");
  }
  if (config.batch_size < 2) {
    throw std::invalid_argument("train_encoder: batch_size must be >= 2 samples");
  }
  if (features.size() < 2) {
    throw std::invalid_argument("train_encoder: need at least 2 samples for positives");
  }

  Rng init_rng(substream_seed(config.seed, "init"));
  TrainedEncoder result;
  result.params = detail::init_encoder(features.front().size(), config, init_rng);
  if (config.epochs == 0) return result;

  AdamState adam = AdamState::for_params(result.params, config.learning_rate);
  Rng shuffle_rng(substream_seed(config.seed, "shuffle"));
  const std::uint64_t augment_root = substream_seed(config.seed, "augment");

  std::vector<std::size_t> order(features.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<std::size_t> members(order.begin() + start, order.begin() + end);
      if (end - start < config.batch_size) {
        // final partial batch: drop classes with a single remaining sample
        std::map<std::size_t, std::size_t> counts;
        for (const std::size_t idx : members) ++counts[labels[idx]];
        std::vector<std::size_t> kept;
        for (const std::size_t idx : members) {
          if (counts[labels[idx]] >= 2) kept.push_back(idx);
        }
        members = std::move(kept);
      }
      if (members.size() < 2) continue;

      EmbeddingBatch batch;
      std::vector<std::vector<double>> raw_outputs;
      std::vector<ForwardCache> caches(2 * members.size());
      std::size_t view = 0;
      for (const std::size_t idx : members) {
        const std::uint64_t view_seed = substream_seed(
            augment_root, "sample", static_cast<std::uint64_t>(epoch) * features.size() + idx);
        auto views = augment_views(features[idx], view_seed, config.jitter_sigma);
        for (const auto& input : {views.first, views.second}) {
          std::vector<double> raw = forward(result.params, input, &caches[view]);
          std::vector<double> z = raw;
          if (config.normalize_embeddings) {
            double sq = 0.0;
            for (const double v : raw) sq += v * v;
            const double norm = std::sqrt(sq);
            if (norm < 1e-12) {
              throw std::domain_error("train_encoder: degenerate embedding");
            }
            for (double& v : z) v /= norm;
          }
          batch.z.push_back(std::move(z));
          batch.labels.push_back(labels[idx]);
          batch.origin.push_back(idx);
          raw_outputs.push_back(std::move(raw));
          ++view;
        }
      }

      loss_sum += supcon_loss(batch, config.tau);
      ++batches;
      const auto grad_z = supcon_gradient(batch, config.tau);
      MlpGradients grads = MlpGradients::zeros_like(result.params);
      for (std::size_t v = 0; v < batch.size(); ++v) {
        const std::vector<double> upstream =
            config.normalize_embeddings ? normalize_backward(raw_outputs[v], grad_z[v])
                                        : grad_z[v];
        backward(result.params, caches[v], upstream, grads);
      }
      adam_step(adam, result.params, grads);
    }
    result.epoch_mean_loss.push_back(batches == 0 ? 0.0 : loss_sum / static_cast<double>(batches));
  }
  return result;
}

}  // namespace evifuse
