#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evifuse/errors.hpp"
#include "evifuse/frangi.hpp"
#include "evifuse/image.hpp"
#include "evifuse/rng.hpp"

// Deterministic synthetic data: a three-channel Gaussian-mixture dataset with
// configurable class separation and conflict injection, a stratified split,
// JSON Lines IO, and tube-image fixtures for the vesselness filter.

namespace evifuse {

inline constexpr std::array<const char*, 3> kModalityNames{"cfp", "oct", "vessel"};

struct DatasetSpec {
  std::size_t n_samples = 300;
  std::size_t num_classes = 3;
  std::array<std::size_t, 3> dims{32, 64, 16};
  std::array<double, 3> separability{2.0, 1.5, 1.0};
  double conflict_rate = 0.0;
  std::vector<double> label_distribution;  // empty means uniform
  std::uint64_t seed = 0;

  std::vector<double> resolved_distribution() const {
    if (label_distribution.empty()) {
      return std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes));
    }
    return label_distribution;
  }

  void validate() const {
    if (n_samples == 0) throw std::invalid_argument("dataset spec: n_samples must be positive");
    if (num_classes < 2) throw std::invalid_argument("dataset spec: need at least two classes");
    for (std::size_t m = 0; m < 3; ++m) {
      if (dims[m] == 0) throw std::invalid_argument("dataset spec: dimensions must be positive");
      if (dims[m] < num_classes) {
        throw std::invalid_argument("dataset spec: modality dimension below class count");
      }
      if (!(separability[m] >= 0.0)) {
        throw std::invalid_argument("dataset spec: separability must be >= 0");
      }
    }
    if (!(conflict_rate >= 0.0 && conflict_rate <= 1.0)) {
      throw std::invalid_argument("dataset spec: conflict_rate must lie in [0,1]");
    }
    if (!label_distribution.empty()) {
      if (label_distribution.size() != num_classes) {
        throw std::invalid_argument("dataset spec: label distribution size != class count");
      }
      double sum = 0.0;
      for (const double p : label_distribution) {
        if (!(p >= 0.0)) throw std::invalid_argument("dataset spec: negative label proportion");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("dataset spec: label proportions must sum to 1");
      }
    }
  }
};

struct SampleRecord {
  std::size_t id = 0;
  std::size_t label = 0;
  std::array<std::vector<double>, 3> features;  // cfp, oct, vessel
  std::array<bool, 3> conflict{false, false, false};
};

struct MultiModalDataset {
  std::vector<SampleRecord> records;

  std::size_t size() const { return records.size(); }
};

namespace detail {

// Integer apportionment by largest remainder; ties favor lower indices.
inline std::vector<std::size_t> largest_remainder_counts(const std::vector<double>& proportions,
                                                         std::size_t total) {
  const std::size_t k = proportions.size();
  std::vector<std::size_t> counts(k, 0);
  std::vector<std::pair<double, std::size_t>> remainders(k);
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < k; ++j) {
    const double share = proportions[j] * static_cast<double>(total);
    counts[j] = static_cast<std::size_t>(std::floor(share));
    assigned += counts[j];
    remainders[j] = {share - std::floor(share), j};
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) {
    ++counts[remainders[i % k].second];
  }
  return counts;
}

/// Class mean for modality m: vertex k of a regular simplex with pairwise
/// distance `separation`, embedded in the first `num_classes` coordinates.
inline std::vector<double> class_mean(std::size_t k, std::size_t num_classes, std::size_t dim,
                                      double separation) {
  std::vector<double> mean(dim, 0.0);
  const double scale = separation / std::sqrt(2.0);
  const double centroid = 1.0 / static_cast<double>(num_classes);
  for (std::size_t j = 0; j < num_classes; ++j) {
    mean[j] = scale * ((j == k ? 1.0 : 0.0) - centroid);
  }
  return mean;
}

}  // namespace detail

/// Generates the dataset: per class and modality, features ~ N(mean_k, I)
/// with means `separability` apart; with probability `conflict_rate` per
/// (sample, modality) the features come from a uniformly random wrong class
/// and the conflict flag is set. Fully determined by DatasetSpec::seed.
inline MultiModalDataset generate(const DatasetSpec& spec) {
  spec.validate();
  const std::vector<double> proportions = spec.resolved_distribution();
  const std::vector<std::size_t> counts =
      detail::largest_remainder_counts(proportions, spec.n_samples);

  std::vector<std::size_t> labels;
  labels.reserve(spec.n_samples);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    labels.insert(labels.end(), counts[k], k);
  }

  Rng rng(substream_seed(spec.seed, "data"));
  rng.shuffle(labels);

  MultiModalDataset ds;
  ds.records.reserve(spec.n_samples);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    SampleRecord rec;
    rec.id = i;
    rec.label = labels[i];
    for (std::size_t m = 0; m < 3; ++m) {
      std::size_t source = rec.label;
      if (spec.conflict_rate > 0.0 && rng.uniform() < spec.conflict_rate) {
        const std::size_t offset = rng.below(spec.num_classes - 1);
        source = offset >= rec.label ? offset + 1 : offset;
        rec.conflict[m] = true;
      }
      const std::vector<double> mean =
          detail::class_mean(source, spec.num_classes, spec.dims[m], spec.separability[m]);
      rec.features[m].resize(spec.dims[m]);
      for (std::size_t d = 0; d < spec.dims[m]; ++d) {
        rec.features[m][d] = mean[d] + rng.normal();
      }
    }
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

/// Stratified split: per class, a seeded shuffle then a largest-remainder
/// share of round(fraction * n) train slots; both sides keep the original
/// record order.
inline std::pair<MultiModalDataset, MultiModalDataset> split(const MultiModalDataset& ds,
                                                             double train_fraction,
                                                             std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("split: train_fraction must lie in (0,1)");
  }
  if (ds.records.empty()) throw std::invalid_argument("split: empty dataset");

  std::size_t num_classes = 0;
  for (const auto& rec : ds.records) num_classes = std::max(num_classes, rec.label + 1);
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    by_class[ds.records[i].label].push_back(i);
  }

  const std::size_t n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(ds.records.size())));
  std::vector<double> class_shares(num_classes, 0.0);
  for (std::size_t k = 0; k < num_classes; ++k) {
    class_shares[k] =
        static_cast<double>(by_class[k].size()) / static_cast<double>(ds.records.size());
  }
  const std::vector<std::size_t> train_counts =
      detail::largest_remainder_counts(class_shares, n_train);

  Rng rng(substream_seed(seed, "shuffle"));
  std::vector<bool> in_train(ds.records.size(), false);
  for (std::size_t k = 0; k < num_classes; ++k) {
    std::vector<std::size_t> members = by_class[k];
    rng.shuffle(members);
    const std::size_t take = std::min(train_counts[k], members.size());
    for (std::size_t i = 0; i < take; ++i) in_train[members[i]] = true;
  }

  MultiModalDataset train;
  MultiModalDataset test;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    (in_train[i] ? train : test).records.push_back(ds.records[i]);
  }
  if (train.records.empty() || test.records.empty()) {
    throw std::invalid_argument("split: empty side");
  }
  return {std::move(train), std::move(test)};
}

/// JSON Lines writer; one record per line, keys sorted for byte determinism.
inline void write_dataset(const MultiModalDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  for (const auto& rec : ds.records) {
    nlohmann::json line{{"id", rec.id},
                        {"label", rec.label},
                        {"cfp", rec.features[0]},
                        {"oct", rec.features[1]},
                        {"vessel", rec.features[2]},
                        {"conflict", rec.conflict}};
    out << line.dump() << "\n";
  }
  if (!out) throw IoError(path + ": write failed");
}

inline MultiModalDataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  MultiModalDataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded()) throw IoError(where + ": malformed JSON record");
    try {
      SampleRecord sample;
      sample.id = rec.at("id").get<std::size_t>();
      sample.label = rec.at("label").get<std::size_t>();
      sample.features[0] = rec.at("cfp").get<std::vector<double>>();
      sample.features[1] = rec.at("oct").get<std::vector<double>>();
      sample.features[2] = rec.at("vessel").get<std::vector<double>>();
      const auto flags = rec.at("conflict").get<std::vector<bool>>();
      if (flags.size() != 3) throw IoError(where + ": expected 3 conflict flags");
      for (std::size_t m = 0; m < 3; ++m) sample.conflict[m] = flags[m];
      ds.records.push_back(std::move(sample));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(where + ": " + e.what());
    }
  }
  return ds;
}

/// Synthetic ridge fixture: background 0.8 with a Gaussian-profile tube of
/// the given full width through the image center. Returns the image and the
/// exact centerline pixel set (perpendicular distance <= 0.5 px).
inline std::pair<GrayImage, std::vector<std::size_t>> generate_tube_image(
    std::size_t width, std::size_t height, double tube_width_px, double angle_deg,
    double contrast, Polarity polarity) {
  constexpr double kBackground = 0.8;
  if (tube_width_px <= 0.0 || 2.0 * tube_width_px >= static_cast<double>(std::min(width, height))) {
    throw std::invalid_argument("tube image: tube wider than image");
  }
  // headroom to the [0, 1] range; written as a literal so that the boundary
  // contrast 0.2 is not rejected by 1.0 - 0.8 rounding up to 0.19999...
  const double limit = polarity == Polarity::DarkOnBright ? kBackground : 0.2;
  if (!(contrast >= 0.0 && contrast <= limit)) {
    throw std::invalid_argument("tube image: contrast must lie in [0," + std::to_string(limit) +
                                "] for this polarity");
  }
  const double theta = angle_deg * std::acos(-1.0) / 180.0;
  const double nx = -std::sin(theta);
  const double ny = std::cos(theta);
  const double cx = (static_cast<double>(width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(height) - 1.0) / 2.0;
  // Width is the full width at relative depth exp(-1): sigma_t = w / (2*sqrt(2)).
  // A Gaussian ridge response (scale-normalized) then peaks at sigma = sqrt(2)*sigma_t = w/2.
  const double sigma_t = tube_width_px / (2.0 * std::sqrt(2.0));
  const double sign = polarity == Polarity::DarkOnBright ? -1.0 : 1.0;

  GrayImage img = make_image(width, height, kBackground);
  std::vector<std::size_t> centerline;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double d = std::abs(nx * (static_cast<double>(x) - cx) +
                                ny * (static_cast<double>(y) - cy));
      img.at(x, y) = kBackground +
                     sign * contrast * std::exp(-0.5 * d * d / (sigma_t * sigma_t));
      if (d <= 0.5) centerline.push_back(y * width + x);
    }
  }
  return {std::move(img), std::move(centerline)};
}

}  // namespace evifuse
