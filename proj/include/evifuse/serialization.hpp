#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "evifuse/errors.hpp"
#include "evifuse/evidence.hpp"
#include "evifuse/nn.hpp"

// On-disk formats: network checkpoints as a single JSON object per branch
// ({"arch", "weights", "biases", "seed", "tau"}) and belief-mass JSON for the
// fuse utility. nlohmann emits sorted keys and round-trip-exact doubles, so
// identical models serialize to identical bytes.

namespace evifuse {

struct Checkpoint {
  MlpParams params;
  std::uint64_t seed = 0;
  double tau = 0.0;
};

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ckpt.params.validate();
  nlohmann::json doc;
  std::vector<std::size_t> arch{ckpt.params.input_dim()};
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  for (const Layer& layer : ckpt.params.layers) {
    arch.push_back(layer.weight.rows);
    weights.push_back(layer.weight.a);
    biases.push_back(layer.bias);
  }
  doc["arch"] = arch;
  doc["weights"] = weights;
  doc["biases"] = biases;
  doc["seed"] = ckpt.seed;
  doc["tau"] = ckpt.tau;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << doc.dump(2) << "\n";
  if (!out) throw IoError(path + ": write failed");
}

/// Loads a checkpoint, rebuilding activations as hidden-ReLU plus the given
/// final activation (identity for embedding encoders, Softplus for evidence
/// heads).
inline Checkpoint load_checkpoint(const std::string& path, Activation final_activation) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw IoError(path + ": malformed checkpoint JSON");
  try {
    const auto arch = doc.at("arch").get<std::vector<std::size_t>>();
    const auto weights = doc.at("weights").get<std::vector<std::vector<double>>>();
    const auto biases = doc.at("biases").get<std::vector<std::vector<double>>>();
    if (arch.size() < 2 || weights.size() != arch.size() - 1 || biases.size() != weights.size()) {
      throw IoError(path + ": arch/weights/biases sizes disagree");
    }
    Checkpoint ckpt;
    ckpt.seed = doc.at("seed").get<std::uint64_t>();
    ckpt.tau = doc.at("tau").get<double>();
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Layer layer;
      layer.weight = Matrix(arch[l + 1], arch[l]);
      layer.weight.a = weights[l];
      layer.bias = biases[l];
      layer.activation = l + 1 == weights.size() ? final_activation : Activation::ReLU;
      ckpt.params.layers.push_back(std::move(layer));
    }
    ckpt.params.validate();
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

inline nlohmann::json mass_to_json(const MassSet& mass) {
  return nlohmann::json{{"b", mass.b}, {"u", mass.u}};
}

inline MassSet mass_from_json(const nlohmann::json& doc) {
  try {
    MassSet mass{doc.at("b").get<std::vector<double>>(), doc.at("u").get<double>()};
    mass.validate();
    return mass;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("mass JSON: ") + e.what());
  }
}

inline std::vector<MassSet> masses_from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw IoError(path + ": malformed JSON");
  if (!doc.is_array() || doc.empty()) {
    throw IoError(path + ": expected a non-empty array of {\"b\": [...], \"u\": x}");
  }
  std::vector<MassSet> masses;
  masses.reserve(doc.size());
  for (const auto& entry : doc) masses.push_back(mass_from_json(entry));
  return masses;
}

}  // namespace evifuse
