// Pipeline driver: data generation, vesselness preprocessing, contrastive
// encoder training, evidential head training with decision fusion, evaluation,
// and a mass-fusion desk utility. Every subcommand takes --out-dir and writes
// the exact resolved configuration it ran with as config.json.
//
// Exit codes: 0 success, 1 usage error, 2 IO error, 3 numerical/contract error.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "evifuse/classifier.hpp"
#include "evifuse/contrastive.hpp"
#include "evifuse/errors.hpp"
#include "evifuse/evidence.hpp"
#include "evifuse/frangi.hpp"
#include "evifuse/image.hpp"
#include "evifuse/metrics.hpp"
#include "evifuse/serialization.hpp"
#include "evifuse/synthdata.hpp"

namespace {

using nlohmann::json;

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw evifuse::IoError(path + ": cannot open for writing");
  out << text;
  if (!out) throw evifuse::IoError(path + ": write failed");
}

void write_config(const std::string& out_dir, json config) {
  std::filesystem::create_directories(out_dir);
  write_text(out_dir + "/config.json", config.dump(2) + "\n");
}

std::vector<std::size_t> branch_indices(const std::vector<std::string>& names) {
  // canonical order (cfp, oct, vessel) fixes the fusion fold regardless of
  // the order the caller listed them in
  std::vector<std::size_t> indices;
  for (std::size_t m = 0; m < evifuse::kModalityNames.size(); ++m) {
    std::size_t hits = 0;
    for (const auto& name : names) {
      if (name == evifuse::kModalityNames[m]) ++hits;
    }
    if (hits > 1) throw std::invalid_argument("branches: duplicate branch " + std::string(evifuse::kModalityNames[m]));
    if (hits == 1) indices.push_back(m);
  }
  return indices;
}

struct GenDataArgs {
  std::string out_dir;
  std::size_t n = 300;
  std::size_t classes = 3;
  std::vector<double> separability{2.0, 1.5, 1.0};
  double conflict = 0.0;
  std::vector<double> label_dist;
  double train_fraction = 2.0 / 3.0;
  std::uint64_t seed = 0;
};

int run_gen_data(const GenDataArgs& args) {
  evifuse::DatasetSpec spec;
  spec.n_samples = args.n;
  spec.num_classes = args.classes;
  for (std::size_t m = 0; m < 3; ++m) spec.separability[m] = args.separability[m];
  spec.conflict_rate = args.conflict;
  spec.label_distribution = args.label_dist;
  spec.seed = args.seed;

  json config{{"command", "gen-data"},
              {"out_dir", args.out_dir},
              {"n", args.n},
              {"classes", args.classes},
              {"separability", args.separability},
              {"conflict", args.conflict},
              {"label_dist", args.label_dist.empty() ? json() : json(args.label_dist)},
              {"train_fraction", args.train_fraction},
              {"seed", args.seed}};
  write_config(args.out_dir, config);

  const evifuse::MultiModalDataset ds = evifuse::generate(spec);
  const auto [train, test] = evifuse::split(ds, args.train_fraction, args.seed);
  evifuse::write_dataset(train, args.out_dir + "/train.jsonl");
  evifuse::write_dataset(test, args.out_dir + "/test.jsonl");
  std::cout << "wrote " << train.size() << " train and " << test.size() << " test records\n";
  return 0;
}

struct FrangiArgs {
  std::string out_dir;
  std::string input;
  std::string output;
  std::vector<double> scales{1.0, 2.0, 3.0, 4.0};
  double beta = 0.5;
  double c = 15.0 / 255.0;
  std::string polarity = "dark";
};

int run_frangi(const FrangiArgs& args) {
  json config{{"command", "frangi"}, {"out_dir", args.out_dir},   {"input", args.input},
              {"output", args.output}, {"scales", args.scales},   {"beta", args.beta},
              {"c", args.c},           {"polarity", args.polarity}};
  write_config(args.out_dir, config);

  evifuse::FrangiParams params;
  params.scales = args.scales;
  params.beta = args.beta;
  params.c = args.c;
  params.polarity =
      args.polarity == "dark" ? evifuse::Polarity::DarkOnBright : evifuse::Polarity::BrightOnDark;

  const evifuse::GrayImage img = evifuse::read_image(args.input);
  const evifuse::GrayImage response = evifuse::frangi_filter(img, params);
  evifuse::write_pgm(response, args.output);
  std::cout << "wrote " << args.output << " (" << response.width << "x" << response.height
            << ")\n";
  return 0;
}

struct TrainEmbedArgs {
  std::string out_dir;
  std::string data;
  std::string modality = "all";
  double tau = 0.05;
  double lr = 1e-3;
  std::size_t batch = 14;
  int epochs = 10;
  double jitter = 0.1;
  std::uint64_t seed = 0;
};

int run_train_embed(const TrainEmbedArgs& args) {
  json config{{"command", "train-embed"}, {"out_dir", args.out_dir}, {"data", args.data},
              {"modality", args.modality}, {"tau", args.tau},        {"lr", args.lr},
              {"batch", args.batch},       {"epochs", args.epochs},  {"jitter", args.jitter},
              {"seed", args.seed}};
  write_config(args.out_dir, config);

  const evifuse::MultiModalDataset ds = evifuse::read_dataset(args.data);
  std::vector<std::size_t> labels;
  labels.reserve(ds.size());
  for (const auto& rec : ds.records) labels.push_back(rec.label);

  for (std::size_t m = 0; m < evifuse::kModalityNames.size(); ++m) {
    const std::string name = evifuse::kModalityNames[m];
    if (args.modality != "all" && args.modality != name) continue;

    std::vector<std::vector<double>> features;
    features.reserve(ds.size());
    for (const auto& rec : ds.records) features.push_back(rec.features[m]);

    evifuse::EncoderConfig enc;
    enc.epochs = args.epochs;
    enc.batch_size = args.batch;
    enc.learning_rate = args.lr;
    enc.tau = args.tau;
    enc.jitter_sigma = args.jitter;
    enc.seed = evifuse::substream_seed(args.seed, "embed", m);

    const evifuse::TrainedEncoder trained = evifuse::train_encoder(features, labels, enc);
    evifuse::save_checkpoint({trained.params, enc.seed, enc.tau},
                             args.out_dir + "/encoder_" + name + ".json");

    std::string csv = "epoch,loss\n";
    for (std::size_t e = 0; e < trained.epoch_mean_loss.size(); ++e) {
      csv += std::to_string(e + 1) + "," + fmt_double(trained.epoch_mean_loss[e]) + "\n";
    }
    write_text(args.out_dir + "/embed_loss_" + name + ".csv", csv);
    std::cout << "trained encoder " << name << " (" << args.epochs << " epochs)\n";
  }
  return 0;
}

struct TrainClassifierArgs {
  std::string out_dir;
  std::string data;
  std::string embed_ckpt_dir;
  std::size_t classes = 3;
  int epochs = 200;
  double lr = 1e-3;
  int anneal = 10;
  std::vector<std::size_t> hidden;
  std::uint64_t seed = 0;
};

int run_train_classifier(const TrainClassifierArgs& args) {
  json config{{"command", "train-classifier"},
              {"out_dir", args.out_dir},
              {"data", args.data},
              {"embed_ckpt_dir", args.embed_ckpt_dir},
              {"classes", args.classes},
              {"epochs", args.epochs},
              {"lr", args.lr},
              {"anneal", args.anneal},
              {"hidden", args.hidden},
              {"seed", args.seed}};
  write_config(args.out_dir, config);

  const evifuse::MultiModalDataset ds = evifuse::read_dataset(args.data);
  std::vector<std::size_t> labels;
  labels.reserve(ds.size());
  for (const auto& rec : ds.records) labels.push_back(rec.label);

  std::array<std::vector<std::vector<double>>, evifuse::kNumBranches> embeddings;
  for (std::size_t m = 0; m < evifuse::kNumBranches; ++m) {
    const std::string name = evifuse::kModalityNames[m];
    const std::string encoder_path = args.embed_ckpt_dir + "/encoder_" + name + ".json";
    const evifuse::Checkpoint encoder =
        evifuse::load_checkpoint(encoder_path, evifuse::Activation::Identity);
    embeddings[m].reserve(ds.size());
    for (const auto& rec : ds.records) {
      embeddings[m].push_back(evifuse::embed(encoder.params, rec.features[m]));
    }
    // re-save next to the heads so the out-dir is a self-contained bundle
    const std::string copy_path = args.out_dir + "/encoder_" + name + ".json";
    if (!std::filesystem::exists(copy_path) ||
        !std::filesystem::equivalent(encoder_path, copy_path)) {
      std::filesystem::copy_file(encoder_path, copy_path,
                                 std::filesystem::copy_options::overwrite_existing);
    }
  }

  evifuse::ClassifierConfig cls;
  cls.epochs = args.epochs;
  cls.learning_rate = args.lr;
  cls.anneal_epochs = args.anneal;
  cls.seed = args.seed;
  cls.hidden = args.hidden;
  cls.num_classes = args.classes;

  const evifuse::TrainedClassifier trained = evifuse::train_classifier(embeddings, labels, cls);
  for (std::size_t m = 0; m < evifuse::kNumBranches; ++m) {
    evifuse::save_checkpoint({trained.heads[m], args.seed, 0.0},
                             args.out_dir + "/head_" + std::string(evifuse::kModalityNames[m]) +
                                 ".json");
  }

  std::string csv = "epoch,l_cfp,l_oct,l_vessel,l_fusion,total,lambda\n";
  for (std::size_t e = 0; e < trained.history.size(); ++e) {
    const evifuse::LossReport& r = trained.history[e];
    csv += std::to_string(e + 1) + "," + fmt_double(r.l_cfp) + "," + fmt_double(r.l_oct) + "," +
           fmt_double(r.l_vessel) + "," + fmt_double(r.l_fusion) + "," + fmt_double(r.total) +
           "," + fmt_double(r.lambda) + "\n";
  }
  write_text(args.out_dir + "/classifier_loss.csv", csv);
  std::cout << "trained " << evifuse::kNumBranches << " evidence heads (" << args.epochs
            << " epochs)\n";
  return 0;
}

struct EvaluateArgs {
  std::string out_dir;
  std::string data;
  std::string ckpt_dir;
  std::vector<std::string> branches{"cfp", "oct", "vessel"};
};

int run_evaluate(const EvaluateArgs& args) {
  json config{{"command", "evaluate"},
              {"out_dir", args.out_dir},
              {"data", args.data},
              {"ckpt_dir", args.ckpt_dir},
              {"branches", args.branches}};
  write_config(args.out_dir, config);

  const std::vector<std::size_t> branches = branch_indices(args.branches);
  if (branches.empty()) throw std::invalid_argument("evaluate: no branches selected");
  const evifuse::MultiModalDataset ds = evifuse::read_dataset(args.data);
  if (ds.records.empty()) throw std::invalid_argument("evaluate: empty dataset");

  struct Branch {
    std::size_t modality;
    evifuse::Checkpoint encoder;
    evifuse::Checkpoint head;
  };
  std::vector<Branch> models;
  for (const std::size_t m : branches) {
    const std::string name = evifuse::kModalityNames[m];
    models.push_back({m,
                      evifuse::load_checkpoint(args.ckpt_dir + "/encoder_" + name + ".json",
                                               evifuse::Activation::Identity),
                      evifuse::load_checkpoint(args.ckpt_dir + "/head_" + name + ".json",
                                               evifuse::Activation::Softplus)});
  }

  std::size_t num_classes = 0;
  for (const auto& rec : ds.records) num_classes = std::max(num_classes, rec.label + 1);
  num_classes = std::max(num_classes, models.front().head.params.layers.back().weight.rows);

  std::vector<std::size_t> preds;
  std::vector<std::size_t> truths;
  std::string lines;
  double u_sum = 0.0;
  double u_conflict = 0.0, u_clean = 0.0;
  std::size_t n_conflict = 0, n_clean = 0;

  for (const auto& rec : ds.records) {
    std::vector<evifuse::MassSet> masses;
    json branch_u = json::object();
    bool conflict_injected = false;
    for (const auto& model : models) {
      const std::vector<double> z = evifuse::embed(model.encoder.params, rec.features[model.modality]);
      const evifuse::EvidenceVector evidence = evifuse::forward(model.head.params, z);
      const evifuse::DirichletOpinion opinion = evifuse::evidence_to_opinion(evidence);
      masses.push_back(evifuse::opinion_to_mass(opinion));
      branch_u[evifuse::kModalityNames[model.modality]] =
          static_cast<double>(opinion.num_classes()) / opinion.strength();
      conflict_injected = conflict_injected || rec.conflict[model.modality];
    }

    evifuse::MassSet fused;
    try {
      fused = evifuse::fuse_all(masses);
    } catch (const evifuse::TotalConflictError& e) {
      throw evifuse::TotalConflictError(std::string(e.what()) + " (record " +
                                        std::to_string(rec.id) + ")");
    }
    const evifuse::Prediction pred = evifuse::predict(evifuse::mass_to_opinion(fused));

    preds.push_back(pred.class_index);
    truths.push_back(rec.label);
    u_sum += pred.uncertainty;
    if (conflict_injected) {
      u_conflict += pred.uncertainty;
      ++n_conflict;
    } else {
      u_clean += pred.uncertainty;
      ++n_clean;
    }

    json line{{"id", rec.id},
              {"label", rec.label},
              {"pred", pred.class_index},
              {"probs", pred.probs},
              {"uncertainty", pred.uncertainty},
              {"branch_uncertainty", branch_u},
              {"conflict_injected", conflict_injected}};
    lines += line.dump() + "\n";
  }
  write_text(args.out_dir + "/predictions.jsonl", lines);

  const evifuse::ConfusionMatrix cm = evifuse::confusion(preds, truths, num_classes);
  std::string cm_csv = "truth";
  for (std::size_t p = 0; p < num_classes; ++p) cm_csv += ",pred_" + std::to_string(p);
  cm_csv += "\n";
  for (std::size_t t = 0; t < num_classes; ++t) {
    cm_csv += std::to_string(t);
    for (std::size_t p = 0; p < num_classes; ++p) {
      cm_csv += "," + std::to_string(cm.at(t, p));
    }
    cm_csv += "\n";
  }
  write_text(args.out_dir + "/confusion.csv", cm_csv);

  const double acc = evifuse::accuracy(cm);
  const auto kappa = evifuse::quadratic_weighted_kappa(cm);
  const double n = static_cast<double>(ds.records.size());
  json metrics{{"n", ds.records.size()},
               {"branches", args.branches},
               {"accuracy", acc},
               {"kappa", kappa.has_value() ? json(*kappa) : json()},
               {"mean_uncertainty", u_sum / n},
               {"n_conflict", n_conflict},
               {"n_clean", n_clean},
               {"mean_uncertainty_conflict",
                n_conflict == 0 ? json() : json(u_conflict / static_cast<double>(n_conflict))},
               {"mean_uncertainty_clean",
                n_clean == 0 ? json() : json(u_clean / static_cast<double>(n_clean))}};
  write_text(args.out_dir + "/metrics.json", metrics.dump(2) + "\n");

  std::cout << "n,accuracy,kappa\n"
            << ds.records.size() << "," << fmt_double(acc) << ","
            << (kappa.has_value() ? fmt_double(*kappa) : "nan") << "\n";
  return 0;
}

struct FuseArgs {
  std::string out_dir;
  std::string masses;
};

int run_fuse(const FuseArgs& args) {
  json config{{"command", "fuse"}, {"out_dir", args.out_dir}, {"masses", args.masses}};
  write_config(args.out_dir, config);

  const std::vector<evifuse::MassSet> masses = evifuse::masses_from_file(args.masses);
  const evifuse::MassSet fused = evifuse::fuse_all(masses);
  const evifuse::Prediction pred = evifuse::predict(evifuse::mass_to_opinion(fused));

  json result = evifuse::mass_to_json(fused);
  result["pred"] = pred.class_index;
  write_text(args.out_dir + "/fused.json", result.dump(2) + "\n");
  std::cout << result.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evidential multi-modal fusion pipeline"};
  app.require_subcommand(1);

  GenDataArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic train/test dataset");
  gen_cmd->add_option("--out-dir", gen.out_dir, "Output directory")->required();
  gen_cmd->add_option("--n", gen.n, "Total sample count");
  gen_cmd->add_option("--classes", gen.classes, "Number of classes");
  gen_cmd->add_option("--separability", gen.separability, "Per-modality class separation (cfp,oct,vessel)")
      ->delimiter(',')
      ->expected(3);
  gen_cmd->add_option("--conflict", gen.conflict, "Conflict injection rate")
      ->check(CLI::Range(0.0, 1.0));
  gen_cmd->add_option("--label-dist", gen.label_dist, "Label proportions (default uniform)")
      ->delimiter(',');
  gen_cmd->add_option("--train-fraction", gen.train_fraction, "Train split fraction")
      ->check(CLI::Range(std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0)));
  gen_cmd->add_option("--seed", gen.seed, "Root seed");

  FrangiArgs frangi;
  CLI::App* frangi_cmd = app.add_subcommand("frangi", "Vesselness-filter a PGM/PPM image");
  frangi_cmd->add_option("--out-dir", frangi.out_dir, "Output directory (config.json)")->required();
  frangi_cmd->add_option("--input", frangi.input, "Input image (P5 PGM or P6 PPM)")->required();
  frangi_cmd->add_option("--output", frangi.output, "Output PGM path")->required();
  frangi_cmd->add_option("--scales", frangi.scales, "Gaussian scales")->delimiter(',');
  frangi_cmd->add_option("--beta", frangi.beta, "Blobness sensitivity");
  frangi_cmd->add_option("--c", frangi.c, "Structureness sensitivity");
  frangi_cmd->add_option("--polarity", frangi.polarity, "Vessel polarity")
      ->check(CLI::IsMember({"dark", "bright"}));

  TrainEmbedArgs embed;
  CLI::App* embed_cmd = app.add_subcommand("train-embed", "Train contrastive encoders");
  embed_cmd->add_option("--out-dir", embed.out_dir, "Output directory")->required();
  embed_cmd->add_option("--data", embed.data, "Training dataset (JSONL)")->required();
  embed_cmd->add_option("--modality", embed.modality, "Which encoder to train")
      ->check(CLI::IsMember({"cfp", "oct", "vessel", "all"}));
  embed_cmd->add_option("--tau", embed.tau, "Contrastive temperature")
      ->check(CLI::PositiveNumber);
  embed_cmd->add_option("--lr", embed.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  embed_cmd->add_option("--batch", embed.batch, "Batch size (samples; views are 2x)");
  embed_cmd->add_option("--epochs", embed.epochs, "Training epochs")
      ->check(CLI::NonNegativeNumber);
  embed_cmd->add_option("--jitter", embed.jitter, "Augmentation noise sigma")
      ->check(CLI::NonNegativeNumber);
  embed_cmd->add_option("--seed", embed.seed, "Root seed");

  TrainClassifierArgs cls;
  CLI::App* cls_cmd = app.add_subcommand("train-classifier", "Train evidence heads with fusion");
  cls_cmd->add_option("--out-dir", cls.out_dir, "Output directory")->required();
  cls_cmd->add_option("--data", cls.data, "Training dataset (JSONL)")->required();
  cls_cmd->add_option("--embed-ckpt-dir", cls.embed_ckpt_dir, "Directory with encoder_*.json")
      ->required();
  cls_cmd->add_option("--classes", cls.classes, "Number of classes");
  cls_cmd->add_option("--epochs", cls.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
  cls_cmd->add_option("--lr", cls.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  cls_cmd->add_option("--anneal", cls.anneal, "Epochs to anneal the KL weight over")
      ->check(CLI::NonNegativeNumber);
  cls_cmd->add_option("--hidden", cls.hidden, "Optional hidden layer sizes for the heads")
      ->delimiter(',');
  cls_cmd->add_option("--seed", cls.seed, "Root seed");

  EvaluateArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "Evaluate a trained bundle on a dataset");
  eval_cmd->add_option("--out-dir", eval.out_dir, "Output directory")->required();
  eval_cmd->add_option("--data", eval.data, "Evaluation dataset (JSONL)")->required();
  eval_cmd->add_option("--ckpt-dir", eval.ckpt_dir, "Directory with encoder_*/head_* checkpoints")
      ->required();
  eval_cmd->add_option("--branches", eval.branches, "Branches to fuse")
      ->delimiter(',')
      ->check(CLI::IsMember({"cfp", "oct", "vessel"}));

  FuseArgs fuse;
  CLI::App* fuse_cmd = app.add_subcommand("fuse", "Fuse belief masses from a JSON file");
  fuse_cmd->add_option("--out-dir", fuse.out_dir, "Output directory")->required();
  fuse_cmd->add_option("--masses", fuse.masses, "JSON array of {\"b\": [...], \"u\": x}")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (gen_cmd->parsed()) return run_gen_data(gen);
    if (frangi_cmd->parsed()) return run_frangi(frangi);
    if (embed_cmd->parsed()) return run_train_embed(embed);
    if (cls_cmd->parsed()) return run_train_classifier(cls);
    if (eval_cmd->parsed()) return run_evaluate(eval);
    if (fuse_cmd->parsed()) return run_fuse(fuse);
  } catch (const evifuse::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
