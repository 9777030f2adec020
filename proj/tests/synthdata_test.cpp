#include "evifuse/synthdata.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "evifuse/errors.hpp"
#include "oracle_utils.hpp"

using evifuse::DatasetSpec;
using evifuse::GrayImage;
using evifuse::MultiModalDataset;
using evifuse::Polarity;

namespace {

struct TempDir {
  std::string path;

  TempDir() {
    path = "/tmp/evifuse_synth_" + std::to_string(std::random_device{}());
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }

  std::string file(const std::string& name) const { return path + "/" + name; }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool records_equal(const MultiModalDataset& a, const MultiModalDataset& b) {
  if (a.records.size() != b.records.size()) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto& ra = a.records[i];
    const auto& rb = b.records[i];
    if (ra.id != rb.id || ra.label != rb.label || ra.conflict != rb.conflict) return false;
    for (std::size_t m = 0; m < 3; ++m) {
      if (ra.features[m] != rb.features[m]) return false;
    }
  }
  return true;
}

// per-modality nearest-class-mean accuracy, fit on train
double nearest_mean_accuracy(const MultiModalDataset& train, const MultiModalDataset& test,
                             std::size_t modality, std::size_t num_classes) {
  std::vector<std::vector<double>> x;
  std::vector<std::size_t> y;
  for (const auto& rec : train.records) {
    x.push_back(rec.features[modality]);
    y.push_back(rec.label);
  }
  const oracle::NearestMean model = oracle::NearestMean::fit(x, y, num_classes);
  std::size_t hits = 0;
  for (const auto& rec : test.records) {
    if (model.predict(rec.features[modality]) == rec.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test.records.size());
}

}  // namespace

TEST(Generate, ShapesLabelsAndIds) {
  DatasetSpec spec;
  spec.seed = 7;
  const MultiModalDataset ds = evifuse::generate(spec);
  ASSERT_EQ(ds.size(), 300u);
  std::array<std::size_t, 3> class_counts{0, 0, 0};
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& rec = ds.records[i];
    EXPECT_EQ(rec.id, i);
    ASSERT_LT(rec.label, 3u);
    ++class_counts[rec.label];
    EXPECT_EQ(rec.features[0].size(), 32u);
    EXPECT_EQ(rec.features[1].size(), 64u);
    EXPECT_EQ(rec.features[2].size(), 16u);
    EXPECT_EQ(rec.conflict, (std::array<bool, 3>{false, false, false}));
  }
  // uniform default distribution apportions exactly
  EXPECT_EQ(class_counts, (std::array<std::size_t, 3>{100, 100, 100}));
}

TEST(Generate, DeterministicAndSeedSensitive) {
  DatasetSpec spec;
  spec.n_samples = 40;
  spec.conflict_rate = 0.3;
  spec.seed = 11;
  const MultiModalDataset a = evifuse::generate(spec);
  const MultiModalDataset b = evifuse::generate(spec);
  EXPECT_TRUE(records_equal(a, b));

  spec.seed = 12;
  const MultiModalDataset c = evifuse::generate(spec);
  EXPECT_FALSE(records_equal(a, c));
}

TEST(Generate, LargestRemainderApportionment) {
  const std::vector<std::size_t> counts =
      evifuse::detail::largest_remainder_counts({0.5, 0.25, 0.25}, 10);
  // floors (5,2,2); the leftover goes to the tied remainder with lower index
  EXPECT_EQ(counts, (std::vector<std::size_t>{5, 3, 2}));

  const std::vector<std::size_t> uneven =
      evifuse::detail::largest_remainder_counts({0.54, 0.3, 0.16}, 25);
  // quotas (13.5, 7.5, 4.0) -> floors (13,7,4), one leftover to class 0
  EXPECT_EQ(uneven, (std::vector<std::size_t>{14, 7, 4}));

  DatasetSpec spec;
  spec.n_samples = 10;
  spec.label_distribution = {0.5, 0.25, 0.25};
  spec.seed = 3;
  const MultiModalDataset ds = evifuse::generate(spec);
  std::array<std::size_t, 3> got{0, 0, 0};
  for (const auto& rec : ds.records) ++got[rec.label];
  EXPECT_EQ(got, (std::array<std::size_t, 3>{5, 3, 2}));
}

TEST(Generate, ClassMeansOnSimplex) {
  // pairwise mean distance equals the separability parameter
  const double s = 2.5;
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = a + 1; b < 3; ++b) {
      const auto ma = evifuse::detail::class_mean(a, 3, 32, s);
      const auto mb = evifuse::detail::class_mean(b, 3, 32, s);
      double dist_sq = 0.0;
      for (std::size_t d = 0; d < 32; ++d) dist_sq += (ma[d] - mb[d]) * (ma[d] - mb[d]);
      EXPECT_NEAR(std::sqrt(dist_sq), s, 1e-12);
    }
  }
  // zero separability collapses all means to the origin
  const auto zero = evifuse::detail::class_mean(1, 3, 8, 0.0);
  for (const double v : zero) EXPECT_EQ(v, 0.0);
}

TEST(Generate, RejectsInvalidSpecs) {
  DatasetSpec spec;
  spec.n_samples = 0;
  EXPECT_THROW(evifuse::generate(spec), std::invalid_argument);

  spec = DatasetSpec{};
  spec.label_distribution = {0.5, 0.5};  // wrong arity for 3 classes
  EXPECT_THROW(evifuse::generate(spec), std::invalid_argument);

  spec = DatasetSpec{};
  spec.label_distribution = {0.6, 0.3, 0.3};
  EXPECT_THROW(evifuse::generate(spec), std::invalid_argument);

  spec = DatasetSpec{};
  spec.conflict_rate = 1.5;
  EXPECT_THROW(evifuse::generate(spec), std::invalid_argument);

  spec = DatasetSpec{};
  spec.separability[1] = -1.0;
  EXPECT_THROW(evifuse::generate(spec), std::invalid_argument);

  spec = DatasetSpec{};
  spec.dims[2] = 2;  // below class count
  EXPECT_THROW(evifuse::generate(spec), std::invalid_argument);
}

TEST(Generate, HighSeparabilityIsNearlyPerfect) {
  // statistical contract: p=0, s=4 -> nearest-mean accuracy > 0.95 on a
  // 1000-sample held-out set, per modality
  DatasetSpec spec;
  spec.n_samples = 3000;
  spec.separability = {4.0, 4.0, 4.0};
  spec.conflict_rate = 0.0;
  spec.seed = 5;
  const MultiModalDataset ds = evifuse::generate(spec);
  const auto [train, test] = evifuse::split(ds, 2.0 / 3.0, 5);
  ASSERT_EQ(test.size(), 1000u);
  for (std::size_t m = 0; m < 3; ++m) {
    EXPECT_GT(nearest_mean_accuracy(train, test, m, 3), 0.95) << "modality " << m;
  }
}

TEST(Generate, ZeroSeparabilityIsChance) {
  DatasetSpec spec;
  spec.n_samples = 3000;
  spec.separability = {0.0, 0.0, 0.0};
  spec.seed = 6;
  const MultiModalDataset ds = evifuse::generate(spec);
  const auto [train, test] = evifuse::split(ds, 2.0 / 3.0, 6);
  for (std::size_t m = 0; m < 3; ++m) {
    const double acc = nearest_mean_accuracy(train, test, m, 3);
    EXPECT_NEAR(acc, 1.0 / 3.0, 0.06) << "modality " << m;
  }
}

TEST(Generate, ConflictRateMatchesFlagFraction) {
  DatasetSpec spec;
  spec.n_samples = 2000;
  spec.conflict_rate = 0.35;
  spec.seed = 9;
  const MultiModalDataset ds = evifuse::generate(spec);
  for (std::size_t m = 0; m < 3; ++m) {
    std::size_t flagged = 0;
    for (const auto& rec : ds.records) flagged += rec.conflict[m] ? 1 : 0;
    const double fraction = static_cast<double>(flagged) / 2000.0;
    // binomial 4 sigma band around p
    EXPECT_NEAR(fraction, 0.35, 4.0 * std::sqrt(0.35 * 0.65 / 2000.0)) << "modality " << m;
  }

  spec.conflict_rate = 1.0;
  const MultiModalDataset all = evifuse::generate(spec);
  for (const auto& rec : all.records) {
    EXPECT_EQ(rec.conflict, (std::array<bool, 3>{true, true, true}));
  }
}

TEST(Generate, ConflictSamplesLookLikeWrongClasses) {
  // flagged modalities are drawn from a uniformly random wrong class: with
  // wide separation the nearest TRUE mean is (almost) never the label, and
  // both wrong classes appear
  DatasetSpec spec;
  spec.n_samples = 900;
  spec.separability = {8.0, 8.0, 8.0};
  spec.conflict_rate = 1.0;
  spec.seed = 13;
  const MultiModalDataset ds = evifuse::generate(spec);

  for (std::size_t m = 0; m < 3; ++m) {
    oracle::NearestMean truth;
    for (std::size_t k = 0; k < 3; ++k) {
      truth.means.push_back(evifuse::detail::class_mean(k, 3, spec.dims[m], 8.0));
    }
    std::size_t misses = 0;
    std::array<std::array<std::size_t, 3>, 3> source_counts{};
    for (const auto& rec : ds.records) {
      const std::size_t pred = truth.predict(rec.features[m]);
      if (pred != rec.label) ++misses;
      ++source_counts[rec.label][pred];
    }
    EXPECT_GT(static_cast<double>(misses) / 900.0, 0.99) << "modality " << m;
    for (std::size_t label = 0; label < 3; ++label) {
      std::size_t flagged_total = 0;
      for (std::size_t pred = 0; pred < 3; ++pred) {
        if (pred != label) flagged_total += source_counts[label][pred];
      }
      for (std::size_t pred = 0; pred < 3; ++pred) {
        if (pred == label) continue;
        const double share =
            static_cast<double>(source_counts[label][pred]) / static_cast<double>(flagged_total);
        EXPECT_NEAR(share, 0.5, 0.15) << "modality " << m << " label " << label;
      }
    }
  }
}

TEST(Generate, ConflictRaisesNearestMeanErrors) {
  DatasetSpec spec;
  spec.n_samples = 2000;
  spec.separability = {3.0, 3.0, 3.0};
  spec.conflict_rate = 0.4;
  spec.seed = 21;
  const MultiModalDataset ds = evifuse::generate(spec);
  for (std::size_t m = 0; m < 3; ++m) {
    std::vector<std::vector<double>> x;
    std::vector<std::size_t> y;
    for (const auto& rec : ds.records) {
      if (!rec.conflict[m]) {
        x.push_back(rec.features[m]);
        y.push_back(rec.label);
      }
    }
    const oracle::NearestMean model = oracle::NearestMean::fit(x, y, 3);
    std::size_t clean_err = 0, clean_n = 0, flag_err = 0, flag_n = 0;
    for (const auto& rec : ds.records) {
      const bool miss = model.predict(rec.features[m]) != rec.label;
      if (rec.conflict[m]) {
        ++flag_n;
        flag_err += miss ? 1 : 0;
      } else {
        ++clean_n;
        clean_err += miss ? 1 : 0;
      }
    }
    const double clean_rate = static_cast<double>(clean_err) / static_cast<double>(clean_n);
    const double flag_rate = static_cast<double>(flag_err) / static_cast<double>(flag_n);
    EXPECT_GT(flag_rate, clean_rate + 0.3) << "modality " << m;
  }
}

TEST(Split, StratifiedTwoToOne) {
  DatasetSpec spec;
  spec.seed = 17;
  const MultiModalDataset ds = evifuse::generate(spec);
  const auto [train, test] = evifuse::split(ds, 2.0 / 3.0, 17);
  EXPECT_EQ(train.size(), 200u);
  EXPECT_EQ(test.size(), 100u);

  // disjoint ids covering the dataset
  std::set<std::size_t> ids;
  for (const auto& rec : train.records) ids.insert(rec.id);
  for (const auto& rec : test.records) ids.insert(rec.id);
  EXPECT_EQ(ids.size(), 300u);

  // label proportions within +-10% (relative) of DatasetSpec::label_dist on both sides
  for (const MultiModalDataset* part : {&train, &test}) {
    std::array<double, 3> counts{0, 0, 0};
    for (const auto& rec : part->records) ++counts[rec.label];
    for (std::size_t k = 0; k < 3; ++k) {
      const double prop = counts[k] / static_cast<double>(part->size());
      EXPECT_NEAR(prop, 1.0 / 3.0, 0.1 / 3.0);
    }
  }
}

TEST(Split, DeterministicMembershipAndOrder) {
  DatasetSpec spec;
  spec.n_samples = 120;
  spec.seed = 23;
  const MultiModalDataset ds = evifuse::generate(spec);
  const auto [a_train, a_test] = evifuse::split(ds, 0.75, 99);
  const auto [b_train, b_test] = evifuse::split(ds, 0.75, 99);
  EXPECT_TRUE(records_equal(a_train, b_train));
  EXPECT_TRUE(records_equal(a_test, b_test));

  // different seed moves membership around
  const auto [c_train, c_test] = evifuse::split(ds, 0.75, 100);
  EXPECT_FALSE(records_equal(a_train, c_train));

  // original record order is preserved inside each side
  for (std::size_t i = 1; i < a_train.records.size(); ++i) {
    EXPECT_LT(a_train.records[i - 1].id, a_train.records[i].id);
  }
  for (std::size_t i = 1; i < a_test.records.size(); ++i) {
    EXPECT_LT(a_test.records[i - 1].id, a_test.records[i].id);
  }
}

TEST(Split, RejectsDegenerateRequests) {
  DatasetSpec spec;
  spec.n_samples = 30;
  spec.seed = 2;
  const MultiModalDataset ds = evifuse::generate(spec);
  EXPECT_THROW(evifuse::split(ds, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(evifuse::split(ds, 1.0, 1), std::invalid_argument);
  EXPECT_THROW(evifuse::split(ds, 0.001, 1), std::invalid_argument);  // empty train
  EXPECT_THROW(evifuse::split(ds, 0.999, 1), std::invalid_argument);  // empty test
  EXPECT_THROW(evifuse::split(MultiModalDataset{}, 0.5, 1), std::invalid_argument);
}

TEST(DatasetIo, RoundtripIsExact) {
  TempDir dir;
  DatasetSpec spec;
  spec.n_samples = 50;
  spec.conflict_rate = 0.25;
  spec.seed = 31;
  const MultiModalDataset ds = evifuse::generate(spec);
  const std::string path = dir.file("ds.jsonl");
  evifuse::write_dataset(ds, path);
  const MultiModalDataset back = evifuse::read_dataset(path);
  EXPECT_TRUE(records_equal(ds, back));
}

TEST(DatasetIo, SameSeedWritesIdenticalBytes) {
  TempDir dir;
  DatasetSpec spec;
  spec.n_samples = 25;
  spec.conflict_rate = 0.1;
  spec.seed = 37;
  const std::string a = dir.file("a.jsonl");
  const std::string b = dir.file("b.jsonl");
  evifuse::write_dataset(evifuse::generate(spec), a);
  evifuse::write_dataset(evifuse::generate(spec), b);
  const std::string bytes = slurp(a);
  EXPECT_FALSE(bytes.empty());
  EXPECT_EQ(bytes, slurp(b));
}

TEST(DatasetIo, EmptyFileAndBlankLines) {
  TempDir dir;
  const std::string path = dir.file("empty.jsonl");
  std::ofstream(path).close();
  EXPECT_EQ(evifuse::read_dataset(path).size(), 0u);

  const std::string blanks = dir.file("blanks.jsonl");
  {
    std::ofstream out(blanks);
    out << "\n\n";
    out << R"({"id":0,"label":1,"cfp":[0.5],"oct":[1.0],"vessel":[2.0],"conflict":[false,true,false]})"
        << "\n\n";
  }
  const MultiModalDataset ds = evifuse::read_dataset(blanks);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.records[0].label, 1u);
  EXPECT_EQ(ds.records[0].features[1], std::vector<double>{1.0});
  EXPECT_EQ(ds.records[0].conflict, (std::array<bool, 3>{false, true, false}));
}

TEST(DatasetIo, ErrorsNameTheLine) {
  TempDir dir;
  const std::string good =
      R"({"id":0,"label":1,"cfp":[0.5],"oct":[1.0],"vessel":[2.0],"conflict":[false,false,false]})";

  const std::string missing = dir.file("missing.jsonl");
  {
    std::ofstream out(missing);
    out << good << "\n";
    out << R"({"id":1,"cfp":[0.5],"oct":[1.0],"vessel":[2.0],"conflict":[false,false,false]})"
        << "\n";
  }
  try {
    evifuse::read_dataset(missing);
    FAIL() << "expected IoError";
  } catch (const evifuse::IoError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("label"), std::string::npos) << e.what();
  }

  const std::string malformed = dir.file("malformed.jsonl");
  {
    std::ofstream out(malformed);
    out << good << "\n" << good << "\n";
    out << "{not json\n";
  }
  try {
    evifuse::read_dataset(malformed);
    FAIL() << "expected IoError";
  } catch (const evifuse::IoError& e) {
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }

  const std::string flags = dir.file("flags.jsonl");
  {
    std::ofstream out(flags);
    out << R"({"id":0,"label":0,"cfp":[0.1],"oct":[0.2],"vessel":[0.3],"conflict":[false]})"
        << "\n";
  }
  EXPECT_THROW(evifuse::read_dataset(flags), evifuse::IoError);

  EXPECT_THROW(evifuse::read_dataset(dir.file("nope.jsonl")), evifuse::IoError);
}

TEST(TubeImage, ZeroContrastIsConstant) {
  const auto [img, centerline] =
      evifuse::generate_tube_image(33, 33, 3.0, 20.0, 0.0, Polarity::DarkOnBright);
  for (const double v : img.data) EXPECT_EQ(v, 0.8);
  EXPECT_FALSE(centerline.empty());
}

TEST(TubeImage, CenterlineIsExtremal) {
  const auto [dark, dark_center] =
      evifuse::generate_tube_image(65, 65, 3.0, 30.0, 0.5, Polarity::DarkOnBright);
  const double dark_min = *std::min_element(dark.data.begin(), dark.data.end());
  double best = 1.0;
  for (const std::size_t idx : dark_center) best = std::min(best, dark.data[idx]);
  EXPECT_EQ(best, dark_min);
  for (const double v : dark.data) EXPECT_LE(v, 0.8);

  const auto [bright, bright_center] =
      evifuse::generate_tube_image(65, 65, 3.0, 30.0, 0.2, Polarity::BrightOnDark);
  const double bright_max = *std::max_element(bright.data.begin(), bright.data.end());
  double top = 0.0;
  for (const std::size_t idx : bright_center) top = std::max(top, bright.data[idx]);
  EXPECT_EQ(top, bright_max);
  for (const double v : bright.data) EXPECT_GE(v, 0.8);
}

TEST(TubeImage, CenterlineDeficitApproximatesContrast) {
  const double contrast = 0.45;
  for (const double angle : {0.0, 30.0, 45.0, 60.0, 90.0}) {
    const auto [img, centerline] =
        evifuse::generate_tube_image(65, 65, 3.0, angle, contrast, Polarity::DarkOnBright);
    ASSERT_FALSE(centerline.empty());
    double mean = 0.0;
    for (const std::size_t idx : centerline) mean += img.data[idx];
    mean /= static_cast<double>(centerline.size());
    const double deficit = 0.8 - mean;
    EXPECT_NEAR(deficit, contrast, 0.05 * contrast) << "angle " << angle;
    if (angle == 0.0 || angle == 45.0 || angle == 90.0) {
      // odd-sized axis/diagonal tubes pass exactly through pixel centers
      EXPECT_NEAR(deficit, contrast, 1e-12) << "angle " << angle;
    }
  }
}

TEST(TubeImage, RejectsBadGeometry) {
  EXPECT_THROW(evifuse::generate_tube_image(16, 65, 8.0, 0.0, 0.2, Polarity::DarkOnBright),
               std::invalid_argument);
  EXPECT_THROW(evifuse::generate_tube_image(65, 65, 0.0, 0.0, 0.2, Polarity::DarkOnBright),
               std::invalid_argument);
  // contrast must respect the [0,1] intensity range for the polarity
  EXPECT_THROW(evifuse::generate_tube_image(65, 65, 3.0, 0.0, 0.9, Polarity::DarkOnBright),
               std::invalid_argument);
  EXPECT_THROW(evifuse::generate_tube_image(65, 65, 3.0, 0.0, 0.3, Polarity::BrightOnDark),
               std::invalid_argument);
  EXPECT_THROW(evifuse::generate_tube_image(65, 65, 3.0, 0.0, -0.1, Polarity::DarkOnBright),
               std::invalid_argument);
}
