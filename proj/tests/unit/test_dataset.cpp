#include "ocdcvae/dataset.hpp"
#include "ocdcvae/error.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

using namespace ocdcvae;
namespace fs = std::filesystem;

namespace {

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<char>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

Dataset small_dataset() {
  SynthConfig cfg;
  cfg.num_seen = 3;
  cfg.num_unseen = 2;
  cfg.samples_per_class = 10;
  cfg.feature_dim = 4;
  cfg.attribute_dim = 3;
  return make_synthetic(cfg);
}

}  // namespace

TEST(Synthetic, SizesFollowConfig) {
  const Dataset d = make_synthetic(SynthConfig{});
  EXPECT_EQ(d.num_samples(), 1200);
  EXPECT_EQ(d.num_classes(), 12);
  EXPECT_EQ(d.seen_classes.size(), 8u);
  EXPECT_EQ(d.unseen_classes.size(), 4u);
  EXPECT_EQ(d.feature_dim(), 16);
  EXPECT_EQ(d.attribute_dim(), 8);
  EXPECT_NO_THROW(validate(d));
}

TEST(Synthetic, SameSeedSameDataset) {
  EXPECT_EQ(make_synthetic(SynthConfig{}), make_synthetic(SynthConfig{}));
  SynthConfig other;
  other.seed = 8;
  EXPECT_NE(make_synthetic(SynthConfig{}).features, make_synthetic(other).features);
}

TEST(Synthetic, VanishingSpreadCollapsesClasses) {
  SynthConfig cfg;
  cfg.class_spread = 1e-300;
  const Dataset d = make_synthetic(cfg);
  const Tensor2 centers = synthetic_feature_centers(cfg);
  for (Index i = 0; i < d.num_samples(); ++i) {
    const ClassId c = d.labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < d.feature_dim(); ++j) {
      EXPECT_EQ(d.features(i, j), static_cast<double>(static_cast<float>(centers(c, j))));
    }
  }
}

TEST(Synthetic, ClassMeansNearCenters) {
  SynthConfig cfg;
  const Dataset d = make_synthetic(cfg);
  const Tensor2 centers = synthetic_feature_centers(cfg);
  const double n = cfg.samples_per_class;
  const double tol = 3.0 * cfg.class_spread / std::sqrt(n);
  int outside = 0;
  int total = 0;
  for (ClassId c = 0; c < d.num_classes(); ++c) {
    const auto idx = d.indices_of({c});
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(d.feature_dim());
    for (auto i : idx) mean += d.features.row(i);
    mean /= static_cast<double>(idx.size());
    for (Index j = 0; j < d.feature_dim(); ++j) {
      ++total;
      if (std::abs(mean(j) - centers(c, j)) > tol) ++outside;
    }
  }
  // 3-sigma band per coordinate: a handful of the 192 coordinates may fall outside.
  EXPECT_LE(outside, total / 50);
}

TEST(Synthetic, RejectsInvalidConfig) {
  SynthConfig cfg;
  cfg.num_seen = 0;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = SynthConfig{};
  cfg.class_spread = 0.0;
  EXPECT_THROW(cfg.validate(), ParameterError);
}

TEST(DatasetIo, RoundTripIsIdentity) {
  const auto dir = testutil::temp_dir("ds_roundtrip");
  const Dataset d = make_synthetic(SynthConfig{});
  save_dataset(d, dir);
  EXPECT_EQ(load_dataset(dir), d);
}

TEST(DatasetIo, SaveIsByteStable) {
  const auto a = testutil::temp_dir("ds_bytes_a");
  const auto b = testutil::temp_dir("ds_bytes_b");
  const Dataset d = small_dataset();
  save_dataset(d, a);
  save_dataset(load_dataset(a), b);
  for (const char* f : {"features.bin", "labels.bin", "attributes.bin", "splits.txt"}) {
    EXPECT_EQ(read_bytes(a / f), read_bytes(b / f)) << f;
  }
}

TEST(DatasetIo, HeaderLayout) {
  const auto dir = testutil::temp_dir("ds_header");
  const Dataset d = small_dataset();
  save_dataset(d, dir);
  const auto bytes = read_bytes(dir / "features.bin");
  ASSERT_EQ(bytes.size(), 12u + 4u * 50u * 4u);
  EXPECT_EQ(std::string(bytes.data(), 4), "ZSLF");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 50);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 4);
}

TEST(DatasetIo, EmptyUnseenSetRoundTrips) {
  const auto dir = testutil::temp_dir("ds_no_unseen");
  Dataset d = small_dataset();
  const auto keep = d.indices_of(d.seen_classes);
  Dataset s;
  s.features.resize(static_cast<Index>(keep.size()), d.feature_dim());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    s.features.row(static_cast<Index>(i)) = d.features.row(keep[i]);
    s.labels.push_back(d.labels[keep[i]]);
  }
  s.attributes = d.attributes.topRows(3);
  s.seen_classes = d.seen_classes;
  save_dataset(s, dir);
  EXPECT_EQ(load_dataset(dir), s);
}

TEST(DatasetIo, SingleSampleRoundTrips) {
  const auto dir = testutil::temp_dir("ds_single");
  Dataset d;
  d.features = Tensor2::Constant(1, 2, 0.5);
  d.labels = {0};
  d.attributes = Tensor2::Constant(1, 3, 0.25);
  d.seen_classes = {0};
  save_dataset(d, dir);
  EXPECT_EQ(load_dataset(dir), d);
}

TEST(DatasetIo, FixedTestIndicesRoundTrip) {
  const auto dir = testutil::temp_dir("ds_test_idx");
  Dataset d = small_dataset();
  d.test_idx = {1, 5, 40};
  save_dataset(d, dir);
  EXPECT_EQ(load_dataset(dir), d);
}

TEST(DatasetIo, LabelOutOfRangeIsFormatError) {
  const auto dir = testutil::temp_dir("ds_bad_label");
  save_dataset(small_dataset(), dir);
  auto bytes = read_bytes(dir / "labels.bin");
  bytes[8] = 99;  // first label
  write_bytes(dir / "labels.bin", bytes);
  EXPECT_THROW(load_dataset(dir), FormatError);
}

TEST(DatasetIo, OverlappingSplitsIsFormatError) {
  const auto dir = testutil::temp_dir("ds_overlap");
  save_dataset(small_dataset(), dir);
  std::ofstream(dir / "splits.txt") << "seen: 0 1 2\nunseen: 2 3 4\n";
  EXPECT_THROW(load_dataset(dir), FormatError);
}

TEST(DatasetIo, BadMagicNamesFileAndOffset) {
  const auto dir = testutil::temp_dir("ds_magic");
  save_dataset(small_dataset(), dir);
  auto bytes = read_bytes(dir / "attributes.bin");
  bytes[0] = 'X';
  write_bytes(dir / "attributes.bin", bytes);
  try {
    load_dataset(dir);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("attributes.bin"), std::string::npos) << msg;
    EXPECT_NE(msg.find("offset 0"), std::string::npos) << msg;
  }
}

TEST(DatasetIo, TruncatedFeaturesIsFormatError) {
  const auto dir = testutil::temp_dir("ds_trunc");
  save_dataset(small_dataset(), dir);
  auto bytes = read_bytes(dir / "features.bin");
  bytes.resize(bytes.size() - 3);
  write_bytes(dir / "features.bin", bytes);
  EXPECT_THROW(load_dataset(dir), FormatError);
}

TEST(DatasetIo, MissingFileIsFormatError) {
  const auto dir = testutil::temp_dir("ds_missing");
  save_dataset(small_dataset(), dir);
  fs::remove(dir / "labels.bin");
  EXPECT_THROW(load_dataset(dir), FormatError);
}

TEST(DatasetIo, SplitsAllowComments) {
  const auto dir = testutil::temp_dir("ds_comments");
  const Dataset d = small_dataset();
  save_dataset(d, dir);
  std::ofstream(dir / "splits.txt") << "# class partition\nseen: 0 1 2  # three\n\nunseen: 3 4\n";
  EXPECT_EQ(load_dataset(dir), d);
}

TEST(Split, TenSamplesGiveEightTwo) {
  Dataset d;
  d.features = Tensor2::Zero(10, 1);
  d.labels.assign(10, 0);
  d.attributes = Tensor2::Ones(1, 1);
  d.seen_classes = {0};
  const GzslSplit s = split_gzsl(d, 0.8, 3);
  EXPECT_EQ(s.train_seen_idx.size(), 8u);
  EXPECT_EQ(s.test_seen_idx.size(), 2u);
}

TEST(Split, RatioMustBeInsideOpenInterval) {
  const Dataset d = small_dataset();
  EXPECT_THROW(split_gzsl(d, 1.0, 0), ParameterError);
  EXPECT_THROW(split_gzsl(d, 0.0, 0), ParameterError);
}

TEST(Split, SameSeedSameLists) { EXPECT_EQ(split_gzsl(small_dataset(), 0.8, 5), split_gzsl(small_dataset(), 0.8, 5)); }

TEST(Split, TinyClassIsDataError) {
  Dataset d;
  d.features = Tensor2::Zero(3, 1);
  d.labels = {0, 0, 1};
  d.attributes = Tensor2::Ones(2, 1);
  d.seen_classes = {0, 1};
  EXPECT_THROW(split_gzsl(d, 0.8, 0), DataError);
}

TEST(Split, PartitionsSeenSamplesForManySeeds) {
  SynthConfig cfg;
  cfg.samples_per_class = 13;
  const Dataset d = make_synthetic(cfg);
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const GzslSplit s = split_gzsl(d, 0.8, seed);
    std::set<std::uint32_t> train(s.train_seen_idx.begin(), s.train_seen_idx.end());
    std::set<std::uint32_t> test(s.test_seen_idx.begin(), s.test_seen_idx.end());
    for (auto i : test) EXPECT_FALSE(train.count(i));
    std::set<std::uint32_t> all = train;
    all.insert(test.begin(), test.end());
    const auto seen = d.indices_of(d.seen_classes);
    EXPECT_EQ(all, std::set<std::uint32_t>(seen.begin(), seen.end()));
    for (ClassId c : d.seen_classes) {
      std::size_t n_train = 0;
      for (auto i : s.train_seen_idx) n_train += d.labels[i] == c;
      EXPECT_EQ(n_train, 10u);  // floor(0.8 * 13)
    }
    EXPECT_EQ(s.test_unseen_idx, d.indices_of(d.unseen_classes));
  }
}

TEST(Split, FixedTestIndicesAreAuthoritative) {
  Dataset d = small_dataset();
  d.test_idx = {0, 1, 45};
  const GzslSplit s = resolve_split(d, 0.8, 0);
  EXPECT_EQ(s.test_seen_idx, (std::vector<std::uint32_t>{0, 1}));
  EXPECT_EQ(s.test_unseen_idx, (std::vector<std::uint32_t>{45}));
  EXPECT_EQ(s.train_seen_idx.size(), 28u);
}
