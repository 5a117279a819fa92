#pragma once

#include "ocdcvae/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ocdcvae {

using ClassId = std::uint32_t;

// Feature-based zero-shot dataset. Class ids index rows of `attributes`.
struct Dataset {
  Tensor2 features;             // N x d_x
  std::vector<ClassId> labels;  // N
  Tensor2 attributes;           // C x L, row c is the attribute vector of class c
  std::vector<ClassId> seen_classes;
  std::vector<ClassId> unseen_classes;
  // Optional externally fixed test indices (sample rows). Empty when absent.
  std::vector<std::uint32_t> test_idx;

  Index num_samples() const { return features.rows(); }
  Index feature_dim() const { return features.cols(); }
  Index num_classes() const { return attributes.rows(); }
  Index attribute_dim() const { return attributes.cols(); }

  // Sample indices whose label is in `classes`, ascending.
  std::vector<std::uint32_t> indices_of(const std::vector<ClassId>& classes) const;

  bool operator==(const Dataset&) const = default;
};

// Throws DataError when an invariant is violated: seen/unseen overlap, a label
// outside seen U unseen or >= C, non-finite attributes, N = 0 or L = 0.
void validate(const Dataset& d);

// Reads features.bin, labels.bin, attributes.bin and splits.txt from `dir`.
// Format problems raise FormatError naming the file and byte offset (or line).
Dataset load_dataset(const std::filesystem::path& dir);
// Features and attributes are written as float32; values that are not
// float32-representable are rounded.
void save_dataset(const Dataset& d, const std::filesystem::path& dir);

struct SynthConfig {
  std::uint32_t num_seen = 8;
  std::uint32_t num_unseen = 4;
  std::uint32_t samples_per_class = 100;
  std::uint32_t feature_dim = 16;
  std::uint32_t attribute_dim = 8;
  double class_spread = 0.25;
  double class_separation = 2.0;
  double attribute_noise = 0.1;
  std::uint64_t seed = 7;

  void validate() const;
};

// Seen classes get ids [0, S), unseen [S, S+U). Attribute prototypes are
// N(0, sep^2 / L) per entry; class feature centers are M a_c + noise with a
// fixed random projection M; samples are centers + N(0, spread^2).
// All values are float32-representable so save/load round-trips exactly.
Dataset make_synthetic(const SynthConfig& cfg);
// The per-class feature centers (C x d_x) used by make_synthetic.
Tensor2 synthetic_feature_centers(const SynthConfig& cfg);

struct GzslSplit {
  std::vector<std::uint32_t> train_seen_idx;
  std::vector<std::uint32_t> test_seen_idx;
  std::vector<std::uint32_t> test_unseen_idx;

  bool operator==(const GzslSplit&) const = default;
};

// Per seen class: seeded shuffle, first floor(ratio * n_c) rows to train, the
// rest to test. All unseen samples go to test_unseen. ratio must lie in (0, 1).
GzslSplit split_gzsl(const Dataset& d, double ratio, std::uint64_t seed);

// With a fixed test_idx the test sides hold exactly the listed rows and every
// other seen row trains; otherwise split_gzsl.
GzslSplit resolve_split(const Dataset& d, double ratio, std::uint64_t seed);

}  // namespace ocdcvae
