#pragma once

#include "ocdcvae/config.hpp"
#include "ocdcvae/dataset.hpp"
#include "ocdcvae/losses.hpp"
#include "ocdcvae/models.hpp"
#include "ocdcvae/ocd.hpp"
#include "ocdcvae/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ocdcvae {

enum class Protocol { zsl, gzsl };

std::string to_string(Protocol p);
Protocol parse_protocol(const std::string& s);
std::string to_string(MiningMode m);
MiningMode parse_mining_mode(const std::string& s);

struct TrainConfig {
  Hyperparams hp;
  std::uint32_t epochs_phase1 = 50;
  std::uint32_t epochs_phase2 = 50;
  std::uint32_t epochs_phase3 = 50;
  // GZSL only: regressor fine-tuning on seen training data plus decoder
  // samples of the unseen classes, run after phase 3.
  std::uint32_t epochs_gzsl_head = 20;
  bool use_ocd = true;
  bool use_obtl = true;
  bool use_cl = true;
  MiningMode mining = MiningMode::hardest_negative;
  Protocol protocol = Protocol::zsl;
  double split_ratio = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
  OCDParams ocd_params() const;
};

// Every TrainConfig field as `key = value`, in a fixed order.
KeyValues to_key_values(const TrainConfig& cfg);
// Returns false when `key` is not a TrainConfig key; throws ParameterError
// when the value does not parse.
bool apply_key_value(TrainConfig& cfg, const std::string& key, const std::string& value);

struct EpochRecord {
  int phase = 0;
  std::uint32_t epoch = 0;
  double total = 0.0;
  // Epoch means of the individual terms, keyed by loss_part_names().
  std::vector<std::optional<double>> parts;
};

// recon, kl, obtl, cl, attr, lc, lreg
const std::vector<std::string>& loss_part_names();

struct TrainedModel {
  Models models;
  TrainConfig config;
  std::vector<EpochRecord> history;
};

// Which samples train the networks and which classes the generator covers
// under the configured protocol.
struct TrainingSets {
  std::vector<std::uint32_t> train_idx;
  std::vector<ClassId> generated_classes;
  std::vector<ClassId> gzsl_unseen_classes;
};
TrainingSets training_sets(const Dataset& d, const TrainConfig& cfg);

// CVAE on (x, a_label) minibatches. Only the encoder and decoder change.
void train_phase1(const Dataset& d, std::span<const std::uint32_t> train_idx, Models& m,
                  const TrainConfig& cfg, Rng& rng, std::vector<EpochRecord>* history = nullptr);

// Regressor with obtl + cl + lambda_R * attr_regression; centers follow
// update_centers after every step. Encoder and decoder are untouched.
void train_phase2(const Dataset& d, std::span<const std::uint32_t> train_idx, Models& m,
                  const TrainConfig& cfg, Rng& rng, std::vector<EpochRecord>* history = nullptr);

// Decoder and regressor on the combined objective. Every epoch draws a fresh
// generated pool over `generated_classes` (OCD when use_ocd, plain draws
// otherwise); each step mixes half real rows and half generated rows.
// The encoder stays frozen. use_ocd before phase 1 raises StateError.
void train_phase3(const Dataset& d, std::span<const std::uint32_t> train_idx,
                  std::span<const ClassId> generated_classes, Models& m, const TrainConfig& cfg,
                  Rng& rng, std::vector<EpochRecord>* history = nullptr);

// GZSL head: regressor trained on real seen rows plus decoder samples
// (z ~ N(0, I)) of the unseen classes, with the phase-2 objective.
void train_gzsl_head(const Dataset& d, std::span<const std::uint32_t> train_idx,
                     std::span<const ClassId> unseen_classes, Models& m, const TrainConfig& cfg,
                     Rng& rng, std::vector<EpochRecord>* history = nullptr);

// Phases 1 -> 2 -> 3 (-> GZSL head) on split RNG streams. Parameters are
// rounded to float32 at the end so the in-memory model equals its checkpoint.
TrainedModel run_pipeline(const Dataset& d, const TrainConfig& cfg);

// "phase,epoch,loss_total,recon,kl,..." with empty cells for unused parts.
std::string history_csv(const std::vector<EpochRecord>& history);

// Binary checkpoint: "OCDM", u32 version, u32 block count, named float32
// parameter blocks (u16 name length, name, u32 rows, u32 cols, data), then
// a u32-length-prefixed `key = value` echo of the configuration.
std::vector<char> checkpoint_bytes(const TrainedModel& model);
void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);
TrainedModel parse_checkpoint(std::vector<char> bytes, const std::string& name);

}  // namespace ocdcvae
