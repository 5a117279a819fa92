#pragma once

#include "ocdcvae/dataset.hpp"
#include "ocdcvae/models.hpp"
#include "ocdcvae/train.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ocdcvae {

// Accuracies are percentages in [0, 100].
struct Metrics {
  std::map<ClassId, double> per_class_acc;
  double mean_per_class_acc = 0.0;
  // Classes of the requested set that had no samples (left out of the mean).
  std::vector<ClassId> excluded;
};

struct GzslMetrics {
  double A = 0.0;  // unseen test samples, candidates S + U
  double B = 0.0;  // seen test samples, candidates S + U
  double H = 0.0;
  Metrics unseen;
  Metrics seen;
};

// Unweighted mean over classes of the fraction of correct predictions.
// Samples whose label is outside `class_set` are ignored. Throws DataError
// when no class of the set has a sample and ParameterError when the set is
// empty or the spans differ in length.
Metrics per_class_accuracy(std::span<const ClassId> predictions, std::span<const ClassId> labels,
                           std::span<const ClassId> class_set);

// 2AB / (A + B), 0 when both are 0. Negative inputs raise ParameterError.
double harmonic_mean(double a, double b);

// Nearest-attribute predictions for the given rows.
std::vector<ClassId> predict(const Models& m, const Dataset& d, std::span<const std::uint32_t> rows,
                             std::span<const ClassId> candidates);

// Conventional ZSL: unseen samples (restricted to the fixed test indices when
// the dataset carries them) against unseen candidates only.
Metrics eval_zsl(const Models& m, const Dataset& d);
GzslMetrics eval_gzsl(const Models& m, const Dataset& d, const GzslSplit& split);

struct EvalResult {
  Protocol protocol = Protocol::zsl;
  std::optional<Metrics> zsl;
  std::optional<GzslMetrics> gzsl;

  // ZSL mean per-class accuracy or GZSL H.
  double score() const;
};

// Evaluates under the model's configured protocol; GZSL reuses the split the
// model was trained with.
EvalResult evaluate(const TrainedModel& model, const Dataset& d);

// One JSON object (single line) with protocol, seed, the headline numbers and
// the per-class breakdown.
std::string metrics_json(const EvalResult& r, std::uint64_t seed);
std::string metrics_csv(const EvalResult& r);

struct AblationSetting {
  std::string name;
  bool use_ocd;
  bool use_obtl;
  bool use_cl;
};
// OBTL, CL, OCD+OBTL, OCD+CL, OCD+OBTL+CL.
const std::vector<AblationSetting>& ablation_settings();

struct AblationRow {
  AblationSetting setting;
  double score = 0.0;
};
// Every setting trained from the same config and seed; only the flags differ.
std::vector<AblationRow> run_ablation(const Dataset& d, const TrainConfig& base);
std::string ablation_csv(const std::vector<AblationRow>& rows);

enum class SweepParam { ocd_samples_per_class, sigma_prime_hp };
std::string to_string(SweepParam p);
SweepParam parse_sweep_param(const std::string& s);

struct SweepPoint {
  double value = 0.0;
  double sigma_hp = 0.0;  // sigma_hp actually used for this point
  double score = 0.0;
};
// Config for one sweep point. A sigma_prime_hp at or below sigma_hp lowers
// sigma_hp to min(base sigma_hp, value / 2) so the ordering still holds.
TrainConfig sweep_config(const TrainConfig& base, SweepParam p, double value);
// All values are validated before any training starts.
std::vector<SweepPoint> run_sweep(const Dataset& d, const TrainConfig& base, SweepParam p,
                                  std::span<const double> values);
std::string sweep_csv(SweepParam p, const std::vector<SweepPoint>& points);
// Minimal SVG line chart of score against the swept value.
std::string sweep_svg(SweepParam p, const std::vector<SweepPoint>& points);

}  // namespace ocdcvae
