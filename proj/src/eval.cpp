#include "ocdcvae/eval.hpp"

#include "ocdcvae/config.hpp"
#include "ocdcvae/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace ocdcvae {

Metrics per_class_accuracy(std::span<const ClassId> predictions, std::span<const ClassId> labels,
                           std::span<const ClassId> class_set) {
  if (predictions.size() != labels.size()) {
    throw ParameterError("per_class_accuracy: " + std::to_string(predictions.size()) +
                         " predictions for " + std::to_string(labels.size()) + " labels");
  }
  if (class_set.empty()) throw ParameterError("per_class_accuracy: empty class set");
  std::map<ClassId, std::pair<std::size_t, std::size_t>> tally;  // correct, total
  for (ClassId c : class_set) tally[c] = {0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = tally.find(labels[i]);
    if (it == tally.end()) continue;
    ++it->second.second;
    if (predictions[i] == labels[i]) ++it->second.first;
  }
  Metrics m;
  double sum = 0.0;
  for (const auto& [c, counts] : tally) {
    if (counts.second == 0) {
      m.excluded.push_back(c);
      continue;
    }
    const double acc = 100.0 * static_cast<double>(counts.first) / static_cast<double>(counts.second);
    m.per_class_acc[c] = acc;
    sum += acc;
  }
  if (m.per_class_acc.empty()) throw DataError("per_class_accuracy: no class has a sample");
  m.mean_per_class_acc = sum / static_cast<double>(m.per_class_acc.size());
  return m;
}

double harmonic_mean(double a, double b) {
  if (!(a >= 0.0) || !(b >= 0.0)) throw ParameterError("harmonic_mean: inputs must be >= 0");
  if (a + b == 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

std::vector<ClassId> predict(const Models& m, const Dataset& d, std::span<const std::uint32_t> rows,
                             std::span<const ClassId> candidates) {
  const Tensor2 a_hat = regress(m.regressor, gather_rows(d.features, rows));
  std::vector<ClassId> out(rows.size());
  for (Index i = 0; i < a_hat.rows(); ++i) {
    out[static_cast<std::size_t>(i)] =
        classify(std::span<const double>(a_hat.row(i).data(), static_cast<std::size_t>(a_hat.cols())),
                 d.attributes, candidates);
  }
  return out;
}

namespace {

Metrics score_rows(const Models& m, const Dataset& d, std::span<const std::uint32_t> rows,
                   std::span<const ClassId> candidates, std::span<const ClassId> class_set) {
  const auto preds = predict(m, d, rows, candidates);
  std::vector<ClassId> labels;
  labels.reserve(rows.size());
  for (auto r : rows) labels.push_back(d.labels[r]);
  return per_class_accuracy(preds, labels, class_set);
}

}  // namespace

Metrics eval_zsl(const Models& m, const Dataset& d) {
  std::vector<std::uint32_t> rows = d.indices_of(d.unseen_classes);
  if (!d.test_idx.empty()) {
    const std::set<std::uint32_t> fixed(d.test_idx.begin(), d.test_idx.end());
    std::erase_if(rows, [&](std::uint32_t i) { return fixed.count(i) == 0; });
  }
  if (rows.empty()) throw DataError("eval_zsl: no unseen test samples");
  return score_rows(m, d, rows, d.unseen_classes, d.unseen_classes);
}

GzslMetrics eval_gzsl(const Models& m, const Dataset& d, const GzslSplit& split) {
  if (split.test_unseen_idx.empty()) throw DataError("eval_gzsl: no unseen test samples");
  if (split.test_seen_idx.empty()) throw DataError("eval_gzsl: no seen test samples");
  std::vector<ClassId> all(d.seen_classes);
  all.insert(all.end(), d.unseen_classes.begin(), d.unseen_classes.end());
  std::sort(all.begin(), all.end());
  GzslMetrics g;
  g.unseen = score_rows(m, d, split.test_unseen_idx, all, d.unseen_classes);
  g.seen = score_rows(m, d, split.test_seen_idx, all, d.seen_classes);
  g.A = g.unseen.mean_per_class_acc;
  g.B = g.seen.mean_per_class_acc;
  g.H = harmonic_mean(g.A, g.B);
  return g;
}

double EvalResult::score() const {
  if (protocol == Protocol::zsl) return zsl.value().mean_per_class_acc;
  return gzsl.value().H;
}

EvalResult evaluate(const TrainedModel& model, const Dataset& d) {
  EvalResult r;
  r.protocol = model.config.protocol;
  if (r.protocol == Protocol::zsl) {
    r.zsl = eval_zsl(model.models, d);
  } else {
    r.gzsl = eval_gzsl(model.models, d, resolve_split(d, model.config.split_ratio, model.config.seed));
  }
  return r;
}

namespace {

nlohmann::ordered_json per_class_json(const Metrics& m) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [c, acc] : m.per_class_acc) j[std::to_string(c)] = acc;
  return j;
}

}  // namespace

std::string metrics_json(const EvalResult& r, std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["protocol"] = to_string(r.protocol);
  j["seed"] = seed;
  if (r.zsl) {
    j["mean_per_class_acc"] = r.zsl->mean_per_class_acc;
    j["per_class"] = per_class_json(*r.zsl);
    j["excluded"] = r.zsl->excluded;
  }
  if (r.gzsl) {
    j["A"] = r.gzsl->A;
    j["B"] = r.gzsl->B;
    j["H"] = r.gzsl->H;
    j["per_class"] = {{"unseen", per_class_json(r.gzsl->unseen)}, {"seen", per_class_json(r.gzsl->seen)}};
  }
  return j.dump() + "\n";
}

std::string metrics_csv(const EvalResult& r) {
  std::string out = "metric,value\n";
  const auto row = [&](const std::string& k, double v) { out += k + "," + format_double(v) + "\n"; };
  if (r.zsl) {
    row("mean_per_class_acc", r.zsl->mean_per_class_acc);
    for (const auto& [c, acc] : r.zsl->per_class_acc) row("class_" + std::to_string(c), acc);
  }
  if (r.gzsl) {
    row("A", r.gzsl->A);
    row("B", r.gzsl->B);
    row("H", r.gzsl->H);
    for (const auto& [c, acc] : r.gzsl->unseen.per_class_acc) row("unseen_class_" + std::to_string(c), acc);
    for (const auto& [c, acc] : r.gzsl->seen.per_class_acc) row("seen_class_" + std::to_string(c), acc);
  }
  return out;
}

const std::vector<AblationSetting>& ablation_settings() {
  static const std::vector<AblationSetting> settings = {
      {"OBTL", false, true, false},
      {"CL", false, false, true},
      {"OCD+OBTL", true, true, false},
      {"OCD+CL", true, false, true},
      {"OCD+OBTL+CL", true, true, true},
  };
  return settings;
}

std::vector<AblationRow> run_ablation(const Dataset& d, const TrainConfig& base) {
  base.validate();
  std::vector<AblationRow> rows;
  for (const auto& s : ablation_settings()) {
    TrainConfig cfg = base;
    cfg.use_ocd = s.use_ocd;
    cfg.use_obtl = s.use_obtl;
    cfg.use_cl = s.use_cl;
    rows.push_back({s, evaluate(run_pipeline(d, cfg), d).score()});
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "setting,use_ocd,use_obtl,use_cl,accuracy\n";
  for (const auto& r : rows) {
    out += r.setting.name + "," + (r.setting.use_ocd ? "1" : "0") + "," + (r.setting.use_obtl ? "1" : "0") +
           "," + (r.setting.use_cl ? "1" : "0") + "," + format_double(r.score) + "\n";
  }
  return out;
}

std::string to_string(SweepParam p) {
  return p == SweepParam::ocd_samples_per_class ? "ocd_samples_per_class" : "sigma_prime_hp";
}

SweepParam parse_sweep_param(const std::string& s) {
  if (s == "ocd_samples_per_class") return SweepParam::ocd_samples_per_class;
  if (s == "sigma_prime_hp") return SweepParam::sigma_prime_hp;
  throw ParameterError("unknown sweep parameter '" + s + "'");
}

TrainConfig sweep_config(const TrainConfig& base, SweepParam p, double value) {
  TrainConfig cfg = base;
  if (p == SweepParam::ocd_samples_per_class) {
    if (!(value >= 1.0) || value != std::floor(value) || value > 1e7) {
      throw ParameterError("ocd_samples_per_class sweep values must be positive integers");
    }
    cfg.hp.ocd_samples_per_class = static_cast<std::uint32_t>(value);
  } else {
    if (!(value > 0.0) || !std::isfinite(value)) {
      throw ParameterError("sigma_prime_hp sweep values must be > 0");
    }
    cfg.hp.sigma_prime_hp = value;
    if (value <= cfg.hp.sigma_hp) cfg.hp.sigma_hp = std::min(cfg.hp.sigma_hp, value / 2.0);
  }
  cfg.validate();
  return cfg;
}

std::vector<SweepPoint> run_sweep(const Dataset& d, const TrainConfig& base, SweepParam p,
                                  std::span<const double> values) {
  if (values.empty()) throw ParameterError("sweep needs at least one value");
  std::vector<TrainConfig> configs;
  for (double v : values) configs.push_back(sweep_config(base, p, v));
  std::vector<SweepPoint> points;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    points.push_back({values[i], configs[i].hp.sigma_hp, evaluate(run_pipeline(d, configs[i]), d).score()});
  }
  return points;
}

std::string sweep_csv(SweepParam p, const std::vector<SweepPoint>& points) {
  std::string out = to_string(p) + ",sigma_hp,accuracy\n";
  for (const auto& pt : points) {
    out += format_double(pt.value) + "," + format_double(pt.sigma_hp) + "," + format_double(pt.score) + "\n";
  }
  return out;
}

std::string sweep_svg(SweepParam p, const std::vector<SweepPoint>& points) {
  constexpr double W = 480, H = 320, L = 60, R = 20, T = 20, B = 50;
  double xmin = 0, xmax = 1;
  if (!points.empty()) {
    xmin = xmax = points.front().value;
    for (const auto& pt : points) {
      xmin = std::min(xmin, pt.value);
      xmax = std::max(xmax, pt.value);
    }
  }
  if (xmax == xmin) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  const auto sx = [&](double v) { return L + (v - xmin) / (xmax - xmin) * (W - L - R); };
  const auto sy = [&](double acc) { return T + (100.0 - std::clamp(acc, 0.0, 100.0)) / 100.0 * (H - T - B); };

  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(2);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 100; tick += 25) {
    o << "<text x=\"" << L - 8 << "\" y=\"" << sy(tick) + 4 << "\" font-size=\"10\" text-anchor=\"end\">" << tick
      << "</text>\n";
  }
  if (!points.empty()) {
    o << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < points.size(); ++i) {
      o << (i ? " " : "") << sx(points[i].value) << ',' << sy(points[i].score);
    }
    o << "\"/>\n";
    for (const auto& pt : points) {
      o << "<circle cx=\"" << sx(pt.value) << "\" cy=\"" << sy(pt.score) << "\" r=\"3\" fill=\"steelblue\"/>\n";
      o << "<text x=\"" << sx(pt.value) << "\" y=\"" << H - B + 15 << "\" font-size=\"10\" text-anchor=\"middle\">"
        << format_double(pt.value) << "</text>\n";
    }
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" font-size=\"12\" text-anchor=\"middle\">"
    << to_string(p) << "</text>\n";
  o << "<text x=\"15\" y=\"" << (T + H - B) / 2 << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
    << (T + H - B) / 2 << ")\">accuracy (%)</text>\n";
  o << "</svg>\n";
  return o.str();
}

}  // namespace ocdcvae
