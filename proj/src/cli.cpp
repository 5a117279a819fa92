#include "ocdcvae/cli.hpp"

#include "ocdcvae/config.hpp"
#include "ocdcvae/dataset.hpp"
#include "ocdcvae/error.hpp"
#include "ocdcvae/eval.hpp"
#include "ocdcvae/ocd.hpp"
#include "ocdcvae/train.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

namespace ocdcvae {

namespace {

namespace fs = std::filesystem;

// Carries an exit code out of a subcommand.
struct Failure {
  int code;
  std::string message;
};

[[noreturn]] void fail(int code, const std::string& msg) { throw Failure{code, msg}; }

struct Globals {
  std::optional<std::string> seed;
  std::string out = ".";
  std::optional<std::string> config;
};

// Training knobs exposed as dedicated flags; each maps onto a config key.
struct FlagKey {
  const char* flag;
  const char* key;
  const char* help;
};
constexpr FlagKey kTrainFlags[] = {
    {"--protocol", "protocol", "zsl or gzsl"},
    {"--mining", "mining", "hardest_negative or all_valid"},
    {"--epochs1", "epochs_phase1", "phase-1 (CVAE) epochs"},
    {"--epochs2", "epochs_phase2", "phase-2 (regressor) epochs"},
    {"--epochs3", "epochs_phase3", "phase-3 (joint) epochs"},
    {"--epochs-gzsl-head", "epochs_gzsl_head", "GZSL head epochs"},
    {"--batch-size", "batch_size", "minibatch size"},
    {"--latent-dim", "latent_dim", "latent dimension"},
    {"--hidden-dim", "hidden_dim", "hidden layer width"},
    {"--ocd-samples", "ocd_samples_per_class", "generated samples per class"},
    {"--sigma-hp", "sigma_hp", "sigma of the approximated distribution"},
    {"--sigma-prime", "sigma_prime_hp", "sigma of the over-complete distribution"},
    {"--alpha", "alpha", "triplet margin"},
    {"--lr", "lr", "Adam learning rate"},
    {"--split-ratio", "split_ratio", "seen train fraction for GZSL"},
};

struct TrainFlags {
  std::map<std::string, std::string> values;  // key -> raw flag text
  bool no_ocd = false;
  bool no_obtl = false;
  bool no_cl = false;
  std::vector<std::string> sets;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  for (const auto& fk : kTrainFlags) {
    app->add_option_function<std::string>(
        fk.flag, [&f, key = std::string(fk.key)](const std::string& v) { f.values[key] = v; }, fk.help);
  }
  app->add_flag("--no-ocd", f.no_ocd, "disable over-complete distribution samples");
  app->add_flag("--no-obtl", f.no_obtl, "disable the online batch triplet loss");
  app->add_flag("--no-cl", f.no_cl, "disable the center loss");
  app->add_option("--set", f.sets, "any config key as key=value (repeatable)");
}

KeyValues config_file_values(const Globals& g) {
  if (!g.config) return {};
  try {
    return read_key_values_file(*g.config);
  } catch (const IoError& e) {
    fail(kExitIo, e.what());
  } catch (const FormatError& e) {
    fail(kExitUsage, e.what());
  }
}

// Defaults, then the config file, then flags.
TrainConfig resolve_train_config(const Globals& g, const TrainFlags& f) {
  TrainConfig cfg;
  KeyValues layers = config_file_values(g);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(kExitUsage, "--set expects key=value, got '" + s + "'");
    auto kv = parse_key_values(s, "--set");
    layers.insert(layers.end(), kv.begin(), kv.end());
  }
  for (const auto& [k, v] : f.values) layers.emplace_back(k, v);
  if (f.no_ocd) layers.emplace_back("use_ocd", "false");
  if (f.no_obtl) layers.emplace_back("use_obtl", "false");
  if (f.no_cl) layers.emplace_back("use_cl", "false");
  if (g.seed) layers.emplace_back("seed", *g.seed);
  try {
    for (const auto& [k, v] : layers) {
      if (!apply_key_value(cfg, k, v)) fail(kExitUsage, "unknown config key '" + k + "'");
    }
    cfg.validate();
  } catch (const Error& e) {
    fail(kExitUsage, e.what());
  }
  return cfg;
}

void make_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(kExitIo, "cannot create output directory '" + dir.string() + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream o(path, std::ios::binary | std::ios::trunc);
  if (!o) fail(kExitIo, "cannot write '" + path.string() + "'");
  o << text;
  if (!o) fail(kExitIo, "write failed for '" + path.string() + "'");
}

void echo_config(const fs::path& dir, const std::string& command, const KeyValues& kv) {
  write_text(dir / "config.txt", "# ocdcvae " + command + "\n" + format_key_values(kv));
}

Dataset load_data(const std::string& dir) {
  try {
    return load_dataset(dir);
  } catch (const Error& e) {
    fail(kExitIo, e.what());
  }
}

TrainedModel load_model(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const Error& e) {
    fail(kExitIo, e.what());
  }
}

TrainedModel train_or_fail(const Dataset& d, const TrainConfig& cfg) {
  try {
    return run_pipeline(d, cfg);
  } catch (const ParameterError& e) {
    fail(kExitUsage, e.what());
  } catch (const Error& e) {
    fail(kExitTraining, std::string("training failed: ") + e.what());
  }
}

void require_compatible(const TrainedModel& m, const Dataset& d) {
  const auto& mc = m.models.config;
  if (mc.feature_dim != d.feature_dim() || mc.attribute_dim != d.attribute_dim() ||
      m.models.centers.values.rows() != d.num_classes()) {
    fail(kExitProtocol, "checkpoint dimensions (d_x=" + std::to_string(mc.feature_dim) +
                            ", L=" + std::to_string(mc.attribute_dim) + ", C=" +
                            std::to_string(m.models.centers.values.rows()) + ") do not match the dataset (d_x=" +
                            std::to_string(d.feature_dim()) + ", L=" + std::to_string(d.attribute_dim()) +
                            ", C=" + std::to_string(d.num_classes()) + ")");
  }
}

std::string fixed1(double v) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(1);
  o << v;
  return o.str();
}

// ---- synth ----

struct SynthFlags {
  std::map<std::string, std::string> values;
};

constexpr FlagKey kSynthFlags[] = {
    {"--seen", "num_seen", "number of seen classes"},
    {"--unseen", "num_unseen", "number of unseen classes"},
    {"--per-class", "samples_per_class", "samples per class"},
    {"--dx", "feature_dim", "feature dimension"},
    {"--attr", "attribute_dim", "attribute dimension"},
    {"--spread", "class_spread", "within-class feature std"},
    {"--separation", "class_separation", "expected attribute prototype separation"},
    {"--attr-noise", "attribute_noise", "noise on the attribute-to-feature map"},
};

KeyValues synth_key_values(const SynthConfig& c) {
  return {{"num_seen", std::to_string(c.num_seen)},
          {"num_unseen", std::to_string(c.num_unseen)},
          {"samples_per_class", std::to_string(c.samples_per_class)},
          {"feature_dim", std::to_string(c.feature_dim)},
          {"attribute_dim", std::to_string(c.attribute_dim)},
          {"class_spread", format_double(c.class_spread)},
          {"class_separation", format_double(c.class_separation)},
          {"attribute_noise", format_double(c.attribute_noise)},
          {"seed", std::to_string(c.seed)}};
}

void apply_synth_key(SynthConfig& c, const std::string& k, const std::string& v) {
  const auto u32 = [&] {
    const auto x = parse_u64(k, v);
    if (x > 0xFFFFFFFFull) throw ParameterError("'" + k + "' is too large");
    return static_cast<std::uint32_t>(x);
  };
  if (k == "num_seen") c.num_seen = u32();
  else if (k == "num_unseen") c.num_unseen = u32();
  else if (k == "samples_per_class") c.samples_per_class = u32();
  else if (k == "feature_dim") c.feature_dim = u32();
  else if (k == "attribute_dim") c.attribute_dim = u32();
  else if (k == "class_spread") c.class_spread = parse_double(k, v);
  else if (k == "class_separation") c.class_separation = parse_double(k, v);
  else if (k == "attribute_noise") c.attribute_noise = parse_double(k, v);
  else if (k == "seed") c.seed = parse_u64(k, v);
  else throw ParameterError("unknown config key '" + k + "'");
}

void cmd_synth(const Globals& g, const SynthFlags& f, std::ostream& out) {
  SynthConfig cfg;
  KeyValues layers = config_file_values(g);
  for (const auto& [k, v] : f.values) layers.emplace_back(k, v);
  if (g.seed) layers.emplace_back("seed", *g.seed);
  try {
    for (const auto& [k, v] : layers) apply_synth_key(cfg, k, v);
    cfg.validate();
  } catch (const Error& e) {
    fail(kExitUsage, e.what());
  }
  const Dataset d = make_synthetic(cfg);
  make_out_dir(g.out);
  try {
    save_dataset(d, g.out);
  } catch (const Error& e) {
    fail(kExitIo, e.what());
  }
  echo_config(g.out, "synth", synth_key_values(cfg));
  out << "N=" << d.num_samples() << " C=" << d.num_classes() << " S=" << d.seen_classes.size()
      << " U=" << d.unseen_classes.size() << " L=" << d.attribute_dim() << " d_x=" << d.feature_dim() << "\n";
}

// ---- train ----

void cmd_train(const Globals& g, const TrainFlags& f, const std::string& data, std::ostream& out) {
  const TrainConfig cfg = resolve_train_config(g, f);
  const Dataset d = load_data(data);
  make_out_dir(g.out);
  echo_config(g.out, "train", to_key_values(cfg));
  const TrainedModel model = train_or_fail(d, cfg);
  try {
    save_checkpoint(model, fs::path(g.out) / "checkpoint.ocdm");
  } catch (const Error& e) {
    fail(kExitIo, e.what());
  }
  write_text(fs::path(g.out) / "history.csv", history_csv(model.history));
  out << "trained " << model.history.size() << " epochs; checkpoint written to "
      << (fs::path(g.out) / "checkpoint.ocdm").string() << "\n";
}

// ---- generate-ocd ----

void cmd_generate_ocd(const Globals& g, const std::string& checkpoint, const std::string& data,
                      const std::vector<ClassId>& classes_flag, std::optional<std::uint32_t> per_class,
                      std::ostream& out) {
  const TrainedModel model = load_model(checkpoint);
  const Dataset d = load_data(data);
  require_compatible(model, d);
  if (!model.models.phase1_complete) fail(kExitTraining, "checkpoint has no trained CVAE (phase 1 not run)");
  std::vector<ClassId> classes = classes_flag;
  if (classes.empty()) classes = training_sets(d, model.config).generated_classes;
  if (classes.empty()) fail(kExitProtocol, "no classes to generate for");
  for (ClassId c : classes) {
    if (c >= d.num_classes()) fail(kExitProtocol, "class " + std::to_string(c) + " is not in the dataset");
  }
  OCDParams params = model.config.ocd_params();
  if (per_class) params.samples_per_class = *per_class;
  const std::uint64_t seed = g.seed ? parse_u64("seed", *g.seed) : model.config.seed;

  Tensor2 class_attrs(static_cast<Index>(classes.size()), d.attribute_dim());
  for (std::size_t i = 0; i < classes.size(); ++i) class_attrs.row(static_cast<Index>(i)) = d.attributes.row(classes[i]);
  Rng rng(seed);
  OCDBatch batch;
  try {
    batch = generate_ocd(model.models.encoder, model.models.decoder, class_attrs, classes, params, rng);
  } catch (const ParameterError& e) {
    fail(kExitUsage, e.what());
  } catch (const Error& e) {
    fail(kExitTraining, e.what());
  }

  Dataset ocd;
  ocd.features = std::move(batch.x_oc);
  ocd.labels = std::move(batch.labels);
  ocd.attributes = d.attributes;
  ocd.seen_classes = d.seen_classes;
  ocd.unseen_classes = d.unseen_classes;
  make_out_dir(g.out);
  try {
    save_dataset(ocd, g.out);
  } catch (const Error& e) {
    fail(kExitIo, e.what());
  }
  KeyValues echo = {{"checkpoint", checkpoint}, {"data", data}, {"seed", std::to_string(seed)},
                    {"samples_per_class", std::to_string(params.samples_per_class)}};
  std::string ids;
  for (ClassId c : classes) ids += (ids.empty() ? "" : " ") + std::to_string(c);
  echo.emplace_back("classes", ids);
  echo_config(g.out, "generate-ocd", echo);
  out << "generated " << ocd.num_samples() << " over-complete samples for " << classes.size() << " classes\n";
}

// ---- eval ----

void cmd_eval(const Globals& g, const std::string& checkpoint, const std::string& data,
              const std::optional<std::string>& protocol_flag, std::ostream& out) {
  const TrainedModel model = load_model(checkpoint);
  const Dataset d = load_data(data);
  require_compatible(model, d);
  Protocol protocol = model.config.protocol;
  if (protocol_flag) {
    try {
      protocol = parse_protocol(*protocol_flag);
    } catch (const Error& e) {
      fail(kExitUsage, e.what());
    }
  }
  if (protocol == Protocol::gzsl && model.config.protocol != Protocol::gzsl) {
    fail(kExitProtocol, "GZSL evaluation needs a model trained with --protocol gzsl");
  }
  EvalResult r;
  r.protocol = protocol;
  try {
    if (protocol == Protocol::zsl) {
      r.zsl = eval_zsl(model.models, d);
    } else {
      r.gzsl = eval_gzsl(model.models, d, resolve_split(d, model.config.split_ratio, model.config.seed));
      if (r.gzsl->H != harmonic_mean(r.gzsl->A, r.gzsl->B)) fail(kExitProtocol, "inconsistent H");
    }
  } catch (const Error& e) {
    fail(kExitProtocol, e.what());
  }
  make_out_dir(g.out);
  echo_config(g.out, "eval", {{"checkpoint", checkpoint}, {"data", data}, {"protocol", to_string(protocol)}});
  write_text(fs::path(g.out) / "metrics.jsonl", metrics_json(r, model.config.seed));
  write_text(fs::path(g.out) / "metrics.csv", metrics_csv(r));
  if (r.zsl) {
    out << "zsl mean per-class accuracy " << fixed1(r.zsl->mean_per_class_acc) << "\n";
  } else {
    out << "gzsl A " << fixed1(r.gzsl->A) << " B " << fixed1(r.gzsl->B) << " H " << fixed1(r.gzsl->H) << "\n";
  }
}

// ---- ablate / sweep ----

void cmd_ablate(const Globals& g, const TrainFlags& f, const std::string& data, std::ostream& out) {
  const TrainConfig cfg = resolve_train_config(g, f);
  const Dataset d = load_data(data);
  make_out_dir(g.out);
  echo_config(g.out, "ablate", to_key_values(cfg));
  std::vector<AblationRow> rows;
  try {
    rows = run_ablation(d, cfg);
  } catch (const ParameterError& e) {
    fail(kExitUsage, e.what());
  } catch (const DataError& e) {
    fail(kExitProtocol, e.what());
  } catch (const Error& e) {
    fail(kExitTraining, e.what());
  }
  write_text(fs::path(g.out) / "ablation.csv", ablation_csv(rows));
  for (const auto& r : rows) out << r.setting.name << " " << fixed1(r.score) << "\n";
}

std::vector<double> default_grid(SweepParam p) {
  if (p == SweepParam::sigma_prime_hp) return {0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95};
  return {100, 200, 300, 400, 500, 600, 700, 800};
}

void cmd_sweep(const Globals& g, const TrainFlags& f, const std::string& data, const std::string& param,
               const std::vector<double>& values_flag, std::ostream& out) {
  const TrainConfig cfg = resolve_train_config(g, f);
  SweepParam p{};
  try {
    p = parse_sweep_param(param);
  } catch (const Error& e) {
    fail(kExitUsage, e.what());
  }
  const std::vector<double> values = values_flag.empty() ? default_grid(p) : values_flag;
  try {
    for (double v : values) sweep_config(cfg, p, v);
  } catch (const Error& e) {
    fail(kExitUsage, e.what());
  }
  const Dataset d = load_data(data);
  make_out_dir(g.out);
  KeyValues echo = to_key_values(cfg);
  echo.emplace_back("sweep_param", to_string(p));
  std::string vs;
  for (double v : values) vs += (vs.empty() ? "" : ",") + format_double(v);
  echo.emplace_back("sweep_values", vs);
  echo_config(g.out, "sweep", echo);
  std::vector<SweepPoint> points;
  try {
    points = run_sweep(d, cfg, p, values);
  } catch (const DataError& e) {
    fail(kExitProtocol, e.what());
  } catch (const Error& e) {
    fail(kExitTraining, e.what());
  }
  write_text(fs::path(g.out) / "sweep.csv", sweep_csv(p, points));
  write_text(fs::path(g.out) / "sweep.svg", sweep_svg(p, points));
  for (const auto& pt : points) out << to_string(p) << "=" << format_double(pt.value) << " " << fixed1(pt.score) << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"OCD-CVAE zero-shot learning toolkit", "ocdcvae"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "random seed")->type_name("UINT");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--config", g.config, "key = value config file (flags override it)");

  SynthFlags synth_flags;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  for (const auto& fk : kSynthFlags) {
    synth->add_option_function<std::string>(
        fk.flag, [&synth_flags, key = std::string(fk.key)](const std::string& v) { synth_flags.values[key] = v; },
        fk.help);
  }

  TrainFlags train_flags;
  std::string data;
  auto* train = app.add_subcommand("train", "run the three training phases");
  train->add_option("--data", data, "dataset directory")->required();
  add_train_flags(train, train_flags);

  std::string checkpoint;
  std::vector<ClassId> ocd_classes;
  std::optional<std::uint32_t> ocd_per_class;
  auto* gen = app.add_subcommand("generate-ocd", "dump over-complete samples as a dataset");
  gen->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  gen->add_option("--data", data, "dataset directory (attributes and class split)")->required();
  gen->add_option("--classes", ocd_classes, "class ids to generate for (default: the training protocol's set)");
  gen->add_option("--per-class", ocd_per_class, "samples per class");

  std::optional<std::string> eval_protocol;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  ev->add_option("--data", data, "dataset directory")->required();
  ev->add_option("--protocol", eval_protocol, "zsl or gzsl (default: the training protocol)");

  TrainFlags ablate_flags;
  auto* ablate = app.add_subcommand("ablate", "train and evaluate the five loss settings");
  ablate->add_option("--data", data, "dataset directory")->required();
  add_train_flags(ablate, ablate_flags);

  TrainFlags sweep_flags;
  std::string sweep_param = "sigma_prime_hp";
  std::vector<double> sweep_values;
  auto* sweep = app.add_subcommand("sweep", "accuracy against one hyper-parameter");
  sweep->add_option("--data", data, "dataset directory")->required();
  sweep->add_option("--param", sweep_param, "sigma_prime_hp or ocd_samples_per_class")->capture_default_str();
  sweep->add_option("--values", sweep_values, "values to try (comma separated)")->delimiter(',');
  add_train_flags(sweep, sweep_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      if (!app.get_subcommands().empty()) out << app.get_subcommands().front()->help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*synth) cmd_synth(g, synth_flags, out);
    else if (*train) cmd_train(g, train_flags, data, out);
    else if (*gen) cmd_generate_ocd(g, checkpoint, data, ocd_classes, ocd_per_class, out);
    else if (*ev) cmd_eval(g, checkpoint, data, eval_protocol, out);
    else if (*ablate) cmd_ablate(g, ablate_flags, data, out);
    else if (*sweep) cmd_sweep(g, sweep_flags, data, sweep_param, sweep_values, out);
  } catch (const Failure& f) {
    err << "error: " << f.message << "\n";
    return f.code;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitTraining;
  }
  return kExitOk;
}

}  // namespace ocdcvae
