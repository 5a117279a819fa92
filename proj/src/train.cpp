#include "ocdcvae/train.hpp"

#include "binary_io.hpp"
#include "ocdcvae/error.hpp"
#include "ocdcvae/numgrad.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

namespace ocdcvae {

std::string to_string(Protocol p) { return p == Protocol::zsl ? "zsl" : "gzsl"; }

Protocol parse_protocol(const std::string& s) {
  if (s == "zsl") return Protocol::zsl;
  if (s == "gzsl") return Protocol::gzsl;
  throw ParameterError("unknown protocol '" + s + "' (expected zsl or gzsl)");
}

std::string to_string(MiningMode m) {
  return m == MiningMode::all_valid ? "all_valid" : "hardest_negative";
}

MiningMode parse_mining_mode(const std::string& s) {
  if (s == "all_valid") return MiningMode::all_valid;
  if (s == "hardest_negative") return MiningMode::hardest_negative;
  throw ParameterError("unknown mining mode '" + s + "'");
}

void TrainConfig::validate() const {
  hp.validate();
  ocd_params().validate();
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ParameterError("split_ratio must lie in (0, 1)");
}

OCDParams TrainConfig::ocd_params() const {
  OCDParams p;
  p.mu_hp = hp.mu_hp;
  p.sigma_hp = hp.sigma_hp;
  p.sigma_prime_hp = hp.sigma_prime_hp;
  p.samples_per_class = hp.ocd_samples_per_class;
  p.shuffle_block = hp.batch_size;
  return p;
}

KeyValues to_key_values(const TrainConfig& c) {
  const auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  const auto d = format_double;
  const auto u = [](std::uint64_t v) { return std::to_string(v); };
  return {
      {"lambda_c", d(c.hp.lambda_c)},
      {"lambda_R", d(c.hp.lambda_R)},
      {"lambda_reg", d(c.hp.lambda_reg)},
      {"batch_size", u(c.hp.batch_size)},
      {"mu_hp", d(c.hp.mu_hp)},
      {"sigma_hp", d(c.hp.sigma_hp)},
      {"sigma_prime_hp", d(c.hp.sigma_prime_hp)},
      {"alpha", d(c.hp.alpha)},
      {"latent_dim", u(static_cast<std::uint64_t>(c.hp.latent_dim))},
      {"hidden_dim", u(static_cast<std::uint64_t>(c.hp.hidden_dim))},
      {"ocd_samples_per_class", u(c.hp.ocd_samples_per_class)},
      {"center_lr", d(c.hp.center_lr)},
      {"lr", d(c.hp.optimizer.lr)},
      {"beta1", d(c.hp.optimizer.beta1)},
      {"beta2", d(c.hp.optimizer.beta2)},
      {"adam_eps", d(c.hp.optimizer.eps)},
      {"epochs_phase1", u(c.epochs_phase1)},
      {"epochs_phase2", u(c.epochs_phase2)},
      {"epochs_phase3", u(c.epochs_phase3)},
      {"epochs_gzsl_head", u(c.epochs_gzsl_head)},
      {"use_ocd", b(c.use_ocd)},
      {"use_obtl", b(c.use_obtl)},
      {"use_cl", b(c.use_cl)},
      {"mining", to_string(c.mining)},
      {"protocol", to_string(c.protocol)},
      {"split_ratio", d(c.split_ratio)},
      {"seed", u(c.seed)},
  };
}

bool apply_key_value(TrainConfig& c, const std::string& k, const std::string& v) {
  const auto u32 = [&] {
    const auto x = parse_u64(k, v);
    if (x > 0xFFFFFFFFull) throw ParameterError("'" + k + "' is too large");
    return static_cast<std::uint32_t>(x);
  };
  if (k == "lambda_c") c.hp.lambda_c = parse_double(k, v);
  else if (k == "lambda_R") c.hp.lambda_R = parse_double(k, v);
  else if (k == "lambda_reg") c.hp.lambda_reg = parse_double(k, v);
  else if (k == "batch_size") c.hp.batch_size = u32();
  else if (k == "mu_hp") c.hp.mu_hp = parse_double(k, v);
  else if (k == "sigma_hp") c.hp.sigma_hp = parse_double(k, v);
  else if (k == "sigma_prime_hp") c.hp.sigma_prime_hp = parse_double(k, v);
  else if (k == "alpha") c.hp.alpha = parse_double(k, v);
  else if (k == "latent_dim") c.hp.latent_dim = static_cast<Index>(u32());
  else if (k == "hidden_dim") c.hp.hidden_dim = static_cast<Index>(u32());
  else if (k == "ocd_samples_per_class") c.hp.ocd_samples_per_class = u32();
  else if (k == "center_lr") c.hp.center_lr = parse_double(k, v);
  else if (k == "lr") c.hp.optimizer.lr = parse_double(k, v);
  else if (k == "beta1") c.hp.optimizer.beta1 = parse_double(k, v);
  else if (k == "beta2") c.hp.optimizer.beta2 = parse_double(k, v);
  else if (k == "adam_eps") c.hp.optimizer.eps = parse_double(k, v);
  else if (k == "epochs_phase1") c.epochs_phase1 = u32();
  else if (k == "epochs_phase2") c.epochs_phase2 = u32();
  else if (k == "epochs_phase3") c.epochs_phase3 = u32();
  else if (k == "epochs_gzsl_head") c.epochs_gzsl_head = u32();
  else if (k == "use_ocd") c.use_ocd = parse_bool(k, v);
  else if (k == "use_obtl") c.use_obtl = parse_bool(k, v);
  else if (k == "use_cl") c.use_cl = parse_bool(k, v);
  else if (k == "mining") c.mining = parse_mining_mode(v);
  else if (k == "protocol") c.protocol = parse_protocol(v);
  else if (k == "split_ratio") c.split_ratio = parse_double(k, v);
  else if (k == "seed") c.seed = parse_u64(k, v);
  else return false;
  return true;
}

const std::vector<std::string>& loss_part_names() {
  static const std::vector<std::string> names = {"recon", "kl", "obtl", "cl", "attr", "lc", "lreg"};
  return names;
}

namespace {

enum Part : std::size_t { kRecon, kKl, kObtl, kCl, kAttr, kLc, kLreg, kNumParts };

// Running per-epoch means of the total and the active parts.
class EpochMeter {
 public:
  void add(double total, std::initializer_list<std::pair<Part, double>> parts) {
    total_ += total;
    for (auto [p, v] : parts) {
      sums_[p] += v;
      used_[p] = true;
    }
    ++batches_;
  }
  EpochRecord finish(int phase, std::uint32_t epoch) const {
    EpochRecord r;
    r.phase = phase;
    r.epoch = epoch;
    const double n = std::max<std::size_t>(batches_, 1);
    r.total = total_ / n;
    r.parts.resize(kNumParts);
    for (std::size_t i = 0; i < kNumParts; ++i) {
      if (used_[i]) r.parts[i] = sums_[i] / n;
    }
    return r;
  }

 private:
  double total_ = 0.0;
  double sums_[kNumParts] = {};
  bool used_[kNumParts] = {};
  std::size_t batches_ = 0;
};

Tensor2 attributes_for(const Dataset& d, std::span<const ClassId> labels) {
  Tensor2 out(static_cast<Index>(labels.size()), d.attribute_dim());
  for (std::size_t i = 0; i < labels.size(); ++i) out.row(static_cast<Index>(i)) = d.attributes.row(labels[i]);
  return out;
}

std::vector<ClassId> labels_for(const Dataset& d, std::span<const std::uint32_t> idx) {
  std::vector<ClassId> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(d.labels[i]);
  return out;
}

Var zero_scalar(Graph& g) { return g.constant(Tensor2::Zero(1, 1)); }

void require_training_rows(std::span<const std::uint32_t> train_idx) {
  if (train_idx.empty()) throw DataError("empty training set");
}

// Rows generated for the metric-learning phases: latent codes (decoded in the
// graph), conditioning attributes and labels.
struct GeneratedPool {
  Tensor2 z;
  Tensor2 x;
  Tensor2 attrs;
  std::vector<ClassId> labels;
  std::vector<std::uint32_t> order;
  std::size_t cursor = 0;

  bool empty() const { return labels.empty(); }
  // Next `n` pool rows, cycling (reshuffled order is fixed per epoch).
  std::vector<std::uint32_t> take(std::size_t n) {
    std::vector<std::uint32_t> rows;
    if (empty()) return rows;
    n = std::min(n, order.size());
    for (std::size_t k = 0; k < n; ++k) {
      rows.push_back(order[cursor]);
      cursor = (cursor + 1) % order.size();
    }
    return rows;
  }
};

void shuffle_pool(GeneratedPool& pool, Rng& rng) {
  pool.order.resize(pool.labels.size());
  for (std::uint32_t i = 0; i < pool.order.size(); ++i) pool.order[i] = i;
  shuffle(pool.order.begin(), pool.order.end(), rng);
  pool.cursor = 0;
}

std::vector<ClassId> gather_labels(std::span<const ClassId> labels, std::span<const std::uint32_t> rows) {
  std::vector<ClassId> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(labels[r]);
  return out;
}

}  // namespace

TrainingSets training_sets(const Dataset& d, const TrainConfig& cfg) {
  TrainingSets s;
  if (cfg.protocol == Protocol::zsl) {
    s.train_idx = d.indices_of(d.seen_classes);
    if (!d.test_idx.empty()) {
      const std::set<std::uint32_t> held_out(d.test_idx.begin(), d.test_idx.end());
      std::erase_if(s.train_idx, [&](std::uint32_t i) { return held_out.count(i) != 0; });
    }
    s.generated_classes = d.unseen_classes;
  } else {
    s.train_idx = resolve_split(d, cfg.split_ratio, cfg.seed).train_seen_idx;
    s.generated_classes = d.seen_classes;
    s.gzsl_unseen_classes = d.unseen_classes;
  }
  std::sort(s.generated_classes.begin(), s.generated_classes.end());
  std::sort(s.gzsl_unseen_classes.begin(), s.gzsl_unseen_classes.end());
  return s;
}

void train_phase1(const Dataset& d, std::span<const std::uint32_t> train_idx, Models& m,
                  const TrainConfig& cfg, Rng& rng, std::vector<EpochRecord>* history) {
  require_training_rows(train_idx);
  m.encoder.params.reset_moments();
  m.decoder.params.reset_moments();
  std::vector<std::uint32_t> order(train_idx.begin(), train_idx.end());
  const std::size_t bs = cfg.hp.batch_size;

  for (std::uint32_t epoch = 0; epoch < cfg.epochs_phase1; ++epoch) {
    shuffle(order.begin(), order.end(), rng);
    EpochMeter meter;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::span<const std::uint32_t> rows(order.data() + start, std::min(bs, order.size() - start));
      const auto labels = labels_for(d, rows);
      Graph g;
      Var x = g.constant(gather_rows(d.features, rows));
      Var a = g.constant(attributes_for(d, labels));
      auto [mu, logvar] = m.encoder.forward(g, x);
      Var z = reparameterize(mu, logvar, rng);
      Var x_hat = m.decoder.forward(g, z, a);
      Var recon = mean_row_sq_dist(x_hat, x);
      Var kl = kl_divergence(mu, logvar);
      Var loss = cvae_loss(x, x_hat, mu, logvar);
      meter.add(loss.scalar(), {{kRecon, recon.scalar()}, {kKl, kl.scalar()}});
      g.backward(loss);
      optimizer_step(m.encoder.params, cfg.hp.optimizer);
      optimizer_step(m.decoder.params, cfg.hp.optimizer);
    }
    if (history) history->push_back(meter.finish(1, epoch));
  }
  m.phase1_complete = true;
}

void train_phase2(const Dataset& d, std::span<const std::uint32_t> train_idx, Models& m,
                  const TrainConfig& cfg, Rng& rng, std::vector<EpochRecord>* history) {
  require_training_rows(train_idx);
  m.regressor.params.reset_moments();
  std::vector<std::uint32_t> order(train_idx.begin(), train_idx.end());
  const std::size_t bs = cfg.hp.batch_size;

  for (std::uint32_t epoch = 0; epoch < cfg.epochs_phase2; ++epoch) {
    shuffle(order.begin(), order.end(), rng);
    EpochMeter meter;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::span<const std::uint32_t> rows(order.data() + start, std::min(bs, order.size() - start));
      const auto labels = labels_for(d, rows);
      Graph g;
      Var emb = m.regressor.forward(g, g.constant(gather_rows(d.features, rows)));
      Var attr = attr_regression_loss(emb, g.constant(attributes_for(d, labels)));
      init_missing_centers(m.centers, emb.value(), labels);
      Var obtl = cfg.use_obtl ? obtl_loss(emb, labels, cfg.hp.alpha, cfg.mining) : zero_scalar(g);
      Var cl = cfg.use_cl ? center_loss(emb, labels, m.centers) : zero_scalar(g);
      const Var terms[] = {obtl, cl, attr};
      const double weights[] = {1.0, 1.0, cfg.hp.lambda_R};
      Var loss = weighted_sum(terms, weights);
      const Tensor2 emb_values = emb.value();
      meter.add(loss.scalar(), {{kObtl, obtl.scalar()}, {kCl, cl.scalar()}, {kAttr, attr.scalar()}});
      g.backward(loss);
      optimizer_step(m.regressor.params, cfg.hp.optimizer);
      if (cfg.use_cl) m.centers = update_centers(std::move(m.centers), emb_values, labels, cfg.hp.center_lr);
    }
    if (history) history->push_back(meter.finish(2, epoch));
  }
}

void train_phase3(const Dataset& d, std::span<const std::uint32_t> train_idx,
                  std::span<const ClassId> generated_classes, Models& m, const TrainConfig& cfg,
                  Rng& rng, std::vector<EpochRecord>* history) {
  if (cfg.use_ocd && !m.phase1_complete) {
    throw StateError("phase 3 with OCD needs a trained CVAE (run phase 1 first)");
  }
  require_training_rows(train_idx);
  m.decoder.params.reset_moments();
  m.regressor.params.reset_moments();

  const std::vector<ClassId> gen_ids(generated_classes.begin(), generated_classes.end());
  const Tensor2 class_attrs = attributes_for(d, gen_ids);
  const OCDParams ocd = cfg.ocd_params();
  std::vector<std::uint32_t> order(train_idx.begin(), train_idx.end());
  const std::size_t half = std::max<std::size_t>(1, cfg.hp.batch_size / 2);

  for (std::uint32_t epoch = 0; epoch < cfg.epochs_phase3; ++epoch) {
    GeneratedPool pool;
    if (!gen_ids.empty()) {
      if (cfg.use_ocd) {
        OCDBatch b = generate_ocd(m.encoder, m.decoder, class_attrs, gen_ids, ocd, rng);
        pool.z = std::move(b.z_oc);
        pool.attrs = std::move(b.attrs);
        pool.labels = std::move(b.labels);
      } else {
        GeneratedSamples s =
            approximate_distribution(m.decoder, class_attrs, gen_ids, ocd.samples_per_class, ocd, rng);
        pool.z = std::move(s.z);
        pool.attrs = std::move(s.attrs);
        pool.labels = std::move(s.labels);
      }
      shuffle_pool(pool, rng);
    }
    shuffle(order.begin(), order.end(), rng);

    EpochMeter meter;
    for (std::size_t start = 0; start < order.size(); start += half) {
      const std::span<const std::uint32_t> rows(order.data() + start, std::min(half, order.size() - start));
      auto labels = labels_for(d, rows);
      Graph g;
      Var x_real = g.constant(gather_rows(d.features, rows));
      Var a_real = g.constant(attributes_for(d, labels));
      Var emb = m.regressor.forward(g, x_real);
      Var lreg = lreg_loss(m.decoder, x_real, a_real, rng);
      Var lc = zero_scalar(g);

      const auto gen_rows = pool.take(rows.size());
      if (!gen_rows.empty()) {
        Var a_gen = g.constant(gather_rows(pool.attrs, gen_rows));
        Var x_gen = m.decoder.forward(g, g.constant(gather_rows(pool.z, gen_rows)), a_gen);
        lc = lc_loss(m.regressor, x_gen, a_gen);
        emb = concat_rows(emb, m.regressor.forward(g, x_gen));
        const auto gen_labels = gather_labels(pool.labels, gen_rows);
        labels.insert(labels.end(), gen_labels.begin(), gen_labels.end());
      }

      init_missing_centers(m.centers, emb.value(), labels);
      Var obtl = cfg.use_obtl ? obtl_loss(emb, labels, cfg.hp.alpha, cfg.mining) : zero_scalar(g);
      Var cl = cfg.use_cl ? center_loss(emb, labels, m.centers) : zero_scalar(g);
      Var loss = phase3_objective(cfg.hp, {lc, lreg, obtl, cl});
      const Tensor2 emb_values = emb.value();
      meter.add(loss.scalar(), {{kLc, lc.scalar()}, {kLreg, lreg.scalar()}, {kObtl, obtl.scalar()}, {kCl, cl.scalar()}});
      g.backward(loss);
      optimizer_step(m.decoder.params, cfg.hp.optimizer);
      optimizer_step(m.regressor.params, cfg.hp.optimizer);
      if (cfg.use_cl) m.centers = update_centers(std::move(m.centers), emb_values, labels, cfg.hp.center_lr);
    }
    if (history) history->push_back(meter.finish(3, epoch));
  }
}

void train_gzsl_head(const Dataset& d, std::span<const std::uint32_t> train_idx,
                     std::span<const ClassId> unseen_classes, Models& m, const TrainConfig& cfg,
                     Rng& rng, std::vector<EpochRecord>* history) {
  require_training_rows(train_idx);
  m.regressor.params.reset_moments();
  const std::vector<ClassId> ids(unseen_classes.begin(), unseen_classes.end());
  const Tensor2 class_attrs = attributes_for(d, ids);
  std::vector<std::uint32_t> order(train_idx.begin(), train_idx.end());
  const std::size_t half = std::max<std::size_t>(1, cfg.hp.batch_size / 2);
  OCDParams plain = cfg.ocd_params();
  plain.mu_hp = 0.0;
  plain.sigma_hp = 1.0;
  plain.sigma_prime_hp = std::max(plain.sigma_prime_hp, 2.0);

  for (std::uint32_t epoch = 0; epoch < cfg.epochs_gzsl_head; ++epoch) {
    GeneratedPool pool;
    if (!ids.empty()) {
      GeneratedSamples s =
          approximate_distribution(m.decoder, class_attrs, ids, plain.samples_per_class, plain, rng);
      pool.x = std::move(s.x);
      pool.attrs = std::move(s.attrs);
      pool.labels = std::move(s.labels);
      shuffle_pool(pool, rng);
    }
    shuffle(order.begin(), order.end(), rng);

    EpochMeter meter;
    for (std::size_t start = 0; start < order.size(); start += half) {
      const std::span<const std::uint32_t> rows(order.data() + start, std::min(half, order.size() - start));
      auto labels = labels_for(d, rows);
      Tensor2 x = gather_rows(d.features, rows);
      Tensor2 a = attributes_for(d, labels);
      const auto gen_rows = pool.take(rows.size());
      if (!gen_rows.empty()) {
        const Tensor2 xg = gather_rows(pool.x, gen_rows);
        const Tensor2 ag = gather_rows(pool.attrs, gen_rows);
        Tensor2 xx(x.rows() + xg.rows(), x.cols());
        xx << x, xg;
        Tensor2 aa(a.rows() + ag.rows(), a.cols());
        aa << a, ag;
        x = std::move(xx);
        a = std::move(aa);
        const auto gen_labels = gather_labels(pool.labels, gen_rows);
        labels.insert(labels.end(), gen_labels.begin(), gen_labels.end());
      }
      Graph g;
      Var emb = m.regressor.forward(g, g.constant(std::move(x)));
      Var attr = attr_regression_loss(emb, g.constant(std::move(a)));
      init_missing_centers(m.centers, emb.value(), labels);
      Var obtl = cfg.use_obtl ? obtl_loss(emb, labels, cfg.hp.alpha, cfg.mining) : zero_scalar(g);
      Var cl = cfg.use_cl ? center_loss(emb, labels, m.centers) : zero_scalar(g);
      const Var terms[] = {obtl, cl, attr};
      const double weights[] = {1.0, 1.0, cfg.hp.lambda_R};
      Var loss = weighted_sum(terms, weights);
      const Tensor2 emb_values = emb.value();
      meter.add(loss.scalar(), {{kObtl, obtl.scalar()}, {kCl, cl.scalar()}, {kAttr, attr.scalar()}});
      g.backward(loss);
      optimizer_step(m.regressor.params, cfg.hp.optimizer);
      if (cfg.use_cl) m.centers = update_centers(std::move(m.centers), emb_values, labels, cfg.hp.center_lr);
    }
    if (history) history->push_back(meter.finish(4, epoch));
  }
}

TrainedModel run_pipeline(const Dataset& d, const TrainConfig& cfg) {
  cfg.validate();
  validate(d);
  TrainedModel out;
  out.config = cfg;
  const Rng root(cfg.seed);
  Rng init_rng = root.split(1);
  const ModelConfig mc{d.feature_dim(), d.attribute_dim(), cfg.hp.latent_dim, cfg.hp.hidden_dim};
  out.models = init_models(mc, d.num_classes(), cfg.hp.center_lr, init_rng);

  const TrainingSets sets = training_sets(d, cfg);
  Rng r1 = root.split(2);
  train_phase1(d, sets.train_idx, out.models, cfg, r1, &out.history);
  Rng r2 = root.split(3);
  train_phase2(d, sets.train_idx, out.models, cfg, r2, &out.history);
  Rng r3 = root.split(4);
  train_phase3(d, sets.train_idx, sets.generated_classes, out.models, cfg, r3, &out.history);
  if (cfg.protocol == Protocol::gzsl) {
    Rng r4 = root.split(5);
    train_gzsl_head(d, sets.train_idx, sets.gzsl_unseen_classes, out.models, cfg, r4, &out.history);
  }

  for (auto* store : {&out.models.encoder.params, &out.models.decoder.params, &out.models.regressor.params}) {
    for (auto& [name, p] : *store) round_to_float32(p.value);
  }
  round_to_float32(out.models.centers.values);
  return out;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "phase,epoch,loss_total";
  for (const auto& n : loss_part_names()) out += "," + n;
  out += "\n";
  for (const auto& r : history) {
    out += std::to_string(r.phase) + "," + std::to_string(r.epoch) + "," + format_double(r.total);
    for (std::size_t i = 0; i < loss_part_names().size(); ++i) {
      out += ",";
      if (i < r.parts.size() && r.parts[i]) out += format_double(*r.parts[i]);
    }
    out += "\n";
  }
  return out;
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void write_block(io::Writer& w, const std::string& name, const Tensor2& t) {
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.bytes(name);
  w.u32(static_cast<std::uint32_t>(t.rows()));
  w.u32(static_cast<std::uint32_t>(t.cols()));
  for (Index i = 0; i < t.size(); ++i) w.f32(static_cast<float>(t.data()[i]));
}

}  // namespace

std::vector<char> checkpoint_bytes(const TrainedModel& model) {
  const Models& m = model.models;
  std::vector<std::pair<std::string, const Tensor2*>> blocks;
  for (const auto& [prefix, store] : {std::pair{"encoder/", &m.encoder.params},
                                      std::pair{"decoder/", &m.decoder.params},
                                      std::pair{"regressor/", &m.regressor.params}}) {
    for (const auto& [name, p] : *store) blocks.emplace_back(prefix + name, &p.value);
  }
  Tensor2 present(m.centers.values.rows(), 1);
  for (Index c = 0; c < present.rows(); ++c) present(c, 0) = m.centers.present[static_cast<std::size_t>(c)];
  blocks.emplace_back("centers/values", &m.centers.values);
  blocks.emplace_back("centers/present", &present);

  io::Writer w;
  w.bytes("OCDM");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(blocks.size()));
  for (const auto& [name, t] : blocks) write_block(w, name, *t);

  KeyValues echo = to_key_values(model.config);
  echo.emplace_back("feature_dim", std::to_string(m.config.feature_dim));
  echo.emplace_back("attribute_dim", std::to_string(m.config.attribute_dim));
  echo.emplace_back("num_classes", std::to_string(m.centers.values.rows()));
  echo.emplace_back("phase1_complete", m.phase1_complete ? "true" : "false");
  const std::string text = format_key_values(echo);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  return w.data();
}

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
  io::Writer w;
  const auto bytes = checkpoint_bytes(model);
  w.bytes(std::string_view(bytes.data(), bytes.size()));
  w.save(path);
}

TrainedModel parse_checkpoint(std::vector<char> bytes, const std::string& name) {
  io::Reader r(std::move(bytes), name);
  r.expect_magic("OCDM");
  const auto version = r.u32();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.u32();
  std::map<std::string, Tensor2> blocks;
  for (std::uint32_t b = 0; b < count; ++b) {
    const auto len = r.u16();
    std::string block_name = r.bytes(len);
    const auto rows = r.u32();
    const auto cols = r.u32();
    if (static_cast<std::uint64_t>(rows) * cols * 4 > r.remaining()) r.fail("block '" + block_name + "' truncated");
    Tensor2 t(rows, cols);
    for (Index i = 0; i < t.size(); ++i) t.data()[i] = r.f32();
    if (!blocks.emplace(block_name, std::move(t)).second) r.fail("duplicate block '" + block_name + "'");
  }
  const auto echo_len = r.u32();
  const std::string echo_text = r.bytes(echo_len);
  r.expect_end();

  TrainedModel out;
  ModelConfig mc;
  Index num_classes = 0;
  bool phase1 = false;
  for (const auto& [k, v] : parse_key_values(echo_text, name + " config echo")) {
    if (apply_key_value(out.config, k, v)) continue;
    if (k == "feature_dim") mc.feature_dim = static_cast<Index>(parse_u64(k, v));
    else if (k == "attribute_dim") mc.attribute_dim = static_cast<Index>(parse_u64(k, v));
    else if (k == "num_classes") num_classes = static_cast<Index>(parse_u64(k, v));
    else if (k == "phase1_complete") phase1 = parse_bool(k, v);
    else throw FormatError(name + ": unknown config echo key '" + k + "'");
  }
  mc.latent_dim = out.config.hp.latent_dim;
  mc.hidden_dim = out.config.hp.hidden_dim;
  Rng scratch(0);
  out.models = init_models(mc, num_classes, out.config.hp.center_lr, scratch);
  out.models.phase1_complete = phase1;

  auto take = [&](const std::string& key, Tensor2& dst) {
    auto it = blocks.find(key);
    if (it == blocks.end()) throw FormatError(name + ": missing block '" + key + "'");
    if (it->second.rows() != dst.rows() || it->second.cols() != dst.cols()) {
      throw FormatError(name + ": block '" + key + "' has shape " + shape_string(it->second) +
                        ", expected " + shape_string(dst));
    }
    dst = std::move(it->second);
    blocks.erase(it);
  };
  for (const auto& [prefix, store] : {std::pair{"encoder/", &out.models.encoder.params},
                                      std::pair{"decoder/", &out.models.decoder.params},
                                      std::pair{"regressor/", &out.models.regressor.params}}) {
    for (auto& [pname, p] : *store) take(prefix + pname, p.value);
  }
  take("centers/values", out.models.centers.values);
  Tensor2 present(num_classes, 1);
  take("centers/present", present);
  for (Index c = 0; c < num_classes; ++c) {
    out.models.centers.present[static_cast<std::size_t>(c)] = present(c, 0) != 0.0 ? 1 : 0;
  }
  if (!blocks.empty()) throw FormatError(name + ": unexpected block '" + blocks.begin()->first + "'");
  return out;
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint '" + path.string() + "'");
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(std::move(data), path.filename().string());
}

}  // namespace ocdcvae
