// Acceptance checks: one PASS/FAIL line per criterion, exit 1 if any fails.
//   acceptance --cli <path to ocdcvae> --work <scratch dir>
#include "oracles.hpp"
#include "ocdcvae/dataset.hpp"
#include "ocdcvae/eval.hpp"
#include "ocdcvae/losses.hpp"
#include "ocdcvae/ocd.hpp"
#include "ocdcvae/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace ocdcvae;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string fmt(double v, int prec = 1) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(prec);
  o << v;
  return o.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Tensor2 normal_tensor(Index rows, Index cols, std::mt19937_64& gen, double scale) {
  std::normal_distribution<double> nd(0.0, scale);
  Tensor2 t(rows, cols);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = nd(gen);
  return t;
}

// ---- 1: triplet accounting ----
Outcome triplet_accounting() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(1);
  const Tensor2 emb = normal_tensor(200, 8, gen, 1.0);
  std::vector<ClassId> labels;
  for (ClassId c = 0; c < 10; ++c) labels.insert(labels.end(), 20, c);
  const auto hard = mine_batch_triplets(emb, labels, MiningMode::hardest_negative);
  const auto all = mine_batch_triplets(emb, labels, MiningMode::all_valid);
  oracle::Matrix m(200);
  for (Index i = 0; i < 200; ++i) m[static_cast<std::size_t>(i)].assign(emb.row(i).data(), emb.row(i).data() + 8);
  const auto ref = oracle::offline_triplets(m, labels);
  std::vector<oracle::Triplet> got;
  got.reserve(all.size());
  for (const auto& t : all) got.push_back({t.anchor, t.positive, t.negative});
  std::sort(got.begin(), got.end());
  const bool same_set = got == ref;
  const double secs = seconds_since(t0);
  return {hard.size() == 1900 && all.size() == 342000 && same_set && secs < 10.0,
          "hardest " + std::to_string(hard.size()) + ", all_valid " + std::to_string(all.size()) +
              (same_set ? " (equals offline set)" : " (differs from offline set)") + ", " + fmt(secs, 2) + " s"};
}

// ---- 2: harmonic mean ----
Outcome harmonic_rows() {
  struct Row {
    double a, b, h;
  };
  const Row rows[] = {{59.5, 73.4, 65.7}, {44.8, 59.9, 51.3}, {44.8, 42.9, 43.8}};
  double worst = 0.0;
  std::string detail;
  for (const auto& r : rows) {
    const double h = harmonic_mean(r.a, r.b);
    worst = std::max(worst, std::abs(h - r.h));
    detail += fmt(r.a) + "/" + fmt(r.b) + "->" + fmt(h, 3) + " ";
  }
  return {worst <= 0.05, detail + "(max deviation " + fmt(worst, 3) + ")"};
}

// ---- 3: gradients ----
Outcome gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  int checks = 0;
  const int instances = 20;
  for (int inst = 0; inst < instances; ++inst) {
    Rng rng(1000 + static_cast<std::uint64_t>(inst));
    Models m = init_models(ModelConfig{5, 3, 4, 8}, 4, 0.5, rng);
    std::mt19937_64 gen(static_cast<std::uint64_t>(inst));
    const Tensor2 x = normal_tensor(6, 5, gen, 1.0);
    const Tensor2 a = normal_tensor(6, 3, gen, 1.0);
    const Tensor2 z = normal_tensor(6, 4, gen, 1.0);
    const std::vector<ClassId> labels = {0, 1, 0, 2, 1, 3};
    init_missing_centers(m.centers, normal_tensor(6, 3, gen, 1.0), labels);
    std::vector<ClassId> both = labels;
    both.insert(both.end(), labels.begin(), labels.end());
    ParamStore* enc_dec[] = {&m.encoder.params, &m.decoder.params};
    ParamStore* dec_reg[] = {&m.decoder.params, &m.regressor.params};
    ParamStore* reg[] = {&m.regressor.params};
    ParamStore* enc[] = {&m.encoder.params};
    ParamStore* dec[] = {&m.decoder.params};
    const Hyperparams h;
    const auto seed = static_cast<std::uint64_t>(inst);

    const std::vector<std::pair<LossBuilder, std::span<ParamStore* const>>> cases = {
        {[&](Graph& g) {
           Rng r(seed);
           Var xv = g.constant(x);
           auto [mu, lv] = m.encoder.forward(g, xv);
           return cvae_loss(xv, m.decoder.forward(g, reparameterize(mu, lv, r), g.constant(a)), mu, lv);
         },
         enc_dec},
        {[&](Graph& g) {
           auto [mu, lv] = m.encoder.forward(g, g.constant(x));
           return kl_divergence(mu, lv);
         },
         enc},
        {[&](Graph& g) { return obtl_loss(m.regressor.forward(g, g.constant(x)), labels, 0.4, MiningMode::hardest_negative); },
         reg},
        {[&](Graph& g) { return obtl_loss(m.regressor.forward(g, g.constant(x)), labels, 0.4, MiningMode::all_valid); },
         reg},
        {[&](Graph& g) { return center_loss(m.regressor.forward(g, g.constant(x)), labels, m.centers); }, reg},
        {[&](Graph& g) { return attr_regression_loss(m.regressor.forward(g, g.constant(x)), g.constant(a)); }, reg},
        {[&](Graph& g) {
           Var av = g.constant(a);
           return lc_loss(m.regressor, m.decoder.forward(g, g.constant(z), av), av);
         },
         dec_reg},
        {[&](Graph& g) {
           Rng r(seed + 1);
           return lreg_loss(m.decoder, g.constant(x), g.constant(a), r);
         },
         dec},
        {[&](Graph& g) {
           Rng r(seed + 2);
           Var av = g.constant(a);
           Var xg = m.decoder.forward(g, g.constant(z), av);
           Var emb = concat_rows(m.regressor.forward(g, g.constant(x)), m.regressor.forward(g, xg));
           return phase3_objective(h, Phase3Parts{lc_loss(m.regressor, xg, av), lreg_loss(m.decoder, g.constant(x), av, r),
                                                  obtl_loss(emb, both, 0.4, MiningMode::hardest_negative),
                                                  center_loss(emb, both, m.centers)});
         },
         dec_reg},
    };
    for (const auto& [fn, stores] : cases) {
      worst = std::max(worst, finite_diff_check(fn, stores));
      ++checks;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 60.0,
          std::to_string(checks) + " checks over " + std::to_string(instances) + " networks, max rel error " +
              sci(worst) + ", " + fmt(secs, 2) + " s"};
}

// ---- 4: KL against Monte Carlo ----
Outcome kl_monte_carlo() {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> mu_d(0.0, 0.5);
  std::uniform_real_distribution<double> lv_d(-0.5, 0.5);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    Tensor2 mu(1, 2), lv(1, 2);
    for (Index j = 0; j < 2; ++j) {
      mu(0, j) = mu_d(gen);
      lv(0, j) = lv_d(gen);
    }
    Graph g;
    const double closed = kl_divergence(g.constant(mu), g.constant(lv)).scalar();
    const auto mc = oracle::mc_kl({{mu(0, 0), mu(0, 1)}}, {{lv(0, 0), lv(0, 1)}}, 100000, 100 + static_cast<std::uint64_t>(t));
    worst = std::max(worst, std::abs(closed - mc.mean));
  }
  return {worst <= 0.01, "50 Gaussians, 1e5 draws each, max |closed - MC| " + fmt(worst, 4)};
}

// ---- 5: OCD structure ----
Outcome ocd_structure() {
  Rng init(5);
  const Models m = init_models(ModelConfig{16, 8, 100, 64}, 4, 0.5, init);
  std::mt19937_64 gen(5);
  const Tensor2 attrs = normal_tensor(4, 8, gen, 1.0);
  const std::vector<ClassId> ids = {8, 9, 10, 11};
  OCDParams p;
  p.samples_per_class = 250;  // 1000 rows x 100 latent dims = 1e5 draws
  Rng rng(6);
  const OCDBatch b = generate_ocd(m.encoder, m.decoder, attrs, ids, p, rng);

  bool midpoint = true;
  bool attrs_same = true;
  for (Index i = 0; i < b.x_oc.rows(); ++i) {
    const auto j = b.partner[static_cast<std::size_t>(i)];
    midpoint = midpoint && (b.mu_oc.row(i).array() == ((b.mu.row(i) + b.mu.row(j)) / 2.0).array()).all();
    attrs_same = attrs_same && (b.attrs.row(i).array() == attrs.row(i / 250).array()).all() &&
                 b.labels[static_cast<std::size_t>(i)] == ids[static_cast<std::size_t>(i / 250)];
  }
  int fixed = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng r(seed);
    const std::uint32_t n = 2 + static_cast<std::uint32_t>(seed % 255);
    const auto perm = random_permutation(n, r, true);
    std::set<std::uint32_t> seen(perm.begin(), perm.end());
    if (seen.size() != n || *seen.rbegin() != n - 1) ++fixed;
    for (std::uint32_t i = 0; i < n; ++i) fixed += perm[i] == i;
  }
  const double sd = std::sqrt((b.z_oc - b.mu_oc).array().square().mean());
  const bool sd_ok = std::abs(sd - 0.5) <= 0.01;
  return {midpoint && attrs_same && fixed == 0 && sd_ok,
          std::string("midpoint ") + (midpoint ? "exact" : "broken") + ", attributes " +
              (attrs_same ? "bit-identical" : "changed") + ", fixed points over 1000 seeds " + std::to_string(fixed) +
              ", z_OC std " + fmt(sd, 4)};
}

// ---- CLI-driven criteria ----

class Cli {
 public:
  Cli(std::string exe, fs::path work) : exe_(std::move(exe)), work_(std::move(work)) {}

  bool run(const std::vector<std::string>& args, const std::string& log_name) const {
    std::string cmd = quote(exe_);
    for (const auto& a : args) cmd += " " + quote(a);
    cmd += " > " + quote((work_ / (log_name + ".log")).string()) + " 2>&1";
    return std::system(cmd.c_str()) == 0;
  }
  const fs::path& work() const { return work_; }

 private:
  static std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
  }
  std::string exe_;
  fs::path work_;
};

// Trains and evaluates one configuration; returns the headline score or NaN.
double train_eval(const Cli& cli, const fs::path& data, const std::string& name, const std::vector<std::string>& flags) {
  const fs::path out = cli.work() / name;
  fs::remove_all(out);
  std::vector<std::string> args = {"train", "--data", data.string(), "--out", out.string()};
  args.insert(args.end(), flags.begin(), flags.end());
  if (!cli.run(args, name + "_train")) return std::nan("");
  if (!cli.run({"eval", "--checkpoint", (out / "checkpoint.ocdm").string(), "--data", data.string(), "--out",
                out.string()},
               name + "_eval")) {
    return std::nan("");
  }
  const auto j = nlohmann::json::parse(slurp(out / "metrics.jsonl"));
  return j.contains("H") ? j["H"].get<double>() : j["mean_per_class_acc"].get<double>();
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt(x);
  return s;
}

// ---- 10: round trips ----
Outcome round_trips(const fs::path& work) {
  const Dataset d = make_synthetic(SynthConfig{});
  const fs::path a = work / "rt_a";
  const fs::path b = work / "rt_b";
  fs::remove_all(a);
  fs::remove_all(b);
  save_dataset(d, a);
  const Dataset back = load_dataset(a);
  save_dataset(back, b);
  bool data_ok = back == d;
  for (const char* f : {"features.bin", "labels.bin", "attributes.bin", "splits.txt"}) {
    data_ok = data_ok && slurp(a / f) == slurp(b / f);
  }

  TrainConfig cfg;
  cfg.hp.hidden_dim = 32;
  cfg.hp.latent_dim = 8;
  cfg.epochs_phase1 = cfg.epochs_phase2 = cfg.epochs_phase3 = 1;
  cfg.hp.ocd_samples_per_class = 50;
  const TrainedModel model = run_pipeline(d, cfg);
  save_checkpoint(model, a / "model.ocdm");
  const TrainedModel loaded = load_checkpoint(a / "model.ocdm");
  save_checkpoint(loaded, b / "model.ocdm");
  const std::string first = slurp(a / "model.ocdm");
  const bool ckpt_ok = first == slurp(b / "model.ocdm") &&
                       loaded.models.regressor.params.same_values(model.models.regressor.params) &&
                       loaded.models.decoder.params.same_values(model.models.decoder.params) &&
                       loaded.models.encoder.params.same_values(model.models.encoder.params) &&
                       loaded.models.centers == model.models.centers;
  return {data_ok && ckpt_ok, std::string("dataset ") + (data_ok ? "identical" : "differs") + ", checkpoint (" +
                                  std::to_string(first.size()) + " bytes) " + (ckpt_ok ? "identical" : "differs")};
}

void print(int n, const std::string& name, const Outcome& o, int& failures) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " " << n << " " << name << ": " << o.detail << std::endl;
  if (!o.pass) ++failures;
}

template <class F>
Outcome guarded(F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::string exe;
  fs::path work = fs::temp_directory_path() / "ocdcvae_acceptance";
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string k = argv[i];
    if (k == "--cli") exe = argv[i + 1];
    else if (k == "--work") work = argv[i + 1];
  }
  if (exe.empty()) {
    std::cerr << "usage: acceptance --cli <ocdcvae binary> [--work <dir>]\n";
    return 2;
  }
  fs::create_directories(work);
  int failures = 0;

  print(1, "triplet accounting", guarded(triplet_accounting), failures);
  print(2, "harmonic mean", guarded(harmonic_rows), failures);
  print(3, "gradients", guarded(gradients), failures);
  print(4, "KL vs Monte Carlo", guarded(kl_monte_carlo), failures);
  print(5, "OCD structure", guarded(ocd_structure), failures);

  const Cli cli(exe, work);
  const fs::path data = work / "data";
  fs::remove_all(data);
  const bool have_data = cli.run({"synth", "--out", data.string()}, "synth");
  const std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};

  std::vector<double> full;
  print(6, "desk-scale ZSL", guarded([&]() -> Outcome {
          if (!have_data) return {false, "synth failed"};
          const auto t0 = Clock::now();
          for (auto s : seeds) full.push_back(train_eval(cli, data, "full_" + std::to_string(s), {"--seed", std::to_string(s)}));
          const double secs = seconds_since(t0);
          const double med = median(full);
          return {med >= 70.0 && secs < 300.0,
                  "accuracies " + list(full) + ", median " + fmt(med) + "%, " + fmt(secs) + " s for 5 runs"};
        }),
        failures);

  print(7, "ablation direction", guarded([&]() -> Outcome {
          if (full.size() != seeds.size()) return {false, "criterion-6 runs missing"};
          std::vector<double> ocd_cl, cl;
          for (auto s : seeds) {
            const std::string ss = std::to_string(s);
            ocd_cl.push_back(train_eval(cli, data, "ocd_cl_" + ss, {"--seed", ss, "--no-obtl"}));
            cl.push_back(train_eval(cli, data, "cl_" + ss, {"--seed", ss, "--no-obtl", "--no-ocd"}));
          }
          const double f = median(full), oc = median(ocd_cl), c = median(cl);
          return {f >= oc && f >= c, "median OCD+OBTL+CL " + fmt(f) + ", OCD+CL " + fmt(oc) + ", CL " + fmt(c)};
        }),
        failures);

  print(8, "GZSL harness", guarded([&]() -> Outcome {
          const fs::path out = work / "gzsl";
          const double h = train_eval(cli, data, "gzsl", {"--protocol", "gzsl"});
          if (std::isnan(h)) return {false, "gzsl train/eval failed"};
          const auto j = nlohmann::json::parse(slurp(out / "metrics.jsonl"));
          const double a = j["A"], b = j["B"];
          const bool h_ok = h == harmonic_mean(a, b);
          const Dataset d = load_dataset(data);
          const GzslSplit split = split_gzsl(d, 0.8, 0);
          bool counts_ok = true;
          for (ClassId c : d.seen_classes) {
            std::size_t n = 0, n_train = 0;
            for (auto l : d.labels) n += l == c;
            for (auto i : split.train_seen_idx) n_train += d.labels[i] == c;
            counts_ok = counts_ok && n_train == static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(n)));
          }
          return {h_ok && counts_ok, "A " + fmt(a) + " B " + fmt(b) + " H " + fmt(h) +
                                         (h_ok ? " (= harmonic_mean)" : " (mismatch)") + ", split counts " +
                                         (counts_ok ? "floor(0.8 n_c)" : "wrong")};
        }),
        failures);

  print(9, "determinism", guarded([&]() -> Outcome {
          const double again = train_eval(cli, data, "repeat_0", {"--seed", "0"});
          if (std::isnan(again)) return {false, "repeat run failed"};
          const fs::path a = work / "full_0";
          const fs::path b = work / "repeat_0";
          std::string differing;
          for (const char* f : {"checkpoint.ocdm", "history.csv", "metrics.jsonl", "metrics.csv"}) {
            if (slurp(a / f) != slurp(b / f) || slurp(a / f).empty()) differing += std::string(" ") + f;
          }
          return {differing.empty(), differing.empty() ? "checkpoint, history and metrics byte-identical"
                                                       : "differs:" + differing};
        }),
        failures);

  print(10, "format round trips", guarded([&] { return round_trips(work); }), failures);

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
