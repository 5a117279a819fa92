#include "ocdcvae/error.hpp"
#include "ocdcvae/eval.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <sstream>

using namespace ocdcvae;

namespace {

// 2 seen + 2 unseen classes, 5 samples each; features equal the attributes.
Dataset mirror_dataset() {
  Dataset d;
  d.attributes.resize(4, 3);
  d.attributes << 1.0, -0.5, 0.25, -1.0, 0.5, 2.0, 0.0, 1.5, -2.0, 3.0, -1.0, 0.5;
  d.features.resize(20, 3);
  for (Index i = 0; i < 20; ++i) {
    d.labels.push_back(static_cast<ClassId>(i / 5));
    d.features.row(i) = d.attributes.row(i / 5);
  }
  d.seen_classes = {0, 1};
  d.unseen_classes = {2, 3};
  return d;
}

// leaky(x) - leaky(-x) = 1.2 x, so this two-layer net is the identity.
Models identity_models() {
  Models m;
  Tensor2 w1(3, 6);
  w1 << Tensor2::Identity(3, 3), -Tensor2::Identity(3, 3);
  Tensor2 w2(6, 3);
  w2 << Tensor2::Identity(3, 3) / 1.2, -Tensor2::Identity(3, 3) / 1.2;
  m.regressor.params.add("fc1.W", w1);
  m.regressor.params.add("fc1.b", Tensor2::Zero(1, 6));
  m.regressor.params.add("out.W", w2);
  m.regressor.params.add("out.b", Tensor2::Zero(1, 3));
  return m;
}

Models constant_models(const Tensor2& output) {
  Models m;
  m.regressor.params.add("fc1.W", Tensor2::Zero(3, 2));
  m.regressor.params.add("fc1.b", Tensor2::Zero(1, 2));
  m.regressor.params.add("out.W", Tensor2::Zero(2, 3));
  m.regressor.params.add("out.b", output);
  return m;
}

}  // namespace

TEST(PerClassAccuracy, AllCorrectIsHundred) {
  const std::vector<ClassId> y = {0, 0, 1, 2};
  const std::vector<ClassId> cs = {0, 1, 2};
  const Metrics m = per_class_accuracy(y, y, cs);
  EXPECT_EQ(m.mean_per_class_acc, 100.0);
  EXPECT_TRUE(m.excluded.empty());
}

TEST(PerClassAccuracy, UnweightedMeanDiffersFromOverall) {
  // Class 0: 3/3, class 1: 0/1. Per-class mean 50; overall 75.
  const std::vector<ClassId> labels = {0, 0, 0, 1};
  const std::vector<ClassId> preds = {0, 0, 0, 0};
  const std::vector<ClassId> cs = {0, 1};
  EXPECT_DOUBLE_EQ(per_class_accuracy(preds, labels, cs).mean_per_class_acc, 50.0);
  // Class 0: 3/4 = 75, class 1: 1/2 = 50 -> 62.5; overall 4/6 = 66.7.
  const std::vector<ClassId> l2 = {0, 0, 0, 0, 1, 1};
  const std::vector<ClassId> p2 = {0, 0, 0, 1, 1, 0};
  const Metrics m = per_class_accuracy(p2, l2, cs);
  EXPECT_DOUBLE_EQ(m.per_class_acc.at(0), 75.0);
  EXPECT_DOUBLE_EQ(m.per_class_acc.at(1), 50.0);
  EXPECT_DOUBLE_EQ(m.mean_per_class_acc, 62.5);
}

TEST(PerClassAccuracy, EmptyClassIsExcluded) {
  const std::vector<ClassId> y = {0, 0};
  const std::vector<ClassId> cs = {0, 5};
  const Metrics m = per_class_accuracy(y, y, cs);
  EXPECT_EQ(m.mean_per_class_acc, 100.0);
  EXPECT_EQ(m.excluded, (std::vector<ClassId>{5}));
}

TEST(PerClassAccuracy, Errors) {
  const std::vector<ClassId> y = {0, 1};
  const std::vector<ClassId> one = {0};
  const std::vector<ClassId> none;
  const std::vector<ClassId> other = {7};
  EXPECT_THROW(per_class_accuracy(y, one, y), ParameterError);
  EXPECT_THROW(per_class_accuracy(y, y, none), ParameterError);
  EXPECT_THROW(per_class_accuracy(y, y, other), DataError);
}

TEST(PerClassAccuracy, MatchesTallyOracle) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<ClassId> labels, preds;
    for (int i = 0; i < 60; ++i) {
      labels.push_back(static_cast<ClassId>(rng.uniform_index(6)));
      preds.push_back(static_cast<ClassId>(rng.uniform_index(6)));
    }
    const std::vector<ClassId> cs = {0, 2, 3, 5};
    const double got = per_class_accuracy(preds, labels, cs).mean_per_class_acc;
    const double ref = oracle::tally_accuracy(preds, labels, cs);
    EXPECT_NEAR(got, ref, 1e-9);
  }
}

TEST(HarmonicMean, PublishedRows) {
  struct Row {
    double a, b, h;
  };
  for (const Row r : {Row{59.5, 73.4, 65.7}, Row{44.8, 59.9, 51.3}, Row{44.8, 42.9, 43.8}}) {
    const double h = harmonic_mean(r.a, r.b);
    const auto rep = oracle::compare("harmonic_mean_published", {r.a, r.b}, r.h, h, 0.05, false);
    testutil::report(rep);
    EXPECT_TRUE(rep.pass) << r.a << "/" << r.b << " -> " << h;
  }
}

TEST(HarmonicMean, Properties) {
  for (double x : {0.5, 10.0, 100.0}) EXPECT_DOUBLE_EQ(harmonic_mean(x, x), x);
  EXPECT_EQ(harmonic_mean(0.0, 80.0), 0.0);
  EXPECT_EQ(harmonic_mean(0.0, 0.0), 0.0);
  EXPECT_THROW(harmonic_mean(-1.0, 50.0), ParameterError);
  Rng rng(2);
  for (int t = 0; t < 500; ++t) {
    const double a = 100.0 * rng.uniform();
    const double b = 100.0 * rng.uniform();
    EXPECT_LE(harmonic_mean(a, b), 0.5 * (a + b) + 1e-12);
    EXPECT_LE(harmonic_mean(a, b), std::max(a, b) + 1e-12);
    EXPECT_GE(harmonic_mean(a, b), std::min(a, b) - 1e-12);
  }
}

TEST(EvalZsl, PerfectRegressorScoresHundred) {
  const Metrics m = eval_zsl(identity_models(), mirror_dataset());
  EXPECT_EQ(m.mean_per_class_acc, 100.0);
  EXPECT_EQ(m.per_class_acc.size(), 2u);
}

TEST(EvalZsl, ConstantRegressorScoresOneOverU) {
  const Dataset d = mirror_dataset();
  const Metrics m = eval_zsl(constant_models(d.attributes.row(3)), d);
  EXPECT_DOUBLE_EQ(m.mean_per_class_acc, 100.0 / 2.0);
  EXPECT_EQ(m.per_class_acc.at(3), 100.0);
  EXPECT_EQ(m.per_class_acc.at(2), 0.0);
}

TEST(EvalZsl, FixedTestIndicesRestrictRows) {
  Dataset d = mirror_dataset();
  d.features.row(10) = d.attributes.row(3);  // would be misclassified
  d.test_idx = {0, 11, 12, 15};
  EXPECT_EQ(eval_zsl(identity_models(), d).mean_per_class_acc, 100.0);
  d.test_idx.push_back(10);
  EXPECT_LT(eval_zsl(identity_models(), d).mean_per_class_acc, 100.0);
}

TEST(EvalGzsl, PerfectRegressorGivesHundredEverywhere) {
  const Dataset d = mirror_dataset();
  const GzslMetrics g = eval_gzsl(identity_models(), d, split_gzsl(d, 0.8, 0));
  EXPECT_EQ(g.A, 100.0);
  EXPECT_EQ(g.B, 100.0);
  EXPECT_EQ(g.H, 100.0);
}

TEST(EvalGzsl, HIsHarmonicMeanOfAB) {
  Dataset d = mirror_dataset();
  Rng rng(3);
  d.features += testutil::random_tensor(20, 3, rng, 1.5);
  const GzslSplit s = split_gzsl(d, 0.8, 0);
  const GzslMetrics g = eval_gzsl(identity_models(), d, s);
  EXPECT_EQ(g.H, harmonic_mean(g.A, g.B));
  EXPECT_EQ(g.A, g.unseen.mean_per_class_acc);
  EXPECT_EQ(g.B, g.seen.mean_per_class_acc);
}

TEST(EvalGzsl, SeenBiasedRegressorHasZeroUnseenAccuracy) {
  const Dataset d = mirror_dataset();
  const GzslMetrics g = eval_gzsl(constant_models(d.attributes.row(0)), d, split_gzsl(d, 0.8, 0));
  EXPECT_EQ(g.A, 0.0);
  EXPECT_DOUBLE_EQ(g.B, 50.0);
  EXPECT_EQ(g.H, 0.0);
}

TEST(Evaluate, ScoreFollowsProtocol) {
  TrainedModel t;
  t.models = identity_models();
  const Dataset d = mirror_dataset();
  const EvalResult z = evaluate(t, d);
  EXPECT_TRUE(z.zsl.has_value());
  EXPECT_EQ(z.score(), 100.0);
  t.config.protocol = Protocol::gzsl;
  const EvalResult g = evaluate(t, d);
  ASSERT_TRUE(g.gzsl.has_value());
  EXPECT_EQ(g.score(), g.gzsl->H);
}

TEST(MetricsOutput, JsonParsesAndCarriesHeadline) {
  TrainedModel t;
  t.models = identity_models();
  const Dataset d = mirror_dataset();
  const std::string zs = metrics_json(evaluate(t, d), 42);
  EXPECT_EQ(zs.find('\n'), zs.size() - 1);
  const auto zj = nlohmann::json::parse(zs);
  EXPECT_EQ(zj["protocol"], "zsl");
  EXPECT_EQ(zj["seed"], 42);
  EXPECT_EQ(zj["mean_per_class_acc"], 100.0);
  t.config.protocol = Protocol::gzsl;
  const auto gj = nlohmann::json::parse(metrics_json(evaluate(t, d), 42));
  EXPECT_EQ(gj["H"], 100.0);
  EXPECT_TRUE(gj.contains("A"));
  EXPECT_TRUE(gj.contains("B"));
  EXPECT_EQ(metrics_csv(evaluate(t, d)).rfind("metric,value\n", 0), 0u);
}

TEST(Ablation, FiveNamedSettings) {
  const auto& s = ablation_settings();
  ASSERT_EQ(s.size(), 5u);
  const std::vector<std::string> names = {"OBTL", "CL", "OCD+OBTL", "OCD+CL", "OCD+OBTL+CL"};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(s[i].name, names[i]);
    EXPECT_EQ(s[i].use_ocd, s[i].name.find("OCD") != std::string::npos);
    EXPECT_EQ(s[i].use_obtl, s[i].name.find("OBTL") != std::string::npos);
    EXPECT_EQ(s[i].use_cl, s[i].name.find("CL") != std::string::npos);
  }
}

TEST(Ablation, CsvLayout) {
  std::vector<AblationRow> rows;
  for (const auto& s : ablation_settings()) rows.push_back({s, 50.0});
  const std::string csv = ablation_csv(rows);
  EXPECT_EQ(csv.rfind("setting,use_ocd,use_obtl,use_cl,accuracy\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
}

TEST(Sweep, ConfigAdjustsSigmaBelowSigmaPrime) {
  TrainConfig base;
  const TrainConfig a = sweep_config(base, SweepParam::sigma_prime_hp, 0.5);
  EXPECT_EQ(a.hp.sigma_prime_hp, 0.5);
  EXPECT_EQ(a.hp.sigma_hp, 0.12);
  const TrainConfig b = sweep_config(base, SweepParam::sigma_prime_hp, 0.05);
  EXPECT_EQ(b.hp.sigma_hp, 0.025);
  EXPECT_NO_THROW(b.validate());
  const TrainConfig c = sweep_config(base, SweepParam::ocd_samples_per_class, 300);
  EXPECT_EQ(c.hp.ocd_samples_per_class, 300u);
  EXPECT_THROW(sweep_config(base, SweepParam::ocd_samples_per_class, 0), ParameterError);
  EXPECT_EQ(parse_sweep_param(to_string(SweepParam::sigma_prime_hp)), SweepParam::sigma_prime_hp);
}

TEST(Sweep, CsvAndSvgOutputs) {
  const std::vector<SweepPoint> pts = {{0.1, 0.05, 60.0}, {0.5, 0.12, 80.0}, {0.9, 0.12, 75.0}};
  const std::string csv = sweep_csv(SweepParam::sigma_prime_hp, pts);
  EXPECT_EQ(csv.rfind("sigma_prime_hp,sigma_hp,accuracy\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  const std::string svg = sweep_svg(SweepParam::sigma_prime_hp, pts);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("<polyline"), std::string::npos);
  EXPECT_EQ(std::count(svg.begin(), svg.end(), '<'), std::count(svg.begin(), svg.end(), '>'));
}
