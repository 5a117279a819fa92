#include "ocdcvae/models.hpp"

#include "ocdcvae/error.hpp"
#include "ocdcvae/numgrad.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ocdcvae {

namespace {

Tensor2 dense_eval(const ParamStore& p, const std::string& layer, const Tensor2& x, Activation act) {
  const Tensor2& w = p.at(layer + ".W").value;
  const Tensor2& b = p.at(layer + ".b").value;
  if (x.cols() != w.rows()) {
    throw DimensionError("layer '" + layer + "' expects " + std::to_string(w.rows()) +
                         " input columns, got " + std::to_string(x.cols()));
  }
  Tensor2 out = x * w;
  out.rowwise() += b.row(0);
  switch (act) {
    case Activation::linear:
      break;
    case Activation::leaky_relu:
      out = out.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
      break;
    case Activation::sigmoid:
      out = (1.0 / (1.0 + (-out.array()).exp())).matrix();
      break;
  }
  require_finite(out, layer.c_str());
  return out;
}

}  // namespace

Encoder::Encoder(Index feature_dim, Index hidden_dim, Index latent_dim, Rng& rng)
    : input_dim_(feature_dim), latent_dim_(latent_dim) {
  init_dense(params, "fc1", feature_dim, hidden_dim, rng);
  init_dense(params, "mu", hidden_dim, latent_dim, rng);
  init_dense(params, "logvar", hidden_dim, latent_dim, rng);
}

Encoder::Output Encoder::forward(Graph& g, Var x, bool trainable) {
  Var h = dense_forward(g, params, "fc1", x, Activation::leaky_relu, trainable);
  return {dense_forward(g, params, "mu", h, Activation::linear, trainable),
          dense_forward(g, params, "logvar", h, Activation::linear, trainable)};
}

std::pair<Tensor2, Tensor2> Encoder::eval(const Tensor2& x) const {
  const Tensor2 h = dense_eval(params, "fc1", x, Activation::leaky_relu);
  return {dense_eval(params, "mu", h, Activation::linear),
          dense_eval(params, "logvar", h, Activation::linear)};
}

Decoder::Decoder(Index latent_dim, Index attribute_dim, Index hidden_dim, Index feature_dim, Rng& rng)
    : latent_dim_(latent_dim), attribute_dim_(attribute_dim), output_dim_(feature_dim) {
  init_dense(params, "fc1", latent_dim + attribute_dim, hidden_dim, rng);
  init_dense(params, "out", hidden_dim, feature_dim, rng);
}

Var Decoder::forward(Graph& g, Var z, Var a, bool trainable) {
  if (z.rows() != a.rows()) {
    throw DimensionError("decode: z has " + std::to_string(z.rows()) + " rows, a has " +
                         std::to_string(a.rows()));
  }
  Var h = dense_forward(g, params, "fc1", concat_cols(z, a), Activation::leaky_relu, trainable);
  return dense_forward(g, params, "out", h, Activation::linear, trainable);
}

Tensor2 Decoder::eval(const Tensor2& z, const Tensor2& a) const {
  if (z.rows() != a.rows()) {
    throw DimensionError("decode: z has " + std::to_string(z.rows()) + " rows, a has " +
                         std::to_string(a.rows()));
  }
  Tensor2 za(z.rows(), z.cols() + a.cols());
  za.leftCols(z.cols()) = z;
  za.rightCols(a.cols()) = a;
  return dense_eval(params, "out", dense_eval(params, "fc1", za, Activation::leaky_relu),
                    Activation::linear);
}

Regressor::Regressor(Index feature_dim, Index hidden_dim, Index attribute_dim, Rng& rng)
    : input_dim_(feature_dim), output_dim_(attribute_dim) {
  init_dense(params, "fc1", feature_dim, hidden_dim, rng);
  init_dense(params, "out", hidden_dim, attribute_dim, rng);
}

Var Regressor::forward(Graph& g, Var x, bool trainable) {
  Var h = dense_forward(g, params, "fc1", x, Activation::leaky_relu, trainable);
  return dense_forward(g, params, "out", h, Activation::linear, trainable);
}

Tensor2 Regressor::eval(const Tensor2& x) const {
  return dense_eval(params, "out", dense_eval(params, "fc1", x, Activation::leaky_relu),
                    Activation::linear);
}

Models init_models(const ModelConfig& cfg, Index num_classes, double center_lr, Rng& rng) {
  if (cfg.feature_dim < 1 || cfg.attribute_dim < 1 || cfg.latent_dim < 1 || cfg.hidden_dim < 1) {
    throw ParameterError("model dimensions must be >= 1");
  }
  Models m;
  m.config = cfg;
  Rng enc_rng = rng.split(1);
  Rng dec_rng = rng.split(2);
  Rng reg_rng = rng.split(3);
  m.encoder = Encoder(cfg.feature_dim, cfg.hidden_dim, cfg.latent_dim, enc_rng);
  m.decoder = Decoder(cfg.latent_dim, cfg.attribute_dim, cfg.hidden_dim, cfg.feature_dim, dec_rng);
  m.regressor = Regressor(cfg.feature_dim, cfg.hidden_dim, cfg.attribute_dim, reg_rng);
  m.centers = Centers(num_classes, cfg.attribute_dim, center_lr);
  return m;
}

std::pair<Tensor2, Tensor2> encode(const Encoder& enc, const Tensor2& x) { return enc.eval(x); }

Tensor2 reparameterize(const Tensor2& mu, const Tensor2& logvar, Rng& rng) {
  if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols()) {
    throw DimensionError("reparameterize: mu " + shape_string(mu) + " vs logvar " +
                         shape_string(logvar));
  }
  const Tensor2 sigma = (0.5 * logvar.array()).exp().max(kSigmaFloor).matrix();
  return sample_gaussian(mu, sigma, rng);
}

Var reparameterize(Var mu, Var logvar, Rng& rng) {
  if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols()) {
    throw DimensionError("reparameterize: mu " + shape_string(mu.value()) + " vs logvar " +
                         shape_string(logvar.value()));
  }
  Graph& g = *mu.graph();
  const Tensor2 eps = sample_gaussian(Tensor2::Zero(mu.rows(), mu.cols()), 1.0, rng);
  return add(mu, mul(exp(scale(logvar, 0.5)), g.constant(eps)));
}

Tensor2 decode(const Decoder& dec, const Tensor2& z, const Tensor2& a) { return dec.eval(z, a); }

Tensor2 regress(const Regressor& reg, const Tensor2& x) { return reg.eval(x); }

ClassId classify(std::span<const double> a_hat, const Tensor2& attributes,
                 std::span<const ClassId> candidates) {
  if (candidates.empty()) throw ParameterError("classify: empty candidate set");
  if (static_cast<Index>(a_hat.size()) != attributes.cols()) {
    throw DimensionError("classify: a_hat has " + std::to_string(a_hat.size()) +
                         " entries, attributes have " + std::to_string(attributes.cols()));
  }
  const Eigen::Map<const Eigen::RowVectorXd> query(a_hat.data(), static_cast<Index>(a_hat.size()));
  ClassId best = std::numeric_limits<ClassId>::max();
  double best_dist = std::numeric_limits<double>::infinity();
  for (ClassId c : candidates) {
    if (c >= attributes.rows()) throw ParameterError("classify: candidate id out of range");
    const double d = (attributes.row(c) - query).squaredNorm();
    if (d < best_dist || (d == best_dist && c < best)) {
      best = c;
      best_dist = d;
    }
  }
  return best;
}

Tensor2 gather_rows(const Tensor2& src, std::span<const std::uint32_t> rows) {
  Tensor2 out(static_cast<Index>(rows.size()), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= src.rows()) throw DimensionError("gather_rows: row index out of range");
    out.row(static_cast<Index>(i)) = src.row(rows[i]);
  }
  return out;
}

}  // namespace ocdcvae
