#include "ocdcvae/losses.hpp"

#include "ocdcvae/error.hpp"

#include <cmath>
#include <limits>
#include <map>

namespace ocdcvae {

void Hyperparams::validate() const {
  if (lambda_c < 0.0 || lambda_R < 0.0 || lambda_reg < 0.0) {
    throw ParameterError("lambda weights must be >= 0");
  }
  if (!(sigma_hp > 0.0) || !(sigma_prime_hp > 0.0)) throw ParameterError("sigmas must be > 0");
  if (!(alpha > 0.0)) throw ParameterError("alpha must be > 0");
  if (batch_size < 2) throw ParameterError("batch_size must be >= 2");
  if (latent_dim < 1 || hidden_dim < 1) throw ParameterError("network widths must be >= 1");
  if (ocd_samples_per_class < 1) throw ParameterError("ocd_samples_per_class must be >= 1");
  if (!(center_lr > 0.0 && center_lr <= 1.0)) throw ParameterError("center_lr must lie in (0, 1]");
  if (!(optimizer.lr > 0.0)) throw ParameterError("learning rate must be > 0");
}

Var kl_divergence(Var mu, Var logvar) {
  if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols()) {
    throw DimensionError("kl_divergence: mu " + shape_string(mu.value()) + " vs logvar " +
                         shape_string(logvar.value()));
  }
  const Tensor2& m = mu.value();
  const Tensor2& lv = logvar.value();
  const double inv_n = 1.0 / static_cast<double>(m.rows());
  Tensor2 var = lv.array().exp().matrix();
  Tensor2 out(1, 1);
  out(0, 0) = 0.5 * inv_n * (m.array().square() + var.array() - 1.0 - lv.array()).sum();
  require_finite(out, "kl_divergence");
  Tensor2 mv = m;
  return mu.graph()->record(
      std::move(out), {mu, logvar},
      [mv = std::move(mv), var = std::move(var), inv_n](const Tensor2& go,
                                                        std::span<Tensor2* const> gi) {
        const double k = go(0, 0) * inv_n;
        if (gi[0]) *gi[0] += k * mv;
        if (gi[1]) gi[1]->array() += 0.5 * k * (var.array() - 1.0);
      });
}

Var cvae_loss(Var x, Var x_hat, Var mu, Var logvar) {
  const Var terms[] = {mean_row_sq_dist(x_hat, x), kl_divergence(mu, logvar)};
  const double weights[] = {1.0, 1.0};
  return weighted_sum(terms, weights);
}

double triplet_loss(std::span<const double> fa, std::span<const double> fp,
                    std::span<const double> fn, double alpha) {
  if (fa.size() != fp.size() || fa.size() != fn.size()) {
    throw DimensionError("triplet_loss: embedding sizes differ");
  }
  double dp = 0.0;
  double dn = 0.0;
  for (std::size_t j = 0; j < fa.size(); ++j) {
    dp += (fa[j] - fp[j]) * (fa[j] - fp[j]);
    dn += (fa[j] - fn[j]) * (fa[j] - fn[j]);
  }
  return std::max(0.0, dp - dn + alpha);
}

std::vector<TripletIndex> mine_batch_triplets(const Tensor2& embeddings,
                                              std::span<const ClassId> labels, MiningMode mode) {
  const auto n = static_cast<std::uint32_t>(embeddings.rows());
  if (labels.size() != n) throw DimensionError("mine_batch_triplets: one label per row required");

  std::map<ClassId, std::vector<std::uint32_t>> by_class;
  for (std::uint32_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
  std::vector<TripletIndex> out;
  if (by_class.size() < 2) return out;

  Tensor2 dist;
  if (mode == MiningMode::hardest_negative) {
    dist.resize(n, n);
    for (std::uint32_t i = 0; i < n; ++i) {
      for (std::uint32_t j = 0; j < n; ++j) {
        dist(i, j) = (embeddings.row(i) - embeddings.row(j)).squaredNorm();
      }
    }
  }

  for (const auto& [c, members] : by_class) {
    for (std::size_t ia = 0; ia < members.size(); ++ia) {
      const std::uint32_t a = members[ia];
      std::uint32_t hardest = 0;
      if (mode == MiningMode::hardest_negative) {
        double best = std::numeric_limits<double>::infinity();
        for (std::uint32_t k = 0; k < n; ++k) {
          if (labels[k] != c && dist(a, k) < best) {
            best = dist(a, k);
            hardest = k;
          }
        }
      }
      for (std::size_t ip = ia + 1; ip < members.size(); ++ip) {
        const std::uint32_t p = members[ip];
        if (mode == MiningMode::hardest_negative) {
          out.push_back({a, p, hardest});
        } else {
          for (std::uint32_t k = 0; k < n; ++k) {
            if (labels[k] != c) out.push_back({a, p, k});
          }
        }
      }
    }
  }
  return out;
}

Var obtl_loss(Var embeddings, std::span<const ClassId> labels, double alpha, MiningMode mode) {
  const Tensor2& f = embeddings.value();
  auto triplets = mine_batch_triplets(f, labels, mode);
  Tensor2 out = Tensor2::Zero(1, 1);
  Tensor2 grad = Tensor2::Zero(f.rows(), f.cols());
  if (!triplets.empty()) {
    const double inv_t = 1.0 / static_cast<double>(triplets.size());
    double total = 0.0;
    for (const auto& t : triplets) {
      const auto fa = f.row(t.anchor);
      const auto fp = f.row(t.positive);
      const auto fn = f.row(t.negative);
      const double hinge = (fa - fp).squaredNorm() - (fa - fn).squaredNorm() + alpha;
      // A hinge at exactly zero is inactive: no loss and no gradient.
      if (hinge <= 0.0) continue;
      total += hinge;
      grad.row(t.anchor) += 2.0 * inv_t * (fn - fp);
      grad.row(t.positive) += 2.0 * inv_t * (fp - fa);
      grad.row(t.negative) += 2.0 * inv_t * (fa - fn);
    }
    out(0, 0) = total * inv_t;
  }
  require_finite(out, "obtl_loss");
  return embeddings.graph()->record(
      std::move(out), {embeddings},
      [grad = std::move(grad)](const Tensor2& go, std::span<Tensor2* const> gi) {
        if (gi[0]) *gi[0] += go(0, 0) * grad;
      });
}

Var center_loss(Var embeddings, std::span<const ClassId> labels, const Centers& centers) {
  const Tensor2& f = embeddings.value();
  if (labels.size() != static_cast<std::size_t>(f.rows())) {
    throw DimensionError("center_loss: one label per row required");
  }
  if (f.rows() == 0) throw DimensionError("center_loss on an empty batch");
  if (centers.values.cols() != f.cols()) throw DimensionError("center_loss: center width mismatch");
  Tensor2 diff(f.rows(), f.cols());
  for (Index i = 0; i < f.rows(); ++i) {
    const ClassId c = labels[static_cast<std::size_t>(i)];
    if (!centers.has(c)) throw StateError("center_loss: class " + std::to_string(c) + " has no center");
    diff.row(i) = f.row(i) - centers.values.row(c);
  }
  const double inv_n = 1.0 / static_cast<double>(f.rows());
  Tensor2 out(1, 1);
  out(0, 0) = 0.5 * inv_n * diff.squaredNorm();
  require_finite(out, "center_loss");
  return embeddings.graph()->record(
      std::move(out), {embeddings},
      [diff = std::move(diff), inv_n](const Tensor2& go, std::span<Tensor2* const> gi) {
        if (gi[0]) *gi[0] += go(0, 0) * inv_n * diff;
      });
}

namespace {

std::map<ClassId, std::pair<Eigen::RowVectorXd, Index>> class_means(const Tensor2& f,
                                                                      std::span<const ClassId> labels) {
  if (labels.size() != static_cast<std::size_t>(f.rows())) {
    throw DimensionError("centers: one label per row required");
  }
  std::map<ClassId, std::pair<Eigen::RowVectorXd, Index>> acc;
  for (Index i = 0; i < f.rows(); ++i) {
    auto [it, fresh] = acc.try_emplace(labels[static_cast<std::size_t>(i)],
                                       Eigen::RowVectorXd::Zero(f.cols()), 0);
    it->second.first += f.row(i);
    ++it->second.second;
  }
  for (auto& [c, m] : acc) m.first /= static_cast<double>(m.second);
  return acc;
}

}  // namespace

void init_missing_centers(Centers& centers, const Tensor2& embeddings,
                          std::span<const ClassId> labels) {
  for (const auto& [c, mean] : class_means(embeddings, labels)) {
    if (c >= centers.values.rows()) throw DimensionError("centers: class id out of range");
    if (!centers.has(c)) {
      centers.values.row(c) = mean.first;
      centers.present[c] = 1;
    }
  }
}

Centers update_centers(Centers centers, const Tensor2& embeddings,
                       std::span<const ClassId> labels, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ParameterError("update_centers: gamma must lie in (0, 1]");
  for (const auto& [c, mean] : class_means(embeddings, labels)) {
    if (c >= centers.values.rows()) throw DimensionError("centers: class id out of range");
    if (!centers.has(c)) {
      centers.values.row(c) = mean.first;
      centers.present[c] = 1;
      continue;
    }
    centers.values.row(c) -= gamma * (centers.values.row(c) - mean.first);
  }
  return centers;
}

Var attr_regression_loss(Var a_hat, Var a_true) { return mean_row_sq_dist(a_hat, a_true); }

Var lc_loss(Regressor& regressor, Var x_hat_generated, Var a_cond, bool regressor_trainable) {
  if (x_hat_generated.rows() != a_cond.rows()) {
    throw DimensionError("lc_loss: generated rows and attribute rows differ");
  }
  return mean_row_sq_dist(regressor.forward(*x_hat_generated.graph(), x_hat_generated, regressor_trainable),
                          a_cond);
}

Var lreg_loss(Decoder& decoder, Var x_real, Var a_of_x, Rng& rng, bool decoder_trainable) {
  if (x_real.rows() != a_of_x.rows()) throw DimensionError("lreg_loss: rows not aligned");
  Graph& g = *x_real.graph();
  const Tensor2 z = sample_gaussian(Tensor2::Zero(x_real.rows(), decoder.latent_dim()), 1.0, rng);
  return mean_row_sq_dist(decoder.forward(g, g.constant(z), a_of_x, decoder_trainable), x_real);
}

Var phase3_objective(const Hyperparams& h, const Phase3Parts& parts) {
  const Var terms[] = {parts.lc, parts.lreg, parts.obtl, parts.cl};
  const double weights[] = {h.lambda_c, h.lambda_reg, 1.0, 1.0};
  return weighted_sum(terms, weights);
}

double phase3_objective(const Hyperparams& h, double lc, double lreg, double obtl, double cl) {
  for (double v : {lc, lreg, obtl, cl}) {
    if (!std::isfinite(v)) throw NumericError("phase3_objective: non-finite part");
  }
  return h.lambda_c * lc + h.lambda_reg * lreg + obtl + cl;
}

double phase2_objective(const Hyperparams& h, double obtl, double cl, double attr) {
  return obtl + cl + h.lambda_R * attr;
}

}  // namespace ocdcvae
