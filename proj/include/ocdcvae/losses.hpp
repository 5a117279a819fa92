#pragma once

#include "ocdcvae/dataset.hpp"
#include "ocdcvae/graph.hpp"
#include "ocdcvae/models.hpp"
#include "ocdcvae/numgrad.hpp"
#include "ocdcvae/tensor.hpp"

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

namespace ocdcvae {

struct Hyperparams {
  double lambda_c = 0.1;
  double lambda_R = 0.1;
  double lambda_reg = 0.1;
  std::uint32_t batch_size = 256;
  double mu_hp = 0.0;
  double sigma_hp = 0.12;
  double sigma_prime_hp = 0.5;
  double alpha = 0.4;
  Index latent_dim = 100;
  Index hidden_dim = 512;
  std::uint32_t ocd_samples_per_class = 500;
  double center_lr = 0.5;
  AdamConfig optimizer;

  // Throws ParameterError unless every lambda >= 0, sigmas > 0, alpha > 0,
  // batch_size >= 2 and 0 < center_lr <= 1.
  void validate() const;
};

enum class MiningMode { all_valid, hardest_negative };

struct TripletIndex {
  std::uint32_t anchor;
  std::uint32_t positive;
  std::uint32_t negative;

  auto operator<=>(const TripletIndex&) const = default;
};

// Mean over rows of 1/2 sum_j (mu^2 + sigma^2 - 1 - log sigma^2) against N(0, I).
Var kl_divergence(Var mu, Var logvar);

// Mean over rows of ||x - x_hat||^2 (unit-variance Gaussian likelihood up to
// constants) plus kl_divergence(mu, logvar).
Var cvae_loss(Var x, Var x_hat, Var mu, Var logvar);

// max(0, ||fa - fp||^2 - ||fa - fn||^2 + alpha)
double triplet_loss(std::span<const double> fa, std::span<const double> fp,
                    std::span<const double> fn, double alpha);

// Online mining inside one batch. Anchor-positive pairs are the unordered
// same-class pairs (anchor < positive). all_valid pairs each with every
// other-class sample; hardest_negative keeps only the negative closest to
// the anchor (ties to the smallest index).
std::vector<TripletIndex> mine_batch_triplets(const Tensor2& embeddings,
                                              std::span<const ClassId> labels, MiningMode mode);

// Mean triplet_loss over the mined triplets, 0 when none are mined. Gradients
// flow back to the rows that took part in each active triplet.
Var obtl_loss(Var embeddings, std::span<const ClassId> labels, double alpha, MiningMode mode);

// 1/2 * mean over rows of ||x_i - center(label_i)||^2. Centers are constants.
Var center_loss(Var embeddings, std::span<const ClassId> labels, const Centers& centers);

// c <- c - gamma * (c - batch class mean) for each class in the batch.
// A class without a center is initialized to its batch mean.
Centers update_centers(Centers centers, const Tensor2& embeddings,
                       std::span<const ClassId> labels, double gamma);
// Gives every class in the batch that lacks a center its batch mean.
void init_missing_centers(Centers& centers, const Tensor2& embeddings,
                          std::span<const ClassId> labels);

// Mean over rows of ||a_hat - a||^2.
Var attr_regression_loss(Var a_hat, Var a_true);

// Mean over rows of ||p_R(x_hat) - a||^2; x_hat usually carries decoder gradients.
Var lc_loss(Regressor& regressor, Var x_hat_generated, Var a_cond, bool regressor_trainable = true);

// z ~ N(0, I) per row; mean over rows of ||x_real - p_G(z, a)||^2.
Var lreg_loss(Decoder& decoder, Var x_real, Var a_of_x, Rng& rng, bool decoder_trainable = true);

struct Phase3Parts {
  Var lc;
  Var lreg;
  Var obtl;
  Var cl;
};

// lambda_c * lc + lambda_reg * lreg + obtl + cl
Var phase3_objective(const Hyperparams& h, const Phase3Parts& parts);
double phase3_objective(const Hyperparams& h, double lc, double lreg, double obtl, double cl);

// obtl + cl + lambda_R * attr_regression (regressor pretraining objective).
double phase2_objective(const Hyperparams& h, double obtl, double cl, double attr);

}  // namespace ocdcvae
