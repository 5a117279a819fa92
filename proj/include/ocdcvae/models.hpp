#pragma once

#include "ocdcvae/dataset.hpp"
#include "ocdcvae/graph.hpp"
#include "ocdcvae/param_store.hpp"
#include "ocdcvae/rng.hpp"
#include "ocdcvae/tensor.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace ocdcvae {

inline constexpr double kSigmaFloor = 1e-12;

struct ModelConfig {
  Index feature_dim = 0;
  Index attribute_dim = 0;
  Index latent_dim = 100;
  Index hidden_dim = 512;
};

// p_E(z|x): feature_dim -> hidden -> (mu, logvar), each latent_dim wide.
class Encoder {
 public:
  Encoder() = default;
  Encoder(Index feature_dim, Index hidden_dim, Index latent_dim, Rng& rng);

  struct Output {
    Var mu;
    Var logvar;
  };
  Output forward(Graph& g, Var x, bool trainable = true);
  // Graph-free evaluation; safe to call concurrently on a frozen encoder.
  std::pair<Tensor2, Tensor2> eval(const Tensor2& x) const;

  Index input_dim() const { return input_dim_; }
  Index latent_dim() const { return latent_dim_; }

  ParamStore params;

 private:
  Index input_dim_ = 0;
  Index latent_dim_ = 0;
};

// p_G(x_hat | z, a): (latent_dim + attribute_dim) -> hidden -> feature_dim.
class Decoder {
 public:
  Decoder() = default;
  Decoder(Index latent_dim, Index attribute_dim, Index hidden_dim, Index feature_dim, Rng& rng);

  Var forward(Graph& g, Var z, Var a, bool trainable = true);
  Tensor2 eval(const Tensor2& z, const Tensor2& a) const;

  Index latent_dim() const { return latent_dim_; }
  Index attribute_dim() const { return attribute_dim_; }
  Index output_dim() const { return output_dim_; }

  ParamStore params;

 private:
  Index latent_dim_ = 0;
  Index attribute_dim_ = 0;
  Index output_dim_ = 0;
};

// p_R(a_hat | x): feature_dim -> hidden -> attribute_dim. Its output is also
// the embedding used by the triplet and center losses.
class Regressor {
 public:
  Regressor() = default;
  Regressor(Index feature_dim, Index hidden_dim, Index attribute_dim, Rng& rng);

  Var forward(Graph& g, Var x, bool trainable = true);
  Tensor2 eval(const Tensor2& x) const;

  Index input_dim() const { return input_dim_; }
  Index output_dim() const { return output_dim_; }

  ParamStore params;

 private:
  Index input_dim_ = 0;
  Index output_dim_ = 0;
};

// Learned per-class centers in regressor-output space.
struct Centers {
  Tensor2 values;                     // C x L
  std::vector<std::uint8_t> present;  // 1 once class c has a center
  double learning_rate = 0.5;

  Centers() = default;
  Centers(Index num_classes, Index dim, double lr)
      : values(Tensor2::Zero(num_classes, dim)),
        present(static_cast<std::size_t>(num_classes), 0),
        learning_rate(lr) {}

  bool has(ClassId c) const { return c < present.size() && present[c] != 0; }
  bool operator==(const Centers&) const = default;
};

struct Models {
  ModelConfig config;
  Encoder encoder;
  Decoder decoder;
  Regressor regressor;
  Centers centers;
  bool phase1_complete = false;
};

// Fresh networks with Glorot initialization drawn from `rng`.
Models init_models(const ModelConfig& cfg, Index num_classes, double center_lr, Rng& rng);

// Row-wise mu and log sigma^2 of p_E(z|x).
std::pair<Tensor2, Tensor2> encode(const Encoder& enc, const Tensor2& x);
// z = mu + max(exp(logvar / 2), 1e-12) * eps, eps ~ N(0, I).
Tensor2 reparameterize(const Tensor2& mu, const Tensor2& logvar, Rng& rng);
// Differentiable variant; eps is drawn from `rng` and enters as a constant.
Var reparameterize(Var mu, Var logvar, Rng& rng);
Tensor2 decode(const Decoder& dec, const Tensor2& z, const Tensor2& a);
Tensor2 regress(const Regressor& reg, const Tensor2& x);

// argmin over candidates of ||a_hat - a_c||_2, ties to the smallest class id.
ClassId classify(std::span<const double> a_hat, const Tensor2& attributes,
                 std::span<const ClassId> candidates);

// Gathers rows of `src` in the given order.
Tensor2 gather_rows(const Tensor2& src, std::span<const std::uint32_t> rows);

}  // namespace ocdcvae
