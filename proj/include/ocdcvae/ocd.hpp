#pragma once

#include "ocdcvae/dataset.hpp"
#include "ocdcvae/models.hpp"
#include "ocdcvae/rng.hpp"
#include "ocdcvae/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ocdcvae {

// Knobs of the over-complete distribution generator.
struct OCDParams {
  double mu_hp = 0.0;
  // 0 is accepted as a limiting test mode (every draw equals mu_hp).
  double sigma_hp = 0.12;
  double sigma_prime_hp = 0.5;
  std::uint32_t samples_per_class = 500;
  bool forbid_fixed_points = true;
  // Latent means are shuffled inside consecutive blocks of this many rows
  // after the generated rows have been mixed across classes.
  std::uint32_t shuffle_block = 256;

  // Requires sigma_prime_hp > sigma_hp >= 0, samples_per_class >= 1 and
  // shuffle_block >= 2.
  void validate() const;
};

// Decoded draws with the class attributes and labels they were conditioned on.
struct GeneratedSamples {
  Tensor2 z;      // latent codes fed to the decoder
  Tensor2 x;      // decoded samples
  Tensor2 attrs;  // conditioning attributes per row
  std::vector<ClassId> labels;
};

struct OCDBatch {
  Tensor2 x_oc;   // synthesized hard samples
  Tensor2 attrs;  // unchanged conditioning attributes of each row's class
  std::vector<ClassId> labels;
  // Diagnostics: the latent draw, its midpoint mean, the encoder's mean and
  // sigma for the approximated sample, and the row each mean was paired with.
  Tensor2 z_oc;
  Tensor2 mu_oc;
  Tensor2 mu;
  Tensor2 sigma;
  std::vector<std::uint32_t> partner;
};

// For each class c (row of class_attrs, id class_ids[c]), n_per_class draws
// z ~ N(mu_hp, sigma_hp^2 I) decoded with a_c. Rows come out in class blocks.
GeneratedSamples approximate_distribution(const Decoder& decoder, const Tensor2& class_attrs,
                                          std::span<const ClassId> class_ids,
                                          std::uint32_t n_per_class, const OCDParams& params,
                                          Rng& rng);

// Uniform random permutation of 0..n-1; a derangement when requested
// (rejection sampling). Derangements need n >= 2.
std::vector<std::uint32_t> random_permutation(std::uint32_t n, Rng& rng, bool forbid_fixed_points);

// Rows of mu permuted: out.row(i) = mu.row(perm[i]).
Tensor2 shuffle_means(const Tensor2& mu, Rng& rng, bool forbid_fixed_points);
// Same as above and also reports the permutation used.
Tensor2 shuffle_means(const Tensor2& mu, Rng& rng, bool forbid_fixed_points,
                      std::vector<std::uint32_t>& perm);

// approximate_distribution -> encode -> shuffle means within mixed blocks ->
// mu_oc = (mu + mu') / 2 -> z ~ N(mu_oc, sigma_prime_hp^2 I) -> decode with
// the original attributes. Output rows follow the class-block order.
OCDBatch generate_ocd(const Encoder& encoder, const Decoder& decoder, const Tensor2& class_attrs,
                      std::span<const ClassId> class_ids, const OCDParams& params, Rng& rng);

}  // namespace ocdcvae
