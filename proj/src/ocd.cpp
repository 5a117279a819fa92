#include "ocdcvae/ocd.hpp"

#include "ocdcvae/error.hpp"
#include "ocdcvae/numgrad.hpp"

#include <numeric>

namespace ocdcvae {

void OCDParams::validate() const {
  if (!(sigma_hp >= 0.0)) throw ParameterError("ocd: sigma_hp must be >= 0");
  if (!(sigma_prime_hp > sigma_hp)) {
    throw ParameterError("ocd: sigma_prime_hp must exceed sigma_hp");
  }
  if (samples_per_class < 1) throw ParameterError("ocd: samples_per_class must be >= 1");
  if (shuffle_block < 2) throw ParameterError("ocd: shuffle_block must be >= 2");
}

GeneratedSamples approximate_distribution(const Decoder& decoder, const Tensor2& class_attrs,
                                          std::span<const ClassId> class_ids,
                                          std::uint32_t n_per_class, const OCDParams& params,
                                          Rng& rng) {
  params.validate();
  if (static_cast<Index>(class_ids.size()) != class_attrs.rows()) {
    throw DimensionError("approximate_distribution: one class id per attribute row required");
  }
  if (n_per_class < 1) throw ParameterError("approximate_distribution: n_per_class must be >= 1");
  const Index rows = class_attrs.rows() * n_per_class;
  GeneratedSamples out;
  out.attrs.resize(rows, class_attrs.cols());
  out.labels.reserve(static_cast<std::size_t>(rows));
  for (Index c = 0; c < class_attrs.rows(); ++c) {
    for (std::uint32_t k = 0; k < n_per_class; ++k) {
      out.attrs.row(c * n_per_class + k) = class_attrs.row(c);
      out.labels.push_back(class_ids[static_cast<std::size_t>(c)]);
    }
  }
  out.z = sample_gaussian(Tensor2::Constant(rows, decoder.latent_dim(), params.mu_hp),
                          params.sigma_hp, rng, ZeroSigma::allow);
  out.x = decode(decoder, out.z, out.attrs);
  return out;
}

std::vector<std::uint32_t> random_permutation(std::uint32_t n, Rng& rng, bool forbid_fixed_points) {
  if (forbid_fixed_points && n < 2) {
    throw ParameterError("a fixed-point-free shuffle needs at least 2 rows");
  }
  std::vector<std::uint32_t> perm(n);
  for (;;) {
    std::iota(perm.begin(), perm.end(), 0u);
    shuffle(perm.begin(), perm.end(), rng);
    if (!forbid_fixed_points) return perm;
    bool deranged = true;
    for (std::uint32_t i = 0; i < n && deranged; ++i) deranged = perm[i] != i;
    if (deranged) return perm;
  }
}

Tensor2 shuffle_means(const Tensor2& mu, Rng& rng, bool forbid_fixed_points,
                      std::vector<std::uint32_t>& perm) {
  perm = random_permutation(static_cast<std::uint32_t>(mu.rows()), rng, forbid_fixed_points);
  return gather_rows(mu, perm);
}

Tensor2 shuffle_means(const Tensor2& mu, Rng& rng, bool forbid_fixed_points) {
  std::vector<std::uint32_t> perm;
  return shuffle_means(mu, rng, forbid_fixed_points, perm);
}

OCDBatch generate_ocd(const Encoder& encoder, const Decoder& decoder, const Tensor2& class_attrs,
                      std::span<const ClassId> class_ids, const OCDParams& params, Rng& rng) {
  GeneratedSamples approx =
      approximate_distribution(decoder, class_attrs, class_ids, params.samples_per_class, params, rng);
  auto [mu, logvar] = encode(encoder, approx.x);
  const auto n = static_cast<std::uint32_t>(mu.rows());

  // Mix classes, then pair rows inside blocks of shuffle_block. A trailing
  // block of one row is folded into its predecessor so it still gets a partner.
  const auto order = random_permutation(n, rng, false);
  std::vector<std::uint32_t> partner(n);
  for (std::uint32_t start = 0; start < n;) {
    std::uint32_t len = std::min(params.shuffle_block, n - start);
    if (n - start - len == 1) ++len;
    const auto local = random_permutation(len, rng, params.forbid_fixed_points);
    for (std::uint32_t i = 0; i < len; ++i) {
      partner[order[start + i]] = order[start + local[i]];
    }
    start += len;
  }

  OCDBatch out;
  out.mu_oc = 0.5 * (mu + gather_rows(mu, partner));
  out.z_oc = sample_gaussian(out.mu_oc, params.sigma_prime_hp, rng);
  out.x_oc = decode(decoder, out.z_oc, approx.attrs);
  out.attrs = std::move(approx.attrs);
  out.labels = std::move(approx.labels);
  out.sigma = (0.5 * logvar.array()).exp().matrix();
  out.mu = std::move(mu);
  out.partner = std::move(partner);
  return out;
}

}  // namespace ocdcvae
