#pragma once

#include "ocdcvae/graph.hpp"
#include "ocdcvae/param_store.hpp"
#include "ocdcvae/rng.hpp"
#include "ocdcvae/tensor.hpp"

#include <functional>
#include <span>
#include <string>

namespace ocdcvae {

inline constexpr double kLeakySlope = 0.2;

enum class Activation { linear, leaky_relu, sigmoid };

// Differentiable primitives. All inputs must come from the same graph.
Var matmul(Var a, Var b);
// Adds a 1 x n row to every row of x.
Var add_row(Var x, Var row);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var exp(Var a);
Var leaky_relu(Var a, double slope = kLeakySlope);
Var sigmoid(Var a);
Var activate(Var a, Activation act);
Var concat_cols(Var a, Var b);
Var concat_rows(Var a, Var b);
Var slice_cols(Var a, Index begin, Index count);
Var sum(Var a);
// (1/rows) * sum_i ||a_i - b_i||^2, a 1x1 node.
Var mean_row_sq_dist(Var a, Var b);
Var weighted_sum(std::span<const Var> terms, std::span<const double> weights);

// activation(input * W + b) with W = "<layer>.W" and b = "<layer>.b" from
// `params`. When `trainable` is false the parameters enter the graph as
// constants and receive no gradient.
Var dense_forward(Graph& g, ParamStore& params, const std::string& layer, Var input,
                  Activation act, bool trainable = true);

enum class ZeroSigma { reject, allow };

// out[i, j] = mu[i, j] + sigma[i, j] * eps, eps ~ N(0, 1), drawn row-major.
// A zero sigma is accepted only with ZeroSigma::allow (limiting test mode).
Tensor2 sample_gaussian(const Tensor2& mu, const Tensor2& sigma, Rng& rng,
                        ZeroSigma zero = ZeroSigma::reject);
Tensor2 sample_gaussian(const Tensor2& mu, double sigma, Rng& rng,
                        ZeroSigma zero = ZeroSigma::reject);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected adaptive-moment step over every parameter, then clears
// the gradients and advances the step counter.
void optimizer_step(ParamStore& params, const AdamConfig& cfg);

using LossBuilder = std::function<Var(Graph&)>;

// Max over all parameter entries of |analytic - central| / max(1, |central|).
// `loss_fn` must read its parameters from `stores` and be deterministic.
double finite_diff_check(const LossBuilder& loss_fn, std::span<ParamStore* const> stores,
                         double eps = 1e-5);
double finite_diff_check(const LossBuilder& loss_fn, ParamStore& store, double eps = 1e-5);

}  // namespace ocdcvae
