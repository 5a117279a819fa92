#include "ocdcvae/numgrad.hpp"

#include "ocdcvae/error.hpp"

#include <algorithm>
#include <cmath>

namespace ocdcvae {

namespace {

Graph& same_graph(const Var& a, const Var& b) {
  if (a.graph() == nullptr || a.graph() != b.graph()) {
    throw StateError("operands belong to different graphs");
  }
  return *a.graph();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape " + shape_string(a.value()) + " vs " +
                         shape_string(b.value()));
  }
}

Var checked(Graph& g, Tensor2 value, std::vector<Var> inputs, BackwardFn fn, const char* op) {
  require_finite(value, op);
  return g.record(std::move(value), std::move(inputs), std::move(fn));
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_string(a.value()) + " * " + shape_string(b.value()));
  }
  Tensor2 av = a.value();
  Tensor2 bv = b.value();
  Tensor2 out = av * bv;
  return checked(
      g, std::move(out), {a, b},
      [av = std::move(av), bv = std::move(bv)](const Tensor2& go, std::span<Tensor2* const> gi) {
        if (gi[0]) gi[0]->noalias() += go * bv.transpose();
        if (gi[1]) gi[1]->noalias() += av.transpose() * go;
      },
      "matmul");
}

Var add_row(Var x, Var row) {
  Graph& g = same_graph(x, row);
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw DimensionError("add_row: " + shape_string(x.value()) + " + " + shape_string(row.value()));
  }
  Tensor2 out = x.value().rowwise() + row.value().row(0);
  return checked(
      g, std::move(out), {x, row},
      [](const Tensor2& go, std::span<Tensor2* const> gi) {
        if (gi[0]) *gi[0] += go;
        if (gi[1]) *gi[1] += go.colwise().sum();
      },
      "add_row");
}

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a, b, "add");
  return checked(
      g, a.value() + b.value(), {a, b},
      [](const Tensor2& go, std::span<Tensor2* const> gi) {
        if (gi[0]) *gi[0] += go;
        if (gi[1]) *gi[1] += go;
      },
      "add");
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a, b, "sub");
  return checked(
      g, a.value() - b.value(), {a, b},
      [](const Tensor2& go, std::span<Tensor2* const> gi) {
        if (gi[0]) *gi[0] += go;
        if (gi[1]) *gi[1] -= go;
      },
      "sub");
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a, b, "mul");
  Tensor2 av = a.value();
  Tensor2 bv = b.value();
  Tensor2 out = av.cwiseProduct(bv);
  return checked(
      g, std::move(out), {a, b},
      [av = std::move(av), bv = std::move(bv)](const Tensor2& go, std::span<Tensor2* const> gi) {
        if (gi[0]) *gi[0] += go.cwiseProduct(bv);
        if (gi[1]) *gi[1] += go.cwiseProduct(av);
      },
      "mul");
}

Var scale(Var a, double s) {
  Graph& g = *a.graph();
  return checked(
      g, a.value() * s, {a},
      [s](const Tensor2& go, std::span<Tensor2* const> gi) {
        if (gi[0]) *gi[0] += go * s;
      },
      "scale");
}

Var exp(Var a) {
  Graph& g = *a.graph();
  Tensor2 out = a.value().array().exp().matrix();
  Tensor2 saved = out;
  return checked(
      g, std::move(out), {a},
      [saved = std::move(saved)](const Tensor2& go, std::span<Tensor2* const> gi) {
        if (gi[0]) *gi[0] += go.cwiseProduct(saved);
      },
      "exp");
}

Var leaky_relu(Var a, double slope) {
  Graph& g = *a.graph();
  const Tensor2& in = a.value();
  Tensor2 deriv = (in.array() > 0.0).select(Tensor2::Ones(in.rows(), in.cols()),
                                            Tensor2::Constant(in.rows(), in.cols(), slope));
  Tensor2 out = in.cwiseProduct(deriv);
  return checked(
      g, std::move(out), {a},
      [deriv = std::move(deriv)](const Tensor2& go, std::span<Tensor2* const> gi) {
        if (gi[0]) *gi[0] += go.cwiseProduct(deriv);
      },
      "leaky_relu");
}

Var sigmoid(Var a) {
  Graph& g = *a.graph();
  Tensor2 out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  Tensor2 saved = out;
  return checked(
      g, std::move(out), {a},
      [saved = std::move(saved)](const Tensor2& go, std::span<Tensor2* const> gi) {
        if (gi[0]) *gi[0] += (go.array() * saved.array() * (1.0 - saved.array())).matrix();
      },
      "sigmoid");
}

Var activate(Var a, Activation act) {
  switch (act) {
    case Activation::linear:
      return a;
    case Activation::leaky_relu:
      return leaky_relu(a);
    case Activation::sigmoid:
      return sigmoid(a);
  }
  return a;
}

Var concat_cols(Var a, Var b) {
  Graph& g = same_graph(a, b);
  if (a.rows() != b.rows()) {
    throw DimensionError("concat_cols: " + shape_string(a.value()) + " | " + shape_string(b.value()));
  }
  const Index ca = a.cols();
  const Index cb = b.cols();
  Tensor2 out(a.rows(), ca + cb);
  out.leftCols(ca) = a.value();
  out.rightCols(cb) = b.value();
  return checked(
      g, std::move(out), {a, b},
      [ca, cb](const Tensor2& go, std::span<Tensor2* const> gi) {
        if (gi[0]) *gi[0] += go.leftCols(ca);
        if (gi[1]) *gi[1] += go.rightCols(cb);
      },
      "concat_cols");
}

Var concat_rows(Var a, Var b) {
  Graph& g = same_graph(a, b);
  if (a.cols() != b.cols()) {
    throw DimensionError("concat_rows: " + shape_string(a.value()) + " / " + shape_string(b.value()));
  }
  const Index ra = a.rows();
  const Index rb = b.rows();
  Tensor2 out(ra + rb, a.cols());
  out.topRows(ra) = a.value();
  out.bottomRows(rb) = b.value();
  return checked(
      g, std::move(out), {a, b},
      [ra, rb](const Tensor2& go, std::span<Tensor2* const> gi) {
        if (gi[0]) *gi[0] += go.topRows(ra);
        if (gi[1]) *gi[1] += go.bottomRows(rb);
      },
      "concat_rows");
}

Var slice_cols(Var a, Index begin, Index count) {
  Graph& g = *a.graph();
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw DimensionError("slice_cols out of range for " + shape_string(a.value()));
  }
  Tensor2 out = a.value().middleCols(begin, count);
  return checked(
      g, std::move(out), {a},
      [begin, count](const Tensor2& go, std::span<Tensor2* const> gi) {
        if (gi[0]) gi[0]->middleCols(begin, count) += go;
      },
      "slice_cols");
}

Var sum(Var a) {
  Graph& g = *a.graph();
  Tensor2 out(1, 1);
  out(0, 0) = a.value().sum();
  return checked(
      g, std::move(out), {a},
      [](const Tensor2& go, std::span<Tensor2* const> gi) {
        if (gi[0]) gi[0]->array() += go(0, 0);
      },
      "sum");
}

Var mean_row_sq_dist(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a, b, "mean_row_sq_dist");
  if (a.rows() == 0) throw DimensionError("mean_row_sq_dist on an empty batch");
  Tensor2 diff = a.value() - b.value();
  const double inv_n = 1.0 / static_cast<double>(a.rows());
  Tensor2 out(1, 1);
  out(0, 0) = diff.squaredNorm() * inv_n;
  return checked(
      g, std::move(out), {a, b},
      [diff = std::move(diff), inv_n](const Tensor2& go, std::span<Tensor2* const> gi) {
        const double k = 2.0 * inv_n * go(0, 0);
        if (gi[0]) *gi[0] += k * diff;
        if (gi[1]) *gi[1] -= k * diff;
      },
      "mean_row_sq_dist");
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
  if (terms.empty() || terms.size() != weights.size()) {
    throw DimensionError("weighted_sum needs one weight per term");
  }
  Graph& g = *terms.front().graph();
  Tensor2 out = Tensor2::Zero(1, 1);
  std::vector<Var> inputs(terms.begin(), terms.end());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].graph() != &g) throw StateError("operands belong to different graphs");
    if (terms[i].value().size() != 1) throw DimensionError("weighted_sum terms must be scalars");
    out(0, 0) += weights[i] * terms[i].scalar();
  }
  std::vector<double> w(weights.begin(), weights.end());
  return checked(
      g, std::move(out), std::move(inputs),
      [w = std::move(w)](const Tensor2& go, std::span<Tensor2* const> gi) {
        for (std::size_t i = 0; i < w.size(); ++i) {
          if (gi[i]) (*gi[i])(0, 0) += w[i] * go(0, 0);
        }
      },
      "weighted_sum");
}

Var dense_forward(Graph& g, ParamStore& params, const std::string& layer, Var input,
                  Activation act, bool trainable) {
  Parameter& w = params.at(layer + ".W");
  Parameter& b = params.at(layer + ".b");
  if (input.cols() != w.value.rows()) {
    throw DimensionError("layer '" + layer + "' expects " + std::to_string(w.value.rows()) +
                         " input columns, got " + std::to_string(input.cols()));
  }
  Var wv = trainable ? g.parameter(w) : g.constant(w.value);
  Var bv = trainable ? g.parameter(b) : g.constant(b.value);
  return activate(add_row(matmul(input, wv), bv), act);
}

Tensor2 sample_gaussian(const Tensor2& mu, const Tensor2& sigma, Rng& rng, ZeroSigma zero) {
  if (mu.rows() != sigma.rows() || mu.cols() != sigma.cols()) {
    throw DimensionError("sample_gaussian: mu " + shape_string(mu) + " vs sigma " +
                         shape_string(sigma));
  }
  const double floor = sigma.size() == 0 ? 1.0 : sigma.minCoeff();
  if (floor < 0.0 || (floor == 0.0 && zero == ZeroSigma::reject) || std::isnan(floor)) {
    throw ParameterError("sample_gaussian: sigma must be > 0");
  }
  Tensor2 out(mu.rows(), mu.cols());
  for (Index i = 0; i < mu.size(); ++i) {
    out.data()[i] = mu.data()[i] + sigma.data()[i] * rng.normal();
  }
  return out;
}

Tensor2 sample_gaussian(const Tensor2& mu, double sigma, Rng& rng, ZeroSigma zero) {
  return sample_gaussian(mu, Tensor2::Constant(mu.rows(), mu.cols(), sigma), rng, zero);
}

void optimizer_step(ParamStore& params, const AdamConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw ParameterError("optimizer: lr must be > 0");
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0) {
    throw ParameterError("optimizer: betas must lie in [0, 1)");
  }
  if (!(cfg.eps > 0.0)) throw ParameterError("optimizer: eps must be > 0");
  const auto t = static_cast<double>(params.step() + 1);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : params) {
    require_finite(p.grad, "gradient");
    p.m = cfg.beta1 * p.m + (1.0 - cfg.beta1) * p.grad;
    p.v = cfg.beta2 * p.v + (1.0 - cfg.beta2) * p.grad.cwiseAbs2();
    const auto m_hat = p.m.array() / c1;
    const auto v_hat = p.v.array() / c2;
    p.value.array() -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    p.grad.setZero();
  }
  params.set_step(params.step() + 1);
}

double finite_diff_check(const LossBuilder& loss_fn, std::span<ParamStore* const> stores,
                         double eps) {
  if (!(eps > 0.0)) throw ParameterError("finite_diff_check: eps must be > 0");
  for (auto* s : stores) s->zero_grad();
  {
    Graph g;
    Var loss = loss_fn(g);
    g.backward(loss);
  }
  auto evaluate = [&] {
    Graph g;
    const double v = loss_fn(g).scalar();
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite loss");
    return v;
  };

  double worst = 0.0;
  for (auto* s : stores) {
    for (auto& [name, p] : *s) {
      for (Index i = 0; i < p.value.size(); ++i) {
        double& x = p.value.data()[i];
        const double saved = x;
        x = saved + eps;
        const double up = evaluate();
        x = saved - eps;
        const double down = evaluate();
        x = saved;
        const double central = (up - down) / (2.0 * eps);
        const double analytic = p.grad.data()[i];
        worst = std::max(worst, std::abs(analytic - central) / std::max(1.0, std::abs(central)));
      }
    }
  }
  for (auto* s : stores) s->zero_grad();
  return worst;
}

double finite_diff_check(const LossBuilder& loss_fn, ParamStore& store, double eps) {
  ParamStore* stores[] = {&store};
  return finite_diff_check(loss_fn, stores, eps);
}

}  // namespace ocdcvae
