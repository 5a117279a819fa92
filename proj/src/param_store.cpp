#include "ocdcvae/param_store.hpp"

#include "ocdcvae/error.hpp"
#include "ocdcvae/rng.hpp"

#include <cmath>

namespace ocdcvae {

Parameter& ParamStore::add(const std::string& name, Tensor2 init) {
  if (contains(name)) {
    throw StateError("duplicate parameter '" + name + "'");
  }
  Parameter p;
  p.grad = Tensor2::Zero(init.rows(), init.cols());
  p.m = Tensor2::Zero(init.rows(), init.cols());
  p.v = Tensor2::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw StateError("unknown parameter '" + name + "'");
  }
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw StateError("unknown parameter '" + name + "'");
  }
  return it->second;
}

Index ParamStore::scalar_count() const {
  Index n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.grad.setZero();
}

void ParamStore::reset_moments() {
  for (auto& [name, p] : params_) {
    p.m.setZero();
    p.v.setZero();
  }
  step_ = 0;
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto a = params_.begin();
  auto b = other.params_.begin();
  for (; a != params_.end(); ++a, ++b) {
    if (a->first != b->first) return false;
    if (a->second.value.rows() != b->second.value.rows() ||
        a->second.value.cols() != b->second.value.cols()) {
      return false;
    }
    if (a->second.value != b->second.value) return false;
  }
  return true;
}

void init_dense(ParamStore& store, const std::string& name, Index in, Index out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor2 w(in, out);
  for (Index i = 0; i < w.size(); ++i) {
    w.data()[i] = (2.0 * rng.uniform() - 1.0) * limit;
  }
  store.add(name + ".W", std::move(w));
  store.add(name + ".b", Tensor2::Zero(1, out));
}

}  // namespace ocdcvae
