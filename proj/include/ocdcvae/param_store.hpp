#pragma once

#include "ocdcvae/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace ocdcvae {

class Rng;

struct Parameter {
  Tensor2 value;
  Tensor2 grad;
  // Adaptive-moment accumulators.
  Tensor2 m;
  Tensor2 v;
};

// Named parameters of one network. Iteration order is the lexicographic name
// order, which keeps serialization and optimizer updates deterministic.
class ParamStore {
 public:
  using Map = std::map<std::string, Parameter>;

  Parameter& add(const std::string& name, Tensor2 init);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }
  Index scalar_count() const;

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }

  void zero_grad();
  void reset_moments();

  // True when every parameter value is bit-identical to `other`'s.
  bool same_values(const ParamStore& other) const;

 private:
  Map params_;
  std::uint64_t step_ = 0;
};

// Glorot-uniform weights "<name>.W" (in x out) and zero bias "<name>.b" (1 x out).
void init_dense(ParamStore& store, const std::string& name, Index in, Index out, Rng& rng);

}  // namespace ocdcvae
