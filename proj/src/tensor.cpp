#include "ocdcvae/tensor.hpp"

#include "ocdcvae/error.hpp"

namespace ocdcvae {

std::string shape_string(const Tensor2& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

void require_finite(const Tensor2& t, const char* what) {
  if (!t.allFinite()) {
    throw NumericError(std::string("non-finite value in ") + what);
  }
}

void round_to_float32(Tensor2& t) {
  t = t.cast<float>().cast<double>();
}

}  // namespace ocdcvae
