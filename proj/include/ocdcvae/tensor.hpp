#pragma once

#include <Eigen/Core>

#include <string>

namespace ocdcvae {

// Dense row-major matrix of doubles. Batches are stored one sample per row.
using Tensor2 = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

std::string shape_string(const Tensor2& t);

// Throws NumericError naming `what` when any entry is NaN or Inf.
void require_finite(const Tensor2& t, const char* what);

// Rounds every entry to the nearest float32, so that a later float32
// serialization of the tensor is lossless.
void round_to_float32(Tensor2& t);

}  // namespace ocdcvae
