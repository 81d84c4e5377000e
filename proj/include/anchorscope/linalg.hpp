#pragma once

#include <Eigen/Dense>

namespace anchorscope {

// Row-major throughout: activations are row vectors, streams are (T, d)
// matrices, and weights keep the checkpoint's (in, out) orientation so a
// forward step is x * W + b with no transposes.
using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::RowVectorXf;
using MatMap = Eigen::Map<const Mat>;
using VecMap = Eigen::Map<const Vec>;

} // namespace anchorscope
