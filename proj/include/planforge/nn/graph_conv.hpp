#pragma once

#include <string>

#include "planforge/nn/layers.hpp"

namespace planforge::nn {

/// One linear propagation step Â X W over a token graph, no activation.
template <typename Scalar>
struct GraphConv {
  Matrix<Scalar> weight;  // d x d

  struct Cache {
    Matrix<Scalar> propagated;  // Â X
  };

  GraphConv() = default;
  explicit GraphConv(int d) : weight(Matrix<Scalar>::Zero(d, d)) {}

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const Matrix<Scalar>& adjacency, Cache& c) const {
    if (adjacency.rows() != x.rows() || adjacency.cols() != x.rows())
      throw ShapeError("graph conv: adjacency is " + std::to_string(adjacency.rows()) + "x" +
                       std::to_string(adjacency.cols()) + " for " + std::to_string(x.rows()) + " tokens");
    if (x.cols() != weight.rows()) throw ShapeError("graph conv: feature width mismatch");
    c.propagated.noalias() = adjacency * x;
    Matrix<Scalar> y(x.rows(), weight.cols());
    y.noalias() = c.propagated * weight;
    return y;
  }

  Matrix<Scalar> backward(const Cache& c, const Matrix<Scalar>& adjacency, const Matrix<Scalar>& dy,
                          GraphConv& grad) const {
    grad.weight.noalias() += c.propagated.transpose() * dy;
    Matrix<Scalar> dPropagated(dy.rows(), weight.rows());
    dPropagated.noalias() = dy * weight.transpose();
    Matrix<Scalar> dx(dy.rows(), weight.rows());
    dx.noalias() = adjacency.transpose() * dPropagated;
    return dx;
  }

  template <class Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".weight", weight, true);
  }
};

/// X_g^G = Â X_g W as a free function.
template <typename DX, typename DA, typename DW>
Matrix<typename DX::Scalar> gcn_forward(const Eigen::MatrixBase<DX>& features,
                                         const Eigen::MatrixBase<DA>& adjacency,
                                         const Eigen::MatrixBase<DW>& weight) {
  if (adjacency.rows() != features.rows() || adjacency.cols() != features.rows() ||
      weight.rows() != features.cols())
    throw ShapeError("gcn_forward: shape mismatch");
  return adjacency * features * weight;
}

}  // namespace planforge::nn
