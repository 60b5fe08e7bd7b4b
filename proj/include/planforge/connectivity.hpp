#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "planforge/errors.hpp"
#include "planforge/floorplan.hpp"

namespace planforge {

/// Binary connectivity over elements (A) or tokens (A_S).
using BinaryMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// User input graph: room and door nodes, edges between a room and a door.
struct BubbleDiagram {
  struct Node {
    std::string id;
    int category = 0;
  };
  std::vector<Node> nodes;
  std::vector<std::pair<int, int>> edges;  // node indexes

  int index_of(const std::string& id) const;
};

/// Checks the diagram invariants: known categories, no self or duplicate
/// edges, edges only between a room and a door, every door has a room.
/// Throws ValidationError listing every violation.
void validate(const BubbleDiagram& bd, const Vocabulary& vocab);

struct ParsedDiagram {
  /// Diagram node index of each element, in hybrid order.
  std::vector<int> order;
  /// Category id of each element, in hybrid order.
  std::vector<int> categories;
  /// Element-level connectivity A (symmetric, unit diagonal).
  BinaryMatrix rooms;
};

/// Orders nodes by category rank (stable within a category; door blocks
/// last) and builds A: room-door edges plus room-room edges for rooms that
/// share a door. With `stats == nullptr` categories rank by id.
ParsedDiagram parse_bubble_diagram(const BubbleDiagram& bd, const Vocabulary& vocab,
                                   const CategoryPositionStats* stats = nullptr);

/// Token-level expansion: A_S[i][j] = A[i'][j'] for element tokens, zero on
/// the BoS/EoS rows and columns.
BinaryMatrix build_sequence_connectivity(const BinaryMatrix& rooms, int n);

/// D^{-1/2} (A_S + I) D^{-1/2} with D the row sums of A_S + I.
template <typename Scalar = double, typename Derived>
DenseMatrix<Scalar> normalize_adjacency(const Eigen::MatrixBase<Derived>& seq) {
  if (seq.rows() != seq.cols()) throw ShapeError("normalize_adjacency: matrix is not square");
  const Eigen::Index n = seq.rows();
  DenseMatrix<Scalar> tilde = seq.template cast<Scalar>();
  tilde.diagonal().array() += Scalar(1);
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> invSqrt =
      tilde.rowwise().sum().array().rsqrt().matrix();
  DenseMatrix<Scalar> out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = tilde(i, j) * invSqrt(i) * invSqrt(j);
  return out;
}

/// Normalized adjacency of the leading t x t block of A_S, renormalized from
/// scratch (degrees count only the first t tokens).
template <typename Scalar = double, typename Derived>
DenseMatrix<Scalar> causal_mask_adjacency(const Eigen::MatrixBase<Derived>& seq, Eigen::Index t) {
  if (t < 1 || t > seq.rows())
    throw std::out_of_range("causal_mask_adjacency: t=" + std::to_string(t) + " outside [1, " +
                            std::to_string(seq.rows()) + "]");
  return normalize_adjacency<Scalar>(seq.topLeftCorner(t, t));
}

/// Lower-triangular propagation matrix for teacher-forced causal graph
/// convolution: row i is row i of causal_mask_adjacency(A_S, i + 1). Token i
/// thus sees exactly the partial graph available when it is generated.
template <typename Scalar = double, typename Derived>
DenseMatrix<Scalar> causal_schedule(const Eigen::MatrixBase<Derived>& seq) {
  if (seq.rows() != seq.cols()) throw ShapeError("causal_schedule: matrix is not square");
  const Eigen::Index n = seq.rows();
  DenseMatrix<Scalar> out = DenseMatrix<Scalar>::Zero(n, n);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> degree = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    // Extend the prefix by token i: update degrees of earlier tokens, then
    // compute token i's own degree over the prefix.
    for (Eigen::Index j = 0; j < i; ++j) degree(j) += Scalar(seq(j, i));
    Scalar di = Scalar(1) + Scalar(seq(i, i));
    for (Eigen::Index j = 0; j < i; ++j) di += Scalar(seq(i, j));
    degree(i) = di;
    for (Eigen::Index j = 0; j <= i; ++j) {
      const Scalar a = Scalar(seq(i, j)) + (i == j ? Scalar(1) : Scalar(0));
      out(i, j) = a / std::sqrt(degree(i) * degree(j));
    }
  }
  return out;
}

/// Everything the networks need from a parsed diagram.
struct GraphContext {
  ParsedDiagram parsed;
  BinaryMatrix sequence;            // A_S, (4N+2)^2
  DenseMatrix<double> causal;       // draft propagation schedule
  DenseMatrix<double> interior;     // full normalized A_S restricted to element tokens, (4N)^2
};

GraphContext make_graph_context(ParsedDiagram parsed);

/// A from an element-level room-door edge list: the edges themselves, rooms
/// sharing a door, and a unit diagonal.
BinaryMatrix room_connectivity(int n, const std::vector<std::pair<int, int>>& edges,
                               const std::vector<int>& categories, const Vocabulary& vocab);

}  // namespace planforge
