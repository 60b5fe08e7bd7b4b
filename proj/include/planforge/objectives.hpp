#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "planforge/errors.hpp"
#include "planforge/floorplan.hpp"

namespace planforge {

template <typename Scalar>
using LogitMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Box with real coordinates (xL, yT, xR, yB).
template <typename Scalar>
struct RealBox {
  Scalar xL{}, yT{}, xR{}, yB{};

  static RealBox from(const Box& b) {
    return {Scalar(b.xL), Scalar(b.yT), Scalar(b.xR), Scalar(b.yB)};
  }
  Scalar& operator[](int k) { return k == 0 ? xL : k == 1 ? yT : k == 2 ? xR : yB; }
  Scalar operator[](int k) const { return k == 0 ? xL : k == 1 ? yT : k == 2 ? xR : yB; }
};

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* op) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      if (!std::isfinite(static_cast<double>(m(r, c))))
        throw NumericError(std::string(op) + ": non-finite logit at row " + std::to_string(r) +
                               ", bin " + std::to_string(c),
                           static_cast<long>(r));
}

/// Numerically stable softmax of one row.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> softmax_row(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar peak = logits.maxCoeff();
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> p = (logits.array() - peak).exp().matrix();
  p /= p.sum();
  return p;
}

}  // namespace detail

/// Expected bin value sum_j j * softmax(logits)_j. Optionally writes the
/// gradient with respect to the logits, p_k (k - x).
template <typename Derived>
typename Derived::Scalar soft_argmax(const Eigen::MatrixBase<Derived>& logits,
                                     Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic>* grad = nullptr) {
  using Scalar = typename Derived::Scalar;
  detail::require_finite(logits, "soft_argmax");
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> row(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    row(i) = logits.rows() == 1 ? logits(0, i) : logits(i, 0);
  const auto p = detail::softmax_row(row);
  const auto bins = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>::LinSpaced(p.size(), Scalar(0), Scalar(p.size() - 1));
  const Scalar x = p.dot(bins);
  if (grad) *grad = (p.array() * (bins.array() - x)).matrix();
  return x;
}

/// Intersection-over-union with area = width * height (zero for inverted
/// extents). Two empty boxes give 0. `grad`, if given, receives the partials
/// with respect to (a.xL, a.yT, a.xR, a.yB, b.xL, b.yT, b.xR, b.yB).
template <typename Scalar>
Scalar box_iou(const RealBox<Scalar>& a, const RealBox<Scalar>& b,
               std::array<Scalar, 8>* grad = nullptr) {
  const Scalar zero(0);
  const bool aRight = a.xR <= b.xR, aLeft = a.xL >= b.xL;
  const bool aBottom = a.yB <= b.yB, aTop = a.yT >= b.yT;
  const Scalar iw = (aRight ? a.xR : b.xR) - (aLeft ? a.xL : b.xL);
  const Scalar ih = (aBottom ? a.yB : b.yB) - (aTop ? a.yT : b.yT);
  const bool overlap = iw > zero && ih > zero;
  const Scalar inter = overlap ? iw * ih : zero;

  const Scalar aw = std::max(a.xR - a.xL, zero), ah = std::max(a.yB - a.yT, zero);
  const Scalar bw = std::max(b.xR - b.xL, zero), bh = std::max(b.yB - b.yT, zero);
  const Scalar uni = aw * ah + bw * bh - inter;
  if (grad) grad->fill(zero);
  if (!(uni > zero)) return zero;
  const Scalar iou = inter / uni;
  if (!grad) return iou;

  // d iou = (d inter * (1 + iou) - iou * (d areaA + d areaB)) / union
  std::array<Scalar, 8> dInter{}, dArea{};
  if (overlap) {
    dInter[aRight ? 2 : 6] += ih;
    dInter[aLeft ? 0 : 4] -= ih;
    dInter[aBottom ? 3 : 7] += iw;
    dInter[aTop ? 1 : 5] -= iw;
  }
  if (a.xR - a.xL > zero && a.yB - a.yT > zero) {
    dArea[2] += ah, dArea[0] -= ah, dArea[3] += aw, dArea[1] -= aw;
  }
  if (b.xR - b.xL > zero && b.yB - b.yT > zero) {
    dArea[6] += bh, dArea[4] -= bh, dArea[7] += bw, dArea[5] -= bw;
  }
  for (int k = 0; k < 8; ++k) (*grad)[k] = (dInter[k] * (Scalar(1) + iou) - iou * dArea[k]) / uni;
  return iou;
}

template <typename Scalar>
using IoUMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
IoUMatrix<Scalar> iou_matrix(const std::vector<RealBox<Scalar>>& boxes) {
  const auto n = static_cast<Eigen::Index>(boxes.size());
  IoUMatrix<Scalar> g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    g(i, i) = box_iou(boxes[i], boxes[i]);
    for (Eigen::Index j = i + 1; j < n; ++j) g(i, j) = g(j, i) = box_iou(boxes[i], boxes[j]);
  }
  return g;
}

inline IoUMatrix<double> iou_matrix(const std::vector<Box>& boxes) {
  std::vector<RealBox<double>> real;
  for (const auto& b : boxes) real.push_back(RealBox<double>::from(b));
  return iou_matrix(real);
}

/// Mean L1 distance between the off-diagonal upper triangles of two IoU
/// matrices (N(N-1)/2 unordered pairs). Zero when N < 2.
template <typename Scalar>
Scalar iou_discrepancy(const IoUMatrix<Scalar>& generated, const IoUMatrix<Scalar>& truth) {
  const Eigen::Index n = generated.rows();
  if (n < 2) return Scalar(0);
  Scalar sum(0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) sum += std::abs(generated(i, j) - truth(i, j));
  return sum / Scalar(n * (n - 1) / 2);
}

template <typename Scalar>
struct GeometricLoss {
  Scalar value{};
  /// Set when fewer than two elements make the pair set empty.
  bool noPairs = false;
  /// d value / d logits, same shape as the input logits.
  LogitMatrix<Scalar> grad;
};

/// L1 distance between the pairwise IoU matrix of the soft-argmax decoded
/// boxes and the ground-truth IoU matrix, averaged over unordered pairs.
/// Row 4k + c of `logits` scores coordinate c of element k.
template <typename Derived>
GeometricLoss<typename Derived::Scalar> geometric_loss(const Eigen::MatrixBase<Derived>& logits,
                                                       const std::vector<Box>& truth,
                                                       bool wantGrad = true) {
  using Scalar = typename Derived::Scalar;
  const auto n = static_cast<Eigen::Index>(truth.size());
  if (logits.rows() != 4 * n)
    throw ShapeError("geometric_loss: expected " + std::to_string(4 * n) + " logit rows, got " +
                     std::to_string(logits.rows()));
  GeometricLoss<Scalar> out;
  if (wantGrad) out.grad = LogitMatrix<Scalar>::Zero(logits.rows(), logits.cols());
  if (n < 2) {
    out.noPairs = true;
    return out;
  }

  std::vector<RealBox<Scalar>> boxes(static_cast<std::size_t>(n));
  std::vector<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> coordGrad(static_cast<std::size_t>(4 * n));
  for (Eigen::Index r = 0; r < 4 * n; ++r)
    boxes[static_cast<std::size_t>(r / 4)][static_cast<int>(r % 4)] =
        soft_argmax(logits.row(r), wantGrad ? &coordGrad[static_cast<std::size_t>(r)] : nullptr);

  std::vector<RealBox<Scalar>> gt;
  for (const auto& b : truth) gt.push_back(RealBox<Scalar>::from(b));

  const Scalar pairs = Scalar(n * (n - 1) / 2);
  std::vector<Scalar> dCoord(static_cast<std::size_t>(4 * n), Scalar(0));
  Scalar sum(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      std::array<Scalar, 8> g{};
      const Scalar gen = box_iou(boxes[i], boxes[j], wantGrad ? &g : nullptr);
      const Scalar diff = gen - box_iou(gt[i], gt[j]);
      sum += std::abs(diff);
      if (!wantGrad || diff == Scalar(0)) continue;
      const Scalar sign = diff > 0 ? Scalar(1) : Scalar(-1);
      for (int k = 0; k < 4; ++k) {
        dCoord[static_cast<std::size_t>(4 * i + k)] += sign * g[k] / pairs;
        dCoord[static_cast<std::size_t>(4 * j + k)] += sign * g[4 + k] / pairs;
      }
    }
  }
  out.value = sum / pairs;
  if (wantGrad)
    for (Eigen::Index r = 0; r < 4 * n; ++r)
      out.grad.row(r) = dCoord[static_cast<std::size_t>(r)] * coordGrad[static_cast<std::size_t>(r)];
  return out;
}

template <typename Scalar>
struct CrossEntropy {
  Scalar mean{};
  Eigen::Index correct = 0;
  LogitMatrix<Scalar> grad;  // d mean / d logits
};

/// Mean cross-entropy of row r against targets[r]; rows with a negative
/// target are masked out of the mean.
template <typename Derived>
CrossEntropy<typename Derived::Scalar> cross_entropy(const Eigen::MatrixBase<Derived>& logits,
                                                     const std::vector<int>& targets,
                                                     bool wantGrad = true) {
  using Scalar = typename Derived::Scalar;
  if (static_cast<std::size_t>(logits.rows()) != targets.size())
    throw ShapeError("cross_entropy: " + std::to_string(logits.rows()) + " rows vs " +
                     std::to_string(targets.size()) + " targets");
  CrossEntropy<Scalar> out;
  if (wantGrad) out.grad = LogitMatrix<Scalar>::Zero(logits.rows(), logits.cols());
  Eigen::Index count = 0;
  for (int t : targets) count += t >= 0;
  if (count == 0) return out;
  Scalar sum(0);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0) continue;
    if (t >= logits.cols()) throw ShapeError("cross_entropy: target bin out of range");
    const auto p = detail::softmax_row(logits.row(r));
    sum -= std::log(std::max(p(t), std::numeric_limits<Scalar>::min()));
    Eigen::Index best;
    logits.row(r).maxCoeff(&best);
    out.correct += best == t;
    if (wantGrad) {
      out.grad.row(r) = p / Scalar(count);
      out.grad(r, t) -= Scalar(1) / Scalar(count);
    }
  }
  out.mean = sum / Scalar(count);
  return out;
}

/// Per-step loss breakdown.
struct LossReport {
  double arLoss = 0;                 // L_ar, mean over supervised positions
  std::vector<double> refineLoss;    // L_ref for each refinement iteration
  double reconstruction = 0;         // L_ar + mean(L_ref)
  double geoDraft = 0;
  double geoRefine = 0;              // mean over iterations
  double total = 0;                  // reconstruction + geoDraft + geoRefine
};

/// Combines the per-stage terms: sequence-length averaged draft CE plus the
/// refinement CE averaged over sequence length and iterations, plus the
/// geometric terms with unit weight.
inline LossReport combine_losses(double arLoss, std::vector<double> refineLoss, double geoDraft,
                                 const std::vector<double>& geoRefine) {
  LossReport r;
  r.arLoss = arLoss;
  r.refineLoss = std::move(refineLoss);
  double refSum = 0;
  for (double v : r.refineLoss) refSum += v;
  r.reconstruction = arLoss + (r.refineLoss.empty() ? 0.0 : refSum / r.refineLoss.size());
  r.geoDraft = geoDraft;
  double geoSum = 0;
  for (double v : geoRefine) geoSum += v;
  r.geoRefine = geoRefine.empty() ? 0.0 : geoSum / geoRefine.size();
  r.total = r.reconstruction + r.geoDraft + r.geoRefine;
  return r;
}

/// Reconstruction loss from draft logits (rows aligned with `draftTargets`)
/// and one logit matrix per refinement iteration (rows aligned with
/// `refineTargets`). Geometric terms are left at zero.
template <typename Scalar>
LossReport reconstruction_loss(const LogitMatrix<Scalar>& draftLogits, const std::vector<int>& draftTargets,
                               const std::vector<LogitMatrix<Scalar>>& refineLogits,
                               const std::vector<int>& refineTargets) {
  const double ar = static_cast<double>(cross_entropy(draftLogits, draftTargets, false).mean);
  std::vector<double> ref;
  for (const auto& logits : refineLogits)
    ref.push_back(static_cast<double>(cross_entropy(logits, refineTargets, false).mean));
  return combine_losses(ar, std::move(ref), 0.0, {});
}

}  // namespace planforge
