#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "planforge/nn/models.hpp"

namespace planforge::nn {

struct AdamWConfig {
  double learningRate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weightDecay = 0.01;
  /// Global gradient-norm clip; <= 0 disables.
  double clipNorm = 1.0;
};

/// Decoupled weight decay Adam over a PlanModel, state aligned by visit order.
template <typename Scalar>
class AdamW {
 public:
  AdamW(PlanModel<Scalar>& model, AdamWConfig config) : config_(config) {
    model.visit([&](const std::string&, Matrix<Scalar>& p, bool decay) {
      first_.push_back(Matrix<Scalar>::Zero(p.rows(), p.cols()));
      second_.push_back(Matrix<Scalar>::Zero(p.rows(), p.cols()));
      decay_.push_back(decay);
    });
  }

  /// Applies one update with gradients `grad * scale`. Returns the
  /// pre-clipping gradient norm.
  double step(PlanModel<Scalar>& model, PlanModel<Scalar>& grad, double scale = 1.0) {
    std::vector<Matrix<Scalar>*> params, grads;
    model.visit([&](const std::string&, Matrix<Scalar>& p, bool) { params.push_back(&p); });
    grad.visit([&](const std::string&, Matrix<Scalar>& g, bool) { grads.push_back(&g); });
    if (params.size() != first_.size() || grads.size() != params.size())
      throw ShapeError("AdamW: parameter layout changed");

    double sq = 0;
    for (auto* g : grads) sq += static_cast<double>(g->squaredNorm());
    const double norm = std::sqrt(sq) * scale;
    double factor = scale;
    if (config_.clipNorm > 0 && norm > config_.clipNorm) factor *= config_.clipNorm / norm;

    ++steps_;
    const double bc1 = 1.0 - std::pow(config_.beta1, steps_);
    const double bc2 = 1.0 - std::pow(config_.beta2, steps_);
    const auto b1 = static_cast<Scalar>(config_.beta1), b2 = static_cast<Scalar>(config_.beta2);
    const auto lr = static_cast<Scalar>(config_.learningRate);
    const auto stepSize = static_cast<Scalar>(config_.learningRate / bc1);
    const auto invBc2 = static_cast<Scalar>(1.0 / bc2);
    const auto eps = static_cast<Scalar>(config_.epsilon);
    const auto f = static_cast<Scalar>(factor);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = *params[k];
      const auto g = (grads[k]->array() * f);
      if (decay_[k]) p *= Scalar(1) - lr * static_cast<Scalar>(config_.weightDecay);
      first_[k] = b1 * first_[k].array() + (Scalar(1) - b1) * g;
      second_[k] = b2 * second_[k].array() + (Scalar(1) - b2) * g.square();
      p.array() -= stepSize * first_[k].array() / ((second_[k].array() * invBc2).sqrt() + eps);
    }
    return norm;
  }

  long steps() const { return steps_; }
  const AdamWConfig& config() const { return config_; }

 private:
  AdamWConfig config_;
  std::vector<Matrix<Scalar>> first_, second_;
  std::vector<bool> decay_;
  long steps_ = 0;
};

}  // namespace planforge::nn
