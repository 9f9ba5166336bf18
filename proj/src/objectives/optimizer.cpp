#include "redssl/objectives/optimizer.hpp"

#include <cmath>
#include <string>

#include "redssl/error.hpp"

namespace redssl::objectives {

std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

void OptimizerSettings::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("optimizer: lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer: momentum must lie in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("optimizer: betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("optimizer: epsilon must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("optimizer: weight_decay must be >= 0");
}

Optimizer::Optimizer(OptimizerSettings settings) : settings_(settings) { settings_.validate(); }

void Optimizer::step(std::span<ad::Matrix* const> params, std::span<const ad::Matrix> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("optimizer_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols()) {
      throw ShapeError("optimizer_step: gradient " + std::to_string(i) + " shape differs from its parameter");
    }
  }
  if (first_.empty()) {
    for (const ad::Matrix* p : params) {
      first_.push_back(ad::Matrix::Zero(p->rows(), p->cols()));
      if (settings_.kind == OptimizerKind::Adam) second_.push_back(ad::Matrix::Zero(p->rows(), p->cols()));
    }
  } else if (first_.size() != params.size()) {
    throw ShapeError("optimizer_step: parameter list changed between steps");
  }
  ++steps_;

  const auto& s = settings_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Matrix& p = *params[i];
    ad::Matrix g = grads[i];
    if (s.weight_decay > 0.0) g += s.weight_decay * p;
    if (s.kind == OptimizerKind::Sgd) {
      if (s.momentum > 0.0) {
        first_[i] = s.momentum * first_[i] + g;
        p -= s.lr * first_[i];
      } else {
        p -= s.lr * g;
      }
    } else {
      first_[i] = s.beta1 * first_[i] + (1.0 - s.beta1) * g;
      second_[i] = s.beta2 * second_[i] + (1.0 - s.beta2) * g.cwiseAbs2();
      const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(steps_));
      const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(steps_));
      p.array() -= s.lr * (first_[i].array() / c1) / ((second_[i].array() / c2).sqrt() + s.epsilon);
    }
  }
}

}  // namespace redssl::objectives
