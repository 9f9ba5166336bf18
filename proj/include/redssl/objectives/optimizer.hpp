#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "redssl/autodiff/tape.hpp"

namespace redssl::objectives {

enum class OptimizerKind { Sgd, Adam };

std::string_view optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double momentum = 0.0;  // SGD heavy-ball coefficient
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // L2 penalty folded into the gradient

  void validate() const;
};

// Stateful optimizer; the state is sized lazily on the first step and bound
// to the parameter order used there.
class Optimizer {
 public:
  explicit Optimizer(OptimizerSettings settings);

  void step(std::span<ad::Matrix* const> params, std::span<const ad::Matrix> grads);

  const OptimizerSettings& settings() const { return settings_; }
  std::size_t steps_taken() const { return steps_; }

 private:
  OptimizerSettings settings_;
  std::size_t steps_ = 0;
  std::vector<ad::Matrix> first_;   // SGD velocity or Adam first moment
  std::vector<ad::Matrix> second_;  // Adam second moment
};

}  // namespace redssl::objectives
