#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace redssl::ad {

// Dense row-major storage used for every value and gradient on the tape.
// Scalars are 1x1, vectors are n x 1 columns unless stated otherwise.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Op {
  Leaf,
  MatMul,
  Add,          // elementwise; rhs may be a 1 x c row broadcast over rows
  Sub,
  Mul,          // elementwise
  Scale,        // multiply by a constant scalar
  Relu,
  Exp,
  Log,
  Sum,          // all elements -> 1x1
  RowSum,       // r x c -> r x 1
  Mean,         // all elements -> 1x1
  RowL2Normalize,
  DotRows,      // (r x c, r x c) -> r x 1
  StopGradient,
  Transpose,
  ConcatRows,
  SliceRows,
  Select,       // gathers single elements; backs percentile selection
};

std::string_view op_name(Op op);

class Tape;

// Lightweight handle to a node on a tape. Copying a Var never copies data.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  // Gradient slot; empty when the node does not require grad or backward()
  // has not run.
  const std::optional<Matrix>& grad() const;
  bool requires_grad() const;

  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run reverse-mode tape. Nodes are appended in evaluation order, so
// insertion order is a topological order. A tape is single-threaded.
class Tape {
 public:
  struct Node {
    Op op = Op::Leaf;
    std::vector<std::size_t> inputs;
    Matrix value;
    std::optional<Matrix> grad;
    bool requires_grad = false;
    // Saved forward context, interpreted per op.
    double scalar = 0.0;
    std::vector<std::size_t> indices;
    Matrix aux;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  // Appends a computed node. requires_grad is inherited from the inputs.
  Var record(Op op, std::vector<std::size_t> inputs, Matrix value, double scalar = 0.0,
             std::vector<std::size_t> indices = {}, Matrix aux = {});

  // Reverse sweep from a scalar root. Clears previous gradients first; every
  // leaf that requires grad ends with a gradient, zero when unreachable.
  void backward(const Var& root);

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  // Discrete choices made during the forward pass (relu activity pattern and
  // selected indices). Two forward passes with equal signatures are on the
  // same smooth piece of the function.
  std::vector<std::uint64_t> branch_signature() const;

 private:
  void propagate(std::size_t id);

  std::vector<Node> nodes_;
};

}  // namespace redssl::ad
