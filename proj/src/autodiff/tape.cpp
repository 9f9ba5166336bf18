#include "redssl/autodiff/tape.hpp"

#include <algorithm>
#include <string>

#include "redssl/error.hpp"

namespace redssl::ad {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::Relu: return "relu";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sum: return "sum";
    case Op::RowSum: return "row_sum";
    case Op::Mean: return "mean";
    case Op::RowL2Normalize: return "row_l2_normalize";
    case Op::DotRows: return "dot_rows";
    case Op::StopGradient: return "stop_gradient";
    case Op::Transpose: return "transpose";
    case Op::ConcatRows: return "concat_rows";
    case Op::SliceRows: return "slice_rows";
    case Op::Select: return "select";
  }
  return "unknown";
}

const Matrix& Var::value() const { return tape_->node(id_).value; }

const std::optional<Matrix>& Var::grad() const { return tape_->node(id_).grad; }

bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) {
    throw ShapeError("scalar(): tensor has " + std::to_string(v.rows()) + "x" +
                     std::to_string(v.cols()) + " elements");
  }
  return v(0, 0);
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Op op, std::vector<std::size_t> inputs, Matrix value, double scalar,
                 std::vector<std::size_t> indices, Matrix aux) {
  Node n;
  n.op = op;
  n.requires_grad = false;
  if (op != Op::StopGradient) {
    for (std::size_t in : inputs) {
      if (nodes_.at(in).requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
  }
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  n.scalar = scalar;
  n.indices = std::move(indices);
  n.aux = std::move(aux);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(const Var& root) {
  if (&root.tape() != this) throw Error("backward: root belongs to another tape");
  const Node& r = nodes_.at(root.id());
  if (r.value.size() != 1) {
    throw ShapeError("backward: root must be scalar, got " + std::to_string(r.value.rows()) + "x" +
                     std::to_string(r.value.cols()));
  }
  for (Node& n : nodes_) n.grad.reset();
  if (r.requires_grad) nodes_[root.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    if (nodes_[id].grad && nodes_[id].op != Op::Leaf) propagate(id);
  }
  for (Node& n : nodes_) {
    if (n.op == Op::Leaf && n.requires_grad && !n.grad) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
}

namespace {

Matrix& slot(Tape::Node& n) {
  if (!n.grad) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return *n.grad;
}

// Gradient of a possibly row-broadcast operand.
void accumulate_broadcast(Tape::Node& in, const Matrix& g, double sign) {
  Matrix& dst = slot(in);
  if (in.value.rows() == g.rows()) {
    dst += sign * g;
  } else {
    dst += sign * g.colwise().sum();
  }
}

}  // namespace

void Tape::propagate(std::size_t id) {
  // nodes_ does not grow during backward, so references stay valid.
  const Node& n = nodes_[id];
  const Matrix& g = *n.grad;
  auto input = [&](std::size_t k) -> Node& { return nodes_[n.inputs[k]]; };
  auto wants = [&](std::size_t k) { return input(k).requires_grad; };

  switch (n.op) {
    case Op::Leaf:
    case Op::StopGradient:
      break;
    case Op::MatMul:
      if (wants(0)) slot(input(0)).noalias() += g * input(1).value.transpose();
      if (wants(1)) slot(input(1)).noalias() += input(0).value.transpose() * g;
      break;
    case Op::Add:
      if (wants(0)) slot(input(0)) += g;
      if (wants(1)) accumulate_broadcast(input(1), g, 1.0);
      break;
    case Op::Sub:
      if (wants(0)) slot(input(0)) += g;
      if (wants(1)) accumulate_broadcast(input(1), g, -1.0);
      break;
    case Op::Mul:
      if (wants(0)) slot(input(0)) += g.cwiseProduct(input(1).value);
      if (wants(1)) slot(input(1)) += g.cwiseProduct(input(0).value);
      break;
    case Op::Scale:
      if (wants(0)) slot(input(0)) += n.scalar * g;
      break;
    case Op::Relu:
      if (wants(0)) {
        const Matrix& x = input(0).value;
        slot(input(0)) += g.cwiseProduct((x.array() > 0.0).cast<double>().matrix());
      }
      break;
    case Op::Exp:
      if (wants(0)) slot(input(0)) += g.cwiseProduct(n.value);
      break;
    case Op::Log:
      if (wants(0)) slot(input(0)) += g.cwiseQuotient(input(0).value);
      break;
    case Op::Sum:
      if (wants(0)) slot(input(0)).array() += g(0, 0);
      break;
    case Op::RowSum:
      if (wants(0)) {
        Matrix& dst = slot(input(0));
        for (Eigen::Index i = 0; i < dst.rows(); ++i) dst.row(i).array() += g(i, 0);
      }
      break;
    case Op::Mean:
      if (wants(0)) {
        Matrix& dst = slot(input(0));
        dst.array() += g(0, 0) / static_cast<double>(dst.size());
      }
      break;
    case Op::RowL2Normalize:
      if (wants(0)) {
        // d(x/|x|) = (g - y (y.g)) / |x|
        Matrix& dst = slot(input(0));
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
          if (n.aux(i, 0) == 0.0) continue;  // zero row, see row_l2_normalize_or_zero
          const double proj = n.value.row(i).dot(g.row(i));
          dst.row(i) += (g.row(i) - proj * n.value.row(i)) / n.aux(i, 0);
        }
      }
      break;
    case Op::DotRows:
      if (wants(0)) {
        Matrix& dst = slot(input(0));
        for (Eigen::Index i = 0; i < g.rows(); ++i) dst.row(i) += g(i, 0) * input(1).value.row(i);
      }
      if (wants(1)) {
        Matrix& dst = slot(input(1));
        for (Eigen::Index i = 0; i < g.rows(); ++i) dst.row(i) += g(i, 0) * input(0).value.row(i);
      }
      break;
    case Op::Transpose:
      if (wants(0)) slot(input(0)) += g.transpose();
      break;
    case Op::ConcatRows:
      if (wants(0)) slot(input(0)) += g.topRows(input(0).value.rows());
      if (wants(1)) slot(input(1)) += g.bottomRows(input(1).value.rows());
      break;
    case Op::SliceRows:
      if (wants(0)) {
        const auto begin = static_cast<Eigen::Index>(n.indices[0]);
        slot(input(0)).middleRows(begin, g.rows()) += g;
      }
      break;
    case Op::Select:
      if (wants(0)) {
        Matrix& dst = slot(input(0));
        for (std::size_t i = 0; i < n.indices.size(); ++i) {
          dst.data()[n.indices[i]] += g.data()[i];
        }
      }
      break;
  }
}

std::vector<std::uint64_t> Tape::branch_signature() const {
  std::vector<std::uint64_t> sig;
  for (const Node& n : nodes_) {
    if (n.op == Op::Relu) {
      const Matrix& x = nodes_[n.inputs[0]].value;
      std::uint64_t word = 0;
      int bit = 0;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x.data()[i] > 0.0) word |= (std::uint64_t{1} << bit);
        if (++bit == 64) {
          sig.push_back(word);
          word = 0;
          bit = 0;
        }
      }
      sig.push_back(word);
    } else if (n.op == Op::Select) {
      sig.insert(sig.end(), n.indices.begin(), n.indices.end());
    }
  }
  return sig;
}

}  // namespace redssl::ad
