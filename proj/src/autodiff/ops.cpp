#include "redssl/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "redssl/error.hpp"

namespace redssl::ad {

namespace {

std::string dims(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void same_tape(const char* op, const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw Error(std::string(op) + ": operands live on different tapes");
}

void same_shape(const char* op, const Var& a, const Var& b) {
  same_tape(op, a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + dims(a.value()) + " vs " + dims(b.value()));
  }
}

// Elementwise ops accept an exact shape match or a 1 x c right operand.
bool broadcast_ok(const Var& a, const Var& b) {
  return a.cols() == b.cols() && (a.rows() == b.rows() || b.rows() == 1);
}

Matrix broadcast(const Var& a, const Var& b) {
  if (a.rows() == b.rows()) return b.value();
  return b.value().replicate(a.rows(), 1);
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  same_tape("matmul", a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + dims(a.value()) + " * " + dims(b.value()));
  }
  Matrix out = a.value() * b.value();
  return a.tape().record(Op::MatMul, {a.id(), b.id()}, std::move(out));
}

Var add(const Var& a, const Var& b) {
  same_tape("add", a, b);
  if (!broadcast_ok(a, b)) throw ShapeError("add: shape mismatch " + dims(a.value()) + " + " + dims(b.value()));
  Matrix out = a.value() + broadcast(a, b);
  return a.tape().record(Op::Add, {a.id(), b.id()}, std::move(out));
}

Var sub(const Var& a, const Var& b) {
  same_tape("sub", a, b);
  if (!broadcast_ok(a, b)) throw ShapeError("sub: shape mismatch " + dims(a.value()) + " - " + dims(b.value()));
  Matrix out = a.value() - broadcast(a, b);
  return a.tape().record(Op::Sub, {a.id(), b.id()}, std::move(out));
}

Var mul(const Var& a, const Var& b) {
  same_shape("mul", a, b);
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape().record(Op::Mul, {a.id(), b.id()}, std::move(out));
}

Var scale(const Var& a, double factor) {
  Matrix out = factor * a.value();
  return a.tape().record(Op::Scale, {a.id()}, std::move(out), factor);
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape().record(Op::Relu, {a.id()}, std::move(out));
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp().matrix();
  return a.tape().record(Op::Exp, {a.id()}, std::move(out));
}

Var log(const Var& a) {
  const Matrix& x = a.value();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(x.data()[i] > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(x.data()[i]) + " at element " +
                        std::to_string(i));
    }
  }
  Matrix out = x.array().log().matrix();
  return a.tape().record(Op::Log, {a.id()}, std::move(out));
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(Op::Sum, {a.id()}, std::move(out));
}

Var row_sum(const Var& a) {
  Matrix out = a.value().rowwise().sum();
  return a.tape().record(Op::RowSum, {a.id()}, std::move(out));
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw ShapeError("mean: empty tensor");
  Matrix out(1, 1);
  out(0, 0) = a.value().mean();
  return a.tape().record(Op::Mean, {a.id()}, std::move(out));
}

Var row_l2_normalize(const Var& a) {
  const Matrix& x = a.value();
  Matrix norms(x.rows(), 1);
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).norm();
    if (!(n > 1e-12)) {
      throw DomainError("row_l2_normalize: row " + std::to_string(i) + " has norm " + std::to_string(n) +
                        " <= 1e-12");
    }
    norms(i, 0) = n;
    out.row(i) = x.row(i) / n;
  }
  return a.tape().record(Op::RowL2Normalize, {a.id()}, std::move(out), 0.0, {}, std::move(norms));
}

Var row_l2_normalize_or_zero(const Var& a) {
  const Matrix& x = a.value();
  Matrix norms(x.rows(), 1);
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).norm();
    if (n > 1e-12) {
      norms(i, 0) = n;
      out.row(i) = x.row(i) / n;
    } else {
      norms(i, 0) = 0.0;
      out.row(i).setZero();
    }
  }
  return a.tape().record(Op::RowL2Normalize, {a.id()}, std::move(out), 0.0, {}, std::move(norms));
}

Var dot_rows(const Var& a, const Var& b) {
  same_shape("dot_rows", a, b);
  Matrix out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return a.tape().record(Op::DotRows, {a.id(), b.id()}, std::move(out));
}

Var stop_gradient(const Var& a) { return a.tape().record(Op::StopGradient, {a.id()}, a.value()); }

Var transpose(const Var& a) {
  Matrix out = a.value().transpose();
  return a.tape().record(Op::Transpose, {a.id()}, std::move(out));
}

Var concat_rows(const Var& top, const Var& bottom) {
  same_tape("concat_rows", top, bottom);
  if (top.cols() != bottom.cols()) {
    throw ShapeError("concat_rows: column mismatch " + dims(top.value()) + " / " + dims(bottom.value()));
  }
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top.value();
  out.bottomRows(bottom.rows()) = bottom.value();
  return top.tape().record(Op::ConcatRows, {top.id(), bottom.id()}, std::move(out));
}

Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + std::to_string(a.rows()) + " rows");
  }
  Matrix out = a.value().middleRows(begin, count);
  return a.tape().record(Op::SliceRows, {a.id()}, std::move(out), 0.0,
                         {static_cast<std::size_t>(begin), static_cast<std::size_t>(count)});
}

std::size_t nearest_rank_position(std::size_t n, double k_percent) {
  if (n == 0) throw ShapeError("percentile_select: empty candidate set");
  if (!(k_percent > 0.0 && k_percent <= 100.0)) {
    throw DomainError("percentile_select: k must lie in (0, 100], got " + std::to_string(k_percent));
  }
  // Guard against k/100*n landing a hair above an integer from rounding.
  const double raw = k_percent / 100.0 * static_cast<double>(n);
  auto rank = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return rank - 1;
}

namespace {

// Picks among candidate flat offsets into `data`; returns the chosen offset.
std::size_t pick(const double* data, std::vector<std::size_t>& candidates, double k_percent) {
  const std::size_t pos = nearest_rank_position(candidates.size(), k_percent);
  std::vector<std::size_t> order = candidates;
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pos), order.end(),
                   [&](std::size_t l, std::size_t r) { return data[l] < data[r]; });
  const double chosen = data[order[pos]];
  // Lowest original index among ties.
  for (std::size_t c : candidates) {
    if (data[c] == chosen) return c;
  }
  return order[pos];
}

}  // namespace

Selection percentile_select(const Var& v, double k_percent) {
  if (v.rows() != 1 && v.cols() != 1) {
    throw ShapeError("percentile_select: expected a vector, got " + dims(v.value()));
  }
  const auto n = static_cast<std::size_t>(v.value().size());
  if (n == 0) throw ShapeError("percentile_select: empty vector");
  std::vector<std::size_t> candidates(n);
  std::iota(candidates.begin(), candidates.end(), 0);
  const std::size_t chosen = pick(v.value().data(), candidates, k_percent);
  Matrix out(1, 1);
  out(0, 0) = v.value().data()[chosen];
  Var value = v.tape().record(Op::Select, {v.id()}, std::move(out), 0.0, {chosen});
  return {value, chosen};
}

RowSelection row_percentile_off_diagonal(const Var& m, double k_percent) {
  const Matrix& x = m.value();
  if (x.rows() != x.cols()) throw ShapeError("row_percentile: expected a square matrix, got " + dims(x));
  if (x.rows() < 2) throw ShapeError("row_percentile: need at least 2 rows to exclude the diagonal");
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::size_t> flat(n);
  std::vector<std::size_t> columns(n);
  Matrix out(x.rows(), 1);
  std::vector<std::size_t> candidates;
  candidates.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    candidates.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) candidates.push_back(i * n + j);
    }
    const std::size_t chosen = pick(x.data(), candidates, k_percent);
    flat[i] = chosen;
    columns[i] = chosen - i * n;
    out(static_cast<Eigen::Index>(i), 0) = x.data()[chosen];
  }
  Var values = m.tape().record(Op::Select, {m.id()}, std::move(out), 0.0, std::move(flat));
  return {values, std::move(columns)};
}

}  // namespace redssl::ad
