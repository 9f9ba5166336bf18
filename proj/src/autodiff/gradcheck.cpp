#include "redssl/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "redssl/error.hpp"

namespace redssl::ad {

namespace {

struct Evaluation {
  double value;
  std::vector<std::uint64_t> signature;
};

Evaluation evaluate(const GraphBuilder& f, const Matrix& x) {
  Tape tape;
  Var leaf = tape.leaf(x, true);
  Var out = f(tape, leaf);
  return {out.scalar(), tape.branch_signature()};
}

}  // namespace

GradCheckResult finite_difference_check(const GraphBuilder& f, const Matrix& x0, double eps, double tol) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw DomainError("finite_difference_check: eps outside [1e-7, 1e-3]");

  Tape tape;
  Var leaf = tape.leaf(x0, true);
  Var root = f(tape, leaf);
  tape.backward(root);
  const Matrix analytic = leaf.grad() ? *leaf.grad() : Matrix::Zero(x0.rows(), x0.cols());
  const auto base_signature = tape.branch_signature();

  GradCheckResult result;
  Matrix x = x0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + eps;
    const Evaluation plus = evaluate(f, x);
    x.data()[i] = saved - eps;
    const Evaluation minus = evaluate(f, x);
    x.data()[i] = saved;

    if (plus.signature != base_signature || minus.signature != base_signature) {
      ++result.skipped;
      continue;
    }
    const double numeric = (plus.value - minus.value) / (2.0 * eps);
    const double a = analytic.data()[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    ++result.checked;
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = static_cast<std::size_t>(i);
    }
  }
  result.passed = result.max_rel_error < tol;
  return result;
}

}  // namespace redssl::ad
