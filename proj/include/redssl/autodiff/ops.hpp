#pragma once

#include <cstddef>

#include "redssl/autodiff/tape.hpp"

namespace redssl::ad {

// Forward primitives. Each one validates shapes (ShapeError) and domains
// (DomainError), and the error message names the primitive.

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);  // strictly positive inputs
Var sum(const Var& a);
Var row_sum(const Var& a);
Var mean(const Var& a);
Var row_l2_normalize(const Var& a);  // every row norm must exceed 1e-12
// Rows with norm <= 1e-12 map to zero and pass no gradient.
Var row_l2_normalize_or_zero(const Var& a);
Var dot_rows(const Var& a, const Var& b);
Var stop_gradient(const Var& a);
Var transpose(const Var& a);
Var concat_rows(const Var& top, const Var& bottom);
Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count);

// Nearest-rank percentile: the ceil(k/100 * n)-th smallest element (1-based).
// Among elements equal to the selected value the lowest index wins. The
// gradient flows only into the selected element.
struct Selection {
  Var value;
  std::size_t index = 0;
};

// v must be a vector (one dimension equal to 1) and 0 < k <= 100.
Selection percentile_select(const Var& v, double k_percent);

// Row-wise percentile of a square matrix with the diagonal excluded from each
// row's candidate set. Returns an n x 1 column and the selected column index
// per row.
struct RowSelection {
  Var values;
  std::vector<std::size_t> columns;
};
RowSelection row_percentile_off_diagonal(const Var& m, double k_percent);

// Rank (0-based) picked by the nearest-rank rule for a candidate set of size n.
std::size_t nearest_rank_position(std::size_t n, double k_percent);

}  // namespace redssl::ad
