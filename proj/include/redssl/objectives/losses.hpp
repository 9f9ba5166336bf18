#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "redssl/autodiff/tape.hpp"
#include "redssl/model/mlp.hpp"

namespace redssl::objectives {

using ad::Matrix;
using ad::Var;

enum class Method { InfoNce, InfoNceMomentumQueue, NonContrastive };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);

struct LossConfig {
  Method method = Method::InfoNce;
  double tau = 0.5;  // projection temperature
  bool red_enabled = false;
  double eta = 20.0;        // representation temperature
  double k_percent = 95.0;  // percentile of the pairwise representation similarity
  bool detach_weights = false;
  bool symmetrize = true;
  // Keep the anchor-with-itself term in the contrastive denominator.
  bool include_self = false;
  // Use raw r_i . r_j instead of cosine similarity inside the weights.
  bool raw_representation_products = false;
  // Anchors of view 2 use weights computed from view-2 representations.
  bool symmetric_weights = false;

  void validate() const;
};

struct LossBreakdown {
  Var total;       // scalar, mean over anchors
  Var per_anchor;  // column of per-anchor losses
  double alignment = 0.0;    // mean positive similarity / tau
  double uniformity = 0.0;   // mean log-partition over anchors
  double weight_term = 0.0;  // mean of -log w_i (0 without RED)
  std::vector<double> weights;
  std::vector<std::size_t> selected_pair_indices;
};

// Sum over rows of <z1_i, z2_i> / tau.
Var alignment_term(const Var& z1, const Var& z2, double tau);
// alignment_term divided by the number of rows.
Var alignment_mean(const Var& z1, const Var& z2, double tau);

// Per-row log sum_j exp(<z_i, z_j> / tau), over all rows j of z_all except the
// row itself when exclude_self is set. Column vector.
Var anchor_log_partition(const Var& z_all, double tau, bool exclude_self);
// Sum of anchor_log_partition over all rows.
Var uniformity_term(const Var& z_all, double tau, bool exclude_self);

struct RedWeights {
  Var neg_log_weights;  // column, -log w_i
  std::vector<double> weights;
  std::vector<std::size_t> selected;  // j* per row
};

// w_i = 1 / percentile_{j != i} exp(<r_i, r_j> / eta) at k percent, with rows
// L2-normalized first (zero rows stay zero) unless raw_products is set.
RedWeights red_weights(const Var& representations, double eta, double k_percent, bool detach = false,
                       bool raw_products = false);

// NT-Xent: each anchor's positive is its counterpart view; the denominator
// runs over the other 2n - 1 rows (positive included).
LossBreakdown info_nce(const Var& z1, const Var& z2, const LossConfig& config);
LossBreakdown info_nce(const model::ForwardTrace& view1, const model::ForwardTrace& view2, const LossConfig& config);

// Per-anchor -log w_i added to the InfoNCE term. Weights come from view 1
// representations (or both views with symmetric_weights).
LossBreakdown red_info_nce(const Var& r1, const Var& r2, const Var& z1, const Var& z2, const LossConfig& config);
LossBreakdown red_info_nce(const model::ForwardTrace& view1, const model::ForwardTrace& view2,
                           const LossConfig& config);

// Per-sample -<p1, stop_gradient(z2)> / tau (p = predictor output when the
// model has one, else z), averaged with the mirrored term when symmetrize is
// set; -log w_i is added with RED.
LossBreakdown noncontrastive_loss(const model::ForwardTrace& view1, const model::ForwardTrace& view2,
                                  const LossConfig& config);

// Momentum-encoder contrastive loss: online projections of one view against
// momentum keys of the other view plus the queued negatives.
LossBreakdown momentum_queue_loss(const model::ForwardTrace& online1, const model::ForwardTrace& online2,
                                  const model::ForwardTrace& key1, const model::ForwardTrace& key2,
                                  const Matrix& queued_negatives, const LossConfig& config);

}  // namespace redssl::objectives
