#include "redssl/objectives/losses.hpp"

#include <string>

#include "redssl/autodiff/ops.hpp"
#include "redssl/error.hpp"

namespace redssl::objectives {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::InfoNce: return "infonce";
    case Method::InfoNceMomentumQueue: return "infonce_momentum_queue";
    case Method::NonContrastive: return "noncontrastive";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "infonce") return Method::InfoNce;
  if (name == "infonce_momentum_queue") return Method::InfoNceMomentumQueue;
  if (name == "noncontrastive") return Method::NonContrastive;
  throw ConfigError("unknown loss method '" + std::string(name) + "'");
}

void LossConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("loss: tau must be > 0");
  if (!(eta > 0.0)) throw ConfigError("loss: eta must be > 0");
  if (!(k_percent > 0.0 && k_percent <= 100.0)) throw ConfigError("loss: k_percent must lie in (0, 100]");
}

namespace {

void require_batch(const Var& z, Eigen::Index minimum, const char* what) {
  if (z.rows() < minimum) {
    throw ShapeError(std::string(what) + ": batch of " + std::to_string(z.rows()) + " rows, need at least " +
                     std::to_string(minimum));
  }
}

Matrix off_diagonal_mask(Eigen::Index n) {
  Matrix m = Matrix::Ones(n, n);
  m.diagonal().setZero();
  return m;
}

double mean_value(const Var& v) { return v.value().mean(); }

// Shared tail: fold the per-anchor column into a breakdown.
LossBreakdown finish(const Var& per_anchor, const Var& positives, const Var& partitions) {
  LossBreakdown out;
  out.per_anchor = per_anchor;
  out.total = ad::mean(per_anchor);
  out.alignment = mean_value(positives);
  out.uniformity = mean_value(partitions);
  return out;
}

Var duplicate_rows(const Var& v) { return ad::concat_rows(v, v); }

}  // namespace

Var alignment_term(const Var& z1, const Var& z2, double tau) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols()) throw ShapeError("alignment_term: view shapes differ");
  return ad::scale(ad::sum(ad::dot_rows(z1, z2)), 1.0 / tau);
}

Var alignment_mean(const Var& z1, const Var& z2, double tau) {
  return ad::scale(alignment_term(z1, z2, tau), 1.0 / static_cast<double>(z1.rows()));
}

Var anchor_log_partition(const Var& z_all, double tau, bool exclude_self) {
  require_batch(z_all, 2, "uniformity_term");
  Var sims = ad::scale(ad::matmul(z_all, ad::transpose(z_all)), 1.0 / tau);
  Var e = ad::exp(sims);
  if (exclude_self) e = ad::mul(e, z_all.tape().constant(off_diagonal_mask(z_all.rows())));
  return ad::log(ad::row_sum(e));
}

Var uniformity_term(const Var& z_all, double tau, bool exclude_self) {
  return ad::sum(anchor_log_partition(z_all, tau, exclude_self));
}

RedWeights red_weights(const Var& representations, double eta, double k_percent, bool detach, bool raw_products) {
  require_batch(representations, 2, "red_weights");
  if (!(eta > 0.0)) throw DomainError("red_weights: eta must be > 0");
  Var r = raw_products ? representations : ad::row_l2_normalize_or_zero(representations);
  Var e = ad::exp(ad::scale(ad::matmul(r, ad::transpose(r)), 1.0 / eta));
  ad::RowSelection sel = ad::row_percentile_off_diagonal(e, k_percent);
  RedWeights out;
  out.neg_log_weights = ad::log(sel.values);
  if (detach) out.neg_log_weights = ad::stop_gradient(out.neg_log_weights);
  const Matrix& v = sel.values.value();
  out.weights.reserve(static_cast<std::size_t>(v.rows()));
  for (Eigen::Index i = 0; i < v.rows(); ++i) out.weights.push_back(1.0 / v(i, 0));
  out.selected = std::move(sel.columns);
  return out;
}

LossBreakdown info_nce(const Var& z1, const Var& z2, const LossConfig& config) {
  config.validate();
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols()) throw ShapeError("info_nce: view shapes differ");
  require_batch(z1, 2, "info_nce");
  const Eigen::Index n = z1.rows();
  Var positives = ad::scale(ad::dot_rows(z1, z2), 1.0 / config.tau);
  Var partitions = anchor_log_partition(ad::concat_rows(z1, z2), config.tau, !config.include_self);
  if (config.symmetrize) {
    positives = duplicate_rows(positives);
  } else {
    partitions = ad::slice_rows(partitions, 0, n);
  }
  return finish(ad::sub(partitions, positives), positives, partitions);
}

LossBreakdown info_nce(const model::ForwardTrace& view1, const model::ForwardTrace& view2,
                       const LossConfig& config) {
  return info_nce(view1.projection, view2.projection, config);
}

namespace {

// Adds the RED term to a finished contrastive or non-contrastive breakdown.
LossBreakdown add_red_term(const LossBreakdown& base, const Var& r1, const Var& r2, Eigen::Index n,
                           const LossConfig& config) {
  RedWeights w1 = red_weights(r1, config.eta, config.k_percent, config.detach_weights,
                              config.raw_representation_products);
  Var term = w1.neg_log_weights;
  if (base.per_anchor.rows() == 2 * n) {
    if (config.symmetric_weights) {
      RedWeights w2 = red_weights(r2, config.eta, config.k_percent, config.detach_weights,
                                  config.raw_representation_products);
      term = ad::concat_rows(term, w2.neg_log_weights);
    } else {
      term = duplicate_rows(term);
    }
  }
  LossBreakdown out = base;
  out.per_anchor = ad::add(base.per_anchor, term);
  out.total = ad::mean(out.per_anchor);
  out.weight_term = term.value().mean();
  out.weights = std::move(w1.weights);
  out.selected_pair_indices = std::move(w1.selected);
  return out;
}

}  // namespace

LossBreakdown red_info_nce(const Var& r1, const Var& r2, const Var& z1, const Var& z2, const LossConfig& config) {
  if (!config.red_enabled) throw ConfigError("red_info_nce: red_enabled is false");
  if (r1.rows() != z1.rows()) throw ShapeError("red_info_nce: representation and projection batch sizes differ");
  return add_red_term(info_nce(z1, z2, config), r1, r2, z1.rows(), config);
}

LossBreakdown red_info_nce(const model::ForwardTrace& view1, const model::ForwardTrace& view2,
                           const LossConfig& config) {
  return red_info_nce(view1.representation, view2.representation, view1.projection, view2.projection, config);
}

LossBreakdown noncontrastive_loss(const model::ForwardTrace& view1, const model::ForwardTrace& view2,
                                  const LossConfig& config) {
  config.validate();
  const Var& z1 = view1.projection;
  const Var& z2 = view2.projection;
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols()) throw ShapeError("noncontrastive_loss: view shapes differ");
  require_batch(z1, config.red_enabled ? 2 : 1, "noncontrastive_loss");
  const Var& p1 = view1.prediction ? *view1.prediction : z1;
  const Var& p2 = view2.prediction ? *view2.prediction : z2;

  Var sim = ad::scale(ad::dot_rows(p1, ad::stop_gradient(z2)), 1.0 / config.tau);
  if (config.symmetrize) {
    Var mirrored = ad::scale(ad::dot_rows(p2, ad::stop_gradient(z1)), 1.0 / config.tau);
    sim = ad::scale(ad::add(sim, mirrored), 0.5);
  }
  LossBreakdown base;
  base.per_anchor = ad::scale(sim, -1.0);
  base.total = ad::mean(base.per_anchor);
  base.alignment = sim.value().mean();
  if (!config.red_enabled) return base;
  // One row per sample, so the weights are never duplicated over views.
  return add_red_term(base, view1.representation, view2.representation, z1.rows(), config);
}

LossBreakdown momentum_queue_loss(const model::ForwardTrace& online1, const model::ForwardTrace& online2,
                                  const model::ForwardTrace& key1, const model::ForwardTrace& key2,
                                  const Matrix& queued_negatives, const LossConfig& config) {
  config.validate();
  const Var& q1 = online1.projection;
  require_batch(q1, 2, "momentum_queue_loss");
  const Eigen::Index n = q1.rows();
  ad::Tape& tape = q1.tape();
  if (queued_negatives.rows() > 0 && queued_negatives.cols() != q1.cols()) {
    throw ShapeError("momentum_queue_loss: queue width differs from projection width");
  }

  // Keys of the opposite view, then the queue; the positive sits in column i.
  auto one_side = [&](const Var& queries, const Var& keys, Var& positives, Var& partitions) {
    Var k = ad::stop_gradient(keys);
    Var bank = queued_negatives.rows() > 0 ? ad::concat_rows(k, tape.constant(queued_negatives)) : k;
    Var logits = ad::scale(ad::matmul(queries, ad::transpose(bank)), 1.0 / config.tau);
    partitions = ad::log(ad::row_sum(ad::exp(logits)));
    positives = ad::scale(ad::dot_rows(queries, k), 1.0 / config.tau);
  };
  Var pos, part;
  one_side(q1, key2.projection, pos, part);
  if (config.symmetrize) {
    Var pos2, part2;
    one_side(online2.projection, key1.projection, pos2, part2);
    pos = ad::concat_rows(pos, pos2);
    part = ad::concat_rows(part, part2);
  }
  LossBreakdown base = finish(ad::sub(part, pos), pos, part);
  if (!config.red_enabled) return base;
  return add_red_term(base, online1.representation, online2.representation, n, config);
}

}  // namespace redssl::objectives
