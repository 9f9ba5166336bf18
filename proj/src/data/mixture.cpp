#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "redssl/data/dataset.hpp"
#include "redssl/error.hpp"

namespace redssl::data {

namespace {

using DenseMatrix = Eigen::MatrixXd;

// Lower factor L with L L^T = cov. LDLT with pivoting accepts singular PSD
// matrices (including the zero matrix) that plain Cholesky rejects.
DenseMatrix covariance_factor(const Matrix& cov, std::size_t component) {
  const DenseMatrix c = cov;
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ConfigError("mixture component " + std::to_string(component) + ": covariance is not symmetric");
  }
  Eigen::LDLT<DenseMatrix> ldlt(c);
  if (ldlt.info() != Eigen::Success) {
    throw ConfigError("mixture component " + std::to_string(component) + ": covariance factorization failed");
  }
  const Eigen::VectorXd d = ldlt.vectorD();
  if (d.minCoeff() < -1e-12 * scale) {
    throw ConfigError("mixture component " + std::to_string(component) +
                      ": covariance is not positive semi-definite");
  }
  const DenseMatrix lower = ldlt.matrixL();
  const Eigen::VectorXd root = d.cwiseMax(0.0).cwiseSqrt();
  DenseMatrix factor = ldlt.transpositionsP().transpose() * (lower * root.asDiagonal());
  if ((factor * factor.transpose() - c).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw ConfigError("mixture component " + std::to_string(component) +
                      ": covariance is not positive semi-definite");
  }
  return factor;
}

}  // namespace

void GaussianMixtureSpec::validate() const {
  if (components.empty()) throw ConfigError("mixture: no components");
  const std::size_t d = components.front().mean.size();
  if (d == 0) throw ConfigError("mixture: zero-dimensional mean");
  for (std::size_t i = 0; i < components.size(); ++i) {
    const auto& c = components[i];
    if (c.mean.size() != d) throw ConfigError("mixture component " + std::to_string(i) + ": mean dimension differs");
    if (c.covariance.rows() != static_cast<Eigen::Index>(d) || c.covariance.cols() != static_cast<Eigen::Index>(d)) {
      throw ConfigError("mixture component " + std::to_string(i) + ": covariance must be " + std::to_string(d) +
                        "x" + std::to_string(d));
    }
    if (c.label < 0) throw ConfigError("mixture component " + std::to_string(i) + ": negative label");
    covariance_factor(c.covariance, i);
  }
}

GaussianMixtureSpec GaussianMixtureSpec::three_cluster(std::size_t samples_per_class) {
  GaussianMixtureSpec spec;
  spec.samples_per_class = samples_per_class;
  const double centres[3][2] = {{0.5, 0.7}, {3.5, 0.7}, {2.0, 3.3}};
  for (int k = 0; k < 3; ++k) {
    spec.components.push_back({{centres[k][0], centres[k][1]}, Matrix::Identity(2, 2), k});
  }
  return spec;
}

int Dataset::num_classes() const {
  if (labels.empty()) return 0;
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

void Dataset::validate() const {
  if (static_cast<std::size_t>(points.rows()) != labels.size()) {
    throw ShapeError("dataset '" + name + "': " + std::to_string(points.rows()) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  for (int l : labels) {
    if (l < 0) throw ConfigError("dataset '" + name + "': negative label");
  }
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.name = name;
  out.points.resize(static_cast<Eigen::Index>(rows.size()), points.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.points.row(static_cast<Eigen::Index>(i)) = points.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(labels.at(rows[i]));
  }
  return out;
}

Dataset generate_mixture(const GaussianMixtureSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto d = static_cast<Eigen::Index>(spec.components.front().mean.size());
  const auto per = static_cast<Eigen::Index>(spec.samples_per_class);
  Dataset out;
  out.name = "mixture";
  out.points.resize(per * static_cast<Eigen::Index>(spec.components.size()), d);
  out.labels.reserve(static_cast<std::size_t>(out.points.rows()));
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < spec.components.size(); ++c) {
    const auto& comp = spec.components[c];
    const DenseMatrix factor = covariance_factor(comp.covariance, c);
    const Eigen::Map<const Eigen::VectorXd> mean(comp.mean.data(), d);
    CounterRng rng(seed, "mixture", c);
    Eigen::VectorXd z(d);
    for (Eigen::Index s = 0; s < per; ++s, ++row) {
      for (Eigen::Index k = 0; k < d; ++k) z(k) = rng.normal();
      out.points.row(row) = (mean + factor * z).transpose();
      out.labels.push_back(comp.label);
    }
  }
  return out;
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& dataset, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("holdout fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(seed, "holdout-split");
  rng.shuffle(order);
  const auto n_hold = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(order.size())));
  std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
  std::sort(hold.begin(), hold.end());
  std::sort(train.begin(), train.end());
  Dataset tr = dataset.subset(train);
  Dataset ho = dataset.subset(hold);
  tr.name = dataset.name + ":train";
  ho.name = dataset.name + ":holdout";
  return {std::move(tr), std::move(ho)};
}

std::vector<ViewPairBatch> make_batches(const Dataset& dataset, std::size_t batch_size, double sigma_eps,
                                        std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2, got " + std::to_string(batch_size));
  if (sigma_eps < 0.0) throw ConfigError("sigma_eps must be non-negative");
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  CounterRng shuffler(seed, "epoch-shuffle", epoch);
  shuffler.shuffle(order);

  std::vector<ViewPairBatch> batches;
  std::uint64_t index = 0;
  for (std::size_t start = 0; start < order.size(); start += batch_size, ++index) {
    const std::size_t len = std::min(batch_size, order.size() - start);
    if (len < 2) break;
    ViewPairBatch b;
    b.source_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                            order.begin() + static_cast<std::ptrdiff_t>(start + len));
    Matrix src(static_cast<Eigen::Index>(len), dataset.dim());
    for (std::size_t i = 0; i < len; ++i) {
      src.row(static_cast<Eigen::Index>(i)) = dataset.points.row(static_cast<Eigen::Index>(b.source_indices[i]));
    }
    CounterRng view1(seed, "view-noise", epoch, 2 * index);
    CounterRng view2(seed, "view-noise", epoch, 2 * index + 1);
    b.anchors = augment_gaussian(src, sigma_eps, view1);
    b.positives = augment_gaussian(src, sigma_eps, view2);
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace redssl::data
