#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <string>

#include "redssl/error.hpp"
#include "redssl/probes/probes.hpp"

namespace redssl::probes {

Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    // Dead rows (all-zero ReLU output) stay zero and have cosine 0 with
    // everything.
    if (n > 1e-12) out.row(i) /= n;
  }
  return out;
}

namespace {

// log sum_j exp(x_j) without overflow.
double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& x, Eigen::Index skip) {
  double hi = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (j != skip) hi = std::max(hi, x(j));
  }
  double acc = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (j != skip) acc += std::exp(x(j) - hi);
  }
  return hi + std::log(acc);
}

double mean_row_cosine(const Matrix& a, const Matrix& b) {
  const Matrix na = normalize_rows(a);
  const Matrix nb = normalize_rows(b);
  return na.cwiseProduct(nb).rowwise().sum().mean();
}

}  // namespace

LayerMetrics pair_metrics(const std::string& name, const Matrix& view1, const Matrix& view2, double tau) {
  if (view1.rows() != view2.rows() || view1.cols() != view2.cols()) throw ShapeError("pair_metrics: view shapes differ");
  if (view1.rows() < 1) throw ShapeError("pair_metrics: empty views");
  const Matrix a = normalize_rows(view1);
  const Matrix b = normalize_rows(view2);
  const Eigen::Index n = a.rows();
  Matrix all(2 * n, a.cols());
  all.topRows(n) = a;
  all.bottomRows(n) = b;
  const Matrix sims = (all * all.transpose()) / tau;
  double uniform = 0.0;
  for (Eigen::Index i = 0; i < 2 * n; ++i) uniform += log_sum_exp(sims.row(i), i);
  LayerMetrics m;
  m.layer_name = name;
  m.alignment = a.cwiseProduct(b).rowwise().sum().mean() / tau;
  m.uniformity = uniform / static_cast<double>(2 * n);
  return m;
}

LayerwiseResult layerwise_metrics(const model::SslModel& model, const data::Dataset& dataset, double tau,
                                  double sigma_eps, std::uint64_t seed) {
  if (dataset.size() == 0) throw ShapeError("layerwise_metrics: empty dataset");
  data::CounterRng rng1(seed, "probe-view", 0);
  data::CounterRng rng2(seed, "probe-view", 1);
  const model::Embeddings e1 = model::embed(model, data::augment_gaussian(dataset.points, sigma_eps, rng1));
  const model::Embeddings e2 = model::embed(model, data::augment_gaussian(dataset.points, sigma_eps, rng2));

  LayerwiseResult out;
  for (std::size_t l = 0; l < e1.layers.size(); ++l) {
    out.layers.push_back(pair_metrics(e1.layer_names[l], e1.layers[l], e2.layers[l], tau));
  }
  out.representation = pair_metrics("representation", e1.representation, e2.representation, tau);
  out.projection = pair_metrics("projection", e1.projection, e2.projection, tau);
  const std::size_t enc = model.spec.encoder_layers.size();
  const LayerMetrics& first = out.layers.front();
  const LayerMetrics& last = out.layers[enc - 1];
  out.encoder_delta = {last.alignment - first.alignment, last.uniformity - first.uniformity};
  out.projector_delta = {out.projection.alignment - out.representation.alignment,
                         out.projection.uniformity - out.representation.uniformity};
  return out;
}

EntropyEstimate entropy_estimate(const Matrix& embeddings, const std::vector<int>& labels, double bandwidth,
                                 std::size_t min_neighbors) {
  if (!(bandwidth > 0.0)) throw DomainError("entropy_estimate: bandwidth must be > 0");
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
    throw ShapeError("entropy_estimate: row count differs from label count");
  }
  const Matrix e = normalize_rows(embeddings);
  const Eigen::Index n = e.rows();
  const double r2 = bandwidth * bandwidth;
  EntropyEstimate out;
  double total = 0.0;
  std::map<int, std::size_t> counts;
  for (Eigen::Index i = 0; i < n; ++i) {
    counts.clear();
    std::size_t neighbours = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if ((e.row(i) - e.row(j)).squaredNorm() <= r2) {
        ++counts[labels[static_cast<std::size_t>(j)]];
        ++neighbours;
      }
    }
    if (neighbours < min_neighbors) {
      ++out.skipped;
      continue;
    }
    double h = 0.0;
    for (const auto& [label, c] : counts) {
      const double p = static_cast<double>(c) / static_cast<double>(neighbours);
      h -= p * std::log(p);
    }
    total += h;
    ++out.used;
  }
  if (out.used == 0) throw DomainError("entropy_estimate: bandwidth too small");
  out.entropy = total / static_cast<double>(out.used);
  return out;
}

std::vector<data::Augmentation> default_unseen_augmentations() {
  using data::Augmentation;
  return {Augmentation::parse("rotate2d:10"), Augmentation::parse("scale:1.25"), Augmentation::parse("dropout:0.1"),
          Augmentation::parse("noise:0.3")};
}

std::vector<RobustnessRow> augmentation_robustness(const model::SslModel& model, const data::Dataset& dataset,
                                                   const std::vector<data::Augmentation>& augmentations,
                                                   std::uint64_t seed) {
  const model::Embeddings clean = model::embed(model, dataset.points);
  std::vector<RobustnessRow> rows;
  for (std::size_t a = 0; a < augmentations.size(); ++a) {
    const Matrix augmented = data::augment_unseen(dataset.points, augmentations[a], seed + a);
    const model::Embeddings moved = model::embed(model, augmented);
    rows.push_back({augmentations[a].name(), mean_row_cosine(clean.representation, moved.representation),
                    mean_row_cosine(clean.projection, moved.projection)});
  }
  return rows;
}

std::vector<double> mean_pairwise_similarity(const Matrix& embeddings) {
  const Eigen::Index n = embeddings.rows();
  if (n < 2) throw ShapeError("mean_pairwise_similarity: need at least 2 rows");
  const Matrix e = normalize_rows(embeddings);
  std::vector<double> s(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) acc += e.row(i).dot(e.row(j));
    }
    s[static_cast<std::size_t>(i)] = acc / static_cast<double>(n - 1);
  }
  return s;
}

double correlation_with_error(const std::vector<double>& s, const std::vector<int>& y) {
  if (s.size() != y.size()) throw ShapeError("correlation_with_error: length mismatch");
  if (s.size() < 2) throw DomainError("undefined correlation");
  const auto n = static_cast<double>(s.size());
  const double ms = std::accumulate(s.begin(), s.end(), 0.0) / n;
  double my = 0.0;
  for (int v : y) my += v;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double dx = s[i] - ms;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DomainError("undefined correlation");
  return sxy / std::sqrt(sxx * syy);
}

ErrorSplit error_rate_split(const std::vector<double>& s, const std::vector<int>& y) {
  if (s.size() != y.size()) throw ShapeError("error_rate_split: length mismatch");
  if (s.empty()) throw DomainError("error_rate_split: empty input");
  std::vector<double> sorted = s;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  ErrorSplit out;
  double err1 = 0.0, err2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (s[i] > median) {
      ++out.n1;
      err1 += y[i];
    } else {
      ++out.n2;
      err2 += y[i];
    }
  }
  if (out.n1 == 0 || out.n2 == 0) throw DomainError("error_rate_split: empty group (all similarities equal)");
  out.e1 = err1 / static_cast<double>(out.n1);
  out.e2 = err2 / static_cast<double>(out.n2);
  return out;
}

IdentityResiduals identity_checks(const Matrix& z, double tau) {
  IdentityResiduals r;
  const Eigen::Index n = z.rows();
  const double lift = std::exp(1.0 / tau);
  for (Eigen::Index i = 0; i < n; ++i) {
    double cosine_sum = 0.0;
    double kernel_sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double dot = z.row(i).dot(z.row(j));
      const double dist2 = (z.row(i) - z.row(j)).squaredNorm();
      r.a1 = std::max(r.a1, std::abs(dot - (1.0 - 0.5 * dist2)));
      cosine_sum += std::exp(dot / tau);
      kernel_sum += std::exp(-dist2 / (2.0 * tau));
    }
    r.a2 = std::max(r.a2, std::abs(cosine_sum - lift * kernel_sum) / cosine_sum);
  }
  return r;
}

std::vector<PolarRow> polar_export(const Matrix& points2d, const std::vector<int>& labels,
                                   std::optional<std::size_t> reference_index, std::size_t max_rows) {
  if (points2d.cols() != 2) throw ShapeError("polar_export: expected 2 columns, got " + std::to_string(points2d.cols()));
  if (static_cast<std::size_t>(points2d.rows()) != labels.size()) throw ShapeError("polar_export: label count differs");
  double ox = 0.0, oy = 0.0;
  int ref_label = -1;
  if (reference_index) {
    if (*reference_index >= labels.size()) throw ShapeError("polar_export: reference index out of range");
    ox = points2d(static_cast<Eigen::Index>(*reference_index), 0);
    oy = points2d(static_cast<Eigen::Index>(*reference_index), 1);
    ref_label = labels[*reference_index];
  }
  std::vector<PolarRow> rows;
  for (Eigen::Index i = 0; i < points2d.rows(); ++i) {
    if (reference_index && static_cast<std::size_t>(i) == *reference_index) continue;
    const double dx = points2d(i, 0) - ox;
    const double dy = points2d(i, 1) - oy;
    double angle = std::atan2(dy, dx);
    if (angle <= -std::numbers::pi) angle = std::numbers::pi;
    const int label = labels[static_cast<std::size_t>(i)];
    rows.push_back({std::hypot(dx, dy), angle, label, label == ref_label});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const PolarRow& a, const PolarRow& b) { return a.radius < b.radius; });
  if (rows.size() > max_rows) rows.resize(max_rows);
  return rows;
}

Matrix pca_project(const Matrix& x, Eigen::Index components) {
  if (x.rows() < 2) throw ShapeError("pca_project: need at least 2 rows");
  if (components < 1 || components > x.cols()) throw ShapeError("pca_project: bad component count");
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Eigen::MatrixXd centred = x.rowwise() - mu;
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigenvalues ascend; take the trailing columns in reverse.
  Eigen::MatrixXd axes(x.cols(), components);
  for (Eigen::Index c = 0; c < components; ++c) {
    Eigen::VectorXd v = eig.eigenvectors().col(x.cols() - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    axes.col(c) = v;
  }
  return centred * axes;
}

}  // namespace redssl::probes
