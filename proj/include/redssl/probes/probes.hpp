#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "redssl/autodiff/tape.hpp"
#include "redssl/data/dataset.hpp"
#include "redssl/model/mlp.hpp"

namespace redssl::probes {

using ad::Matrix;

Matrix normalize_rows(const Matrix& m);

// ---- alignment / uniformity per layer ------------------------------------

struct LayerMetrics {
  std::string layer_name;
  double alignment = 0.0;   // mean positive cosine / tau
  double uniformity = 0.0;  // mean log-partition over the 2n anchors
};

struct MetricDelta {
  double alignment = 0.0;
  double uniformity = 0.0;
};

struct LayerwiseResult {
  std::vector<LayerMetrics> layers;  // encoder layers, then projector layers
  // last encoder layer - first encoder layer
  MetricDelta encoder_delta;
  // projector output - projector input (the representation)
  MetricDelta projector_delta;
  LayerMetrics representation;
  LayerMetrics projection;
};

// Alignment and uniformity of one pair of views, computed on L2-normalized
// rows with the same conventions as the InfoNCE loss.
LayerMetrics pair_metrics(const std::string& name, const Matrix& view1, const Matrix& view2, double tau);

LayerwiseResult layerwise_metrics(const model::SslModel& model, const data::Dataset& dataset, double tau,
                                  double sigma_eps, std::uint64_t seed);

// ---- entropy ----------------------------------------------------------------

struct EntropyEstimate {
  double entropy = 0.0;  // natural log
  std::size_t used = 0;
  std::size_t skipped = 0;
};

// Label entropy of the Euclidean ball of radius `bandwidth` around each
// L2-normalized embedding (the sample itself excluded), averaged over samples
// with at least `min_neighbors` neighbours. Throws DomainError when every
// sample is skipped ("bandwidth too small").
EntropyEstimate entropy_estimate(const Matrix& embeddings, const std::vector<int>& labels, double bandwidth,
                                 std::size_t min_neighbors = 5);

// ---- augmentation robustness ------------------------------------------------

struct RobustnessRow {
  std::string augmentation;
  double representation_cosine = 0.0;
  double projection_cosine = 0.0;
};

// Mean cosine between each sample and its augmented copy, at the
// representation and at the projection.
std::vector<RobustnessRow> augmentation_robustness(const model::SslModel& model, const data::Dataset& dataset,
                                                   const std::vector<data::Augmentation>& augmentations,
                                                   std::uint64_t seed);

// The four unseen augmentations reported by default.
std::vector<data::Augmentation> default_unseen_augmentations();

// ---- similarity / error relationship ----------------------------------------

// s_i = mean over j != i of <e_i, e_j> on L2-normalized rows (divisor n - 1).
std::vector<double> mean_pairwise_similarity(const Matrix& embeddings);

// Pearson correlation; throws DomainError("undefined correlation") for
// constant inputs.
double correlation_with_error(const std::vector<double>& s, const std::vector<int>& y);

struct ErrorSplit {
  double e1 = 0.0;  // error rate of {i : s_i > median}
  double e2 = 0.0;  // error rate of the complement
  std::size_t n1 = 0;
  std::size_t n2 = 0;
};

ErrorSplit error_rate_split(const std::vector<double>& s, const std::vector<int>& y);

// ---- downstream classifiers -------------------------------------------------

// Exact cosine-distance kNN on L2-normalized rows. Majority vote; ties go to
// the smaller summed distance, then the lower label. Neighbours at equal
// distance are taken in training order.
std::vector<int> knn_predict(const Matrix& train, const std::vector<int>& train_labels, const Matrix& test,
                             std::size_t k);
double knn_accuracy(const Matrix& train, const std::vector<int>& train_labels, const Matrix& test,
                    const std::vector<int>& test_labels, std::size_t k);

struct LinearProbeSettings {
  std::size_t epochs = 500;
  double lr = 0.1;
};

// Multinomial logistic regression on standardized frozen features,
// full-batch gradient descent from zero, no regularization. Returns test
// accuracy; argmax ties go to the lowest label.
double linear_probe(const Matrix& train, const std::vector<int>& train_labels, const Matrix& test,
                    const std::vector<int>& test_labels, const LinearProbeSettings& settings = {});

// ---- identities ---------------------------------------------------------------

struct IdentityResiduals {
  // max |<z_i, z_j> - (1 - |z_i - z_j|^2 / 2)| over all pairs
  double a1 = 0.0;
  // max_i |sum_j exp(<z_i,z_j>/tau) - e^{1/tau} sum_j exp(-|z_i-z_j|^2/(2 tau))|
  // relative to the first sum
  double a2 = 0.0;
};

IdentityResiduals identity_checks(const Matrix& z, double tau);

// ---- exports ------------------------------------------------------------------

struct PolarRow {
  double radius = 0.0;
  double angle = 0.0;  // radians in (-pi, pi]
  int label = 0;
  bool is_reference_class = false;
};

// Coordinates relative to the origin, or to one sample when reference_index
// is given. Sorted by radius, truncated to max_rows.
std::vector<PolarRow> polar_export(const Matrix& points2d, const std::vector<int>& labels,
                                   std::optional<std::size_t> reference_index = std::nullopt,
                                   std::size_t max_rows = 1000);

// Projection onto the leading principal axes of the covariance. Each axis is
// signed so that its largest-magnitude loading is positive.
Matrix pca_project(const Matrix& x, Eigen::Index components = 2);

// ---- report -------------------------------------------------------------------

struct SideSummary {
  double knn_accuracy = 0.0;
  double linear_accuracy = 0.0;
  double entropy = 0.0;
  double correlation = 0.0;
  ErrorSplit error_split;
};

struct ProbeReport {
  LayerwiseResult layerwise;
  SideSummary representation;
  SideSummary projection;
  std::vector<RobustnessRow> augmentation_table;
  IdentityResiduals identity_residuals;
  std::vector<double> parameter_std;
  std::vector<PolarRow> polar_representation;
  std::vector<PolarRow> polar_projection;
};

struct ProbeSettings {
  double tau = 0.5;
  double sigma_eps = 0.1;
  double bandwidth = 0.1;
  std::size_t knn_k = 5;
  LinearProbeSettings linear;
  std::vector<data::Augmentation> augmentations = default_unseen_augmentations();
  std::uint64_t seed = 0;
};

// Runs every probe: layer metrics and robustness on the held-out set, kNN /
// linear accuracy trained on `train`, error split and entropy on held-out
// embeddings.
ProbeReport build_report(const model::SslModel& model, const data::Dataset& train, const data::Dataset& holdout,
                         const ProbeSettings& settings);

std::string report_to_json(const ProbeReport& report);
void write_report_files(const ProbeReport& report, const std::filesystem::path& dir);

}  // namespace redssl::probes
