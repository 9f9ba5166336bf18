#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "redssl/autodiff/tape.hpp"
#include "redssl/data/rng.hpp"

namespace redssl::data {

using ad::Matrix;

struct MixtureComponent {
  std::vector<double> mean;
  Matrix covariance;
  int label = 0;
};

struct GaussianMixtureSpec {
  std::vector<MixtureComponent> components;
  std::size_t samples_per_class = 1000;

  // Throws ConfigError on ragged means, non-square / asymmetric covariance or
  // a covariance that is not positive semi-definite.
  void validate() const;

  // Three unit-covariance clusters centred at (0.5, 0.7), (3.5, 0.7) and
  // (2.0, 3.3).
  static GaussianMixtureSpec three_cluster(std::size_t samples_per_class = 1000);
};

struct Dataset {
  Matrix points;            // n x d
  std::vector<int> labels;  // n
  std::string name;

  std::size_t size() const { return labels.size(); }
  Eigen::Index dim() const { return points.cols(); }
  int num_classes() const;
  void validate() const;
  Dataset subset(const std::vector<std::size_t>& rows) const;
};

struct ViewPairBatch {
  Matrix anchors;
  Matrix positives;
  std::vector<std::size_t> source_indices;
};

Dataset generate_mixture(const GaussianMixtureSpec& spec, std::uint64_t seed);

// Adds i.i.d. N(0, sigma^2) noise to every coordinate.
Matrix augment_gaussian(const Matrix& points, double sigma_eps, std::uint64_t seed);
Matrix augment_gaussian(const Matrix& points, double sigma_eps, CounterRng& rng);

// Augmentations that training never sees, used by the robustness probe.
enum class AugmentationKind { Identity, Rotate2d, UniformScale, CoordinateDropout, GaussianNoise };

struct Augmentation {
  AugmentationKind kind = AugmentationKind::Identity;
  // degrees for Rotate2d, factor for UniformScale, probability for
  // CoordinateDropout, sigma for GaussianNoise; unused for Identity.
  double param = 0.0;

  std::string name() const;
  void validate() const;
  // "rotate2d:30", "scale:1.5", "dropout:0.2", "noise:0.5", "identity".
  static Augmentation parse(std::string_view text);
};

Matrix augment_unseen(const Matrix& points, const Augmentation& aug, std::uint64_t seed);

// Shuffles the rows once per epoch and draws two independent Gaussian views
// per batch. Batches smaller than 2 are dropped.
std::vector<ViewPairBatch> make_batches(const Dataset& dataset, std::size_t batch_size, double sigma_eps,
                                        std::uint64_t seed, std::uint64_t epoch = 0);

// Deterministic split into (train, holdout) by seed.
std::pair<Dataset, Dataset> split_holdout(const Dataset& dataset, double holdout_fraction, std::uint64_t seed);

// CSV with header "label,f0,f1,...", values written with 17 significant digits.
Dataset load_csv(const std::filesystem::path& path);
void save_csv(const Dataset& dataset, const std::filesystem::path& path);
// Unlabelled matrix with header "f0,f1,...".
void save_csv(const Matrix& matrix, const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace redssl::data
