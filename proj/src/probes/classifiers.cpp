#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "redssl/error.hpp"
#include "redssl/probes/probes.hpp"

namespace redssl::probes {

std::vector<int> knn_predict(const Matrix& train, const std::vector<int>& train_labels, const Matrix& test,
                             std::size_t k) {
  if (train.rows() == 0) throw ShapeError("knn: empty training set");
  if (k == 0) throw ConfigError("knn: k must be >= 1");
  if (k > static_cast<std::size_t>(train.rows())) {
    throw ConfigError("knn: k = " + std::to_string(k) + " exceeds training size " + std::to_string(train.rows()));
  }
  if (static_cast<std::size_t>(train.rows()) != train_labels.size()) throw ShapeError("knn: label count differs");
  if (train.cols() != test.cols()) throw ShapeError("knn: train and test widths differ");

  const Matrix a = normalize_rows(train);
  const Matrix b = normalize_rows(test);
  const auto n = static_cast<std::size_t>(a.rows());
  std::vector<double> dist(n);
  std::vector<std::size_t> order(n);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(b.rows()));

  struct Vote {
    std::size_t count = 0;
    double distance = 0.0;
  };
  std::map<int, Vote> votes;

  for (Eigen::Index t = 0; t < b.rows(); ++t) {
    for (std::size_t i = 0; i < n; ++i) dist[i] = 1.0 - b.row(t).dot(a.row(static_cast<Eigen::Index>(i)));
    std::iota(order.begin(), order.end(), 0);
    const auto by_distance = [&](std::size_t l, std::size_t r) {
      return dist[l] < dist[r] || (dist[l] == dist[r] && l < r);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), by_distance);

    votes.clear();
    for (std::size_t m = 0; m < k; ++m) {
      Vote& v = votes[train_labels[order[m]]];
      ++v.count;
      v.distance += dist[order[m]];
    }
    // std::map iterates labels in ascending order, so strict comparisons keep
    // the lowest label on a full tie.
    int best = votes.begin()->first;
    Vote best_vote = votes.begin()->second;
    for (const auto& [label, v] : votes) {
      if (v.count > best_vote.count || (v.count == best_vote.count && v.distance < best_vote.distance)) {
        best = label;
        best_vote = v;
      }
    }
    out.push_back(best);
  }
  return out;
}

double knn_accuracy(const Matrix& train, const std::vector<int>& train_labels, const Matrix& test,
                    const std::vector<int>& test_labels, std::size_t k) {
  if (static_cast<std::size_t>(test.rows()) != test_labels.size()) throw ShapeError("knn: test label count differs");
  if (test_labels.empty()) throw ShapeError("knn: empty test set");
  const std::vector<int> pred = knn_predict(train, train_labels, test, k);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == test_labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double linear_probe(const Matrix& train, const std::vector<int>& train_labels, const Matrix& test,
                    const std::vector<int>& test_labels, const LinearProbeSettings& settings) {
  if (train.rows() == 0) throw ShapeError("linear_probe: empty training set");
  if (static_cast<std::size_t>(train.rows()) != train_labels.size() ||
      static_cast<std::size_t>(test.rows()) != test_labels.size()) {
    throw ShapeError("linear_probe: label count differs from row count");
  }
  if (train.cols() != test.cols()) throw ShapeError("linear_probe: train and test widths differ");
  if (std::adjacent_find(train_labels.begin(), train_labels.end(), std::not_equal_to<>()) == train_labels.end()) {
    throw ConfigError("linear_probe: training set has a single class");
  }
  int classes = 0;
  for (int l : train_labels) classes = std::max(classes, l + 1);
  for (int l : test_labels) classes = std::max(classes, l + 1);

  // Standardize with training statistics; constant features are left centred.
  const Eigen::RowVectorXd mu = train.colwise().mean();
  Eigen::RowVectorXd sd = ((train.rowwise() - mu).array().square().colwise().mean()).sqrt();
  for (Eigen::Index c = 0; c < sd.size(); ++c) {
    if (sd(c) < 1e-12) sd(c) = 1.0;
  }
  const Eigen::MatrixXd x = (train.rowwise() - mu).array().rowwise() / sd.array();
  const Eigen::MatrixXd xt = (test.rowwise() - mu).array().rowwise() / sd.array();

  const auto n = static_cast<double>(train.rows());
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(train.rows(), classes);
  for (Eigen::Index i = 0; i < train.rows(); ++i) onehot(i, train_labels[static_cast<std::size_t>(i)]) = 1.0;

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(train.cols(), classes);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(classes);
  for (std::size_t epoch = 0; epoch < settings.epochs; ++epoch) {
    Eigen::MatrixXd logits = (x * w).rowwise() + b;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      logits.row(i).array() -= logits.row(i).maxCoeff();
      logits.row(i) = logits.row(i).array().exp().matrix();
      logits.row(i) /= logits.row(i).sum();
    }
    const Eigen::MatrixXd diff = (logits - onehot) / n;
    w -= settings.lr * (x.transpose() * diff);
    b -= settings.lr * diff.colwise().sum();
  }

  const Eigen::MatrixXd scores = (xt * w).rowwise() + b;
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index arg = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c) {
      if (scores(i, c) > scores(i, arg)) arg = c;
    }
    hits += static_cast<int>(arg) == test_labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(scores.rows());
}

}  // namespace redssl::probes
