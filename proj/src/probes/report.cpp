#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "redssl/error.hpp"
#include "redssl/probes/probes.hpp"

namespace redssl::probes {

namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<int> misclassified(const std::vector<int>& pred, const std::vector<int>& truth) {
  std::vector<int> y(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) y[i] = pred[i] != truth[i];
  return y;
}

Matrix as_2d(const Matrix& e) {
  if (e.cols() == 2) return e;
  return pca_project(e, 2);
}

SideSummary summarize(const Matrix& train, const data::Dataset& train_set, const Matrix& hold,
                      const data::Dataset& hold_set, const ProbeSettings& s) {
  SideSummary out;
  const std::vector<int> pred = knn_predict(train, train_set.labels, hold, s.knn_k);
  const std::vector<int> y = misclassified(pred, hold_set.labels);
  std::size_t errors = 0;
  for (int v : y) errors += static_cast<std::size_t>(v);
  out.knn_accuracy = 1.0 - static_cast<double>(errors) / static_cast<double>(y.size());
  out.linear_accuracy = linear_probe(train, train_set.labels, hold, hold_set.labels, s.linear);
  try {
    out.entropy = entropy_estimate(hold, hold_set.labels, s.bandwidth).entropy;
  } catch (const DomainError&) {
    out.entropy = kNaN;
  }
  const std::vector<double> sim = mean_pairwise_similarity(hold);
  try {
    out.correlation = correlation_with_error(sim, y);
  } catch (const DomainError&) {
    out.correlation = kNaN;
  }
  try {
    out.error_split = error_rate_split(sim, y);
  } catch (const DomainError&) {
    out.error_split = {kNaN, kNaN, 0, 0};
  }
  return out;
}

json side_json(const SideSummary& s) {
  return {{"knn_accuracy", s.knn_accuracy},
          {"linear_accuracy", s.linear_accuracy},
          {"entropy", s.entropy},
          {"correlation", s.correlation},
          {"error_split", {{"e1", s.error_split.e1}, {"e2", s.error_split.e2}, {"n1", s.error_split.n1},
                           {"n2", s.error_split.n2}}}};
}

json metrics_json(const LayerMetrics& m) {
  return {{"layer", m.layer_name}, {"alignment", m.alignment}, {"uniformity", m.uniformity}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

std::string polar_csv(const std::vector<PolarRow>& rows) {
  std::ostringstream os;
  os << "radius,angle,label,is_reference_class\n";
  for (const PolarRow& r : rows) {
    os << data::format_double(r.radius) << ',' << data::format_double(r.angle) << ',' << r.label << ','
       << (r.is_reference_class ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace

ProbeReport build_report(const model::SslModel& model, const data::Dataset& train, const data::Dataset& holdout,
                         const ProbeSettings& settings) {
  ProbeReport r;
  r.layerwise = layerwise_metrics(model, holdout, settings.tau, settings.sigma_eps, settings.seed);
  const model::Embeddings tr = model::embed(model, train.points);
  const model::Embeddings ho = model::embed(model, holdout.points);
  r.representation = summarize(tr.representation, train, ho.representation, holdout, settings);
  r.projection = summarize(tr.projection, train, ho.projection, holdout, settings);
  r.augmentation_table = augmentation_robustness(model, holdout, settings.augmentations, settings.seed);
  r.identity_residuals = identity_checks(ho.projection, settings.tau);
  r.parameter_std = model::parameter_std_profile(model);
  r.polar_representation = polar_export(as_2d(ho.representation), holdout.labels, 0);
  r.polar_projection = polar_export(as_2d(ho.projection), holdout.labels, 0);
  return r;
}

std::string report_to_json(const ProbeReport& r) {
  json layers = json::array();
  for (const LayerMetrics& m : r.layerwise.layers) layers.push_back(metrics_json(m));
  json aug = json::array();
  for (const RobustnessRow& row : r.augmentation_table) {
    aug.push_back({{"augmentation", row.augmentation},
                   {"representation_cosine", row.representation_cosine},
                   {"projection_cosine", row.projection_cosine}});
  }
  json doc = {
      {"layers", layers},
      {"representation_metrics", metrics_json(r.layerwise.representation)},
      {"projection_metrics", metrics_json(r.layerwise.projection)},
      {"encoder_delta",
       {{"alignment", r.layerwise.encoder_delta.alignment}, {"uniformity", r.layerwise.encoder_delta.uniformity}}},
      {"projector_delta",
       {{"alignment", r.layerwise.projector_delta.alignment}, {"uniformity", r.layerwise.projector_delta.uniformity}}},
      {"representation", side_json(r.representation)},
      {"projection", side_json(r.projection)},
      {"augmentation_table", aug},
      {"identity_residuals", {{"a1", r.identity_residuals.a1}, {"a2", r.identity_residuals.a2}}},
      {"parameter_std", r.parameter_std},
  };
  return doc.dump(2) + "\n";
}

void write_report_files(const ProbeReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", report_to_json(r));

  std::ostringstream layers;
  layers << "layer,alignment,uniformity\n";
  for (const LayerMetrics& m : r.layerwise.layers) {
    layers << m.layer_name << ',' << data::format_double(m.alignment) << ',' << data::format_double(m.uniformity)
           << '\n';
  }
  write_text(dir / "layers.csv", layers.str());

  std::ostringstream aug;
  aug << "augmentation,representation_cosine,projection_cosine\n";
  for (const RobustnessRow& row : r.augmentation_table) {
    aug << row.augmentation << ',' << data::format_double(row.representation_cosine) << ','
        << data::format_double(row.projection_cosine) << '\n';
  }
  write_text(dir / "augmentations.csv", aug.str());

  std::ostringstream stds;
  stds << "layer_index,std\n";
  for (std::size_t i = 0; i < r.parameter_std.size(); ++i) {
    stds << i << ',' << data::format_double(r.parameter_std[i]) << '\n';
  }
  write_text(dir / "parameter_std.csv", stds.str());

  write_text(dir / "polar_representation.csv", polar_csv(r.polar_representation));
  write_text(dir / "polar_projection.csv", polar_csv(r.polar_projection));
}

}  // namespace redssl::probes
