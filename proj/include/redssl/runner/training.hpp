#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "redssl/data/dataset.hpp"
#include "redssl/model/mlp.hpp"
#include "redssl/probes/probes.hpp"
#include "redssl/runner/config.hpp"

namespace redssl::runner {

struct MetricsRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // batch means, averaged over the epoch
  double alignment = 0.0;
  double uniformity = 0.0;
  double weight_term = 0.0;
  double knn_accuracy = 0.0;  // representation kNN, train split -> held-out split
  double elapsed_seconds = 0.0;
};

// One JSON object, without the wall-clock field.
std::string metrics_to_json(const MetricsRecord& record);

struct SplitData {
  data::Dataset train;
  data::Dataset holdout;
};

// The dataset named by the config, split 80/20 (holdout_fraction) by seed.
SplitData prepare_data(const TrainConfig& config);

struct TrainResult {
  model::SslModel initial;
  model::SslModel model;
  std::vector<MetricsRecord> log;
  SplitData data;
};

// Deterministic training. When config.output_dir is set, writes config.json,
// metrics.jsonl (one line per eval, flushed as it goes), timing.jsonl and
// checkpoint.json there. Failures are rethrown as TrainingError naming the
// epoch and batch.
TrainResult run_training(const TrainConfig& config);

// Representation kNN accuracy of a model, train split -> held-out split.
double representation_knn(const model::SslModel& model, const SplitData& data, std::size_t k);

struct ProbeRunOptions {
  probes::ProbeSettings settings;
  std::filesystem::path output_dir;  // empty: nothing written
};

// Loads the checkpoint, checks it against config.model and the dataset, and
// builds the probe report on the config's split.
probes::ProbeReport run_probe(const std::filesystem::path& checkpoint, const TrainConfig& config,
                              const ProbeRunOptions& options);

probes::ProbeSettings probe_settings_for(const TrainConfig& config);

}  // namespace redssl::runner
