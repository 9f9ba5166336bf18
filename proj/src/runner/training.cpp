#include "redssl/runner/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "redssl/autodiff/tape.hpp"
#include "redssl/error.hpp"
#include "redssl/objectives/losses.hpp"
#include "redssl/objectives/optimizer.hpp"

namespace redssl::runner {

namespace {

using objectives::Method;

struct StepStats {
  double loss = 0.0;
  double alignment = 0.0;
  double uniformity = 0.0;
  double weight_term = 0.0;
};

class LineWriter {
 public:
  LineWriter() = default;
  explicit LineWriter(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot write '" + path.string() + "'");
  }
  void write(const std::string& line) {
    if (!out_.is_open()) return;
    out_ << line << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

StepStats train_step(model::SslModel& model, objectives::Optimizer& optimizer, const data::ViewPairBatch& batch,
                     const TrainConfig& config) {
  ad::Tape tape;
  const model::BoundModel bound(tape, model);
  const model::ForwardTrace v1 = bound.forward(batch.anchors);
  const model::ForwardTrace v2 = bound.forward(batch.positives);

  objectives::LossBreakdown loss;
  std::optional<ad::Matrix> keys;
  switch (config.loss.method) {
    case Method::InfoNce:
      loss = config.loss.red_enabled ? objectives::red_info_nce(v1, v2, config.loss)
                                     : objectives::info_nce(v1, v2, config.loss);
      break;
    case Method::NonContrastive:
      loss = objectives::noncontrastive_loss(v1, v2, config.loss);
      break;
    case Method::InfoNceMomentumQueue: {
      const model::ForwardTrace k1 = bound.forward(batch.anchors, true);
      const model::ForwardTrace k2 = bound.forward(batch.positives, true);
      loss = objectives::momentum_queue_loss(v1, v2, k1, k2, model::queue_negatives(model), config.loss);
      keys = k2.projection.value();
      break;
    }
  }

  const double total = loss.total.scalar();
  if (!std::isfinite(total)) {
    throw TrainingError("non-finite loss " + std::to_string(total) + " (alignment " +
                        std::to_string(loss.alignment) + ", uniformity " + std::to_string(loss.uniformity) +
                        ", weight term " + std::to_string(loss.weight_term) + ")");
  }
  tape.backward(loss.total);
  const std::vector<ad::Matrix> grads = bound.gradients();
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].allFinite()) throw TrainingError("non-finite gradient for parameter " + std::to_string(i));
  }
  const std::vector<ad::Matrix*> params = model.parameters();
  optimizer.step(params, grads);

  if (config.loss.method == Method::InfoNceMomentumQueue) {
    model::momentum_update(model, config.momentum_coefficient);
    model::queue_push(model, *keys);
  }
  return {total, loss.alignment, loss.uniformity, loss.weight_term};
}

}  // namespace

std::string metrics_to_json(const MetricsRecord& r) {
  const nlohmann::json j = {{"epoch", r.epoch},
                            {"loss", r.loss},
                            {"alignment", r.alignment},
                            {"uniformity", r.uniformity},
                            {"weight_term", r.weight_term},
                            {"knn_accuracy", r.knn_accuracy}};
  return j.dump();
}

SplitData prepare_data(const TrainConfig& config) {
  const data::Dataset all = load_dataset(config.data, config.seed);
  if (static_cast<std::size_t>(all.dim()) != config.model.input_dim) {
    throw ConfigError("dataset has " + std::to_string(all.dim()) + " features but model.input_dim is " +
                      std::to_string(config.model.input_dim));
  }
  auto [train, holdout] = data::split_holdout(all, config.holdout_fraction, config.seed);
  return {std::move(train), std::move(holdout)};
}

double representation_knn(const model::SslModel& model, const SplitData& data, std::size_t k) {
  const model::Embeddings tr = model::embed(model, data.train.points);
  const model::Embeddings ho = model::embed(model, data.holdout.points);
  return probes::knn_accuracy(tr.representation, data.train.labels, ho.representation, data.holdout.labels, k);
}

TrainResult run_training(const TrainConfig& config) {
  config.validate();
  TrainResult result;
  result.data = prepare_data(config);
  if (result.data.train.size() < config.batch_size) {
    throw ConfigError("batch_size " + std::to_string(config.batch_size) + " exceeds the training split size " +
                      std::to_string(result.data.train.size()));
  }

  model::InitOptions init;
  if (config.loss.method == Method::InfoNceMomentumQueue) {
    init.momentum_copy = true;
    init.queue_capacity = config.queue_capacity;
  }
  result.model = model::init_model(config.model, config.seed, init);
  result.initial = result.model;
  objectives::Optimizer optimizer(config.optimizer);

  LineWriter metrics;
  LineWriter timing;
  std::filesystem::path out_dir;
  if (!config.output_dir.empty()) {
    out_dir = config.output_dir;
    std::filesystem::create_directories(out_dir);
    write_file(out_dir / "config.json", config_to_string(config));
    metrics = LineWriter(out_dir / "metrics.jsonl");
    timing = LineWriter(out_dir / "timing.jsonl");
  }

  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::vector<data::ViewPairBatch> batches =
        data::make_batches(result.data.train, config.batch_size, config.sigma_eps, config.seed, epoch - 1);
    StepStats sum;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      StepStats s;
      try {
        s = train_step(result.model, optimizer, batches[b], config);
      } catch (const Error& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1) + ": " + e.what());
      }
      sum.loss += s.loss;
      sum.alignment += s.alignment;
      sum.uniformity += s.uniformity;
      sum.weight_term += s.weight_term;
    }

    if (epoch % config.eval_every != 0 && epoch != config.epochs) continue;
    const auto nb = static_cast<double>(batches.size());
    MetricsRecord r;
    r.epoch = epoch;
    r.loss = sum.loss / nb;
    r.alignment = sum.alignment / nb;
    r.uniformity = sum.uniformity / nb;
    r.weight_term = sum.weight_term / nb;
    r.knn_accuracy = representation_knn(result.model, result.data, config.knn_k);
    r.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(r);
    metrics.write(metrics_to_json(r));
    timing.write(nlohmann::json{{"epoch", r.epoch}, {"elapsed_seconds", r.elapsed_seconds}}.dump());
  }

  if (!out_dir.empty()) model::save_checkpoint(result.model, out_dir / "checkpoint.json");
  return result;
}

}  // namespace redssl::runner
