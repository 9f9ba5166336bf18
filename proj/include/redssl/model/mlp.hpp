#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "redssl/autodiff/tape.hpp"

namespace redssl::model {

using ad::Matrix;

// Encoder layers are linear + ReLU. Projector and predictor layers are linear
// with ReLU between hidden layers; their final layer is linear and its output
// is L2-normalized (all-zero rows stay zero).
struct MlpSpec {
  std::size_t input_dim = 2;
  std::vector<std::size_t> encoder_layers{10, 10, 10};
  std::vector<std::size_t> projector_layers{2};
  std::vector<std::size_t> predictor_layers;  // empty: no predictor
  // Without bias every layer is linear up to ReLU, so the network is
  // positively homogeneous; bias matrices are then 1 x 0.
  bool bias = true;

  void validate() const;
  std::size_t representation_dim() const;
  std::size_t projection_dim() const;
  bool operator==(const MlpSpec&) const = default;
};

struct Linear {
  Matrix weight;  // fan_in x fan_out
  Matrix bias;    // 1 x fan_out, or 1 x 0 without bias
};

struct ParamSet {
  std::vector<Linear> encoder;
  std::vector<Linear> projector;
  std::vector<Linear> predictor;

  std::size_t parameter_count() const;
};

// Fixed-capacity FIFO of projection rows (unit-norm, or zero for a dead
// representation).
class NegativeQueue {
 public:
  NegativeQueue(std::size_t capacity, std::size_t dim);

  // Rows must be unit-norm (to 1e-9) or exactly zero; older rows are evicted
  // first.
  void push(const Matrix& rows);
  // Current contents, oldest first; 0 x dim when empty.
  Matrix negatives() const;

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return size_; }

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::size_t head_ = 0;  // slot of the oldest row
  std::size_t size_ = 0;
  Matrix ring_;
};

struct SslModel {
  MlpSpec spec;
  ParamSet online;
  std::optional<ParamSet> momentum;  // encoder + projector only
  std::optional<NegativeQueue> queue;

  // Trainable parameters in checkpoint order: encoder, projector, predictor;
  // weight then bias per layer.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
};

struct InitOptions {
  bool momentum_copy = false;
  std::size_t queue_capacity = 0;  // 0: no queue
};

// Glorot-uniform weights, zero biases.
SslModel init_model(const MlpSpec& spec, std::uint64_t seed, const InitOptions& options = {});

// momentum <- m * momentum + (1 - m) * online, for encoder and projector.
void momentum_update(SslModel& model, double m);

void queue_push(SslModel& model, const Matrix& projections);
Matrix queue_negatives(const SslModel& model);

// Parameters registered as leaves on one tape.
struct BoundLinear {
  ad::Var weight;
  ad::Var bias;
};

struct BoundParams {
  std::vector<BoundLinear> encoder;
  std::vector<BoundLinear> projector;
  std::vector<BoundLinear> predictor;
};

BoundParams bind_parameters(ad::Tape& tape, const ParamSet& params, bool requires_grad);

struct LayerOutput {
  std::string name;
  ad::Var pre;   // after the affine map
  ad::Var post;  // after the activation (== pre for linear output layers)
};

struct ForwardTrace {
  std::vector<LayerOutput> encoder;
  std::vector<LayerOutput> projector;
  std::vector<LayerOutput> predictor;
  ad::Var representation;
  ad::Var projection;                 // unit rows; zero where the head output is zero
  std::optional<ad::Var> prediction;  // same, when a predictor exists
};

ForwardTrace forward(const BoundParams& params, const ad::Var& input);

// Binds online parameters (trainable) and, when present, momentum parameters
// (constants, so no gradient ever reaches them) on one tape, and runs any
// number of forward passes that share those leaves.
class BoundModel {
 public:
  BoundModel(ad::Tape& tape, const SslModel& model);

  ForwardTrace forward(const Matrix& batch, bool use_momentum = false) const;

  const BoundParams& online() const { return online_; }
  const std::optional<BoundParams>& momentum() const { return momentum_; }

  // Gradients in SslModel::parameters() order; zeros for untouched leaves.
  std::vector<Matrix> gradients() const;

 private:
  ad::Tape* tape_;
  const SslModel* model_;
  BoundParams online_;
  std::optional<BoundParams> momentum_;
};

// Plain-value layer outputs for probes.
struct Embeddings {
  std::vector<std::string> layer_names;  // encoder layers, then projector layers
  std::vector<Matrix> layers;            // post-activation outputs, same order
  Matrix representation;
  Matrix projection;
};

Embeddings embed(const SslModel& model, const Matrix& batch);

// Standard deviation (n denominator) of each linear layer's weight entries:
// encoder layers, then projector layers.
std::vector<double> parameter_std_profile(const SslModel& model);

void save_checkpoint(const SslModel& model, const std::filesystem::path& path);
SslModel load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_to_string(const SslModel& model);
SslModel checkpoint_from_string(const std::string& text);

}  // namespace redssl::model
