#include "redssl/model/mlp.hpp"

#include <cmath>
#include <string>

#include "redssl/autodiff/ops.hpp"
#include "redssl/data/rng.hpp"
#include "redssl/error.hpp"

namespace redssl::model {

void MlpSpec::validate() const {
  if (input_dim == 0) throw ConfigError("model: input_dim must be >= 1");
  if (encoder_layers.empty()) throw ConfigError("model: encoder needs at least one layer");
  if (projector_layers.empty()) throw ConfigError("model: projector needs at least one layer");
  auto check = [](const std::vector<std::size_t>& widths, const char* what) {
    for (std::size_t w : widths) {
      if (w == 0) throw ConfigError(std::string("model: ") + what + " widths must be >= 1");
    }
  };
  check(encoder_layers, "encoder");
  check(projector_layers, "projector");
  check(predictor_layers, "predictor");
}

std::size_t MlpSpec::representation_dim() const { return encoder_layers.back(); }

std::size_t MlpSpec::projection_dim() const { return projector_layers.back(); }

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto* group : {&encoder, &projector, &predictor}) {
    for (const Linear& l : *group) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  }
  return n;
}

NegativeQueue::NegativeQueue(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {
  if (capacity == 0) throw ConfigError("queue capacity must be >= 1");
  ring_ = Matrix::Zero(static_cast<Eigen::Index>(capacity), static_cast<Eigen::Index>(dim));
}

void NegativeQueue::push(const Matrix& rows) {
  if (rows.cols() != static_cast<Eigen::Index>(dim_)) {
    throw ShapeError("queue_push: expected " + std::to_string(dim_) + " columns, got " + std::to_string(rows.cols()));
  }
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    const double norm = rows.row(r).norm();
    if (std::abs(norm - 1.0) > 1e-9 && norm != 0.0) {
      throw DomainError("queue_push: row " + std::to_string(r) + " is neither unit-norm nor zero");
    }
  }
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    const std::size_t slot = (head_ + size_) % capacity_;
    ring_.row(static_cast<Eigen::Index>(slot)) = rows.row(r);
    if (size_ < capacity_) {
      ++size_;
    } else {
      head_ = (head_ + 1) % capacity_;
    }
  }
}

Matrix NegativeQueue::negatives() const {
  Matrix out(static_cast<Eigen::Index>(size_), static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < size_; ++i) {
    out.row(static_cast<Eigen::Index>(i)) = ring_.row(static_cast<Eigen::Index>((head_ + i) % capacity_));
  }
  return out;
}

std::vector<Matrix*> SslModel::parameters() {
  std::vector<Matrix*> out;
  for (auto* group : {&online.encoder, &online.projector, &online.predictor}) {
    for (Linear& l : *group) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  }
  return out;
}

std::vector<const Matrix*> SslModel::parameters() const {
  std::vector<const Matrix*> out;
  for (const auto* group : {&online.encoder, &online.projector, &online.predictor}) {
    for (const Linear& l : *group) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  }
  return out;
}

namespace {

std::vector<Linear> glorot_stack(std::size_t fan_in, const std::vector<std::size_t>& widths, bool bias,
                                 std::uint64_t seed, std::uint64_t group) {
  std::vector<Linear> layers;
  std::size_t in = fan_in;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::size_t out = widths[i];
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    data::CounterRng rng(seed, "glorot-init", group, i);
    Linear l;
    l.weight.resize(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
    for (Eigen::Index k = 0; k < l.weight.size(); ++k) l.weight.data()[k] = (2.0 * rng.uniform() - 1.0) * a;
    l.bias = Matrix::Zero(1, bias ? static_cast<Eigen::Index>(out) : 0);
    layers.push_back(std::move(l));
    in = out;
  }
  return layers;
}

}  // namespace

SslModel init_model(const MlpSpec& spec, std::uint64_t seed, const InitOptions& options) {
  spec.validate();
  SslModel m;
  m.spec = spec;
  m.online.encoder = glorot_stack(spec.input_dim, spec.encoder_layers, spec.bias, seed, 0);
  m.online.projector = glorot_stack(spec.representation_dim(), spec.projector_layers, spec.bias, seed, 1);
  if (!spec.predictor_layers.empty()) {
    if (spec.predictor_layers.back() != spec.projection_dim()) {
      throw ConfigError("model: predictor output width must equal projection width");
    }
    m.online.predictor = glorot_stack(spec.projection_dim(), spec.predictor_layers, spec.bias, seed, 2);
  }
  if (options.momentum_copy) {
    ParamSet copy;
    copy.encoder = m.online.encoder;
    copy.projector = m.online.projector;
    m.momentum = std::move(copy);
  }
  if (options.queue_capacity > 0) m.queue.emplace(options.queue_capacity, spec.projection_dim());
  return m;
}

void momentum_update(SslModel& model, double m) {
  if (!model.momentum) throw ConfigError("momentum_update: model has no momentum copy");
  if (!(m >= 0.0 && m <= 1.0)) throw DomainError("momentum_update: coefficient must lie in [0, 1]");
  auto blend = [m](std::vector<Linear>& target, const std::vector<Linear>& source) {
    for (std::size_t i = 0; i < target.size(); ++i) {
      target[i].weight = m * target[i].weight + (1.0 - m) * source[i].weight;
      target[i].bias = m * target[i].bias + (1.0 - m) * source[i].bias;
    }
  };
  blend(model.momentum->encoder, model.online.encoder);
  blend(model.momentum->projector, model.online.projector);
}

void queue_push(SslModel& model, const Matrix& projections) {
  if (!model.queue) throw ConfigError("queue_push: model has no negatives queue");
  model.queue->push(projections);
}

Matrix queue_negatives(const SslModel& model) {
  if (!model.queue) throw ConfigError("queue_negatives: model has no negatives queue");
  return model.queue->negatives();
}

BoundParams bind_parameters(ad::Tape& tape, const ParamSet& params, bool requires_grad) {
  auto bind = [&](const std::vector<Linear>& layers) {
    std::vector<BoundLinear> out;
    for (const Linear& l : layers) out.push_back({tape.leaf(l.weight, requires_grad), tape.leaf(l.bias, requires_grad)});
    return out;
  };
  return {bind(params.encoder), bind(params.projector), bind(params.predictor)};
}

namespace {

// Linear layers with ReLU after each, except the last one when
// `linear_output` is set.
ad::Var run_stack(const std::vector<BoundLinear>& layers, ad::Var x, bool linear_output, const std::string& prefix,
                  std::vector<LayerOutput>& trace) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    ad::Var pre = ad::matmul(x, layers[i].weight);
    if (layers[i].bias.cols() > 0) pre = ad::add(pre, layers[i].bias);
    const bool last = i + 1 == layers.size();
    ad::Var post = (last && linear_output) ? pre : ad::relu(pre);
    trace.push_back({prefix + "." + std::to_string(i), pre, post});
    x = post;
  }
  return x;
}

}  // namespace

ForwardTrace forward(const BoundParams& params, const ad::Var& input) {
  if (params.encoder.empty()) throw ConfigError("forward: no encoder layers bound");
  const auto expected = params.encoder.front().weight.rows();
  if (input.cols() != expected) {
    throw ShapeError("forward: input width " + std::to_string(input.cols()) + " does not match model input " +
                     std::to_string(expected));
  }
  ForwardTrace t;
  t.representation = run_stack(params.encoder, input, false, "encoder", t.encoder);
  ad::Var head = run_stack(params.projector, t.representation, true, "projector", t.projector);
  t.projection = ad::row_l2_normalize_or_zero(head);
  if (!params.predictor.empty()) {
    ad::Var p = run_stack(params.predictor, t.projection, true, "predictor", t.predictor);
    t.prediction = ad::row_l2_normalize_or_zero(p);
  }
  return t;
}

BoundModel::BoundModel(ad::Tape& tape, const SslModel& model)
    : tape_(&tape), model_(&model), online_(bind_parameters(tape, model.online, true)) {
  if (model.momentum) momentum_ = bind_parameters(tape, *model.momentum, false);
}

ForwardTrace BoundModel::forward(const Matrix& batch, bool use_momentum) const {
  ad::Var x = tape_->constant(batch);
  if (use_momentum) {
    if (!momentum_) throw ConfigError("forward: momentum requested but the model has no momentum copy");
    return model::forward(*momentum_, x);
  }
  return model::forward(online_, x);
}

std::vector<Matrix> BoundModel::gradients() const {
  std::vector<Matrix> out;
  auto collect = [&](const std::vector<BoundLinear>& layers) {
    for (const BoundLinear& l : layers) {
      for (const ad::Var* v : {&l.weight, &l.bias}) {
        out.push_back(v->grad() ? *v->grad() : Matrix::Zero(v->rows(), v->cols()));
      }
    }
  };
  collect(online_.encoder);
  collect(online_.projector);
  collect(online_.predictor);
  return out;
}

Embeddings embed(const SslModel& model, const Matrix& batch) {
  ad::Tape tape;
  BoundParams params = bind_parameters(tape, model.online, false);
  ForwardTrace t = forward(params, tape.constant(batch));
  Embeddings e;
  for (const auto* group : {&t.encoder, &t.projector}) {
    for (const LayerOutput& l : *group) {
      e.layer_names.push_back(l.name);
      e.layers.push_back(l.post.value());
    }
  }
  e.representation = t.representation.value();
  e.projection = t.projection.value();
  return e;
}

std::vector<double> parameter_std_profile(const SslModel& model) {
  std::vector<double> out;
  for (const auto* group : {&model.online.encoder, &model.online.projector}) {
    for (const Linear& l : *group) {
      const double mu = l.weight.mean();
      out.push_back(std::sqrt((l.weight.array() - mu).square().mean()));
    }
  }
  return out;
}

}  // namespace redssl::model
