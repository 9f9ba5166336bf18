#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "redssl/data/dataset.hpp"
#include "redssl/model/mlp.hpp"
#include "redssl/objectives/losses.hpp"
#include "redssl/objectives/optimizer.hpp"

namespace redssl::runner {

inline constexpr int kConfigVersion = 1;

struct DataConfig {
  // "mixture" generates the three-cluster mixture (or `components`, when
  // given); "csv" loads `path`.
  std::string source = "mixture";
  std::size_t samples_per_class = 1000;
  std::vector<data::MixtureComponent> components;  // empty: default clusters
  std::string path;

  data::GaussianMixtureSpec mixture_spec() const;
};

struct TrainConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  model::MlpSpec model;
  objectives::LossConfig loss;
  objectives::OptimizerSettings optimizer;
  std::size_t epochs = 200;
  std::size_t batch_size = 256;
  double sigma_eps = 0.1;
  std::size_t eval_every = 10;
  double holdout_fraction = 0.2;
  std::size_t knn_k = 5;
  double momentum_coefficient = 0.99;
  std::size_t queue_capacity = 1024;
  std::string output_dir;  // empty: nothing written

  void validate() const;
};

// Parses a config document. Missing fields keep their defaults, unknown
// fields are rejected. `overrides` are "dotted.key=value" strings applied
// after the document; values are parsed as JSON and fall back to strings.
// Without a "seed" in either, `fallback_seed` is used.
TrainConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides = {},
                         std::optional<std::uint64_t> fallback_seed = std::nullopt);

// Reads the file (ConfigError naming the path when unreadable) and takes the
// fallback seed from RED_SSL_SEED.
TrainConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

// Config with defaults only, plus overrides and the RED_SSL_SEED fallback.
TrainConfig default_config(const std::vector<std::string>& overrides = {});

std::optional<std::uint64_t> env_seed();

// Canonical JSON form: every field, sorted keys, versioned.
std::string config_to_string(const TrainConfig& config);

data::Dataset load_dataset(const DataConfig& config, std::uint64_t seed);

}  // namespace redssl::runner
