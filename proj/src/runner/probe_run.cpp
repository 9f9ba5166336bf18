#include "redssl/error.hpp"
#include "redssl/runner/training.hpp"

namespace redssl::runner {

probes::ProbeSettings probe_settings_for(const TrainConfig& config) {
  probes::ProbeSettings s;
  s.tau = config.loss.tau;
  s.sigma_eps = config.sigma_eps;
  s.knn_k = config.knn_k;
  s.seed = config.seed;
  return s;
}

probes::ProbeReport run_probe(const std::filesystem::path& checkpoint, const TrainConfig& config,
                              const ProbeRunOptions& options) {
  const model::SslModel model = model::load_checkpoint(checkpoint);
  if (!(model.spec == config.model)) {
    throw ConfigError("checkpoint '" + checkpoint.string() + "' was saved with a different model spec than the config");
  }
  const SplitData data = prepare_data(config);
  probes::ProbeReport report = probes::build_report(model, data.train, data.holdout, options.settings);
  if (!options.output_dir.empty()) probes::write_report_files(report, options.output_dir);
  return report;
}

}  // namespace redssl::runner
