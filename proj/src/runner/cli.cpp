#include "redssl/runner/cli.hpp"

#include <algorithm>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "redssl/error.hpp"
#include "redssl/runner/config.hpp"
#include "redssl/runner/grad_suite.hpp"
#include "redssl/runner/training.hpp"

namespace redssl::runner {

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

TrainConfig config_from(const std::string& path, const std::vector<std::string>& sets) {
  return path.empty() ? default_config(sets) : load_config(path, sets);
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

data::Dataset labelled(const ad::Matrix& points, const std::vector<int>& labels, const std::string& name) {
  data::Dataset d;
  d.points = points;
  d.labels = labels;
  d.name = name;
  return d;
}

std::vector<double> parse_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ConfigError(std::string(flag) + ": '" + item + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(std::string(flag) + ": empty list");
  return out;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrastive self-supervised learning lab on simulated data"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file (defaults when omitted)");
    sub->add_option("--set", sets, "Override a config field: dotted.key=value")->take_all();
  };

  std::string out_path;
  auto* simulate = app.add_subcommand("simulate", "Write the mixture dataset as CSV");
  add_config(simulate);
  simulate->add_option("--out", out_path, "Output CSV")->required();

  std::string out_dir;
  auto* train = app.add_subcommand("train", "Train a model; writes checkpoint and metrics");
  add_config(train);
  train->add_option("--out", out_dir, "Output directory (overrides output_dir)");

  std::string checkpoint;
  double bandwidth = 0.1;
  auto* probe = app.add_subcommand("probe", "Run the probe suite on a checkpoint");
  add_config(probe);
  probe->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
  probe->add_option("--out", out_dir, "Report directory")->required();
  probe->add_option("--bandwidth", bandwidth, "Entropy neighbourhood radius");

  std::string train_csv;
  std::string test_csv;
  std::size_t knn_k = 5;
  bool with_linear = false;
  auto* eval = app.add_subcommand("eval", "kNN / linear accuracy on exported embeddings");
  eval->add_option("--train", train_csv, "Labelled training embeddings CSV")->required();
  eval->add_option("--test", test_csv, "Labelled test embeddings CSV")->required();
  eval->add_option("--k", knn_k, "Neighbours");
  eval->add_flag("--linear", with_linear, "Also fit the linear probe");

  auto* export_cmd = app.add_subcommand("export-embeddings", "Write representation and projection CSVs");
  add_config(export_cmd);
  export_cmd->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
  export_cmd->add_option("--out", out_dir, "Output directory")->required();

  std::size_t seeds = 20;
  std::size_t batch = 8;
  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of primitives and losses");
  grad->add_option("--seeds", seeds, "Number of random instances per check");
  grad->add_option("--batch", batch, "Batch size");

  std::string etas = "0.5,1,5,20";
  std::string ks = "50,80,95";
  auto* grid = app.add_subcommand("grid", "RED grid over (eta, k): final kNN accuracy per cell");
  add_config(grid);
  grid->add_option("--eta", etas, "Comma-separated eta values");
  grid->add_option("--k", ks, "Comma-separated percentile values");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (simulate->parsed()) {
      const TrainConfig c = config_from(config_path, sets);
      const data::Dataset ds = load_dataset(c.data, c.seed);
      data::save_csv(ds, out_path);
      out << "wrote " << ds.size() << " samples, " << ds.num_classes() << " classes to " << out_path << "\n";
    } else if (train->parsed()) {
      TrainConfig c = config_from(config_path, sets);
      if (!out_dir.empty()) c.output_dir = out_dir;
      const TrainResult r = run_training(c);
      for (const MetricsRecord& m : r.log) {
        out << "epoch " << m.epoch << "  loss " << fixed(m.loss) << "  knn " << fixed(m.knn_accuracy) << "\n";
      }
      if (!c.output_dir.empty()) out << "checkpoint: " << (std::filesystem::path(c.output_dir) / "checkpoint.json").string() << "\n";
    } else if (probe->parsed()) {
      const TrainConfig c = config_from(config_path, sets);
      ProbeRunOptions opt;
      opt.settings = probe_settings_for(c);
      opt.settings.bandwidth = bandwidth;
      opt.output_dir = out_dir;
      const probes::ProbeReport r = run_probe(checkpoint, c, opt);
      out << "representation knn " << fixed(r.representation.knn_accuracy) << "  projection knn "
          << fixed(r.projection.knn_accuracy) << "\n";
      out << "report: " << (std::filesystem::path(out_dir) / "report.json").string() << "\n";
    } else if (eval->parsed()) {
      const data::Dataset tr = data::load_csv(train_csv);
      const data::Dataset te = data::load_csv(test_csv);
      out << "knn_accuracy " << data::format_double(probes::knn_accuracy(tr.points, tr.labels, te.points, te.labels, knn_k))
          << "\n";
      if (with_linear) {
        out << "linear_accuracy " << data::format_double(probes::linear_probe(tr.points, tr.labels, te.points, te.labels))
            << "\n";
      }
    } else if (export_cmd->parsed()) {
      const TrainConfig c = config_from(config_path, sets);
      const model::SslModel m = model::load_checkpoint(checkpoint);
      if (!(m.spec == c.model)) throw ConfigError("checkpoint '" + checkpoint + "' does not match the config's model spec");
      const SplitData d = prepare_data(c);
      const std::filesystem::path dir = out_dir;
      std::filesystem::create_directories(dir);
      const model::Embeddings tr = model::embed(m, d.train.points);
      const model::Embeddings ho = model::embed(m, d.holdout.points);
      data::save_csv(labelled(tr.representation, d.train.labels, "representation_train"), dir / "representation_train.csv");
      data::save_csv(labelled(ho.representation, d.holdout.labels, "representation_holdout"),
                     dir / "representation_holdout.csv");
      data::save_csv(labelled(tr.projection, d.train.labels, "projection_train"), dir / "projection_train.csv");
      data::save_csv(labelled(ho.projection, d.holdout.labels, "projection_holdout"), dir / "projection_holdout.csv");
      out << "wrote embeddings to " << dir.string() << "\n";
    } else if (grad->parsed()) {
      const GradSuiteResult r = run_grad_suite(seeds, batch);
      for (const GradSuiteEntry& e : r.entries) {
        out << std::left << std::setw(30) << e.name << " max_rel_error " << std::scientific << std::setprecision(3)
            << e.worst.max_rel_error << std::defaultfloat << "  checked " << e.checked << "  skipped " << e.skipped
            << (e.worst.passed ? "" : "  FAIL") << "\n";
      }
      out << "max relative error: " << std::scientific << std::setprecision(3) << r.max_rel_error << std::defaultfloat
          << "\n";
      if (!r.passed) {
        err << "gradient check failed\n";
        return kRuntime;
      }
    } else if (grid->parsed()) {
      const std::vector<double> eta_values = parse_list(etas, "--eta");
      const std::vector<double> k_values = parse_list(ks, "--k");
      TrainConfig base = config_from(config_path, sets);
      base.output_dir.clear();
      base.loss.red_enabled = false;
      const double baseline = run_training(base).log.back().knn_accuracy;
      out << "eta,k_percent,knn_accuracy\n";
      out << "none,none," << data::format_double(baseline) << "\n";
      for (double eta : eta_values) {
        for (double k : k_values) {
          TrainConfig c = base;
          c.loss.red_enabled = true;
          c.loss.eta = eta;
          c.loss.k_percent = k;
          out << data::format_double(eta) << ',' << data::format_double(k) << ','
              << data::format_double(run_training(c).log.back().knn_accuracy) << "\n";
        }
      }
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return 0;
}

int cli_dispatch(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_dispatch(args, std::cout, std::cerr);
}

}  // namespace redssl::runner
