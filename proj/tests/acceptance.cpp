// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails.

#include <malloc.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "redssl/autodiff/ops.hpp"
#include "redssl/data/rng.hpp"
#include "redssl/model/mlp.hpp"
#include "redssl/objectives/losses.hpp"
#include "redssl/probes/probes.hpp"
#include "redssl/runner/cli.hpp"
#include "redssl/runner/config.hpp"
#include "redssl/runner/grad_suite.hpp"
#include "redssl/runner/training.hpp"

namespace {

using namespace redssl;
using ad::Matrix;
using Clock = std::chrono::steady_clock;

constexpr int kSeeds = 5;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

Matrix random_normal(data::CounterRng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Matrix unit_rows(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) /= out.row(i).norm();
  return out;
}

struct SeedRun {
  runner::TrainResult train;
  probes::ProbeReport report;
};

SeedRun run_seed(std::uint64_t seed, bool red) {
  std::vector<std::string> sets = {"seed=" + std::to_string(seed)};
  if (red) sets.push_back("loss.red=true");
  const runner::TrainConfig config = runner::parse_config("{}", sets);
  SeedRun out;
  out.train = runner::run_training(config);
  out.report = probes::build_report(out.train.model, out.train.data.train, out.train.data.holdout,
                                    runner::probe_settings_for(config));
  return out;
}

// ---- criteria 1-4 and 9 share the trained models ---------------------------

void trained_model_criteria() {
  std::vector<SeedRun> base;
  std::vector<SeedRun> red;
  const auto t0 = Clock::now();
  for (int s = 0; s < kSeeds; ++s) {
    base.push_back(run_seed(static_cast<std::uint64_t>(s), false));
    red.push_back(run_seed(static_cast<std::uint64_t>(s), true));
  }
  const double elapsed = seconds_since(t0);

  std::vector<double> acc_base;
  std::vector<double> acc_red;
  for (int s = 0; s < kSeeds; ++s) {
    acc_base.push_back(100.0 * base[s].train.log.back().knn_accuracy);
    acc_red.push_back(100.0 * red[s].train.log.back().knn_accuracy);
  }
  {
    const double b = mean(acc_base);
    const double r = mean(acc_red);
    const bool uplift = r - b >= 2.0;
    const bool base_close = std::abs(b - 71.09) <= 6.0;
    const bool red_close = std::abs(r - 74.98) <= 6.0;
    const bool fast = elapsed < 180.0;
    report(1, uplift && base_close && red_close && fast,
           "RED uplift: InfoNCE kNN " + fmt("%.2f", b) + "% (target 71.09 +/- 6), RED-InfoNCE " + fmt("%.2f", r) +
               "% (target 74.98 +/- 6), uplift " + fmt("%+.2f", r - b) + " points (need >= 2.00), runtime " +
               fmt("%.1f", elapsed) + " s (need < 180)");
  }
  {
    std::vector<double> rep;
    std::vector<double> proj;
    for (const auto& s : base) {
      rep.push_back(100.0 * s.report.representation.knn_accuracy);
      proj.push_back(100.0 * s.report.projection.knn_accuracy);
    }
    report(2, mean(rep) - mean(proj) >= 2.0,
           "representation kNN " + fmt("%.2f", mean(rep)) + "% vs projection kNN " + fmt("%.2f", mean(proj)) +
               "% (gap " + fmt("%+.2f", mean(rep) - mean(proj)) + ", need >= 2.00)");
  }
  {
    int ok = 0;
    std::string detail;
    for (int s = 0; s < kSeeds; ++s) {
      const auto& lw = base[s].report.layerwise;
      const bool align = lw.representation.alignment > lw.projection.alignment;
      const bool unif = lw.representation.uniformity > lw.projection.uniformity;
      const bool enc = lw.encoder_delta.alignment > 0.0;
      const bool proj = lw.projector_delta.uniformity < 0.0;
      ok += align && unif && enc && proj;
      detail += " seed" + std::to_string(s) + "[tau*align " + fmt("%.4f", 0.5 * lw.representation.alignment) + "/" +
                fmt("%.4f", 0.5 * lw.projection.alignment) + ", unif " + fmt("%.3f", lw.representation.uniformity) +
                "/" + fmt("%.3f", lw.projection.uniformity) + ", enc dA " + fmt("%+.4f", lw.encoder_delta.alignment) +
                ", proj dU " + fmt("%+.3f", lw.projector_delta.uniformity) + "]";
    }
    report(3, ok == kSeeds, "alignment/uniformity orderings hold on " + std::to_string(ok) + "/5 seeds;" + detail);
  }
  {
    std::vector<double> rep;
    std::vector<double> proj;
    std::vector<double> red_rep;
    for (int s = 0; s < kSeeds; ++s) {
      rep.push_back(base[s].report.representation.entropy);
      proj.push_back(base[s].report.projection.entropy);
      red_rep.push_back(red[s].report.representation.entropy);
    }
    report(4, mean(rep) < mean(proj) && mean(red_rep) <= mean(rep),
           "entropy: representation " + fmt("%.4f", mean(rep)) + " < projection " + fmt("%.4f", mean(proj)) +
               "; RED representation " + fmt("%.4f", mean(red_rep)) + " <= baseline " + fmt("%.4f", mean(rep)));
  }
  {
    std::map<std::string, std::pair<double, double>> cos;
    std::vector<double> e1;
    std::vector<double> e2;
    for (const auto& s : base) {
      for (const auto& row : s.report.augmentation_table) {
        cos[row.augmentation].first += row.representation_cosine / kSeeds;
        cos[row.augmentation].second += row.projection_cosine / kSeeds;
      }
      e1.push_back(s.report.representation.error_split.e1);
      e2.push_back(s.report.representation.error_split.e2);
    }
    int wins = 0;
    std::string detail;
    for (const auto& [name, c] : cos) {
      wins += c.first > c.second;
      detail += " " + name + " " + fmt("%.4f", c.first) + "/" + fmt("%.4f", c.second) + ";";
    }
    report(9, wins >= 3 && mean(e1) > mean(e2),
           "representation cosine above projection on " + std::to_string(wins) + "/4 unseen augmentations (" +
               detail + " ) and e1 " + fmt("%.4f", mean(e1)) + " > e2 " + fmt("%.4f", mean(e2)));
  }
}

// ---- 5: gradient suite ---------------------------------------------------------

void gradient_criterion() {
  const auto t0 = Clock::now();
  const runner::GradSuiteResult r = runner::run_grad_suite(20, 8, 1e-4);
  const double elapsed = seconds_since(t0);
  std::string worst;
  double worst_err = -1.0;
  for (const auto& e : r.entries) {
    if (e.worst.max_rel_error > worst_err) {
      worst_err = e.worst.max_rel_error;
      worst = e.name;
    }
  }
  report(5, r.passed && r.max_rel_error < 1e-4 && elapsed < 30.0,
         "finite differences over " + std::to_string(r.entries.size()) + " checks x 20 seeds: max relative error " +
             fmt("%.3e", r.max_rel_error) + " (" + worst + "), runtime " + fmt("%.2f", elapsed) + " s");
}

// ---- 6: identities -------------------------------------------------------------

void identity_criterion() {
  double a1 = 0.0;
  double a2 = 0.0;
  double decomposition = 0.0;
  for (int i = 0; i < 100; ++i) {
    data::CounterRng rng(static_cast<std::uint64_t>(i), "acceptance-identity");
    const Matrix z = unit_rows(random_normal(rng, 16, 4));
    const probes::IdentityResiduals r = probes::identity_checks(z, 0.5);
    a1 = std::max(a1, r.a1);
    a2 = std::max(a2, r.a2);

    const Matrix z1 = unit_rows(random_normal(rng, 8, 4));
    const Matrix z2 = unit_rows(random_normal(rng, 8, 4));
    ad::Tape t;
    objectives::LossConfig cfg;
    const objectives::LossBreakdown b = objectives::info_nce(t.constant(z1), t.constant(z2), cfg);
    decomposition = std::max(decomposition, std::abs(b.total.scalar() - (-b.alignment + b.uniformity)));
  }
  report(6, a1 < 1e-12 && a2 < 1e-9 && decomposition < 1e-9,
         "100 unit-norm batches: residual A1 " + fmt("%.2e", a1) + " (< 1e-12), residual A2 " + fmt("%.2e", a2) +
             " (< 1e-9), InfoNCE decomposition " + fmt("%.2e", decomposition) + " (< 1e-9)");
}

// ---- 7: oracle equivalences ------------------------------------------------------

double sort_oracle_percentile(std::vector<double> v, double k) {
  std::sort(v.begin(), v.end());
  const double rank = std::ceil(k / 100.0 * static_cast<double>(v.size()) - 1e-9);
  const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(v.size()))) - 1;
  return v[idx];
}

std::vector<int> brute_knn(const Matrix& train, const std::vector<int>& labels, const Matrix& test, int k) {
  std::vector<int> out;
  for (Eigen::Index t = 0; t < test.rows(); ++t) {
    std::vector<std::pair<double, int>> d;
    for (Eigen::Index i = 0; i < train.rows(); ++i) {
      const double c = test.row(t).dot(train.row(i)) / (test.row(t).norm() * train.row(i).norm());
      d.emplace_back(1.0 - c, static_cast<int>(i));
    }
    std::stable_sort(d.begin(), d.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::map<int, std::pair<int, double>> votes;
    for (int m = 0; m < k; ++m) {
      auto& v = votes[labels[static_cast<std::size_t>(d[static_cast<std::size_t>(m)].second)]];
      v.first += 1;
      v.second += d[static_cast<std::size_t>(m)].first;
    }
    int best = -1;
    std::pair<int, double> bv{-1, 0.0};
    for (const auto& [label, v] : votes) {
      if (v.first > bv.first || (v.first == bv.first && v.second < bv.second)) {
        best = label;
        bv = v;
      }
    }
    out.push_back(best);
  }
  return out;
}

void oracle_criterion() {
  double red_err = 0.0;
  double unif_err = 0.0;
  int knn_mismatch = 0;
  for (int inst = 0; inst < 50; ++inst) {
    data::CounterRng rng(static_cast<std::uint64_t>(inst), "acceptance-oracle");
    const Eigen::Index n = 4 + static_cast<Eigen::Index>(rng.below(13));

    const Matrix r = random_normal(rng, n, 5);
    ad::Tape t;
    const objectives::RedWeights w = objectives::red_weights(t.constant(r), 20.0, 95.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<double> cand;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        cand.push_back(std::exp(r.row(i).dot(r.row(j)) / (r.row(i).norm() * r.row(j).norm()) / 20.0));
      }
      const double expected = 1.0 / sort_oracle_percentile(cand, 95.0);
      red_err = std::max(red_err, std::abs(w.weights[static_cast<std::size_t>(i)] - expected));
    }

    const Matrix z = unit_rows(random_normal(rng, n, 3));
    double brute = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j != i) s += std::exp(z.row(i).dot(z.row(j)) / 0.5);
      }
      brute += std::log(s);
    }
    ad::Tape t2;
    unif_err = std::max(unif_err, std::abs(objectives::uniformity_term(t2.constant(z), 0.5, true).scalar() - brute));

    const Matrix train = random_normal(rng, 30, 3);
    const Matrix test = random_normal(rng, 10, 3);
    std::vector<int> labels;
    for (int i = 0; i < 30; ++i) labels.push_back(static_cast<int>(rng.below(3)));
    const std::vector<int> got = probes::knn_predict(train, labels, test, 5);
    const std::vector<int> want = brute_knn(train, labels, test, 5);
    knn_mismatch += got != want;
  }
  report(7, red_err <= 1e-12 && unif_err <= 1e-12 && knn_mismatch == 0,
         "50 instances each: red_weights vs sort oracle " + fmt("%.2e", red_err) + ", uniformity vs double loop " +
             fmt("%.2e", unif_err) + ", kNN mismatches " + std::to_string(knn_mismatch));
}

// ---- 8: shortcut gradient ------------------------------------------------------

// Max |d loss / d r| with the projector output behind stop_gradient.
double shortcut_gradient(bool red, bool detach) {
  const model::SslModel m = model::init_model(model::MlpSpec{}, 3);
  data::CounterRng rng(3, "acceptance-shortcut");
  const Matrix x1 = (random_normal(rng, 8, 2).array() + 2.0).matrix();
  const Matrix x2 = x1 + 0.1 * random_normal(rng, 8, 2);

  ad::Tape t;
  const model::BoundParams p = model::bind_parameters(t, m.online, true);
  const model::ForwardTrace t1 = model::forward(p, t.constant(x1));
  const model::ForwardTrace t2 = model::forward(p, t.constant(x2));
  const ad::Var z1 = ad::stop_gradient(t1.projection);
  const ad::Var z2 = ad::stop_gradient(t2.projection);
  objectives::LossConfig cfg;
  cfg.red_enabled = red;
  cfg.detach_weights = detach;
  const objectives::LossBreakdown loss =
      red ? objectives::red_info_nce(t1.representation, t2.representation, z1, z2, cfg)
          : objectives::info_nce(z1, z2, cfg);
  t.backward(loss.total);
  double g = 0.0;
  for (const ad::Var* v : {&t1.representation, &t2.representation}) {
    if (v->grad()) g = std::max(g, v->grad()->cwiseAbs().maxCoeff());
  }
  return g;
}

void shortcut_criterion() {
  const double plain = shortcut_gradient(false, false);
  const double attached = shortcut_gradient(true, false);
  const double detached = shortcut_gradient(true, true);
  report(8, plain == 0.0 && detached == 0.0 && attached > 0.0,
         "max |dL/dr| behind stop_gradient: InfoNCE " + fmt("%.3e", plain) + ", RED " + fmt("%.3e", attached) +
             ", RED detached " + fmt("%.3e", detached));
}

// ---- 10: determinism -----------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void determinism_criterion() {
  const auto root = std::filesystem::temp_directory_path() / "redssl_acceptance_determinism";
  std::filesystem::remove_all(root);
  std::ostringstream sink;
  bool ok = true;
  for (const char* run : {"a", "b"}) {
    const std::vector<std::string> args = {"train", "--set", "seed=11", "epochs=20", "eval_every=5", "loss.red=true",
                                           "--out", (root / run).string()};
    ok = ok && runner::cli_dispatch(args, sink, sink) == 0;
  }
  const bool ckpt = ok && slurp(root / "a" / "checkpoint.json") == slurp(root / "b" / "checkpoint.json") &&
                    !slurp(root / "a" / "checkpoint.json").empty();
  const bool log = ok && slurp(root / "a" / "metrics.jsonl") == slurp(root / "b" / "metrics.jsonl") &&
                   !slurp(root / "a" / "metrics.jsonl").empty();
  std::filesystem::remove_all(root);
  report(10, ckpt && log,
         std::string("two train runs, same config and seed: checkpoints ") + (ckpt ? "identical" : "differ") +
             ", metrics logs " + (log ? "identical" : "differ"));
}

}  // namespace

int main() {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  trained_model_criteria();
  gradient_criterion();
  identity_criterion();
  oracle_criterion();
  shortcut_criterion();
  determinism_criterion();
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
