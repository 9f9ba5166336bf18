#include "redssl/runner/grad_suite.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "redssl/autodiff/ops.hpp"
#include "redssl/data/rng.hpp"
#include "redssl/model/mlp.hpp"
#include "redssl/objectives/losses.hpp"

namespace redssl::runner {

namespace {

using ad::Matrix;
using ad::Tape;
using ad::Var;

Matrix random_matrix(data::CounterRng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Matrix positive_matrix(data::CounterRng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 0.5 + 1.5 * rng.uniform();
  return m;
}

struct Case {
  std::string name;
  Matrix x0;
  ad::GraphBuilder f;
};

std::vector<Case> primitive_cases(std::uint64_t seed, Eigen::Index n) {
  data::CounterRng rng(seed, "grad-suite");
  const Eigen::Index d = 3;
  // Outputs are reduced against fixed random weights; builders capture their
  // constants so every evaluation sees the same graph.
  auto weights = [&](Eigen::Index r, Eigen::Index c) { return random_matrix(rng, r, c); };
  std::vector<Case> cases;

  const Matrix b = weights(d, 4), w_mm = weights(n, 4);
  cases.push_back({"matmul", random_matrix(rng, n, d), [=](Tape& t, const Var& x) {
                     return ad::sum(ad::mul(ad::matmul(x, t.constant(b)), t.constant(w_mm)));
                   }});
  const Matrix a = weights(4, n), w_mm2 = weights(4, d);
  cases.push_back({"matmul_rhs", random_matrix(rng, n, d), [=](Tape& t, const Var& x) {
                     return ad::sum(ad::mul(ad::matmul(t.constant(a), x), t.constant(w_mm2)));
                   }});
  const Matrix c_add = weights(n, d), w_add = weights(n, d);
  cases.push_back({"add", random_matrix(rng, n, d), [=](Tape& t, const Var& x) {
                     return ad::sum(ad::mul(ad::add(x, t.constant(c_add)), t.constant(w_add)));
                   }});
  cases.push_back({"add_broadcast", random_matrix(rng, 1, d), [=](Tape& t, const Var& x) {
                     return ad::sum(ad::mul(ad::add(t.constant(c_add), x), t.constant(w_add)));
                   }});
  cases.push_back({"sub", random_matrix(rng, n, d), [=](Tape& t, const Var& x) {
                     return ad::sum(ad::mul(ad::sub(t.constant(c_add), x), t.constant(w_add)));
                   }});
  cases.push_back({"sub_broadcast", random_matrix(rng, 1, d), [=](Tape& t, const Var& x) {
                     return ad::sum(ad::mul(ad::sub(t.constant(c_add), x), t.constant(w_add)));
                   }});
  cases.push_back({"mul", random_matrix(rng, n, d), [=](Tape& t, const Var& x) {
                     return ad::sum(ad::mul(ad::mul(x, x), t.constant(w_add)));
                   }});
  cases.push_back({"scale", random_matrix(rng, n, d), [=](Tape& t, const Var& x) {
                     return ad::sum(ad::mul(ad::scale(x, -1.7), t.constant(w_add)));
                   }});
  cases.push_back({"relu", random_matrix(rng, n, d), [=](Tape& t, const Var& x) {
                     return ad::sum(ad::mul(ad::relu(x), t.constant(w_add)));
                   }});
  cases.push_back({"exp", random_matrix(rng, n, d), [=](Tape& t, const Var& x) {
                     return ad::sum(ad::mul(ad::exp(x), t.constant(w_add)));
                   }});
  cases.push_back({"log", positive_matrix(rng, n, d), [=](Tape& t, const Var& x) {
                     return ad::sum(ad::mul(ad::log(x), t.constant(w_add)));
                   }});
  cases.push_back({"sum", random_matrix(rng, n, d), [=](Tape&, const Var& x) {
                     return ad::mul(ad::sum(x), ad::sum(x));
                   }});
  const Matrix w_col = weights(n, 1);
  cases.push_back({"row_sum", random_matrix(rng, n, d), [=](Tape& t, const Var& x) {
                     return ad::sum(ad::mul(ad::row_sum(x), t.constant(w_col)));
                   }});
  cases.push_back({"mean", random_matrix(rng, n, d), [=](Tape&, const Var& x) {
                     return ad::exp(ad::mean(x));
                   }});
  cases.push_back({"row_l2_normalize", random_matrix(rng, n, d), [=](Tape& t, const Var& x) {
                     return ad::sum(ad::mul(ad::row_l2_normalize(x), t.constant(w_add)));
                   }});
  const Matrix other = weights(n, d);
  cases.push_back({"dot_rows", random_matrix(rng, n, d), [=](Tape& t, const Var& x) {
                     return ad::sum(ad::mul(ad::dot_rows(x, t.constant(other)), t.constant(w_col)));
                   }});
  const Matrix w_t = weights(d, n);
  cases.push_back({"transpose", random_matrix(rng, n, d), [=](Tape& t, const Var& x) {
                     return ad::sum(ad::mul(ad::transpose(x), t.constant(w_t)));
                   }});
  const Matrix w_cat = weights(2 * n, d);
  cases.push_back({"concat_rows", random_matrix(rng, n, d), [=](Tape& t, const Var& x) {
                     return ad::sum(ad::mul(ad::concat_rows(x, ad::scale(x, 2.0)), t.constant(w_cat)));
                   }});
  const Matrix w_slice = weights(n / 2, d);
  cases.push_back({"slice_rows", random_matrix(rng, n, d), [=](Tape& t, const Var& x) {
                     return ad::sum(ad::mul(ad::slice_rows(x, 1, n / 2), t.constant(w_slice)));
                   }});
  cases.push_back({"percentile_select", random_matrix(rng, n, 1), [=](Tape&, const Var& x) {
                     return ad::scale(ad::percentile_select(ad::exp(x), 95.0).value, 3.0);
                   }});
  cases.push_back({"row_percentile_off_diagonal", random_matrix(rng, n, n), [=](Tape& t, const Var& x) {
                     return ad::sum(ad::mul(ad::row_percentile_off_diagonal(x, 75.0).values, t.constant(w_col)));
                   }});
  return cases;
}

std::vector<Case> loss_cases(std::uint64_t seed, Eigen::Index n) {
  data::CounterRng rng(seed, "grad-suite-loss");
  const Eigen::Index rep = 6;
  const Matrix head = random_matrix(rng, rep, 3);
  objectives::LossConfig plain;
  objectives::LossConfig red = plain;
  red.red_enabled = true;
  red.eta = 2.0;

  // x stacks raw representations of both views; a fixed linear head maps
  // them to projections.
  auto split = [=](Tape& t, const Var& x) {
    const Var r1 = ad::slice_rows(x, 0, n);
    const Var r2 = ad::slice_rows(x, n, n);
    const Var h = t.constant(head);
    return std::array<Var, 4>{r1, r2, ad::row_l2_normalize(ad::matmul(r1, h)),
                              ad::row_l2_normalize(ad::matmul(r2, h))};
  };

  std::vector<Case> cases;
  cases.push_back({"info_nce", random_matrix(rng, 2 * n, rep), [=](Tape& t, const Var& x) {
                     const auto v = split(t, x);
                     return objectives::info_nce(v[2], v[3], plain).total;
                   }});
  cases.push_back({"red_info_nce", random_matrix(rng, 2 * n, rep), [=](Tape& t, const Var& x) {
                     const auto v = split(t, x);
                     return objectives::red_info_nce(v[0], v[1], v[2], v[3], red).total;
                   }});

  // Full model: the leaf is the first encoder weight, the rest of the
  // network is constant.
  model::MlpSpec spec;
  spec.encoder_layers = {6, 6};
  const model::SslModel m = model::init_model(spec, seed);
  const Matrix in1 = (random_matrix(rng, n, 2).array() + 2.0).matrix();
  const Matrix in2 = in1 + 0.1 * random_matrix(rng, n, 2);
  auto run_model = [=](Tape& t, const Var& w, const objectives::LossConfig& cfg) {
    model::BoundParams p = model::bind_parameters(t, m.online, false);
    p.encoder[0].weight = w;
    const model::ForwardTrace t1 = model::forward(p, t.constant(in1));
    const model::ForwardTrace t2 = model::forward(p, t.constant(in2));
    return cfg.red_enabled ? objectives::red_info_nce(t1, t2, cfg).total : objectives::info_nce(t1, t2, cfg).total;
  };
  const Matrix w0 = m.online.encoder[0].weight;
  cases.push_back({"info_nce_model", w0, [=](Tape& t, const Var& x) { return run_model(t, x, plain); }});
  cases.push_back({"red_info_nce_model", w0, [=](Tape& t, const Var& x) { return run_model(t, x, red); }});
  return cases;
}

// stop_gradient has no finite-difference counterpart: sum(x * sg(x)) must
// have gradient exactly x.
ad::GradCheckResult stop_gradient_check(std::uint64_t seed, Eigen::Index n) {
  data::CounterRng rng(seed, "grad-suite-stop");
  const Matrix x0 = random_matrix(rng, n, 3);
  Tape t;
  const Var x = t.leaf(x0);
  t.backward(ad::sum(ad::mul(x, ad::stop_gradient(x))));
  ad::GradCheckResult r;
  r.checked = static_cast<std::size_t>(x0.size());
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    const double g = x.grad()->data()[i];
    const double rel = std::abs(g - x0.data()[i]) / std::max({std::abs(g), std::abs(x0.data()[i]), 1e-8});
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_index = static_cast<std::size_t>(i);
    }
  }
  return r;
}

void absorb(GradSuiteEntry& e, const ad::GradCheckResult& r) {
  if (e.checked + e.skipped == 0 || r.max_rel_error > e.worst.max_rel_error) e.worst = r;
  e.checked += r.checked;
  e.skipped += r.skipped;
}

}  // namespace

GradSuiteResult run_grad_suite(std::size_t seeds, std::size_t batch_size, double tol) {
  const auto n = static_cast<Eigen::Index>(batch_size);
  GradSuiteResult out;
  auto entry = [&out](const std::string& name) -> GradSuiteEntry& {
    for (auto& e : out.entries) {
      if (e.name == name) return e;
    }
    out.entries.push_back({name, {}, 0, 0});
    return out.entries.back();
  };

  for (std::size_t s = 0; s < seeds; ++s) {
    for (const Case& c : primitive_cases(s, n)) absorb(entry(c.name), ad::finite_difference_check(c.f, c.x0, 1e-6, tol));
    absorb(entry("stop_gradient"), stop_gradient_check(s, n));
    for (const Case& c : loss_cases(s, n)) absorb(entry(c.name), ad::finite_difference_check(c.f, c.x0, 1e-6, tol));
  }
  for (auto& e : out.entries) {
    e.worst.passed = e.worst.max_rel_error < tol;
    out.max_rel_error = std::max(out.max_rel_error, e.worst.max_rel_error);
    out.passed = out.passed && e.worst.passed && e.checked > 0;
  }
  return out;
}

}  // namespace redssl::runner
