#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "redssl/autodiff/ops.hpp"
#include "redssl/data/rng.hpp"
#include "redssl/error.hpp"
#include "redssl/model/mlp.hpp"

namespace {

using namespace redssl::model;
using redssl::ad::Tape;
namespace fs = std::filesystem;

Matrix random_matrix(std::uint64_t seed, Eigen::Index r, Eigen::Index c) {
  redssl::data::CounterRng rng(seed, "test-model");
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Matrix unit_row(std::size_t dim, std::size_t hot) {
  Matrix m = Matrix::Zero(1, static_cast<Eigen::Index>(dim));
  m(0, static_cast<Eigen::Index>(hot)) = 1.0;
  return m;
}

bool same_params(const ParamSet& a, const ParamSet& b) {
  auto eq = [](const std::vector<Linear>& x, const std::vector<Linear>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].weight != y[i].weight || x[i].bias != y[i].bias) return false;
    }
    return true;
  };
  return eq(a.encoder, b.encoder) && eq(a.projector, b.projector) && eq(a.predictor, b.predictor);
}

TEST(Init, DefaultSpecHas272Parameters) {
  const SslModel m = init_model(MlpSpec{}, 0);
  EXPECT_EQ(m.online.parameter_count(), 2u * 10 + 10 + 10 * 10 + 10 + 10 * 10 + 10 + 10 * 2 + 2);
  EXPECT_EQ(m.online.parameter_count(), 272u);
  EXPECT_EQ(m.parameters().size(), 8u);
}

TEST(Init, WithoutBiasDropsTheBiasVectors) {
  MlpSpec spec;
  spec.bias = false;
  const SslModel m = init_model(spec, 0);
  EXPECT_EQ(m.online.parameter_count(), 272u - 32u);
  for (const Linear& l : m.online.encoder) EXPECT_EQ(l.bias.size(), 0);
}

TEST(Init, DeterministicGlorotWithZeroBias) {
  const SslModel a = init_model(MlpSpec{}, 5);
  const SslModel b = init_model(MlpSpec{}, 5);
  const SslModel c = init_model(MlpSpec{}, 6);
  EXPECT_TRUE(same_params(a.online, b.online));
  EXPECT_FALSE(same_params(a.online, c.online));
  for (const Linear& l : a.online.encoder) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
    EXPECT_LE(l.weight.cwiseAbs().maxCoeff(), limit);
    EXPECT_EQ(l.bias, Matrix::Zero(1, l.weight.cols()));
  }
}

TEST(Init, MomentumCopyEqualsOnline) {
  InitOptions opt;
  opt.momentum_copy = true;
  opt.queue_capacity = 8;
  const SslModel m = init_model(MlpSpec{}, 3, opt);
  ASSERT_TRUE(m.momentum.has_value());
  EXPECT_TRUE(m.momentum->predictor.empty());
  ParamSet online_no_pred = m.online;
  online_no_pred.predictor.clear();
  EXPECT_TRUE(same_params(*m.momentum, online_no_pred));
  ASSERT_TRUE(m.queue.has_value());
  EXPECT_EQ(m.queue->size(), 0u);
}

TEST(Init, SpecValidation) {
  MlpSpec s;
  s.encoder_layers.clear();
  EXPECT_THROW(s.validate(), redssl::ConfigError);
  s = MlpSpec{};
  s.projector_layers = {0};
  EXPECT_THROW(s.validate(), redssl::ConfigError);
  s = MlpSpec{};
  s.input_dim = 0;
  EXPECT_THROW(s.validate(), redssl::ConfigError);
}

TEST(Forward, ProjectionRowsAreUnitNorm) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SslModel m = init_model(MlpSpec{}, seed);
    const Embeddings e = embed(m, random_matrix(seed, 64, 2) * 3.0);
    for (Eigen::Index i = 0; i < e.projection.rows(); ++i) {
      const double n = e.projection.row(i).norm();
      // a dead representation with zero bias leaves a zero projection row
      if (n != 0.0) {
        EXPECT_NEAR(n, 1.0, 1e-12);
      } else {
        EXPECT_EQ(e.representation.row(i).norm(), 0.0);
      }
    }
  }
}

TEST(Forward, ZeroWeightModelGivesZeroRepresentation) {
  SslModel m = init_model(MlpSpec{}, 0);
  for (Matrix* p : m.parameters()) p->setZero();
  const Embeddings e = embed(m, random_matrix(1, 5, 2));
  EXPECT_EQ(e.representation, Matrix::Zero(5, 10));
  EXPECT_EQ(e.projection, Matrix::Zero(5, 2));
  // the strict primitive still refuses the zero rows
  Tape t;
  EXPECT_THROW(redssl::ad::row_l2_normalize(t.constant(e.representation)), redssl::DomainError);
}

TEST(Forward, IdentityEncoderPassesPositiveInputs) {
  MlpSpec spec;
  spec.input_dim = 3;
  spec.encoder_layers = {3};
  spec.projector_layers = {3};
  SslModel m = init_model(spec, 0);
  m.online.encoder[0].weight = Matrix::Identity(3, 3);
  const Matrix x = random_matrix(2, 6, 3).cwiseAbs().array() + 0.1;
  EXPECT_EQ(embed(m, x).representation, x);
}

TEST(Forward, EmbedMatchesTapeForward) {
  const SslModel m = init_model(MlpSpec{}, 4);
  const Matrix x = random_matrix(4, 16, 2);
  Tape t;
  const BoundModel bound(t, m);
  const ForwardTrace tr = bound.forward(x);
  const Embeddings e = embed(m, x);
  EXPECT_LT((tr.representation.value() - e.representation).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((tr.projection.value() - e.projection).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(e.layer_names.size(), 4u);
}

TEST(Forward, InputWidthMismatch) {
  const SslModel m = init_model(MlpSpec{}, 0);
  EXPECT_THROW(embed(m, Matrix::Ones(3, 5)), redssl::ShapeError);
}

TEST(Forward, PredictorOutputIsUnitNorm) {
  MlpSpec spec;
  spec.predictor_layers = {4, 2};
  const SslModel m = init_model(spec, 1);
  Tape t;
  const BoundModel bound(t, m);
  const ForwardTrace tr = bound.forward(random_matrix(7, 8, 2) + Matrix::Constant(8, 2, 2.0));
  ASSERT_TRUE(tr.prediction.has_value());
  for (Eigen::Index i = 0; i < 8; ++i) EXPECT_NEAR(tr.prediction->value().row(i).norm(), 1.0, 1e-12);
}

TEST(Momentum, CoefficientOneKeepsAndZeroCopies) {
  InitOptions opt;
  opt.momentum_copy = true;
  SslModel m = init_model(MlpSpec{}, 0, opt);
  const ParamSet before = *m.momentum;
  for (Matrix* p : m.parameters()) p->array() += 1.0;
  momentum_update(m, 1.0);
  EXPECT_TRUE(same_params(*m.momentum, before));
  momentum_update(m, 0.0);
  EXPECT_TRUE(same_params(*m.momentum, m.online));
}

TEST(Momentum, GeometricConvergenceAtPointNineNine) {
  InitOptions opt;
  opt.momentum_copy = true;
  SslModel m = init_model(MlpSpec{}, 0, opt);
  const Matrix start = m.momentum->encoder[0].weight;
  for (Matrix* p : m.parameters()) p->array() += 1.0;
  const Matrix target = m.online.encoder[0].weight;
  for (int step = 1; step <= 2; ++step) {
    momentum_update(m, 0.99);
    const Matrix gap = m.momentum->encoder[0].weight - target;
    const Matrix want = std::pow(0.99, step) * (start - target);
    EXPECT_LT((gap - want).cwiseAbs().maxCoeff(), 1e-14) << "step " << step;
  }
  EXPECT_THROW(momentum_update(m, 1.5), redssl::DomainError);
}

TEST(Momentum, GradientsNeverReachMomentumParameters) {
  InitOptions opt;
  opt.momentum_copy = true;
  const SslModel m = init_model(MlpSpec{}, 0, opt);
  Tape t;
  const BoundModel bound(t, m);
  const ForwardTrace k = bound.forward(random_matrix(3, 8, 2), true);
  t.backward(redssl::ad::sum(k.representation));
  for (const Matrix& g : bound.gradients()) EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Queue, FifoKeepsNewestRowsInOrder) {
  NegativeQueue q(4, 6);
  for (std::size_t i = 0; i < 6; ++i) q.push(unit_row(6, i));
  const Matrix n = q.negatives();
  ASSERT_EQ(n.rows(), 4);
  for (Eigen::Index r = 0; r < 4; ++r) EXPECT_EQ(n.row(r), unit_row(6, static_cast<std::size_t>(r + 2)));
}

TEST(Queue, BulkPushMatchesSinglePushes) {
  NegativeQueue a(5, 3);
  NegativeQueue b(5, 3);
  Matrix rows(7, 3);
  for (Eigen::Index i = 0; i < 7; ++i) rows.row(i) = unit_row(3, static_cast<std::size_t>(i % 3)) * (i % 2 ? 1.0 : -1.0);
  a.push(rows);
  for (Eigen::Index i = 0; i < 7; ++i) b.push(rows.row(i));
  EXPECT_EQ(a.negatives(), b.negatives());
  EXPECT_EQ(a.negatives(), rows.bottomRows(5));
}

TEST(Queue, EmptyAndInvalidRows) {
  InitOptions opt;
  opt.momentum_copy = true;
  opt.queue_capacity = 4;
  const SslModel m = init_model(MlpSpec{}, 0, opt);
  const Matrix n = queue_negatives(m);
  EXPECT_EQ(n.rows(), 0);
  EXPECT_EQ(n.cols(), 2);
  NegativeQueue q(4, 2);
  EXPECT_THROW(q.push(Matrix::Constant(1, 2, 1.0)), redssl::DomainError);
  EXPECT_THROW(q.push(Matrix::Ones(1, 3) / std::sqrt(3.0)), redssl::ShapeError);
  EXPECT_EQ(q.size(), 0u);
  q.push(Matrix::Zero(1, 2));
  EXPECT_EQ(q.size(), 1u);
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("redssl_ckpt_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  fs::path dir_;
};

TEST_F(CheckpointTest, SaveLoadSaveIsByteIdentical) {
  InitOptions opt;
  opt.momentum_copy = true;
  opt.queue_capacity = 3;
  MlpSpec spec;
  spec.predictor_layers = {3, 2};
  SslModel m = init_model(spec, 12, opt);
  for (Matrix* p : m.parameters()) *p += 0.1 * random_matrix(p->size(), p->rows(), p->cols());
  queue_push(m, Matrix::Identity(2, 2));
  save_checkpoint(m, dir_ / "a.json");
  const SslModel back = load_checkpoint(dir_ / "a.json");
  save_checkpoint(back, dir_ / "b.json");
  EXPECT_EQ(slurp(dir_ / "a.json"), slurp(dir_ / "b.json"));
  EXPECT_TRUE(same_params(back.online, m.online));
  EXPECT_TRUE(same_params(*back.momentum, *m.momentum));
  EXPECT_EQ(back.queue->negatives(), m.queue->negatives());
  EXPECT_EQ(back.spec, m.spec);
  const Matrix x = random_matrix(77, 10, 2);
  EXPECT_LT((embed(back, x).projection - embed(m, x).projection).cwiseAbs().maxCoeff(), 1e-15);
}

TEST_F(CheckpointTest, BiasFreeModelRoundTrips) {
  MlpSpec spec;
  spec.bias = false;
  const SslModel m = init_model(spec, 2);
  const SslModel back = checkpoint_from_string(checkpoint_to_string(m));
  EXPECT_FALSE(back.spec.bias);
  EXPECT_TRUE(same_params(back.online, m.online));
}

TEST_F(CheckpointTest, TruncatedOrMissingFile) {
  const std::string text = checkpoint_to_string(init_model(MlpSpec{}, 0));
  {
    std::ofstream out(dir_ / "t.json", std::ios::binary);
    out << text.substr(0, text.size() / 2);
  }
  EXPECT_THROW(load_checkpoint(dir_ / "t.json"), redssl::ParseError);
  EXPECT_THROW(load_checkpoint(dir_ / "none.json"), redssl::IoError);
}

TEST_F(CheckpointTest, WrongArraySizeIsRejected) {
  std::string text = checkpoint_to_string(init_model(MlpSpec{}, 0));
  const auto pos = text.find("\"encoder_layers\"");
  ASSERT_NE(pos, std::string::npos);
  const auto first_ten = text.find("10", pos);
  text.replace(first_ten, 2, "11");
  EXPECT_THROW(checkpoint_from_string(text), redssl::ParseError);
}

TEST(ParamStd, HandExamples) {
  MlpSpec spec;
  spec.input_dim = 1;
  spec.encoder_layers = {2};
  spec.projector_layers = {2};
  SslModel m = init_model(spec, 0);
  m.online.encoder[0].weight = Matrix::Constant(1, 2, 0.3);
  m.online.projector[0].weight.resize(2, 2);
  m.online.projector[0].weight << -1, 1, -1, 1;
  const auto s = parameter_std_profile(m);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0], 0.0);
  EXPECT_DOUBLE_EQ(s[1], 1.0);
  m.online.projector[0].weight.resize(1, 2);
  m.online.projector[0].weight << -1, 1;
  EXPECT_DOUBLE_EQ(parameter_std_profile(m)[1], 1.0);
}

}  // namespace
