#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <Eigen/Dense>

#include "subtomo/datasets.hpp"
#include "subtomo/error.hpp"
#include "subtomo/geometry.hpp"
#include "subtomo/neuralnet.hpp"
#include "test_support.hpp"

namespace subtomo {
namespace {

using testing::central_difference;
using testing::random_simplex;
using testing::relative_error;

MlpModel random_model(std::vector<int> dims, Rng& rng) {
  MlpModel m = MlpModel::he_initialized(std::move(dims), rng);
  for (std::size_t l = 0; l < m.layer_count(); ++l)
    m.biases(l) = 0.1 * standard_normal_vector(static_cast<int>(m.biases(l).size()), rng);
  return m;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("subtomo_nn_" + name);
}

TEST(MlpModel, ZeroModelIsUniform) {
  const MlpModel m({7, 5, 4});
  const Eigen::VectorXd p = m.forward(Eigen::VectorXd::LinSpaced(7, -1.0, 2.0));
  for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(p[c], 0.25);
}

TEST(MlpModel, ParameterCountFormula) {
  const MlpModel m({10, 64, 64, 3});
  EXPECT_EQ(m.parameter_count(), std::size_t{10 * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3});
  EXPECT_EQ(m.layer_count(), 3u);
  EXPECT_THROW(MlpModel({4}), InvalidArgument);
  EXPECT_THROW(MlpModel({4, 0, 2}), InvalidDimension);
}

TEST(MlpModel, OutputsOnSimplexAndHeadShiftInvariant) {
  Rng rng(1);
  MlpModel m = random_model({12, 16, 16, 5}, rng);
  std::vector<Eigen::VectorXd> xs;
  std::vector<Eigen::VectorXd> before;
  for (int t = 0; t < 100; ++t) {
    xs.push_back(3.0 * standard_normal_vector(12, rng));
    before.push_back(m.forward(xs.back()));
    EXPECT_NEAR(before.back().sum(), 1.0, 1e-9);
    EXPECT_GE(before.back().minCoeff(), 0.0);
  }
  m.biases(2).array() += 3.7;
  for (int t = 0; t < 100; ++t) EXPECT_LE((m.forward(xs[t]) - before[t]).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(MlpModel, InputGradientMatchesFiniteDifferences) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const MlpModel m = random_model({10, 12, 8, 3}, rng);
    const Eigen::VectorXd x = standard_normal_vector(10, rng);
    const Eigen::VectorXd target = random_simplex(3, rng);
    const auto lg = m.input_gradient(x, target);
    const Eigen::VectorXd fd = central_difference(
        [&](const Eigen::VectorXd& y) { return m.input_gradient(y, target).loss; }, x);
    EXPECT_LE(relative_error(lg.gradient, fd), 1e-4);
  }
}

TEST(MlpModel, ChainRuleOntoCutCoordinates) {
  Rng rng(3);
  const MlpModel m = random_model({20, 16, 4}, rng);
  for (int t = 0; t < 20; ++t) {
    AffineCut cut = sample_cut(20, 5, 20, rng);
    cut.offset = standard_normal_vector(20, rng);
    const Eigen::VectorXd theta = standard_normal_vector(5, rng);
    const Eigen::VectorXd target = Eigen::VectorXd::Unit(4, t % 4);
    const Eigen::VectorXd g_theta = cut.basis * m.input_gradient(embed(cut, theta), target).gradient;
    const Eigen::VectorXd fd = central_difference(
        [&](const Eigen::VectorXd& th) { return m.input_gradient(embed(cut, th), target).loss; }, theta);
    EXPECT_LE(relative_error(g_theta, fd), 1e-4);
  }
}

TEST(MlpModel, StationaryWhenOutputMatchesTarget) {
  Rng rng(4);
  MlpModel m = random_model({6, 8, 3}, rng);
  m.weights(1).setZero();
  m.biases(1).setZero();
  const auto lg = m.input_gradient(standard_normal_vector(6, rng), Eigen::VectorXd::Constant(3, 1.0 / 3.0));
  EXPECT_NEAR(lg.loss, std::log(3.0), 1e-12);
  EXPECT_EQ(lg.gradient.norm(), 0.0);
}

TEST(MlpModel, ParameterGradientMatchesFiniteDifferences) {
  Rng rng(5);
  MlpModel m = random_model({5, 7, 6, 3}, rng);
  const Eigen::MatrixXd inputs = standard_normal_matrix(9, 5, rng);
  const std::vector<int> labels = {0, 1, 2, 2, 1, 0, 0, 1, 2};
  const double l2 = 0.03;
  MlpModel::ParameterGradient grad;
  m.loss_and_parameter_gradient(inputs, labels, l2, grad);
  MlpModel::ParameterGradient scratch;
  auto loss_at = [&](double& slot, double value) {
    const double saved = slot;
    slot = value;
    const double loss = m.loss_and_parameter_gradient(inputs, labels, l2, scratch);
    slot = saved;
    return loss;
  };
  const double h = 1e-5;
  for (std::size_t l = 0; l < m.layer_count(); ++l) {
    Eigen::VectorXd analytic(m.weights(l).size() + m.biases(l).size());
    Eigen::VectorXd numeric(analytic.size());
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < m.weights(l).size(); ++i, ++k) {
      double& w = m.weights(l).data()[i];
      analytic[k] = grad.weights[l].data()[i];
      numeric[k] = (loss_at(w, w + h) - loss_at(w, w - h)) / (2.0 * h);
    }
    for (Eigen::Index i = 0; i < m.biases(l).size(); ++i, ++k) {
      double& b = m.biases(l)[i];
      analytic[k] = grad.biases[l][i];
      numeric[k] = (loss_at(b, b + h) - loss_at(b, b - h)) / (2.0 * h);
    }
    EXPECT_LE(relative_error(analytic, numeric), 1e-4) << "layer " << l;
  }
}

TEST(MlpModel, RejectsNonFiniteInput) {
  const MlpModel m({3, 4, 2});
  EXPECT_THROW(m.forward(Eigen::Vector3d(0.0, NAN, 1.0)), NonFiniteInput);
  EXPECT_THROW(m.forward(Eigen::Vector2d(0.0, 1.0)), InvalidDimension);
}

TEST(Ensemble, SingleMemberEqualsModel) {
  Rng rng(6);
  const MlpModel m = random_model({8, 10, 4}, rng);
  const EnsembleModel e({m});
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd x = standard_normal_vector(8, rng);
    EXPECT_LE((ensemble_evaluate(e, x) - m.forward(x)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Ensemble, AveragesOpposingMembers) {
  MlpModel a({2, 2}), b({2, 2});
  a.biases(0) = Eigen::Vector2d(800.0, 0.0);
  b.biases(0) = Eigen::Vector2d(0.0, 800.0);
  const EnsembleModel e({a, b});
  const Eigen::VectorXd p = ensemble_evaluate(e, Eigen::Vector2d(0.3, -0.2));
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Ensemble, ArithmeticMeanAndGradient) {
  Rng rng(7);
  std::vector<MlpModel> members;
  for (int i = 0; i < 3; ++i) members.push_back(random_model({9, 11, 4}, rng));
  const EnsembleModel e(members);
  for (int t = 0; t < 100; ++t) {
    const Eigen::VectorXd x = 2.0 * standard_normal_vector(9, rng);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
    for (const auto& m : members) mean += m.forward(x) / 3.0;
    const Eigen::VectorXd p = e.evaluate(x);
    EXPECT_LE((p - mean).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(p.sum(), 1.0, 1e-9);
    const Eigen::VectorXd target = random_simplex(4, rng);
    const auto lg = e.loss_and_input_gradient(x, target);
    const Eigen::VectorXd fd = central_difference(
        [&](const Eigen::VectorXd& y) { return e.loss_and_input_gradient(y, target).loss; }, x);
    EXPECT_LE(relative_error(lg.gradient, fd), 1e-4);
  }
}

TEST(Ensemble, RejectsEmptyOrMismatchedMembers) {
  EXPECT_THROW(EnsembleModel(std::vector<MlpModel>{}), InvalidArgument);
  EXPECT_THROW(EnsembleModel({MlpModel({3, 2}), MlpModel({3, 4, 2})}), InvalidArgument);
}

TEST(Train, SeparableBlobsReachFullAccuracy) {
  Rng rng(8);
  const Dataset data = gen_blobs(16, 2, 200, 6.0, 1.0, rng);
  MlpModel m = MlpModel::he_initialized({16, 64, 64, 2}, rng);
  TrainConfig cfg;
  cfg.seed = 3;
  const auto history = train(m, data, nullptr, cfg);
  ASSERT_LE(history.size(), 30u);
  EXPECT_DOUBLE_EQ(history.back().train_accuracy, 1.0);
  EXPECT_DOUBLE_EQ(accuracy(m, data), 1.0);
  EXPECT_TRUE(std::isnan(history.back().test_accuracy));
}

TEST(Train, MemorizesRandomLabels) {
  Rng rng(9);
  const Dataset all = gen_blobs(16, 4, 290, 3.0, 1.0, rng);
  std::vector<int> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const Dataset clean = all.select(std::span(order).first(160));
  Dataset test = all.select(std::span(order).subspan(160));
  test.split = Split::test;
  const Dataset shuffled = permute_labels(clean, rng);
  MlpModel m = MlpModel::he_initialized({16, 256, 256, 4}, rng);
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.learning_rate = 3e-3;
  cfg.l2_coefficient = 0.0;
  cfg.seed = 4;
  const auto history = train(m, shuffled, &test, cfg);
  EXPECT_DOUBLE_EQ(history.back().train_accuracy, 1.0);
  EXPECT_NEAR(history.back().test_accuracy, 0.25, 0.10);
}

TEST(Train, ZeroLearningRateLeavesWeightsUnchanged) {
  Rng rng(10);
  const Dataset data = gen_blobs(6, 3, 20, 4.0, 1.0, rng);
  MlpModel m = random_model({6, 8, 3}, rng);
  const MlpModel before = m;
  for (auto opt : {OptimizerKind::adam, OptimizerKind::sgd_momentum}) {
    TrainConfig cfg;
    cfg.optimizer = opt;
    cfg.learning_rate = 0.0;
    cfg.epochs = 1;
    train(m, data, nullptr, cfg);
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
      EXPECT_EQ(m.weights(l), before.weights(l));
      EXPECT_EQ(m.biases(l), before.biases(l));
    }
  }
}

TEST(Train, BitReproducibleUnderFixedSeed) {
  Rng rng(11);
  const Dataset data = gen_blobs(8, 3, 30, 4.0, 1.0, rng);
  const MlpModel init = random_model({8, 16, 3}, rng);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 77;
  MlpModel a = init, b = init;
  std::vector<EpochMetrics> seen;
  const auto ha = train(a, data, nullptr, cfg, [&](const EpochMetrics& em, const MlpModel&) { seen.push_back(em); });
  const auto hb = train(b, data, nullptr, cfg);
  EXPECT_EQ(serialize_model(a), serialize_model(b));
  ASSERT_EQ(seen.size(), ha.size());
  for (std::size_t i = 0; i < ha.size(); ++i) {
    EXPECT_EQ(ha[i].train_loss, hb[i].train_loss);
    EXPECT_EQ(seen[i].epoch, ha[i].epoch);
  }
}

TEST(Train, SgdMomentumAlsoLearns) {
  Rng rng(12);
  const Dataset data = gen_blobs(8, 2, 100, 6.0, 1.0, rng);
  MlpModel m = MlpModel::he_initialized({8, 32, 2}, rng);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::sgd_momentum;
  cfg.learning_rate = 0.01;
  cfg.epochs = 10;
  train(m, data, nullptr, cfg);
  EXPECT_GE(accuracy(m, data), 0.99);
}

TEST(Train, DivergenceIsReported) {
  Rng rng(13);
  Dataset data = gen_blobs(4, 2, 20, 4.0, 1.0, rng);
  data.inputs *= 1e150;
  MlpModel m = random_model({4, 8, 2}, rng);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::sgd_momentum;
  cfg.learning_rate = 1e100;
  EXPECT_THROW(train(m, data, nullptr, cfg), Divergence);
}

TEST(Train, ValidatesConfigAndData) {
  Rng rng(14);
  const Dataset data = gen_blobs(4, 2, 10, 4.0, 1.0, rng);
  MlpModel m({4, 3, 2});
  TrainConfig bad;
  bad.epochs = 0;
  EXPECT_THROW(train(m, data, nullptr, bad), InvalidArgument);
  bad = TrainConfig{};
  bad.batch_size = 0;
  EXPECT_THROW(validate(bad), InvalidArgument);
  bad = TrainConfig{};
  bad.learning_rate = -1.0;
  EXPECT_THROW(validate(bad), InvalidArgument);
  MlpModel wrong({5, 3, 2});
  EXPECT_THROW(train(wrong, data, nullptr, TrainConfig{}), InvalidDimension);
}

TEST(Train, MetricsCsvLayout) {
  const std::string csv = metrics_csv({{1, 0.5, 0.75, 0.6}, {2, 0.25, 1.0, std::nan("")}});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,train_loss,train_acc,test_acc");
  EXPECT_NE(csv.find("1,0.5,0.75,0.6"), std::string::npos);
}

TEST(ModelFile, RoundTripIsBitIdentical) {
  Rng rng(15);
  const MlpModel m = random_model({10, 13, 7, 3}, rng);
  const auto path = temp_path("roundtrip.bin");
  save_model(m, path);
  const MlpModel loaded = load_model(path);
  std::filesystem::remove(path);
  EXPECT_EQ(loaded.layer_dims(), m.layer_dims());
  for (int t = 0; t < 100; ++t) {
    const Eigen::VectorXd x = standard_normal_vector(10, rng);
    const Eigen::VectorXd a = m.forward(x), b = loaded.forward(x);
    for (int c = 0; c < 3; ++c) EXPECT_EQ(std::bit_cast<std::uint64_t>(a[c]), std::bit_cast<std::uint64_t>(b[c]));
  }
}

TEST(ModelFile, RejectsVersionMismatch) {
  auto bytes = serialize_model(MlpModel({3, 2}));
  bytes[8] = 99;
  try {
    deserialize_model(bytes);
    FAIL() << "expected MalformedFile";
  } catch (const MalformedFile& e) {
    EXPECT_EQ(e.byte_offset(), 8u);
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(ModelFile, RejectsTruncationAndGarbage) {
  const auto bytes = serialize_model(MlpModel({3, 4, 2}));
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{14}, bytes.size() / 2, bytes.size() - 1})
    EXPECT_THROW(deserialize_model(std::span(bytes.data(), cut)), MalformedFile) << cut;
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(deserialize_model(extra), MalformedFile);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_model(bad_magic), MalformedFile);
  const auto path = temp_path("truncated.bin");
  {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), 20);
  }
  EXPECT_THROW(load_model(path), MalformedFile);
  std::filesystem::remove(path);
  EXPECT_THROW(load_model(temp_path("does_not_exist.bin")), Error);
}

}  // namespace
}  // namespace subtomo
