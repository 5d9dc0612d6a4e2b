#include <cmath>
#include <random>

#include "gtest/gtest.h"
#include "fedseq/nn.hpp"
#include "test_util.hpp"

namespace fedseq {
namespace {

ModelSpec mlp(std::size_t in, std::vector<std::size_t> hidden, std::size_t classes) {
  ModelSpec s;
  s.input_dim = in;
  s.hidden = std::move(hidden);
  s.num_classes = classes;
  return s;
}

TEST(NnLayout, MlpSplitsFeatureAndClassifier) {
  const auto layout = model_layout(mlp(4, {8, 6}, 3));
  ASSERT_EQ(layout.size(), 3u);
  EXPECT_EQ(layout[0].name, "fc1");
  EXPECT_EQ(layout[0].role, LayerRole::feature);
  EXPECT_EQ(layout[1].role, LayerRole::classifier);
  EXPECT_EQ(layout[2].role, LayerRole::classifier);
  EXPECT_EQ(layout[0].length, 4u * 8 + 8);
  EXPECT_EQ(layout[1].offset, layout[0].length);
  EXPECT_EQ(param_count(mlp(4, {8, 6}, 3)), 40u + 54 + 21);
}

TEST(NnLayout, LinearModelIsAllClassifier) {
  const auto layout = model_layout(mlp(5, {}, 3));
  ASSERT_EQ(layout.size(), 1u);
  EXPECT_EQ(layout[0].role, LayerRole::classifier);
}

TEST(NnParamVector, RejectsBrokenLayouts) {
  std::vector<LayerSlice> gap{{"a", LayerRole::feature, 0, 2}, {"b", LayerRole::classifier, 3, 2}};
  EXPECT_THROW(ParamVector(VectorXd::Zero(5), gap), ShapeError);
  std::vector<LayerSlice> short_cover{{"a", LayerRole::classifier, 0, 2}};
  EXPECT_THROW(ParamVector(VectorXd::Zero(3), short_cover), ShapeError);
  std::vector<LayerSlice> no_clf{{"a", LayerRole::feature, 0, 3}};
  EXPECT_THROW(ParamVector(VectorXd::Zero(3), no_clf), ShapeError);
}

TEST(NnForward, ZeroParamsGiveUniformSoftmax) {
  const auto spec = mlp(6, {5}, 4);
  const auto params = ParamVector::zeros(model_layout(spec));
  const RowMatrixXd x = RowMatrixXd::Random(3, 6);
  const auto logits = forward(params, spec, x);
  EXPECT_EQ(logits.cwiseAbs().maxCoeff(), 0.0);
  const auto p = softmax(logits);
  for (Eigen::Index r = 0; r < p.rows(); ++r)
    for (Eigen::Index c = 0; c < p.cols(); ++c) EXPECT_DOUBLE_EQ(p(r, c), 0.25);
}

TEST(NnForward, OneHotSelectsWeightColumn) {
  const auto spec = mlp(4, {}, 3);
  auto params = ParamVector::zeros(model_layout(spec));
  for (Eigen::Index i = 0; i < 12; ++i) params.values()(i) = static_cast<double>(i + 1);
  RowMatrixXd x = RowMatrixXd::Zero(1, 4);
  x(0, 2) = 1.0;
  const auto logits = forward(params, spec, x);
  // weights are out x in, row-major: column 2 holds entries 2, 6, 10
  EXPECT_EQ(logits(0, 0), 3.0);
  EXPECT_EQ(logits(0, 1), 7.0);
  EXPECT_EQ(logits(0, 2), 11.0);
}

TEST(NnForward, MatchesStraightLineOracle) {
  const auto spec = mlp(4, {8}, 3);
  const auto params = init_params(spec, 42);
  std::mt19937_64 gen(42);
  std::normal_distribution<double> n01;
  RowMatrixXd x(5, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n01(gen);

  const double* v = params.values().data();
  Eigen::MatrixXd w1(8, 4), w2(3, 8);
  Eigen::VectorXd b1(8), b2(3);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 4; ++c) w1(r, c) = v[r * 4 + c];
  for (int r = 0; r < 8; ++r) b1(r) = v[32 + r];
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 8; ++c) w2(r, c) = v[40 + r * 8 + c];
  for (int r = 0; r < 3; ++r) b2(r) = v[64 + r];

  const auto logits = forward(params, spec, x);
  for (int s = 0; s < 5; ++s) {
    Eigen::VectorXd h = w1 * x.row(s).transpose() + b1;
    for (int i = 0; i < 8; ++i) h(i) = h(i) > 0 ? h(i) : 0.0;
    const Eigen::VectorXd z = w2 * h + b2;
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(logits(s, c), z(c), 1e-12);
  }
}

TEST(NnForward, ShapeErrorNamesLayer) {
  const auto spec = mlp(4, {8}, 3);
  const auto other = init_params(mlp(5, {8}, 3), 1);
  try {
    forward(other, spec, RowMatrixXd::Zero(1, 4));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("fc1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(forward(init_params(spec, 1), spec, RowMatrixXd::Zero(1, 5)), ShapeError);
}

TEST(NnForward, OverflowReportsLayerIndex) {
  const auto spec = mlp(2, {3}, 2);
  auto params = init_params(spec, 3);
  params.values().setConstant(1e300);
  RowMatrixXd x = RowMatrixXd::Constant(1, 2, 1e300);
  try {
    loss_and_grad(params, spec, Batch{x, {0}});
    FAIL() << "expected OverflowError";
  } catch (const OverflowError& e) {
    EXPECT_EQ(e.layer(), 0u);
  }
}

TEST(NnLoss, ZeroParamsGiveLogClasses) {
  const auto spec = mlp(3, {4}, 10);
  const auto params = ParamVector::zeros(model_layout(spec));
  const auto lg = loss_and_grad(params, spec, Batch{RowMatrixXd::Random(4, 3), {0, 3, 9, 5}});
  EXPECT_NEAR(lg.loss, std::log(10.0), 1e-12);
  EXPECT_NEAR(lg.loss, 2.302585, 1e-6);
}

TEST(NnLoss, DuplicatedRowsKeepMeanLoss) {
  const auto spec = mlp(3, {4}, 3);
  const auto params = init_params(spec, 5);
  RowMatrixXd one = RowMatrixXd::Random(1, 3);
  RowMatrixXd three(3, 3);
  three << one, one, one;
  const auto a = loss_and_grad(params, spec, Batch{one, {2}});
  const auto b = loss_and_grad(params, spec, Batch{three, {2, 2, 2}});
  EXPECT_NEAR(a.loss, b.loss, 1e-14);
  EXPECT_LT((a.grad.values() - b.grad.values()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(NnLoss, RejectsOutOfRangeLabels) {
  const auto spec = mlp(3, {}, 3);
  EXPECT_THROW(loss_and_grad(init_params(spec, 1), spec, Batch{RowMatrixXd::Zero(1, 3), {3}}), InvalidArgument);
  EXPECT_THROW(loss_and_grad(init_params(spec, 1), spec, Batch{RowMatrixXd::Zero(1, 3), {-1}}), InvalidArgument);
}

TEST(NnGradient, MlpMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto spec = mlp(5, {7, 4}, 3);
    const auto batch = testing_util::random_batch(spec, 6, seed);
    EXPECT_LT(testing_util::max_fd_relative_error(init_params(spec, seed), spec, batch), 1e-4) << "seed " << seed;
  }
}

TEST(NnGradient, SmallCnnMatchesFiniteDifferences) {
  ModelSpec spec;
  spec.arch = Architecture::small_cnn;
  spec.image = {2, 6, 6};
  spec.input_dim = 72;
  spec.conv_filters = 2;
  spec.hidden = {5};
  spec.num_classes = 3;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto batch = testing_util::random_batch(spec, 3, seed);
    EXPECT_LT(testing_util::max_fd_relative_error(init_params(spec, seed), spec, batch), 1e-4) << "seed " << seed;
  }
}

TEST(NnSgd, ZeroGradientLeavesParams) {
  const auto spec = mlp(3, {2}, 2);
  auto p = init_params(spec, 1);
  const auto before = p.values();
  auto opt = OptimizerState::for_params(p, 0.1, 0.0, 0.0);
  sgd_step(p, p.zeros_like(), opt);
  EXPECT_EQ(p.values(), before);
}

TEST(NnSgd, VanillaStepIsExact) {
  const auto spec = mlp(3, {2}, 2);
  auto p = init_params(spec, 1);
  const auto before = p.values();
  auto g = init_params(spec, 2);
  auto opt = OptimizerState::for_params(p, 0.05, 0.0, 0.0);
  sgd_step(p, g, opt);
  EXPECT_EQ(p.values(), (before - 0.05 * g.values()).eval());
}

TEST(NnSgd, MomentumMatchesHandUnrolledRecurrence) {
  const auto spec = mlp(3, {2}, 2);
  auto p = init_params(spec, 1);
  const VectorXd t0 = p.values();
  const auto g1 = init_params(spec, 7), g2 = init_params(spec, 8);
  const double lr = 0.1, m = 0.9, wd = 4e-4;
  auto opt = OptimizerState::for_params(p, lr, m, wd);
  sgd_step(p, g1, opt);
  sgd_step(p, g2, opt);

  const VectorXd v1 = g1.values() + wd * t0;
  const VectorXd t1 = t0 - lr * v1;
  const VectorXd v2 = m * v1 + g2.values() + wd * t1;
  const VectorXd t2 = t1 - lr * v2;
  EXPECT_LT((p.values() - t2).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NnSgd, StepIsLinearInGradient) {
  const auto spec = mlp(4, {3}, 2);
  const auto theta = init_params(spec, 11);
  const auto g = init_params(spec, 12);
  for (double a : {-2.0, 0.5, 3.0}) {
    auto p1 = theta, p2 = theta;
    auto o1 = OptimizerState::for_params(p1, 0.01, 0.0, 0.0);
    auto o2 = OptimizerState::for_params(p2, 0.01, 0.0, 0.0);
    sgd_step(p1, (a * g.values()).eval(), o1);
    sgd_step(p2, g, o2);
    const VectorXd lhs = p1.values() - theta.values();
    const VectorXd rhs = a * (p2.values() - theta.values());
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(NnSgd, RejectsInvalidHyperparameters) {
  const auto p = init_params(mlp(2, {}, 2), 0);
  EXPECT_THROW(OptimizerState::for_params(p, -0.1, 0.0, 0.0), InvalidArgument);
  EXPECT_THROW(OptimizerState::for_params(p, 0.1, 1.0, 0.0), InvalidArgument);
  EXPECT_THROW(OptimizerState::for_params(p, 0.1, 0.0, -1.0), InvalidArgument);
}

TEST(NnSchedule, CosineAnnealing) {
  EXPECT_DOUBLE_EQ(cosine_annealing_lr(0, 10, 0.1), 0.1);
  EXPECT_EQ(cosine_annealing_lr(10, 10, 0.1), 0.0);
  EXPECT_NEAR(cosine_annealing_lr(5, 10, 0.1), 0.05, 1e-15);
  EXPECT_THROW(cosine_annealing_lr(11, 10, 0.1), InvalidArgument);
  EXPECT_THROW(cosine_annealing_lr(0, 0, 0.1), InvalidArgument);
  double prev = 1.0;
  for (std::size_t t = 0; t <= 20; ++t) {
    const double lr = cosine_annealing_lr(t, 20, 1.0);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}

TEST(NnClassifier, ExtractModes) {
  const auto spec = mlp(4, {6, 5, 3}, 2);  // fc1 feature, fc2..fc4 classifier
  const auto p = init_params(spec, 9);
  const auto& layout = p.layout();
  const auto last = extract_classifier(p, ClassifierMode::last);
  EXPECT_EQ(last, p.layer(3).eval());
  const auto all = extract_classifier(p, ClassifierMode::all);
  EXPECT_EQ(static_cast<std::size_t>(all.size()), layout[1].length + layout[2].length + layout[3].length);
  const auto last2 = extract_classifier(p, ClassifierMode::last2);
  ASSERT_EQ(static_cast<std::size_t>(last2.size()), layout[2].length + layout[3].length);
  EXPECT_EQ(last2, p.values().segment(static_cast<Eigen::Index>(layout[2].offset), last2.size()).eval());
  EXPECT_EQ(extract_classifier(p, ClassifierMode::all), all);

  const auto single = init_params(mlp(4, {3}, 2), 1);  // fc1 feature, fc2 classifier
  EXPECT_THROW(extract_classifier(single, ClassifierMode::last2), InvalidArgument);
}

TEST(NnSoftmax, RowsSumToOne) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> n(0.0, 20.0);
  RowMatrixXd z(50, 7);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = n(gen);
  const auto p = softmax(z);
  for (Eigen::Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
}

TEST(NnArgmax, LowestIndexWinsTies) {
  Eigen::RowVectorXd r(4);
  r << 1.0, 3.0, 3.0, 2.0;
  EXPECT_EQ(argmax_row(r), 1);
}

TEST(NnDeterminism, RepeatedCallsAreBitIdentical) {
  const auto spec = mlp(5, {7}, 3);
  const auto batch = testing_util::random_batch(spec, 4, 1);
  const auto a = loss_and_grad(init_params(spec, 3), spec, batch);
  const auto b = loss_and_grad(init_params(spec, 3), spec, batch);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grad.values(), b.grad.values());
}

TEST(NnTemplate, FloatInstantiationAgreesWithDouble) {
  const auto spec = mlp(3, {4}, 2);
  const auto pd = init_params<double>(spec, 4);
  const auto pf = init_params<float>(spec, 4);
  RowMatrix<float> xf = RowMatrix<float>::Constant(1, 3, 0.5f);
  const auto lf = forward(pf, spec, xf);
  const auto ld = forward(pd, spec, RowMatrixXd::Constant(1, 3, 0.5));
  EXPECT_NEAR(lf(0, 0), ld(0, 0), 1e-5);
}

TEST(NnSerialization, RoundTripPreservesEverything) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 gen(seed);
    std::vector<std::size_t> hidden(gen() % 3);
    for (auto& h : hidden) h = 1 + gen() % 6;
    const auto spec = mlp(1 + gen() % 5, hidden, 2 + gen() % 4);
    const auto p = init_params(spec, seed);
    const auto q = deserialize(serialize(p));
    EXPECT_TRUE(q.same_layout(p));
    EXPECT_EQ(q.values(), p.values());
  }
}

TEST(NnSerialization, HeaderIsLittleEndian) {
  const auto p = init_params(mlp(2, {}, 2), 0);
  const auto bytes = serialize(p);
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(bytes[0], 1);  // one layer
  for (int i = 1; i < 8; ++i) EXPECT_EQ(bytes[static_cast<std::size_t>(i)], 0);
  EXPECT_EQ(bytes.size(), 8u + 8 + 3 + 1 + 8 + 8 + 6 * 8);
}

TEST(NnSerialization, TruncatedInputFails) {
  const auto bytes = serialize(init_params(mlp(2, {3}, 2), 0));
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(deserialize(std::span(bytes.data(), cut)), IoError) << "cut " << cut;
  }
}

}  // namespace
}  // namespace fedseq
