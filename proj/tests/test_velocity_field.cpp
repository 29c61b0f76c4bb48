#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "cfmg/velocity_field.hpp"
#include "gradcheck.hpp"

namespace cfmg {
namespace {

ConditionVector random_condition(Rng& rng) {
  ConditionVector c;
  for (Eigen::Index i = 0; i < c.size(); ++i) c.values[i] = rng.uniform(-1.0, 1.0);
  return c;
}

PoseVec7 random_pose(Rng& rng) {
  PoseVec7 g;
  for (int i = 0; i < 4; ++i) g[i] = rng.uniform(-1.0, 1.0);
  g.values.head<4>().normalize();
  for (int i = 4; i < 7; ++i) g[i] = rng.uniform(-0.1, 0.1);
  return g;
}

// Zeroes the last affine layer and sets its bias, so the net outputs `u`
// for every input.
void make_constant(VelocityNet& net, const Vec7& u) {
  auto& layers = net.network().layers();
  auto& last = std::get<nn::AffineParams>(layers[layers.size() - 3]);
  last.weight.setZero();
  last.bias = u.transpose();
}

TEST(VelocityNet, ArchitectureShape) {
  Rng rng(1);
  VelocityNet net(rng);
  EXPECT_EQ(net.network().input_dim(), 136);
  EXPECT_EQ(net.network().output_dim(), 7);
  std::vector<Eigen::Index> widths;
  for (const auto& layer : net.network().layers()) {
    if (const auto* a = std::get_if<nn::AffineParams>(&layer)) widths.push_back(a->out_features());
  }
  EXPECT_EQ(widths, (std::vector<Eigen::Index>{128, 256, 256, 128, 7}));
  EXPECT_EQ(net.output_activation(), nn::Activation::Identity);
}

TEST(VelocityNet, FreshNetIsFinite) {
  Rng rng(2);
  VelocityNet net(rng);
  for (int i = 0; i < 20; ++i) {
    const PoseVec7 g = random_pose(rng);
    const ConditionVector c = random_condition(rng);
    EXPECT_TRUE(vf_forward(net, g, rng.uniform(), c, nn::Mode::Eval).values.allFinite());
    EXPECT_TRUE(net(g, 1.0, c).values.allFinite());
  }
}

TEST(VelocityNet, RejectsBadInputs) {
  Rng rng(3);
  VelocityNet net(rng);
  ConditionVector small;
  small.values = Eigen::VectorXd::Zero(64);
  EXPECT_THROW(vf_forward(net, PoseVec7{}, 0.5, small, nn::Mode::Eval), std::invalid_argument);
  EXPECT_THROW(vf_forward(net, PoseVec7{}, 1.5, ConditionVector{}, nn::Mode::Eval),
               std::invalid_argument);
  EXPECT_THROW(VelocityNet(rng, nn::Activation::Silu), std::invalid_argument);
}

TEST(VelocityNet, LoadedStackIsChecked) {
  Rng rng(4);
  nn::Network wrong;
  wrong.add_affine(136, 7, rng);
  EXPECT_THROW(VelocityNet{std::move(wrong)}, DataError);
  VelocityNet ok(rng, nn::Activation::Relu);
  EXPECT_NO_THROW(VelocityNet{ok.network()});
}

TEST(VelocityNet, ReluOutputIsNonNegative) {
  Rng rng(5);
  VelocityNet net(rng, nn::Activation::Relu);
  for (int i = 0; i < 20; ++i) {
    EXPECT_GE(net(random_pose(rng), rng.uniform(), random_condition(rng)).values.minCoeff(), 0.0);
  }
}

TEST(VelocityNet, FullNetworkGradientsMatchFiniteDifferences) {
  Rng rng(6);
  for (int instance = 0; instance < 2; ++instance) {
    VelocityNet net(rng);
    auto& in = std::get<nn::ScaleShift>(net.network().layers().front());
    in.scale = testing::random_tensor(1, 136, rng, 2.0);
    in.shift = testing::random_tensor(1, 136, rng);
    const auto res = testing::check_network_gradients(
        net.network(), testing::random_tensor(6, 136, rng), nn::Mode::Train, rng, 24);
    EXPECT_LT(res.max_rel_error, 1e-4);
  }
}

TEST(Calibrate, StandardizesTrainingInputs) {
  Rng rng(7);
  std::vector<FlowSample> samples(40);
  for (auto& s : samples) {
    s.g_rigid = random_pose(rng);
    s.g_soft = random_pose(rng);
    s.condition = random_condition(rng);
    s.condition.values.array() += 50.0;
  }
  std::vector<std::size_t> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  VelocityNet net(rng);
  net.calibrate(samples, idx);
  const auto& in = net.input_normalizer();
  // Normalized conditions: zero mean per dimension, unit pooled RMS.
  double sq = 0.0;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(kConditionDim);
  for (const auto& s : samples) {
    const Eigen::VectorXd z = s.condition.values.array() * in.scale.row(0).tail(kConditionDim).transpose().array() +
                              in.shift.row(0).tail(kConditionDim).transpose().array();
    mean += z;
    sq += z.squaredNorm();
  }
  mean /= samples.size();
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(sq / (samples.size() * kConditionDim), 1.0, 1e-9);
  // t maps U[0,1) to zero mean, unit variance.
  EXPECT_NEAR(0.5 * in.scale(0, 7) + in.shift(0, 7), 0.0, 1e-15);
  EXPECT_NEAR(in.scale(0, 7), std::sqrt(12.0), 1e-15);
  EXPECT_EQ(net.output_normalizer().shift.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Calibrate, DegenerateSpreadKeepsUnitScale) {
  Rng rng(8);
  FlowSample s;
  s.g_rigid = random_pose(rng);
  s.g_soft = s.g_rigid;
  std::vector<FlowSample> samples{s, s};
  std::vector<std::size_t> idx{0, 1};
  VelocityNet net(rng);
  net.calibrate(samples, idx);
  EXPECT_EQ(net.output_normalizer().scale, nn::Tensor2::Ones(1, 7));
  EXPECT_EQ(net.input_normalizer().scale.rightCols(kConditionDim),
            nn::Tensor2::Ones(1, kConditionDim));
}

TEST(CfmLoss, ExactFieldHasZeroLoss) {
  Rng rng(9);
  FlowSample s{random_pose(rng), random_pose(rng), random_condition(rng)};
  VelocityNet net(rng);
  const Vec7 u = target_velocity(s.g_rigid, s.g_soft).values;
  make_constant(net, u);
  std::vector<TimedSample> batch;
  for (int i = 0; i < 8; ++i) batch.push_back(make_timed_sample(s, sample_tc(rng)));
  EXPECT_EQ(cfm_batch_loss(net, batch, nn::Mode::Eval), 0.0);
  EXPECT_EQ(cfm_batch_loss(net, batch, nn::Mode::Train), 0.0);
}

TEST(CfmLoss, UnitOffsetInOneComponentGivesOneSeventh) {
  Rng rng(10);
  FlowSample s{random_pose(rng), random_pose(rng), random_condition(rng)};
  VelocityNet net(rng);
  Vec7 u = target_velocity(s.g_rigid, s.g_soft).values;
  u[0] += 1.0;
  make_constant(net, u);
  std::vector<TimedSample> batch;
  for (int i = 0; i < 5; ++i) batch.push_back(make_timed_sample(s, sample_tc(rng)));
  EXPECT_NEAR(cfm_batch_loss(net, batch, nn::Mode::Eval), 1.0 / 7.0, 1e-15);
}

TEST(CfmLoss, EmptyBatchThrows) {
  Rng rng(11);
  VelocityNet net(rng);
  EXPECT_THROW(cfm_batch_loss(net, {}, nn::Mode::Eval), std::invalid_argument);
}

TEST(TimedSample, PathStateAndTarget) {
  Rng rng(12);
  const FlowSample s{random_pose(rng), random_pose(rng), random_condition(rng)};
  const TimedSample ts = make_timed_sample(s, 0.25);
  EXPECT_EQ(ts.g_t, interpolate_pose(s.g_rigid, s.g_soft, 0.25));
  EXPECT_EQ(ts.u, target_velocity(s.g_rigid, s.g_soft));
  EXPECT_EQ(ts.condition, &s.condition);
}

TEST(SampleTc, UniformMomentsAndRange) {
  Rng rng(13);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double t = sample_tc(rng);
    ASSERT_GE(t, 0.0);
    ASSERT_LT(t, 1.0);
    sum += t;
  }
  EXPECT_NEAR(sum / 100000.0, 0.5, 0.01);
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_tc(a), sample_tc(b));
}

TEST(Split, PureFunctionOfSeedAndIndex) {
  std::size_t val = 0;
  for (std::size_t i = 0; i < 5000; ++i) {
    const bool v = in_validation_split(42, i, 0.8);
    EXPECT_EQ(v, in_validation_split(42, i, 0.8));
    val += v;
  }
  EXPECT_NEAR(static_cast<double>(val) / 5000.0, 0.2, 0.02);
}

TEST(Fit, SplitIsDisjointAndExhaustive) {
  Rng rng(14);
  std::vector<FlowSample> data(30);
  for (auto& s : data) s = {random_pose(rng), random_pose(rng), random_condition(rng)};
  VelocityNet net(rng);
  TrainConfig cfg;
  cfg.epochs = 2;
  const FitResult r = fit(net, data, cfg, rng);
  std::set<std::size_t> all(r.train_indices.begin(), r.train_indices.end());
  for (std::size_t i : r.val_indices) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), data.size());
  EXPECT_EQ(r.train_loss.size(), 2u);
  EXPECT_EQ(r.val_loss.size(), 2u);
}

TEST(Fit, SinglePairReachesZeroLoss) {
  Rng rng(15);
  const std::vector<FlowSample> data{{random_pose(rng), random_pose(rng), random_condition(rng)}};
  VelocityNet net(rng);
  TrainConfig cfg;
  cfg.hold_out_validation = false;
  const FitResult r = fit(net, data, cfg, rng);
  ASSERT_EQ(r.train_loss.size(), 2000u);
  EXPECT_LT(*std::min_element(r.train_loss.begin(), r.train_loss.end()), 1e-6);
  EXPECT_TRUE(r.val_loss.empty());
}

TEST(Fit, SameSeedSameHistory) {
  auto run = [] {
    Rng rng(17);
    std::vector<FlowSample> data(10);
    for (auto& s : data) s = {random_pose(rng), random_pose(rng), random_condition(rng)};
    VelocityNet net(rng);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 4;
    return fit(net, data, cfg, rng);
  };
  const FitResult a = run();
  const FitResult b = run();
  EXPECT_EQ(a.train_loss, b.train_loss);
  EXPECT_EQ(a.val_loss, b.val_loss);
}

TEST(Fit, ValidationRecordsNeverInfluenceParameters) {
  auto run = [](bool scramble_validation) {
    Rng rng(18);
    std::vector<FlowSample> data(16);
    for (auto& s : data) s = {random_pose(rng), random_pose(rng), random_condition(rng)};
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 4;
    if (scramble_validation) {
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (in_validation_split(cfg.seed, i, cfg.split_fraction)) {
          data[i].g_soft.values.setConstant(3.0);
          data[i].condition.values.setConstant(1e3);
        }
      }
    }
    VelocityNet net(rng);
    const FitResult r = fit(net, data, cfg, rng);
    std::vector<nn::Tensor2> params;
    for (const auto& p : net.network().parameters()) params.push_back(*p.value);
    return std::make_pair(r, params);
  };
  const auto a = run(false);
  const auto b = run(true);
  ASSERT_FALSE(a.first.val_indices.empty());
  EXPECT_EQ(a.first.train_loss, b.first.train_loss);
  EXPECT_EQ(a.second, b.second);
  EXPECT_NE(a.first.val_loss, b.first.val_loss);
}

TEST(Fit, RejectsBadConfig) {
  Rng rng(19);
  VelocityNet net(rng);
  std::vector<FlowSample> data(3);
  TrainConfig cfg;
  cfg.batch_size = 1;
  EXPECT_THROW(fit(net, data, cfg, rng), std::invalid_argument);
  EXPECT_THROW(fit(net, {}, TrainConfig{}, rng), std::invalid_argument);
}

}  // namespace
}  // namespace cfmg
