// Microbenchmarks for the hot paths of training, inference and data synthesis.

#include <benchmark/benchmark.h>

#include "cfmg/encoder.hpp"
#include "cfmg/ode.hpp"
#include "cfmg/scene.hpp"
#include "cfmg/velocity_field.hpp"

namespace cfmg {
namespace {

nn::Tensor2 random_inputs(Eigen::Index rows, Rng& rng) {
  nn::Tensor2 x(rows, kVelocityInputDim);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
  return x;
}

ConditionVector random_condition(Rng& rng) {
  ConditionVector c;
  for (Eigen::Index i = 0; i < kConditionDim; ++i) c.values[i] = rng.uniform(-1.0, 1.0);
  return c;
}

void BM_VelocityForwardBackward(benchmark::State& state) {
  Rng rng(1);
  VelocityNet net(rng);
  const nn::Tensor2 x = random_inputs(state.range(0), rng);
  const nn::Tensor2 grad = nn::Tensor2::Ones(x.rows(), kPoseDim);
  for (auto _ : state) {
    nn::GradTape tape;
    net.network().zero_grad();
    benchmark::DoNotOptimize(net.forward(x, nn::Mode::Train, &tape));
    net.network().backward(tape, grad, false);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_VelocityForwardBackward)->Arg(32)->Arg(128);

void BM_VelocityPredict(benchmark::State& state) {
  Rng rng(2);
  const VelocityNet net(rng);
  const nn::Tensor2 x = random_inputs(state.range(0), rng);
  for (auto _ : state) benchmark::DoNotOptimize(net.predict(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_VelocityPredict)->Arg(1)->Arg(32);

void BM_Dopri5Flow(benchmark::State& state) {
  Rng rng(3);
  const VelocityNet net(rng);
  const ConditionVector c = random_condition(rng);
  PoseVec7 g0;
  g0.values << 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.1;
  const IntegratorConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(integrate_flow(net, g0, c, cfg));
}
BENCHMARK(BM_Dopri5Flow);

void BM_RenderDepth(benchmark::State& state) {
  Rng rng(4);
  const SceneSpec s = random_primitive(rng);
  for (auto _ : state) benchmark::DoNotOptimize(render_depth(s));
}
BENCHMARK(BM_RenderDepth);

void BM_Encode(benchmark::State& state) {
  Rng rng(5);
  const AutoencoderNet net(kImageSize, kImageSize, rng);
  const DepthImage img = render_depth(random_primitive(rng));
  for (auto _ : state) benchmark::DoNotOptimize(encode(net, img));
}
BENCHMARK(BM_Encode);

}  // namespace
}  // namespace cfmg

BENCHMARK_MAIN();
