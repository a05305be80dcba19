#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "memlen/nn.hpp"

using namespace memlen;
using namespace memlen::nn;

namespace {

BatchInput<float> toy_batch(int T, int B, int obs_dim, int num_actions,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BatchInput<float> in;
  in.T = T;
  in.B = B;
  in.obs = MatX<float>::Zero(T * B, obs_dim);
  in.prev_actions.assign(size_t(T) * B, num_actions);
  for (int t = 0; t < T; ++t)
    for (int b = 0; b < B; ++b) {
      in.obs(t * B + b, int(rng() % std::uint64_t(obs_dim))) = 1.0f;
      if (t > 0) in.prev_actions[size_t(t) * B + b] = int(rng() % num_actions);
    }
  return in;
}

}  // namespace

TEST_CASE("encoder config validation") {
  EncoderConfig cfg = transformer_config();
  cfg.heads = 3;  // does not divide hidden=128
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = transformer_config();
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = lstm_config();
  cfg.kind = "gru";
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("adam matches a hand-stepped reference") {
  std::mt19937_64 rng(0);
  ParamStore<double> store;
  store.add("w", 1, 2, Init::kOne, rng);
  Adam<double> opt;
  opt.lr = 0.1;
  MatX<double> g(1, 2);
  g << 0.5, -0.25;
  opt.update(store, {g});
  // First step with bias correction: mhat = g, sqrt(vhat) = |g|, so each
  // coordinate moves by ~lr in the negative gradient direction.
  CHECK(store.items[0].value(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(store.items[0].value(0, 1) == doctest::Approx(1.1).epsilon(1e-6));
  CHECK(opt.step == 1);
}

TEST_CASE("forward is deterministic in eval mode and seed-reproducible") {
  for (const char* kind : {"lstm", "transformer"}) {
    EncoderConfig cfg = kind == std::string("lstm") ? lstm_config() : transformer_config();
    QNetwork<float> net_a(cfg, 6, 3, /*seed=*/9, 16, 16);
    QNetwork<float> net_b(cfg, 6, 3, /*seed=*/9, 16, 16);
    BatchInput<float> in = toy_batch(4, 3, 6, 3, 1);

    Tape<float> t1, t2, t3;
    auto r1 = net_a.forward(t1, in, /*training=*/false, nullptr);
    auto r2 = net_a.forward(t2, in, false, nullptr);
    auto r3 = net_b.forward(t3, in, false, nullptr);
    CHECK(t1.val(r1.q) == t2.val(r2.q));
    CHECK(t1.val(r1.q) == t3.val(r3.q));
    CHECK(t1.rows(r1.q) == 12);
    CHECK(t1.cols(r1.q) == 3);

    QNetwork<float> net_c(cfg, 6, 3, /*seed=*/10, 16, 16);
    Tape<float> t4;
    auto r4 = net_c.forward(t4, in, false, nullptr);
    CHECK(t1.val(r1.q) != t4.val(r4.q));
  }
}

TEST_CASE("soft update mixes parameters with tau") {
  EncoderConfig cfg = lstm_config();
  QNetwork<float> online(cfg, 4, 2, 1, 8, 8), target(cfg, 4, 2, 2, 8, 8);
  MatX<float> ow = online.params().items[0].value,
              tw = target.params().items[0].value;
  soft_update(online.params(), target.params(), 0.25);
  MatX<float> expect = 0.25f * ow + 0.75f * tw;
  CHECK((target.params().items[0].value - expect).cwiseAbs().maxCoeff() < 1e-6f);
  copy_params(online.params(), target.params());
  CHECK(target.params().items[0].value == online.params().items[0].value);
}

TEST_CASE("gradient check passes for all architectures") {
  GradCheckReport rep = grad_check(0);
  CHECK(rep.passed());
  CHECK(rep.causality_err < 1e-12);
  for (const auto& layer : rep.layers) {
    INFO(layer.name);
    bool linear = layer.name.rfind("linear/", 0) == 0;
    CHECK(layer.max_rel_err < (linear ? 1e-6 : 1e-4));
  }
}

TEST_CASE("transformer output is causal through the full network") {
  EncoderConfig cfg = transformer_config();
  QNetwork<float> net(cfg, 5, 2, 3, 16, 16);
  BatchInput<float> in = toy_batch(6, 2, 5, 2, 7);
  Tape<float> t1;
  auto r1 = net.forward(t1, in, false, nullptr);
  BatchInput<float> in2 = in;
  // Change only the last step's observation and previous action.
  for (int b = 0; b < in2.B; ++b) {
    in2.obs.row(5 * in2.B + b).setZero();
    in2.obs(5 * in2.B + b, 4) = 1.0f;
    in2.prev_actions[size_t(5) * in2.B + b] = 1;
  }
  Tape<float> t2;
  auto r2 = net.forward(t2, in2, false, nullptr);
  for (int t = 0; t < 5; ++t)
    for (int b = 0; b < in.B; ++b)
      CHECK((t1.val(r1.q).row(t * in.B + b) - t2.val(r2.q).row(t * in.B + b))
                .cwiseAbs()
                .maxCoeff() == 0.0f);
}

TEST_CASE("lstm state carries information forward") {
  EncoderConfig cfg = lstm_config();
  QNetwork<float> net(cfg, 5, 2, 4, 16, 16);
  BatchInput<float> in = toy_batch(6, 1, 5, 2, 8);
  BatchInput<float> in2 = in;
  in2.obs.row(0).setZero();
  in2.obs(0, (in.obs.row(0).maxCoeff() > 0 && in.obs(0, 0) > 0) ? 1 : 0) = 1.0f;
  Tape<float> t1, t2;
  auto r1 = net.forward(t1, in, false, nullptr);
  auto r2 = net.forward(t2, in2, false, nullptr);
  // A step-0 change reaches the final step's Q-values.
  CHECK((t1.val(r1.q).row(5) - t2.val(r2.q).row(5)).cwiseAbs().maxCoeff() > 0.0f);
}
