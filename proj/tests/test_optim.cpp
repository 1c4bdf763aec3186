#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "minnow/optim.hpp"
#include "support/toy.hpp"

using namespace minnow;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.vocab_size = 5;
  cfg.max_seq_len = 16;
  return cfg;
}

}  // namespace

TEST_CASE("adamw: zero gradients") {
  const ModelConfig cfg = tiny_config();
  auto params = init_model<float>(cfg, 1);
  auto grads = zeros_like_params<float>(cfg);

  SECTION("no decay -> parameters unchanged") {
    auto opt = make_optimizer<float>(cfg, 1e-3, 0.0);
    const auto before = params.embed.a;
    adamw_step(opt, params, grads);
    CHECK(params.embed.a == before);
    CHECK(opt.step == 1);
  }

  SECTION("decay scales weights by (1 - lr * wd), leaves gains and biases") {
    const double lr = 0.01, wd = 0.5;
    auto opt = make_optimizer<float>(cfg, lr, wd);
    const auto before_w = params.layers[0].wq.a;
    const auto before_g = params.layers[0].ln1_g.a;
    const auto before_b = params.layers[0].bq.a;
    adamw_step(opt, params, grads);
    for (size_t i = 0; i < before_w.size(); ++i) {
      CHECK(params.layers[0].wq.a[i] ==
            Catch::Approx(before_w[i] * (1.0 - lr * wd)).margin(1e-12));
    }
    CHECK(params.layers[0].ln1_g.a == before_g);
    CHECK(params.layers[0].bq.a == before_b);
  }
}

TEST_CASE("adamw: non-finite gradients abort with the tensor name") {
  const ModelConfig cfg = tiny_config();
  auto params = init_model<float>(cfg, 1);
  auto grads = zeros_like_params<float>(cfg);
  grads.layers[0].w1.at(3, 3) = std::numeric_limits<float>::infinity();
  auto opt = make_optimizer<float>(cfg, 1e-3, 0.0);
  const auto before = params.layers[0].w1.a;
  CHECK_THROWS_MATCHES(
      adamw_step(opt, params, grads), Error,
      Catch::Matchers::MessageMatches(
          Catch::Matchers::ContainsSubstring("NonFiniteGradient") &&
          Catch::Matchers::ContainsSubstring("layers.0.w1")));
  CHECK(params.layers[0].w1.a == before);  // aborted before any update
  CHECK(opt.step == 0);
}

TEST_CASE("adamw: 500 steps on a fixed quadratic decrease monotonically") {
  // objective: f(theta) = sum (theta - target)^2, gradients 2 (theta - target)
  const ModelConfig cfg = tiny_config();
  auto params = init_model<float>(cfg, 3);
  auto target = init_model<float>(cfg, 4);
  auto opt = make_optimizer<float>(cfg, 1e-2, 0.0);

  auto p_mats = tensor_list(params);
  auto t_mats = tensor_list(target);
  auto objective = [&]() {
    double f = 0.0;
    for (size_t m = 0; m < p_mats.size(); ++m) {
      for (size_t i = 0; i < p_mats[m]->a.size(); ++i) {
        const double d = static_cast<double>(p_mats[m]->a[i]) -
                         static_cast<double>(t_mats[m]->a[i]);
        f += d * d;
      }
    }
    return f;
  };

  const double start = objective();
  double prev = start;
  for (int step = 1; step <= 500; ++step) {
    auto grads = zeros_like_params<float>(cfg);
    auto g_mats = tensor_list(grads);
    for (size_t m = 0; m < p_mats.size(); ++m) {
      for (size_t i = 0; i < p_mats[m]->a.size(); ++i) {
        g_mats[m]->a[i] = 2.0f * (p_mats[m]->a[i] - t_mats[m]->a[i]);
      }
    }
    adamw_step(opt, params, grads);
    const double f = objective();
    if (step > 20) {
      CHECK(f <= prev + 1e-12);  // monotone after moment warm-up
    }
    prev = f;
  }
  CHECK(prev < 1e-3 * start);
}

TEST_CASE("plateau scheduler") {
  const ModelConfig cfg = tiny_config();

  SECTION("improving losses never reduce lr") {
    auto opt = make_optimizer<float>(cfg, 3e-4, 0.0);
    for (const double loss : {1.0, 0.9, 0.8}) {
      CHECK(plateau_step(opt, loss) == Catch::Approx(3e-4));
    }
  }

  SECTION("flat losses reduce lr by x0.1 after the third call") {
    auto opt = make_optimizer<float>(cfg, 3e-4, 0.0);
    CHECK(plateau_step(opt, 1.0) == Catch::Approx(3e-4));
    CHECK(plateau_step(opt, 1.0) == Catch::Approx(3e-4));
    CHECK(plateau_step(opt, 1.0) == Catch::Approx(3e-5));
    // and again after two more stalls
    CHECK(plateau_step(opt, 1.0) == Catch::Approx(3e-5));
    CHECK(plateau_step(opt, 1.0) == Catch::Approx(3e-6));
  }

  SECTION("recovery resets the counter and best") {
    auto opt = make_optimizer<float>(cfg, 3e-4, 0.0);
    plateau_step(opt, 1.0);
    plateau_step(opt, 1.1);
    CHECK(plateau_step(opt, 0.5) == Catch::Approx(3e-4));
    CHECK(opt.best_val == Catch::Approx(0.5));
    CHECK(opt.plateau_counter == 0);
  }

  SECTION("sub-epsilon improvements still count as stalls") {
    auto opt = make_optimizer<float>(cfg, 3e-4, 0.0);
    plateau_step(opt, 1.0);
    plateau_step(opt, 1.0 - 0.5e-4);
    CHECK(plateau_step(opt, 1.0 - 0.9e-4) == Catch::Approx(3e-5));
  }
}
