#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "ovtal/error.hpp"
#include "ovtal/optim.hpp"
#include "ovtal/rng.hpp"

using namespace ovtal;

namespace {

void step_once(std::vector<double>& p, const std::vector<double>& g, OptimizerState& st,
               double lr) {
  std::vector<std::span<double>> ps{p};
  std::vector<std::span<const double>> gs{g};
  adamw_step(ps, gs, st, lr);
}

OptimizerState state_for(std::size_t n, AdamWHyper h) {
  OptimizerState st;
  st.hyper = h;
  st.first_moment.assign(1, std::vector<double>(n, 0.0));
  st.second_moment.assign(1, std::vector<double>(n, 0.0));
  return st;
}

}  // namespace

TEST_CASE("zero gradient without decay leaves parameters unchanged") {
  std::vector<double> p{0.5, -2.0, 3.0};
  auto st = state_for(3, {});
  step_once(p, {0, 0, 0}, st, 0.1);
  CHECK(p == std::vector<double>{0.5, -2.0, 3.0});
  CHECK(st.step == 1);
}

TEST_CASE("zero gradient with decay scales by one minus lr times wd") {
  std::vector<double> p{0.5, -2.0, 3.0};
  auto st = state_for(3, {0.9, 0.999, 1e-8, 0.01});
  step_once(p, {0, 0, 0}, st, 0.1);
  CHECK(p[0] == doctest::Approx(0.5 * (1 - 0.001)).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(-2.0 * (1 - 0.001)).epsilon(1e-14));
  CHECK(p[2] == doctest::Approx(3.0 * (1 - 0.001)).epsilon(1e-14));
}

TEST_CASE("first step with unit gradient moves by about lr") {
  std::vector<double> p{1.0};
  auto st = state_for(1, {0.9, 0.999, 1e-8, 0.0});
  step_once(p, {1.0}, st, 0.1);
  // m_hat = v_hat = 1 after bias correction.
  CHECK(p[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-14));
}

TEST_CASE("second step matches a hand-unrolled update") {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.05, wd = 0.1;
  std::vector<double> p{2.0};
  auto st = state_for(1, {b1, b2, eps, wd});
  step_once(p, {0.3}, st, lr);
  step_once(p, {-0.7}, st, lr);

  double x = 2.0, m = 0.0, v = 0.0;
  const double gs[2] = {0.3, -0.7};
  for (int t = 1; t <= 2; ++t) {
    m = b1 * m + (1 - b1) * gs[t - 1];
    v = b2 * v + (1 - b2) * gs[t - 1] * gs[t - 1];
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    x = x * (1 - lr * wd) - lr * mh / (std::sqrt(vh) + eps);
  }
  CHECK(p[0] == doctest::Approx(x).epsilon(1e-14));
  CHECK(st.step == 2);
}

TEST_CASE("optimizer step is deterministic") {
  CounterRng rng(1);
  std::vector<double> p(16), g(16);
  for (auto& v : p) v = rng.normal();
  for (auto& v : g) v = rng.normal();
  auto p2 = p;
  auto s1 = state_for(16, {0.9, 0.999, 1e-8, 0.01});
  auto s2 = s1;
  for (int i = 0; i < 3; ++i) {
    step_once(p, g, s1, 0.01);
    step_once(p2, g, s2, 0.01);
  }
  CHECK(p == p2);
}

TEST_CASE("optimizer rejects mismatches and bad lr") {
  std::vector<double> p{1.0, 2.0};
  auto st = state_for(2, {});
  CHECK_THROWS_AS(step_once(p, {1.0}, st, 0.1), InvalidInput);
  CHECK_THROWS_AS(step_once(p, {1.0, 1.0}, st, 0.0), InvalidInput);
  auto wrong = state_for(3, {});
  CHECK_THROWS_AS(step_once(p, {1.0, 1.0}, wrong, 0.1), InvalidInput);
}

TEST_CASE("tensor overload treats missing gradients as zero") {
  std::vector<Tensor> params{Tensor::from({2}, {1.0, 2.0}, true)};
  auto st = OptimizerState::for_params(params, {0.9, 0.999, 1e-8, 0.0});
  adamw_step(params, st, 0.1);
  CHECK(params[0].at(0) == 1.0);
  CHECK(params[0].at(1) == 2.0);
}

TEST_CASE("gradient clipping rescales to the max norm") {
  std::vector<Tensor> params{Tensor::from({2}, {0.0, 0.0}, true)};
  auto g = params[0].mutable_grad();
  g[0] = 3.0;
  g[1] = 4.0;
  CHECK(clip_grad_norm(params, 1.0) == doctest::Approx(5.0));
  CHECK(params[0].grad()[0] == doctest::Approx(0.6));
  CHECK(params[0].grad()[1] == doctest::Approx(0.8));
  CHECK(clip_grad_norm(params, 10.0) == doctest::Approx(1.0));
  CHECK(params[0].grad()[0] == doctest::Approx(0.6));
}

TEST_CASE("schedule endpoints and cosine midpoint") {
  LrSchedule s{1e-3, 1e-8, 10, 110};
  CHECK(lr_at(s, 0) == 0.0);
  CHECK(lr_at(s, 5) == doctest::Approx(5e-4));
  CHECK(lr_at(s, 10) == doctest::Approx(1e-3).epsilon(1e-14));
  CHECK(lr_at(s, 60) == doctest::Approx(1e-8 + 0.5 * (1e-3 - 1e-8)).epsilon(1e-14));
  CHECK(lr_at(s, 110) == doctest::Approx(1e-8).epsilon(1e-12));
  CHECK_THROWS_AS(lr_at(s, 111), InvalidInput);
}

TEST_CASE("schedule stays in range, is continuous at warmup and non-increasing after") {
  LrSchedule s{3e-3, 1e-8, 7, 200};
  const double step = s.max_lr / 7.0;
  CHECK(std::abs(lr_at(s, 7) - lr_at(s, 6)) <= step + 1e-15);
  CHECK(std::abs(lr_at(s, 8) - lr_at(s, 7)) <= step);
  double prev = lr_at(s, 7);
  for (std::size_t i = 0; i <= 200; ++i) {
    const double lr = lr_at(s, i);
    CHECK(lr >= 0.0);
    CHECK(lr <= s.max_lr);
    if (i > 7) {
      CHECK(lr <= prev);
      prev = lr;
    }
  }
}

TEST_CASE("schedule validation") {
  CHECK_THROWS_AS(lr_at(LrSchedule{1e-3, 1e-2, 0, 10}, 0), InvalidInput);
  CHECK_THROWS_AS(lr_at(LrSchedule{1e-3, 1e-8, 11, 10}, 0), InvalidInput);
  CHECK(lr_at(LrSchedule{1e-3, 1e-8, 0, 0}, 0) == 1e-8);
}
