#include "ovtal/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ovtal/error.hpp"

namespace ovtal {

OptimizerState OptimizerState::for_params(std::span<const Tensor> params, AdamWHyper hyper) {
  OptimizerState st;
  st.hyper = hyper;
  for (const auto& p : params) {
    st.first_moment.emplace_back(p.size(), 0.0);
    st.second_moment.emplace_back(p.size(), 0.0);
  }
  return st;
}

void adamw_step(std::span<const std::span<double>> params,
                std::span<const std::span<const double>> grads, OptimizerState& state,
                double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidInput("adamw_step: lr must be positive");
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw InvalidInput("adamw_step: parameter/gradient/state count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].size() != grads[i].size() || params[i].size() != state.first_moment[i].size())
      throw InvalidInput("adamw_step: shape mismatch at parameter " + std::to_string(i));

  const auto& h = state.hyper;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);
  const double decay = 1.0 - lr * h.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = grads[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
      v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] = p[j] * decay - lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

void adamw_step(std::span<Tensor> params, OptimizerState& state, double lr) {
  std::vector<std::vector<double>> zero_storage;
  std::vector<std::span<double>> ps;
  std::vector<std::span<const double>> gs;
  zero_storage.reserve(params.size());
  for (auto& p : params) {
    ps.push_back(p.mutable_data());
    if (p.grad().size() == p.size()) {
      gs.push_back(p.grad());
    } else {
      zero_storage.emplace_back(p.size(), 0.0);
      gs.emplace_back(zero_storage.back());
    }
  }
  adamw_step(ps, gs, state, lr);
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (auto& p : params)
      if (!p.grad().empty())
        for (double& g : p.mutable_grad()) g *= k;
  }
  return norm;
}

void LrSchedule::validate() const {
  if (!(max_lr >= 0.0) || !(min_lr >= 0.0) || min_lr > max_lr)
    throw InvalidInput("LrSchedule: need 0 <= min_lr <= max_lr");
  if (warmup_iters > total_iters) throw InvalidInput("LrSchedule: warmup_iters > total_iters");
}

double lr_at(const LrSchedule& s, std::size_t iter) {
  s.validate();
  if (iter > s.total_iters)
    throw InvalidInput("lr_at: iteration " + std::to_string(iter) + " beyond total " +
                       std::to_string(s.total_iters));
  if (iter < s.warmup_iters)
    return s.max_lr * static_cast<double>(iter) / static_cast<double>(s.warmup_iters);
  const std::size_t span = s.total_iters - s.warmup_iters;
  if (span == 0) return s.min_lr;
  const double progress =
      static_cast<double>(iter - s.warmup_iters) / static_cast<double>(span);
  return s.min_lr + 0.5 * (s.max_lr - s.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace ovtal
