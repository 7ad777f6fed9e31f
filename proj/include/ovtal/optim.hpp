#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ovtal/tensor.hpp"

namespace ovtal {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Moment accumulators for a list of parameters; shapes mirror the
/// parameters they were created for.
struct OptimizerState {
  AdamWHyper hyper;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;

  static OptimizerState for_params(std::span<const Tensor> params, AdamWHyper hyper = {});
};

/// One AdamW step with decoupled weight decay:
///   p <- p * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps)
/// Gradients are taken from grads[i]; pass each parameter's grad() span.
void adamw_step(std::span<const std::span<double>> params,
                std::span<const std::span<const double>> grads, OptimizerState& state,
                double lr);

/// Convenience overload reading gradients stored on the tensors.
/// Parameters that have no accumulated gradient are treated as zero-grad.
void adamw_step(std::span<Tensor> params, OptimizerState& state, double lr);

/// Rescales gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

/// Linear warmup from 0 to max_lr, then cosine decay to min_lr.
struct LrSchedule {
  double max_lr = 1e-3;
  double min_lr = 1e-8;
  std::size_t warmup_iters = 0;
  std::size_t total_iters = 1;

  void validate() const;
};

double lr_at(const LrSchedule& schedule, std::size_t iter);

}  // namespace ovtal
