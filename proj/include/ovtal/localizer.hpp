#pragma once

// Class-agnostic anchor-free temporal localizer.
//
// Pipeline per video: unnormalized conv projection + ReLU -> pyramid encoder
// of residual conv/layer-norm blocks (level l runs at stride 2^l, reached by
// stride-2 max downsampling) -> two heads shared by all levels: an actionness
// logit and two non-negative boundary offsets per location. Location i at
// level l sits at t = (i + 0.5) * 2^l; offsets are in units of the level
// stride.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ovtal/tensor.hpp"
#include "ovtal/types.hpp"

namespace ovtal {

struct PyramidGeometry {
  // bounds[l], bounds[l+1] delimit the regression range of level l;
  // bounds.front() == 0, bounds.back() == +inf.
  std::vector<double> bounds;

  /// Ranges [0, base), [base, 2 base), ... , [base 2^(L-2), inf).
  static PyramidGeometry with_levels(std::size_t levels, double base_range = 4.0);

  std::size_t levels() const { return bounds.size() - 1; }
  double stride(std::size_t level) const { return static_cast<double>(std::size_t{1} << level); }
  double range_lo(std::size_t level) const { return bounds.at(level); }
  double range_hi(std::size_t level) const { return bounds.at(level + 1); }
  std::size_t level_length(std::size_t level, std::size_t num_snippets) const;

  void validate() const;
  friend bool operator==(const PyramidGeometry&, const PyramidGeometry&) = default;
};

struct LocalizerShape {
  std::size_t in_dim = 32;
  std::size_t hidden = 32;
  std::size_t levels = 4;
  std::size_t kernel = 3;
  double base_range = 4.0;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// All trainable weights plus geometry. Copies are deep.
class LocalizerParams {
 public:
  LocalizerParams() = default;
  LocalizerParams(const LocalizerParams& other);
  LocalizerParams& operator=(const LocalizerParams& other);
  LocalizerParams(LocalizerParams&&) noexcept = default;
  LocalizerParams& operator=(LocalizerParams&&) noexcept = default;

  LocalizerShape shape;
  PyramidGeometry geometry;
  std::vector<NamedTensor> tensors;

  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  std::vector<Tensor> handles() const;
  std::size_t parameter_count() const;
  void zero_grad();
  /// Bitwise equality of geometry, names, shapes and values.
  bool identical(const LocalizerParams& other) const;
};

LocalizerParams localizer_init(const LocalizerShape& shape, std::uint64_t seed);

struct LevelOutput {
  Tensor logits;   // [S_l, 1]
  Tensor offsets;  // [S_l, 2], stride-normalized (start, end) distances
};

std::vector<LevelOutput> localizer_forward(const LocalizerParams& params,
                                           const SnippetFeatures& features);

struct LocationTarget {
  bool positive = false;
  double offset_start = 0.0;  // stride-normalized
  double offset_end = 0.0;
  Interval source;
};

struct AssignedTargets {
  std::vector<std::vector<LocationTarget>> levels;
  std::size_t num_positive() const;
};

AssignedTargets assign_targets(const std::vector<ActionInstance>& gt,
                               const PyramidGeometry& geometry, std::size_t num_snippets);

/// Location centre t = (i + 0.5) * stride.
inline double location_center(std::size_t index, double stride) {
  return (static_cast<double>(index) + 0.5) * stride;
}

/// Every location becomes a class-agnostic instance with s_a = sigmoid(logit);
/// intervals are clamped to [0, S] and degenerate ones dropped.
std::vector<ActionInstance> decode_instances(const std::vector<LevelOutput>& outputs,
                                             const PyramidGeometry& geometry,
                                             std::size_t num_snippets);

// ---- losses ---------------------------------------------------------------

double diou_loss_1d(const Interval& pred, const Interval& gt);

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

/// Sum over locations of -alpha_t (1 - p_t)^gamma log p_t, divided by
/// max(1, #positives).
double focal_loss(std::span<const double> logits, std::span<const std::uint8_t> labels,
                  const FocalParams& fp = {});

struct LossConfig {
  FocalParams focal;
  double reg_weight = 1.0;
};

struct LossBreakdown {
  Tensor total;
  double focal = 0.0;
  double regression = 0.0;
  std::size_t positives = 0;
};

/// focal(all locations) + reg_weight * mean DIoU over positive locations.
LossBreakdown localizer_loss(const std::vector<LevelOutput>& outputs,
                             const AssignedTargets& targets, const LossConfig& cfg = {});

}  // namespace ovtal
