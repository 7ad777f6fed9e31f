#pragma once

// Two-stage self-training: supervised stage 1, class-agnostic pseudo-labels
// on unlabeled videos, then Mean-Teacher training on the joint dataset.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ovtal/classifier.hpp"
#include "ovtal/localizer.hpp"
#include "ovtal/optim.hpp"
#include "ovtal/types.hpp"

namespace ovtal {

struct TrainConfig {
  double max_lr = 1e-3;
  double min_lr = 1e-8;
  std::size_t warmup_epochs = 2;
  std::size_t main_epochs = 20;
  std::size_t batch_size = 4;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;  // <= 0 disables clipping
  double pseudo_label_threshold = 0.2;
  double ema_lambda = 0.999;
  LossConfig loss;
  std::uint64_t seed = 0;
  // Hard cap on optimizer steps; the schedule is unaffected.
  std::size_t step_limit = SIZE_MAX;

  void validate() const;
};

/// Pseudo-label thresholds per dataset profile: 0.2 (ActivityNet-like),
/// 0.05 (THUMOS14-like), 0.4 (FineAction-like).
double profile_threshold(const std::string& profile);

struct TrainResult {
  LocalizerParams params;
  std::vector<double> epoch_loss;
  std::size_t steps = 0;
};

TrainResult train_stage1(const std::vector<Video>& labeled, const LocalizerShape& shape,
                         const TrainConfig& cfg);

struct PseudoLabelConfig {
  SoftNmsConfig nms;
  double threshold = 0.2;
  // Videos left without instances carry no positive supervision; drop them
  // unless asked otherwise.
  bool keep_empty_videos = false;
  std::size_t threads = 1;
};

struct PseudoDataset {
  std::vector<Video> videos;  // class-agnostic instances, scored by actionness
  std::size_t videos_seen = 0;
  std::size_t instances_before_threshold = 0;
  // Post-NMS actionness histogram over [0, 1] in 20 equal bins.
  std::vector<std::size_t> actionness_histogram;
};

PseudoDataset generate_pseudo_labels(const LocalizerParams& params,
                                     const std::vector<Video>& unlabeled,
                                     const PseudoLabelConfig& cfg);

struct JointDataset {
  std::vector<Video> videos;
  std::size_t count(Provenance p) const;
};

JointDataset merge_datasets(const std::vector<Video>& labeled, const PseudoDataset& pseudo);

/// teacher <- (1 - lambda) * student + lambda * teacher, element-wise.
void ema_update(std::span<double> teacher, std::span<const double> student, double lambda);
void ema_update(LocalizerParams& teacher, const LocalizerParams& student, double lambda);

struct Stage2Result {
  LocalizerParams teacher;
  std::vector<double> epoch_loss;
  std::size_t steps = 0;
};

Stage2Result train_stage2(const LocalizerParams& stage1, const JointDataset& joint,
                          const TrainConfig& cfg);

}  // namespace ovtal
