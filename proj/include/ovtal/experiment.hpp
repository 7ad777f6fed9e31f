#pragma once

// End-to-end experiment plumbing shared by the CLI, the acceptance suite and
// the Python bindings: inference over a dataset, evaluation against the
// annotated classes, the self-training round and the sweep axes.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ovtal/classifier.hpp"
#include "ovtal/eval.hpp"
#include "ovtal/localizer.hpp"
#include "ovtal/selftrain.hpp"
#include "ovtal/synth.hpp"

namespace ovtal {

struct ExperimentConfig {
  std::uint64_t seed = 0;
  SynthConfig synth;
  LocalizerShape model;
  TrainConfig stage1;
  TrainConfig stage2;
  PseudoLabelConfig pseudo;
  InferenceConfig inference;
  Protocol protocol = Protocol::kGeneralized;
  std::vector<double> tiou_grid = {0.3, 0.4, 0.5, 0.6, 0.7};
  std::size_t threads = 1;

  /// Defaults tuned for the desk-scale synthetic benchmark.
  static ExperimentConfig synthetic_defaults();
  /// Pushes the top-level seed into every sub-config.
  void apply_seed(std::uint64_t s);
  void validate() const;
};

/// Ground truth restricted to vocabulary classes (distractors dropped).
std::vector<GroundTruth> ground_truth(const std::vector<Video>& videos, const Vocabulary& vocab);

/// Runs detection on every video. Under a constrained protocol the classifier
/// only sees the protocol's classes; class ids always index `vocab`.
std::vector<Prediction> predict(const LocalizerParams& params, const std::vector<Video>& videos,
                                const Vocabulary& vocab, Protocol protocol,
                                const InferenceConfig& cfg, std::size_t threads = 1);

EvalReport evaluate_model(const LocalizerParams& params, const std::vector<Video>& videos,
                          const Vocabulary& vocab, Protocol protocol,
                          const std::vector<double>& tiou_grid, const InferenceConfig& cfg,
                          std::size_t threads = 1);

struct SelfTrainOutcome {
  LocalizerParams model;
  PseudoDataset pseudo;
  bool stage2_ran = false;
  std::size_t stage2_steps = 0;
};

/// Pseudo-labels `pool` with the stage-1 model, merges with `labeled` and
/// trains stage 2. With no surviving pseudo-label the stage-1 model is
/// returned unchanged.
SelfTrainOutcome self_train(const LocalizerParams& stage1, const std::vector<Video>& labeled,
                            const std::vector<Video>& pool, const PseudoLabelConfig& pseudo,
                            const TrainConfig& stage2);

/// (s_a, best tIoU against the hidden ground truth of the same video) for
/// every pseudo-label.
std::vector<std::pair<double, double>> pseudo_label_quality(
    const PseudoDataset& pseudo, const std::vector<Video>& hidden);

enum class SweepAxis { kOdSize, kThreshold, kFusion };

const char* sweep_axis_name(SweepAxis a);
SweepAxis parse_sweep_axis(const std::string& s);

struct SweepRow {
  std::string value;
  std::uint64_t seed = 0;
  double map_all = 0.0;  // at tIoU 0.5
  double map_base = 0.0;
  double map_novel = 0.0;
  double avg_all = 0.0;  // over the grid
  std::size_t pseudo_videos = 0;
  std::size_t pseudo_instances = 0;
};

/// One row per (value, seed).
///   od-size    value = OD pool multiplier; 0 means no self-training.
///   threshold  pseudo-label threshold on the ID pool.
///   fusion     fusion mode applied to the ID self-trained model.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, SweepAxis axis,
                                const std::vector<std::string>& values,
                                const std::vector<std::uint64_t>& seeds);

std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows);

}  // namespace ovtal
