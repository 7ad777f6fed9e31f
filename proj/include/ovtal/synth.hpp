#pragma once

// Deterministic synthetic open-vocabulary TAL benchmarks.
//
// Each class is a random unit prototype in R^D. A video is a sequence of
// background snippets ~ N(0, bg_sigma^2 I); every planted action overwrites
// its snippets with prototype + N(0, sigma^2 I). Splits:
//   labeled_train  base classes only, labels kept
//   unlabeled_id   novel classes only, labels hidden (kept for analysis)
//   unlabeled_od   base + novel + distractor classes, labels hidden
//   val            base + novel, labeled
// Distractor classes have prototypes but are not part of the vocabulary;
// their instances carry class ids >= vocabulary size.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ovtal/classifier.hpp"
#include "ovtal/rng.hpp"
#include "ovtal/types.hpp"

namespace ovtal {

struct SynthConfig {
  std::size_t num_base = 6;
  std::size_t num_novel = 4;
  std::size_t dim = 32;
  std::size_t labeled_videos = 40;
  std::size_t id_videos = 40;
  std::size_t od_videos = 40;
  double od_multiplier = 1.0;
  std::size_t val_videos = 40;
  std::size_t min_snippets = 64;
  std::size_t max_snippets = 192;
  std::size_t min_instances = 1;
  std::size_t max_instances = 4;
  std::size_t min_length = 4;
  std::size_t max_length = 32;
  double noise_sigma = 0.3;
  double background_sigma = 0.3;
  std::size_t distractor_classes = 4;
  double max_cosine = 0.5;
  // 0 keeps native lengths; otherwise every video is resampled to this many snippets.
  std::size_t fixed_length = 0;
  std::uint64_t seed = 0;

  std::size_t od_count() const;
  void validate() const;
};

struct Benchmark {
  Vocabulary vocab;
  Matrix distractors;  // distractor_classes x D
  std::vector<Video> labeled_train;
  std::vector<Video> unlabeled_id;
  std::vector<Video> unlabeled_od;
  std::vector<Video> val;
};

Vocabulary gen_vocabulary(const SynthConfig& cfg);

/// Plants non-overlapping instances of `allowed` classes (rows of
/// `prototypes`) into a fresh background sequence.
Video gen_video(const Matrix& prototypes, const std::vector<std::size_t>& allowed,
                const SynthConfig& cfg, CounterRng rng, std::string video_id,
                std::size_t num_instances, std::size_t num_snippets);

/// Same, drawing the length and instance count from the config ranges.
Video gen_video(const Matrix& prototypes, const std::vector<std::size_t>& allowed,
                const SynthConfig& cfg, CounterRng rng, std::string video_id);

Benchmark gen_benchmark(const SynthConfig& cfg);

/// Linear resampling along time at uniformly spaced positions (endpoints
/// aligned). A single output row samples the sequence midpoint.
Matrix interpolate_features(const Matrix& features, std::size_t target_len);

/// Resamples a video and rescales its instances by target_len / S.
Video interpolate_video(const Video& video, std::size_t target_len);

}  // namespace ovtal
