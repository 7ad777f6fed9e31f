#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ovtal/localizer.hpp"
#include "ovtal/types.hpp"

namespace ovtal {

enum class Split { kBase, kNovel };

/// Class names, one prototype embedding per class, and the base/novel tag.
struct Vocabulary {
  std::vector<std::string> names;
  Matrix prototypes;  // C x D
  std::vector<Split> splits;

  std::size_t size() const { return names.size(); }
  std::size_t dim() const { return prototypes.cols; }
  std::optional<std::size_t> index_of(const std::string& name) const;
  std::vector<std::size_t> indices(Split which) const;
  /// Restriction to the given classes, in the given order.
  Vocabulary subset(const std::vector<std::size_t>& classes) const;
  void validate() const;
};

enum class FusionMode { kGeometric, kArithmetic, kActionnessOnly, kCategoryOnly };

const char* fusion_name(FusionMode m);
FusionMode parse_fusion(const std::string& s);

struct ClassifierConfig {
  double temperature = 0.07;
  std::size_t roi_bins = 4;
  std::size_t top_k_categories = 1;
  FusionMode fusion = FusionMode::kGeometric;
  void validate() const;
};

/// Mean of `bins` linearly interpolated samples taken at the bin centres.
/// Snippet row i is anchored at position i + 0.5.
std::vector<double> roi_align_1d(const Matrix& features, const Interval& interval,
                                 std::size_t bins);

/// Row-wise softmax(cos(F_A, F_T) / temperature): M x C.
Matrix category_probabilities(const Matrix& instance_features, const Vocabulary& vocab,
                              double temperature);

struct CategoryScore {
  std::size_t class_id;
  double score;
};

/// Top-k categories per instance, highest first (ties to the lower index).
std::vector<std::vector<CategoryScore>> classify(const Matrix& instance_features,
                                                 const Vocabulary& vocab,
                                                 const ClassifierConfig& cfg);

double fuse_scores(double actionness, double category, FusionMode mode);

enum class NmsDecay { kLinear, kGaussian };

struct SoftNmsConfig {
  double iou_threshold = 0.1;
  double min_score = 0.001;
  std::size_t top_k = 200;
  NmsDecay decay = NmsDecay::kLinear;
  double sigma = 0.5;
  void validate() const;
};

enum class ScoreField { kFused, kActionness };

/// Class-agnostic Soft-NMS on the chosen score field. Output is sorted by
/// that score, descending.
std::vector<ActionInstance> soft_nms(std::vector<ActionInstance> instances,
                                     const SoftNmsConfig& cfg,
                                     ScoreField field = ScoreField::kFused);

struct InferenceConfig {
  ClassifierConfig classifier;
  SoftNmsConfig nms;
};

/// Localize, classify against `vocab`, fuse, then Soft-NMS.
std::vector<ActionInstance> detect_actions(const LocalizerParams& params,
                                           const SnippetFeatures& video,
                                           const Vocabulary& vocab,
                                           const InferenceConfig& cfg);

/// Classification stage alone, applied to class-agnostic proposals.
std::vector<ActionInstance> classify_proposals(const std::vector<ActionInstance>& proposals,
                                               const SnippetFeatures& video,
                                               const Vocabulary& vocab,
                                               const InferenceConfig& cfg);

}  // namespace ovtal
