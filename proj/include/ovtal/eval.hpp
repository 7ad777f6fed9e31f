#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ovtal/classifier.hpp"
#include "ovtal/types.hpp"

namespace ovtal {

struct Prediction {
  std::string video_id;
  double start = 0.0;
  double end = 0.0;
  std::size_t class_id = 0;
  double score = 0.0;
};

struct GroundTruth {
  std::string video_id;
  double start = 0.0;
  double end = 0.0;
  std::size_t class_id = 0;
};

/// AP for one class. Predictions are ranked by score (ties: earlier start,
/// then video id) and greedily matched to the unmatched ground truth of the
/// same video with the highest tIoU; a match needs tIoU >= threshold. The
/// result is the exact area under the monotone precision envelope.
double average_precision(const std::vector<Prediction>& predictions,
                         const std::vector<GroundTruth>& ground_truth, double tiou_threshold);

enum class Protocol { kGeneralized, kConstrainedBase, kConstrainedNovel };

const char* protocol_name(Protocol p);
Protocol parse_protocol(const std::string& s);

/// Classes the classifier may emit and the evaluator scores under `p`.
std::vector<std::size_t> protocol_targets(const Vocabulary& vocab, Protocol p);

/// "0.3:0.1:0.7" (inclusive range) or "0.5,0.75" or "0.5".
std::vector<double> parse_tiou_grid(const std::string& text);

struct ClassAp {
  std::size_t class_id = 0;
  std::string name;
  Split split = Split::kBase;
  std::size_t num_gt = 0;
  std::vector<double> ap;  // one entry per grid point
};

struct EvalReport {
  Protocol protocol = Protocol::kGeneralized;
  std::vector<double> tiou_grid;
  std::vector<ClassAp> classes;
  // Per grid point; empty optional when the subset has no class with GT.
  std::vector<std::optional<double>> map_all, map_base, map_novel;
  std::optional<double> avg_all, avg_base, avg_novel;

  /// Index of `threshold` in the grid (within 1e-9).
  std::size_t grid_index(double threshold) const;
};

EvalReport evaluate(const std::vector<Prediction>& predictions,
                    const std::vector<GroundTruth>& ground_truth, const Vocabulary& vocab,
                    Protocol protocol, const std::vector<double>& tiou_grid);

/// Recomputes every aggregate from the per-class rows.
void recompute_aggregates(EvalReport& report);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace ovtal
