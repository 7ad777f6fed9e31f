#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ovtal {

/// Half-open temporal interval in snippet coordinates.
struct Interval {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end - start; }
  double center() const { return 0.5 * (start + end); }
  bool valid() const;
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Throws InvalidInput when !iv.valid() (non-finite or start >= end).
void require_valid(const Interval& iv, const char* context);

/// Temporal intersection over union, in [0, 1].
double tiou(const Interval& a, const Interval& b);

/// Dense row-major matrix of reals.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// One video as a sequence of snippet embeddings.
struct SnippetFeatures {
  std::string video_id;
  Matrix features;  // S x D
  double snippet_stride_seconds = 1.0;

  std::size_t num_snippets() const { return features.rows; }
  std::size_t dim() const { return features.cols; }
};

/// A temporal action: interval plus whatever scores have been attached.
/// Ground truth carries a class and no scores; class-agnostic proposals
/// carry only the actionness.
struct ActionInstance {
  double start = 0.0;
  double end = 0.0;
  std::optional<std::size_t> class_id;
  double actionness = 0.0;
  std::optional<double> category_score;
  std::optional<double> score;

  Interval interval() const { return {start, end}; }
  // The score used for ranking: fused if present, else actionness.
  double ranking_score() const { return score.value_or(actionness); }
};

enum class Provenance { kLabeled, kInDomain, kOpenDomain };

const char* provenance_name(Provenance p);
Provenance parse_provenance(const std::string& s);

/// A video with its (ground-truth or pseudo) instances.
struct Video {
  SnippetFeatures features;
  std::vector<ActionInstance> instances;
  Provenance provenance = Provenance::kLabeled;

  const std::string& id() const { return features.video_id; }
};

}  // namespace ovtal
