#include "ovtal/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "ovtal/error.hpp"

namespace ovtal {

std::optional<std::size_t> Vocabulary::index_of(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names.begin());
}

std::vector<std::size_t> Vocabulary::indices(Split which) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == which) out.push_back(i);
  return out;
}

Vocabulary Vocabulary::subset(const std::vector<std::size_t>& classes) const {
  Vocabulary v;
  v.prototypes = Matrix(classes.size(), dim());
  for (std::size_t r = 0; r < classes.size(); ++r) {
    const std::size_t c = classes[r];
    if (c >= size()) throw InvalidInput("Vocabulary::subset: class index out of range");
    v.names.push_back(names[c]);
    v.splits.push_back(splits[c]);
    std::copy(prototypes.row(c).begin(), prototypes.row(c).end(), v.prototypes.row(r).begin());
  }
  return v;
}

void Vocabulary::validate() const {
  if (names.empty()) throw InvalidInput("Vocabulary: no classes");
  if (prototypes.rows != names.size() || splits.size() != names.size())
    throw InvalidInput("Vocabulary: names, prototypes and splits disagree in length");
  if (std::set<std::string>(names.begin(), names.end()).size() != names.size())
    throw InvalidInput("Vocabulary: duplicate class names");
  for (std::size_t c = 0; c < size(); ++c) {
    double sq = 0.0;
    for (double v : prototypes.row(c)) {
      if (!std::isfinite(v)) throw InvalidInput("Vocabulary: non-finite prototype");
      sq += v * v;
    }
    if (sq == 0.0) throw InvalidInput("Vocabulary: zero prototype for '" + names[c] + "'");
  }
}

const char* fusion_name(FusionMode m) {
  switch (m) {
    case FusionMode::kGeometric: return "geometric";
    case FusionMode::kArithmetic: return "arithmetic";
    case FusionMode::kActionnessOnly: return "actionness";
    case FusionMode::kCategoryOnly: return "category";
  }
  return "geometric";
}

FusionMode parse_fusion(const std::string& s) {
  if (s == "geometric") return FusionMode::kGeometric;
  if (s == "arithmetic") return FusionMode::kArithmetic;
  if (s == "actionness" || s == "actionness_only") return FusionMode::kActionnessOnly;
  if (s == "category" || s == "category_only") return FusionMode::kCategoryOnly;
  throw InvalidInput("unknown fusion mode '" + s + "'");
}

void ClassifierConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw InvalidInput("classifier temperature must be positive");
  if (roi_bins == 0) throw InvalidInput("roi_bins must be >= 1");
  if (top_k_categories == 0) throw InvalidInput("top_k_categories must be >= 1");
}

std::vector<double> roi_align_1d(const Matrix& features, const Interval& interval,
                                 std::size_t bins) {
  require_valid(interval, "roi_align_1d");
  if (bins == 0) throw InvalidInput("roi_align_1d: bins must be >= 1");
  const double s = static_cast<double>(features.rows);
  if (features.rows == 0) throw InvalidInput("roi_align_1d: empty feature sequence");
  if (interval.start < 0.0 || interval.end > s)
    throw InvalidInput("roi_align_1d: interval outside [0, S]");

  std::vector<double> out(features.cols, 0.0);
  const double width = interval.length() / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    const double pos = interval.start + (static_cast<double>(b) + 0.5) * width;
    // Continuous row index; rows are anchored at their centres.
    const double idx = std::clamp(pos - 0.5, 0.0, s - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(idx));
    const std::size_t hi = std::min(lo + 1, features.rows - 1);
    const double w = idx - static_cast<double>(lo);
    auto rl = features.row(lo);
    auto rh = features.row(hi);
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += (1.0 - w) * rl[d] + w * rh[d];
  }
  for (auto& v : out) v /= static_cast<double>(bins);
  return out;
}

Matrix category_probabilities(const Matrix& fa, const Vocabulary& vocab, double temperature) {
  vocab.validate();
  if (!(temperature > 0.0)) throw InvalidInput("classify: temperature must be positive");
  if (fa.rows > 0 && fa.cols != vocab.dim())
    throw InvalidInput("classify: instance dim " + std::to_string(fa.cols) +
                       " != prototype dim " + std::to_string(vocab.dim()));
  const std::size_t c = vocab.size();
  std::vector<double> proto_norm(c);
  for (std::size_t k = 0; k < c; ++k) {
    double sq = 0.0;
    for (double v : vocab.prototypes.row(k)) sq += v * v;
    proto_norm[k] = std::sqrt(sq);
  }

  Matrix probs(fa.rows, c);
  std::vector<double> logits(c);
  for (std::size_t m = 0; m < fa.rows; ++m) {
    auto x = fa.row(m);
    double sq = 0.0;
    for (double v : x) sq += v * v;
    if (!(sq > 0.0) || !std::isfinite(sq))
      throw InvalidInput("classify: instance " + std::to_string(m) + " has zero-norm features");
    const double xn = std::sqrt(sq);
    for (std::size_t k = 0; k < c; ++k) {
      auto p = vocab.prototypes.row(k);
      const double dot = std::inner_product(x.begin(), x.end(), p.begin(), 0.0);
      logits[k] = dot / (xn * proto_norm[k]) / temperature;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) z += (probs(m, k) = std::exp(logits[k] - mx));
    for (std::size_t k = 0; k < c; ++k) probs(m, k) /= z;
  }
  return probs;
}

std::vector<std::vector<CategoryScore>> classify(const Matrix& fa, const Vocabulary& vocab,
                                                 const ClassifierConfig& cfg) {
  cfg.validate();
  const Matrix probs = category_probabilities(fa, vocab, cfg.temperature);
  const std::size_t k = std::min(cfg.top_k_categories, vocab.size());
  std::vector<std::vector<CategoryScore>> out(fa.rows);
  std::vector<std::size_t> order(vocab.size());
  for (std::size_t m = 0; m < fa.rows; ++m) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return probs(m, a) > probs(m, b); });
    for (std::size_t j = 0; j < k; ++j) out[m].push_back({order[j], probs(m, order[j])});
  }
  return out;
}

double fuse_scores(double sa, double sc, FusionMode mode) {
  if (!(sa >= 0.0 && sa <= 1.0) || !(sc >= 0.0 && sc <= 1.0))
    throw InvalidInput("fuse_scores: scores must lie in [0, 1]");
  switch (mode) {
    case FusionMode::kGeometric: return std::sqrt(sa * sc);
    case FusionMode::kArithmetic: return 0.5 * (sa + sc);
    case FusionMode::kActionnessOnly: return sa;
    case FusionMode::kCategoryOnly: return sc;
  }
  return std::sqrt(sa * sc);
}

void SoftNmsConfig::validate() const {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0))
    throw InvalidInput("soft_nms: iou_threshold must be in [0, 1]");
  if (!(min_score >= 0.0)) throw InvalidInput("soft_nms: min_score must be >= 0");
  if (decay == NmsDecay::kGaussian && !(sigma > 0.0))
    throw InvalidInput("soft_nms: gaussian sigma must be positive");
}

std::vector<ActionInstance> soft_nms(std::vector<ActionInstance> pool, const SoftNmsConfig& cfg,
                                     ScoreField field) {
  cfg.validate();
  auto score_of = [field](ActionInstance& a) -> double& {
    if (field == ScoreField::kActionness) return a.actionness;
    if (!a.score) throw InvalidInput("soft_nms: instance has no fused score");
    return *a.score;
  };
  for (auto& a : pool) {
    require_valid(a.interval(), "soft_nms");
    (void)score_of(a);
  }

  std::vector<ActionInstance> kept;
  while (!pool.empty() && kept.size() < cfg.top_k) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i) {
      const double si = score_of(pool[i]), sb = score_of(pool[best]);
      if (si > sb || (si == sb && pool[i].start < pool[best].start)) best = i;
    }
    ActionInstance sel = pool[best];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
    if (score_of(sel) < cfg.min_score) break;

    std::vector<ActionInstance> next;
    next.reserve(pool.size());
    for (auto& a : pool) {
      const double iou = tiou(sel.interval(), a.interval());
      double& s = score_of(a);
      if (iou > cfg.iou_threshold) {
        s *= cfg.decay == NmsDecay::kLinear ? (1.0 - iou) : std::exp(-(iou * iou) / cfg.sigma);
      }
      if (s >= cfg.min_score) next.push_back(a);
    }
    pool = std::move(next);
    kept.push_back(std::move(sel));
  }
  return kept;
}

std::vector<ActionInstance> classify_proposals(const std::vector<ActionInstance>& proposals,
                                               const SnippetFeatures& video,
                                               const Vocabulary& vocab,
                                               const InferenceConfig& cfg) {
  Matrix fa(proposals.size(), video.dim());
  for (std::size_t m = 0; m < proposals.size(); ++m) {
    auto row = roi_align_1d(video.features, proposals[m].interval(), cfg.classifier.roi_bins);
    std::copy(row.begin(), row.end(), fa.row(m).begin());
  }
  const auto cats = classify(fa, vocab, cfg.classifier);
  std::vector<ActionInstance> out;
  out.reserve(proposals.size() * cfg.classifier.top_k_categories);
  for (std::size_t m = 0; m < proposals.size(); ++m)
    for (const auto& cs : cats[m]) {
      ActionInstance a = proposals[m];
      a.class_id = cs.class_id;
      a.category_score = cs.score;
      a.score = fuse_scores(a.actionness, cs.score, cfg.classifier.fusion);
      out.push_back(a);
    }
  return out;
}

std::vector<ActionInstance> detect_actions(const LocalizerParams& params,
                                           const SnippetFeatures& video,
                                           const Vocabulary& vocab,
                                           const InferenceConfig& cfg) {
  const auto outputs = localizer_forward(params, video);
  const auto proposals = decode_instances(outputs, params.geometry, video.num_snippets());
  return soft_nms(classify_proposals(proposals, video, vocab, cfg), cfg.nms, ScoreField::kFused);
}

}  // namespace ovtal
