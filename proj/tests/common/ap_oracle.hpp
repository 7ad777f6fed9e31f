#pragma once

// Brute-force average precision: every cutoff of the ranked list is scored
// from scratch, and the interpolated precision at each recall level is the
// best precision over all cutoffs reaching that recall.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "ovtal/eval.hpp"
#include "ovtal/rng.hpp"

namespace ovtal::testing {

inline double interval_iou(double s1, double e1, double s2, double e2) {
  const double inter = std::max(0.0, std::min(e1, e2) - std::max(s1, s2));
  return inter / ((e1 - s1) + (e2 - s2) - inter);
}

// True positives among the first `cutoff` ranked predictions.
inline std::size_t true_positives(const std::vector<Prediction>& ranked,
                                  const std::vector<GroundTruth>& gt, std::size_t cutoff,
                                  double thr) {
  std::set<std::size_t> used;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < cutoff; ++k) {
    const auto& p = ranked[k];
    double best = -1.0;
    std::size_t arg = gt.size();
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (used.count(g) || gt[g].video_id != p.video_id) continue;
      const double v = interval_iou(p.start, p.end, gt[g].start, gt[g].end);
      if (v > best) best = v, arg = g;
    }
    if (arg < gt.size() && best >= thr) {
      used.insert(arg);
      ++tp;
    }
  }
  return tp;
}

inline double brute_force_ap(std::vector<Prediction> preds, const std::vector<GroundTruth>& gt,
                             double thr) {
  if (preds.empty() || gt.empty()) return 0.0;
  std::stable_sort(preds.begin(), preds.end(), [](const Prediction& a, const Prediction& b) {
    return std::tie(b.score, a.start, a.video_id) < std::tie(a.score, b.start, b.video_id);
  });
  const double n_gt = static_cast<double>(gt.size());
  std::vector<double> prec, rec;
  for (std::size_t k = 1; k <= preds.size(); ++k) {
    const double tp = static_cast<double>(true_positives(preds, gt, k, thr));
    prec.push_back(tp / static_cast<double>(k));
    rec.push_back(tp / n_gt);
  }
  std::vector<double> levels(rec.begin(), rec.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  double ap = 0.0, prev = 0.0;
  for (double r : levels) {
    double best = 0.0;
    for (std::size_t k = 0; k < rec.size(); ++k)
      if (rec[k] >= r) best = std::max(best, prec[k]);
    ap += (r - prev) * best;
    prev = r;
  }
  return ap;
}

// Random single- or multi-class case on two videos with quarter-snippet
// endpoints.
struct Toy {
  std::vector<Prediction> preds;
  std::vector<GroundTruth> gt;
};

inline Toy random_toy(CounterRng& rng, std::size_t classes, std::size_t max_pred,
                      std::size_t max_gt) {
  Toy t;
  const char* videos[] = {"va", "vb"};
  const auto np = rng.uniform_int(0, static_cast<std::int64_t>(max_pred));
  const auto ng = rng.uniform_int(0, static_cast<std::int64_t>(max_gt));
  const auto last_class = static_cast<std::int64_t>(classes) - 1;
  auto interval = [&] {
    const double s = std::round(rng.uniform(0, 10) * 4) / 4;
    return std::pair{s, s + std::round(rng.uniform(0.25, 5) * 4) / 4};
  };
  for (std::int64_t i = 0; i < ng; ++i) {
    auto [s, e] = interval();
    t.gt.push_back({videos[rng.uniform_int(0, 1)], s, e,
                    static_cast<std::size_t>(rng.uniform_int(0, last_class))});
  }
  for (std::int64_t i = 0; i < np; ++i) {
    auto [s, e] = interval();
    // Coarse scores so ties actually occur.
    t.preds.push_back({videos[rng.uniform_int(0, 1)], s, e,
                       static_cast<std::size_t>(rng.uniform_int(0, last_class)),
                       std::round(rng.uniform() * 5) / 5});
  }
  return t;
}

}  // namespace ovtal::testing
