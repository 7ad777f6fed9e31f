#include "ovtal/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "ovtal/error.hpp"

namespace ovtal {

double average_precision(const std::vector<Prediction>& predictions,
                         const std::vector<GroundTruth>& ground_truth, double tiou_threshold) {
  if (ground_truth.empty() || predictions.empty()) return 0.0;

  std::vector<std::size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = predictions[a];
    const auto& pb = predictions[b];
    if (pa.score != pb.score) return pa.score > pb.score;
    if (pa.start != pb.start) return pa.start < pb.start;
    return pa.video_id < pb.video_id;
  });

  std::map<std::string, std::vector<std::size_t>> gt_by_video;
  for (std::size_t g = 0; g < ground_truth.size(); ++g)
    gt_by_video[ground_truth[g].video_id].push_back(g);
  std::vector<bool> matched(ground_truth.size(), false);

  const double n_gt = static_cast<double>(ground_truth.size());
  std::vector<double> precision, recall;
  precision.reserve(order.size());
  recall.reserve(order.size());
  std::size_t tp = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto& p = predictions[order[rank]];
    auto it = gt_by_video.find(p.video_id);
    if (it != gt_by_video.end()) {
      double best = -1.0;
      std::size_t best_g = 0;
      for (std::size_t g : it->second) {
        if (matched[g]) continue;
        const auto& gt = ground_truth[g];
        const double iou = tiou({p.start, p.end}, {gt.start, gt.end});
        if (iou > best) {
          best = iou;
          best_g = g;
        }
      }
      if (best >= tiou_threshold) {
        matched[best_g] = true;
        ++tp;
      }
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(rank + 1));
    recall.push_back(static_cast<double>(tp) / n_gt);
  }

  // Monotone envelope, then exact area over recall steps.
  for (std::size_t i = precision.size() - 1; i-- > 0;)
    precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

const char* protocol_name(Protocol p) {
  switch (p) {
    case Protocol::kGeneralized: return "generalized";
    case Protocol::kConstrainedBase: return "constrained_base";
    case Protocol::kConstrainedNovel: return "constrained_novel";
  }
  return "generalized";
}

Protocol parse_protocol(const std::string& s) {
  if (s == "generalized") return Protocol::kGeneralized;
  if (s == "constrained_base" || s == "constrained-base") return Protocol::kConstrainedBase;
  if (s == "constrained_novel" || s == "constrained-novel") return Protocol::kConstrainedNovel;
  throw InvalidInput("unknown protocol '" + s + "'");
}

std::vector<std::size_t> protocol_targets(const Vocabulary& vocab, Protocol p) {
  switch (p) {
    case Protocol::kGeneralized: {
      std::vector<std::size_t> all(vocab.size());
      std::iota(all.begin(), all.end(), 0);
      return all;
    }
    case Protocol::kConstrainedBase: return vocab.indices(Split::kBase);
    case Protocol::kConstrainedNovel: return vocab.indices(Split::kNovel);
  }
  return {};
}

std::vector<double> parse_tiou_grid(const std::string& text) {
  auto parse_num = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      throw InvalidInput("bad tIoU grid '" + text + "'");
    }
    if (used != s.size() || !(v > 0.0 && v <= 1.0))
      throw InvalidInput("bad tIoU value '" + s + "' in grid '" + text + "'");
    return v;
  };
  std::string t = text;
  t.erase(std::remove_if(t.begin(), t.end(), [](char c) { return c == '[' || c == ']' || c == ' '; }),
          t.end());
  std::vector<double> grid;
  if (t.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(t);
    for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
    if (parts.size() != 3) throw InvalidInput("bad tIoU range '" + text + "'");
    const double lo = parse_num(parts[0]), step = parse_num(parts[1]), hi = parse_num(parts[2]);
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < n; ++i)
      grid.push_back(std::round((lo + static_cast<double>(i) * step) * 1e9) / 1e9);
  } else {
    std::stringstream ss(t);
    for (std::string item; std::getline(ss, item, ',');) grid.push_back(parse_num(item));
  }
  if (grid.empty()) throw InvalidInput("empty tIoU grid");
  return grid;
}

std::size_t EvalReport::grid_index(double threshold) const {
  for (std::size_t i = 0; i < tiou_grid.size(); ++i)
    if (std::abs(tiou_grid[i] - threshold) < 1e-9) return i;
  throw InvalidInput("tIoU " + std::to_string(threshold) + " not in report grid");
}

namespace {

std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

void recompute_aggregates(EvalReport& r) {
  const std::size_t n = r.tiou_grid.size();
  r.map_all.assign(n, std::nullopt);
  r.map_base.assign(n, std::nullopt);
  r.map_novel.assign(n, std::nullopt);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> all, base, novel;
    for (const auto& c : r.classes) {
      if (c.num_gt == 0) continue;
      all.push_back(c.ap.at(i));
      (c.split == Split::kBase ? base : novel).push_back(c.ap.at(i));
    }
    r.map_all[i] = mean_of(all);
    r.map_base[i] = mean_of(base);
    r.map_novel[i] = mean_of(novel);
  }
  auto avg = [](const std::vector<std::optional<double>>& v) -> std::optional<double> {
    if (v.empty() || !v.front()) return std::nullopt;
    double s = 0.0;
    for (const auto& x : v) s += *x;
    return s / static_cast<double>(v.size());
  };
  r.avg_all = avg(r.map_all);
  r.avg_base = avg(r.map_base);
  r.avg_novel = avg(r.map_novel);
}

EvalReport evaluate(const std::vector<Prediction>& predictions,
                    const std::vector<GroundTruth>& ground_truth, const Vocabulary& vocab,
                    Protocol protocol, const std::vector<double>& tiou_grid) {
  if (tiou_grid.empty()) throw InvalidInput("evaluate: empty tIoU grid");
  const auto targets = protocol_targets(vocab, protocol);
  const std::set<std::size_t> target_set(targets.begin(), targets.end());

  std::map<std::size_t, std::vector<Prediction>> preds_by_class;
  for (const auto& p : predictions) {
    if (!target_set.count(p.class_id))
      throw InvalidInput("evaluate: prediction class " + std::to_string(p.class_id) +
                         " is outside the " + protocol_name(protocol) + " target set");
    preds_by_class[p.class_id].push_back(p);
  }
  std::map<std::size_t, std::vector<GroundTruth>> gt_by_class;
  for (const auto& g : ground_truth) {
    if (g.class_id >= vocab.size()) throw InvalidInput("evaluate: GT class out of range");
    if (target_set.count(g.class_id)) gt_by_class[g.class_id].push_back(g);
  }

  EvalReport r;
  r.protocol = protocol;
  r.tiou_grid = tiou_grid;
  for (std::size_t c : targets) {
    ClassAp row;
    row.class_id = c;
    row.name = vocab.names[c];
    row.split = vocab.splits[c];
    const auto& gts = gt_by_class[c];
    const auto& ps = preds_by_class[c];
    row.num_gt = gts.size();
    for (double thr : tiou_grid) row.ap.push_back(average_precision(ps, gts, thr));
    r.classes.push_back(std::move(row));
  }
  recompute_aggregates(r);
  return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidInput("spearman: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace ovtal
