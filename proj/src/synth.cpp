#include "ovtal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ovtal/error.hpp"

namespace ovtal {

std::size_t SynthConfig::od_count() const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(od_videos) * od_multiplier));
}

void SynthConfig::validate() const {
  if (num_base == 0 || num_novel == 0 || dim == 0)
    throw InvalidInput("synth: num_base, num_novel and dim must be >= 1");
  if (labeled_videos == 0 || id_videos == 0 || val_videos == 0)
    throw InvalidInput("synth: split sizes must be >= 1");
  if (!(od_multiplier >= 0.0)) throw InvalidInput("synth: od_multiplier must be >= 0");
  if (min_snippets == 0 || min_snippets > max_snippets)
    throw InvalidInput("synth: need 1 <= min_snippets <= max_snippets");
  if (min_instances > max_instances) throw InvalidInput("synth: min_instances > max_instances");
  if (min_length == 0 || min_length > max_length)
    throw InvalidInput("synth: need 1 <= min_length <= max_length");
  if (!(noise_sigma >= 0.0) || !(background_sigma > 0.0))
    throw InvalidInput("synth: noise sigmas must be non-negative (background strictly positive)");
  if (!(max_cosine > -1.0 && max_cosine <= 1.0)) throw InvalidInput("synth: bad max_cosine");
}

namespace {

std::string indexed_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu", prefix, i);
  return buf;
}

std::vector<double> random_unit(std::size_t dim, CounterRng& rng) {
  std::vector<double> v(dim);
  double sq = 0.0;
  do {
    sq = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      sq += x * x;
    }
  } while (sq == 0.0);
  const double n = std::sqrt(sq);
  for (auto& x : v) x /= n;
  return v;
}

// Appends `count` unit rows to `rows`, each with cosine <= cap against all rows.
void draw_prototypes(Matrix& rows, std::size_t count, double cap, CounterRng& rng) {
  constexpr int kMaxTries = 10000;
  for (std::size_t c = 0; c < count; ++c) {
    bool ok = false;
    for (int attempt = 0; attempt < kMaxTries && !ok; ++attempt) {
      auto v = random_unit(rows.cols, rng);
      ok = true;
      for (std::size_t r = 0; r < rows.rows && ok; ++r) {
        double dot = 0.0;
        for (std::size_t d = 0; d < rows.cols; ++d) dot += v[d] * rows(r, d);
        ok = dot <= cap;
      }
      if (ok) {
        rows.values.insert(rows.values.end(), v.begin(), v.end());
        rows.rows += 1;
      }
    }
    if (!ok)
      throw InvalidInput("synth: cannot draw prototypes with pairwise cosine <= " +
                         std::to_string(cap));
  }
}

}  // namespace

Vocabulary gen_vocabulary(const SynthConfig& cfg) {
  cfg.validate();
  CounterRng rng = CounterRng(cfg.seed).split("vocabulary");
  Vocabulary v;
  v.prototypes = Matrix(0, cfg.dim);
  draw_prototypes(v.prototypes, cfg.num_base + cfg.num_novel, cfg.max_cosine, rng);
  for (std::size_t c = 0; c < cfg.num_base + cfg.num_novel; ++c) {
    v.names.push_back(indexed_id(c < cfg.num_base ? "base" : "novel", c));
    v.splits.push_back(c < cfg.num_base ? Split::kBase : Split::kNovel);
  }
  return v;
}

Video gen_video(const Matrix& prototypes, const std::vector<std::size_t>& allowed,
                const SynthConfig& cfg, CounterRng rng, std::string video_id,
                std::size_t num_instances, std::size_t num_snippets) {
  if (num_instances > 0 && allowed.empty())
    throw InvalidInput("gen_video: no classes allowed");
  if (num_snippets == 0) throw InvalidInput("gen_video: empty video");
  const std::size_t d = prototypes.cols;

  Video v;
  v.features.video_id = std::move(video_id);
  v.features.features = Matrix(num_snippets, d);
  for (auto& x : v.features.features.values) x = cfg.background_sigma * rng.normal();

  // Integer-aligned placement with at least one background snippet between
  // neighbours. Rejection sampling first; when it stalls on a crowded video the
  // layout is rebuilt by sampling lengths and spreading the slack.
  constexpr int kMaxTries = 1000;
  const auto hi_len = std::min(cfg.max_length, num_snippets);
  std::vector<Interval> placed;
  bool stalled = cfg.min_length > hi_len;
  for (std::size_t i = 0; i < num_instances && !stalled; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < kMaxTries && !ok; ++attempt) {
      const auto len = static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(cfg.min_length), static_cast<std::int64_t>(hi_len)));
      const auto start = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(num_snippets - len)));
      const Interval iv{static_cast<double>(start), static_cast<double>(start + len)};
      ok = std::none_of(placed.begin(), placed.end(), [&](const Interval& p) {
        return iv.start < p.end + 1.0 && p.start < iv.end + 1.0;
      });
      if (ok) placed.push_back(iv);
    }
    stalled = !ok;
  }
  if (stalled) {
    const std::size_t gaps_needed = num_instances > 0 ? num_instances - 1 : 0;
    if (cfg.min_length > hi_len || num_instances * cfg.min_length + gaps_needed > num_snippets)
      throw InvalidInput("gen_video: cannot place " + std::to_string(num_instances) +
                         " non-overlapping instances in " + std::to_string(num_snippets) +
                         " snippets");
    std::vector<std::size_t> lengths(num_instances);
    std::size_t total = gaps_needed;
    for (auto& len : lengths) {
      len = static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(cfg.min_length), static_cast<std::int64_t>(hi_len)));
      total += len;
    }
    while (total > num_snippets) {
      --*std::max_element(lengths.begin(), lengths.end());
      --total;
    }
    const auto slack = static_cast<std::int64_t>(num_snippets - total);
    std::vector<std::int64_t> cuts(num_instances);
    for (auto& c : cuts) c = rng.uniform_int(0, slack);
    std::sort(cuts.begin(), cuts.end());
    placed.clear();
    std::size_t cursor = 0;
    std::int64_t prev_cut = 0;
    for (std::size_t i = 0; i < num_instances; ++i) {
      cursor += static_cast<std::size_t>(cuts[i] - prev_cut) + (i > 0 ? 1 : 0);
      prev_cut = cuts[i];
      placed.push_back({static_cast<double>(cursor), static_cast<double>(cursor + lengths[i])});
      cursor += lengths[i];
    }
  }
  std::sort(placed.begin(), placed.end(),
            [](const Interval& a, const Interval& b) { return a.start < b.start; });

  for (const auto& iv : placed) {
    const std::size_t cls = allowed[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(allowed.size()) - 1))];
    if (cls >= prototypes.rows) throw InvalidInput("gen_video: class index out of range");
    for (auto t = static_cast<std::size_t>(iv.start); t < static_cast<std::size_t>(iv.end); ++t) {
      auto row = v.features.features.row(t);
      for (std::size_t k = 0; k < d; ++k) row[k] = prototypes(cls, k) + cfg.noise_sigma * rng.normal();
    }
    ActionInstance gt;
    gt.start = iv.start;
    gt.end = iv.end;
    gt.class_id = cls;
    gt.actionness = 1.0;
    v.instances.push_back(gt);
  }
  return v;
}

Video gen_video(const Matrix& prototypes, const std::vector<std::size_t>& allowed,
                const SynthConfig& cfg, CounterRng rng, std::string video_id) {
  CounterRng sizes = rng.split("sizes");
  const auto s = static_cast<std::size_t>(sizes.uniform_int(
      static_cast<std::int64_t>(cfg.min_snippets), static_cast<std::int64_t>(cfg.max_snippets)));
  const auto n = static_cast<std::size_t>(sizes.uniform_int(
      static_cast<std::int64_t>(cfg.min_instances), static_cast<std::int64_t>(cfg.max_instances)));
  return gen_video(prototypes, allowed, cfg, rng.split("content"), std::move(video_id), n, s);
}

Benchmark gen_benchmark(const SynthConfig& cfg) {
  cfg.validate();
  Benchmark b;
  b.vocab = gen_vocabulary(cfg);

  CounterRng root(cfg.seed);
  // Distractors must also stay clear of the vocabulary prototypes.
  Matrix all = b.vocab.prototypes;
  CounterRng drng = root.split("distractors");
  draw_prototypes(all, cfg.distractor_classes, cfg.max_cosine, drng);
  b.distractors = Matrix(cfg.distractor_classes, cfg.dim);
  std::copy(all.values.begin() + static_cast<std::ptrdiff_t>(b.vocab.size() * cfg.dim),
            all.values.end(), b.distractors.values.begin());

  const auto base = b.vocab.indices(Split::kBase);
  const auto novel = b.vocab.indices(Split::kNovel);
  std::vector<std::size_t> vocab_all(b.vocab.size());
  std::iota(vocab_all.begin(), vocab_all.end(), 0);
  std::vector<std::size_t> everything(all.rows);
  std::iota(everything.begin(), everything.end(), 0);

  auto make = [&](const char* name, std::size_t count, const std::vector<std::size_t>& allowed,
                  Provenance prov) {
    CounterRng split_rng = root.split(name);
    std::vector<Video> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      Video v = gen_video(all, allowed, cfg, split_rng.split(i), indexed_id(name, i));
      if (cfg.fixed_length > 0) v = interpolate_video(v, cfg.fixed_length);
      v.provenance = prov;
      out.push_back(std::move(v));
    }
    return out;
  };
  b.labeled_train = make("train", cfg.labeled_videos, base, Provenance::kLabeled);
  b.unlabeled_id = make("id", cfg.id_videos, novel, Provenance::kInDomain);
  b.unlabeled_od = make("od", cfg.od_count(), everything, Provenance::kOpenDomain);
  b.val = make("val", cfg.val_videos, vocab_all, Provenance::kLabeled);
  return b;
}

Matrix interpolate_features(const Matrix& f, std::size_t target_len) {
  if (f.rows == 0) throw InvalidInput("interpolate_features: empty sequence");
  if (target_len == 0) throw InvalidInput("interpolate_features: target_len must be >= 1");
  if (target_len == f.rows) return f;
  Matrix out(target_len, f.cols);
  const double last = static_cast<double>(f.rows - 1);
  for (std::size_t j = 0; j < target_len; ++j) {
    const double pos = target_len == 1
                           ? 0.5 * last
                           : static_cast<double>(j) * last / static_cast<double>(target_len - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, f.rows - 1);
    const double w = pos - static_cast<double>(lo);
    for (std::size_t d = 0; d < f.cols; ++d) out(j, d) = (1.0 - w) * f(lo, d) + w * f(hi, d);
  }
  return out;
}

Video interpolate_video(const Video& video, std::size_t target_len) {
  Video out = video;
  const double k = static_cast<double>(target_len) / static_cast<double>(video.features.num_snippets());
  out.features.features = interpolate_features(video.features.features, target_len);
  out.features.snippet_stride_seconds = video.features.snippet_stride_seconds / k;
  for (auto& inst : out.instances) {
    inst.start *= k;
    inst.end *= k;
  }
  return out;
}

}  // namespace ovtal
