#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "ovtal/error.hpp"
#include "ovtal/eval.hpp"
#include "ovtal/synth.hpp"

using namespace ovtal;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.labeled_videos = 8;
  c.id_videos = 6;
  c.od_videos = 5;
  c.val_videos = 6;
  return c;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_instances(const Video& v) {
  const double s = static_cast<double>(v.features.num_snippets());
  for (std::size_t i = 0; i < v.instances.size(); ++i) {
    const auto& a = v.instances[i];
    CHECK(a.start >= 0.0);
    CHECK(a.start < a.end);
    CHECK(a.end <= s);
    for (std::size_t j = i + 1; j < v.instances.size(); ++j) {
      const auto& b = v.instances[j];
      CHECK((a.end <= b.start || b.end <= a.start));
    }
  }
}

}  // namespace

TEST_CASE("vocabulary is deterministic, unit-norm and spread out") {
  const auto cfg = small_config();
  const auto a = gen_vocabulary(cfg);
  const auto b = gen_vocabulary(cfg);
  CHECK(a.prototypes == b.prototypes);
  CHECK(a.names == b.names);
  REQUIRE(a.size() == 10);
  CHECK(a.indices(Split::kBase).size() == 6);
  CHECK(a.indices(Split::kNovel).size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(std::sqrt(dot(a.prototypes.row(i), a.prototypes.row(i))) - 1.0) <= 1e-9);
    for (std::size_t j = i + 1; j < a.size(); ++j)
      CHECK(dot(a.prototypes.row(i), a.prototypes.row(j)) <= 0.5);
  }
  auto other = cfg;
  other.seed = 1;
  CHECK_FALSE(gen_vocabulary(other).prototypes == a.prototypes);
}

TEST_CASE("unreachable cosine cap is rejected") {
  auto cfg = small_config();
  cfg.dim = 2;
  cfg.max_cosine = 0.0;
  CHECK_THROWS(gen_vocabulary(cfg));
}

TEST_CASE("zero instances give pure background") {
  auto cfg = small_config();
  const auto v = gen_vocabulary(cfg);
  const auto video = gen_video(v.prototypes, {0}, cfg, CounterRng(4), "bg", 0, 50);
  CHECK(video.instances.empty());
  CHECK(video.features.num_snippets() == 50);
  double m = 0.0, sq = 0.0;
  for (double x : video.features.features.values) m += x, sq += x * x;
  const double n = static_cast<double>(video.features.features.values.size());
  CHECK(std::abs(m / n) < 0.05);
  CHECK(std::sqrt(sq / n) == doctest::Approx(cfg.background_sigma).epsilon(0.1));
}

TEST_CASE("noiseless action rows equal the prototype") {
  auto cfg = small_config();
  cfg.noise_sigma = 0.0;
  const auto v = gen_vocabulary(cfg);
  const auto video = gen_video(v.prototypes, {1, 3}, cfg, CounterRng(5), "x", 3, 120);
  REQUIRE(video.instances.size() == 3);
  for (const auto& inst : video.instances) {
    for (auto r = static_cast<std::size_t>(inst.start); r < static_cast<std::size_t>(inst.end); ++r) {
      const auto row = video.features.features.row(r);
      const auto proto = v.prototypes.row(*inst.class_id);
      CHECK(std::equal(row.begin(), row.end(), proto.begin()));
    }
  }
}

TEST_CASE("overcrowded videos are rejected") {
  auto cfg = small_config();
  const auto v = gen_vocabulary(cfg);
  CHECK_THROWS(gen_video(v.prototypes, {0}, cfg, CounterRng(1), "x", 10, 20));
  CHECK_THROWS(gen_video(v.prototypes, {}, cfg, CounterRng(1), "x", 1, 100));
}

TEST_CASE("tightly packed videos still get a valid layout") {
  auto cfg = small_config();
  const auto v = gen_vocabulary(cfg);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto video = gen_video(v.prototypes, {0, 1}, cfg, CounterRng(seed), "tight", 4, 19);
    REQUIRE(video.instances.size() == 4);
    check_instances(video);
    for (std::size_t i = 0; i + 1 < 4; ++i)
      CHECK(video.instances[i + 1].start >= video.instances[i].end + 1.0);
  }
}

TEST_CASE("benchmark splits respect their class sets") {
  const auto cfg = small_config();
  const auto b = gen_benchmark(cfg);
  const auto base = b.vocab.indices(Split::kBase), novel = b.vocab.indices(Split::kNovel);
  const std::set<std::size_t> bs(base.begin(), base.end()), ns(novel.begin(), novel.end());
  CHECK(b.labeled_train.size() == 8);
  CHECK(b.unlabeled_id.size() == 6);
  CHECK(b.unlabeled_od.size() == 5);
  CHECK(b.val.size() == 6);
  for (const auto& v : b.labeled_train)
    for (const auto& i : v.instances) CHECK(bs.count(*i.class_id));
  for (const auto& v : b.unlabeled_id)
    for (const auto& i : v.instances) CHECK(ns.count(*i.class_id));
  for (const auto& v : b.val)
    for (const auto& i : v.instances) CHECK(*i.class_id < b.vocab.size());
  std::set<std::string> ids;
  for (const auto* split : {&b.labeled_train, &b.unlabeled_id, &b.unlabeled_od, &b.val})
    for (const auto& v : *split) {
      CHECK(ids.insert(v.id()).second);
      check_instances(v);
    }
}

TEST_CASE("open-domain multiplier scales the pool exactly") {
  auto cfg = small_config();
  const auto n1 = gen_benchmark(cfg).unlabeled_od.size();
  cfg.od_multiplier = 2.0;
  CHECK(gen_benchmark(cfg).unlabeled_od.size() == 2 * n1);
}

TEST_CASE("generation is deterministic per seed") {
  const auto cfg = small_config();
  const auto a = gen_benchmark(cfg), b = gen_benchmark(cfg);
  REQUIRE(a.val.size() == b.val.size());
  for (std::size_t i = 0; i < a.val.size(); ++i) {
    CHECK(a.val[i].features.features == b.val[i].features.features);
    CHECK(a.val[i].instances.size() == b.val[i].instances.size());
  }
}

TEST_CASE("planted ground truth scores perfectly against itself") {
  const auto b = gen_benchmark(small_config());
  std::vector<Prediction> p;
  std::vector<GroundTruth> g;
  for (const auto& v : b.val)
    for (const auto& i : v.instances) {
      p.push_back({v.id(), i.start, i.end, *i.class_id, 1.0});
      g.push_back({v.id(), i.start, i.end, *i.class_id});
    }
  const auto r = evaluate(p, g, b.vocab, Protocol::kGeneralized, {0.95});
  CHECK(*r.map_all[0] == 1.0);
}

TEST_CASE("nearest prototype recovers every noiseless segment") {
  auto cfg = small_config();
  cfg.noise_sigma = 0.0;
  const auto b = gen_benchmark(cfg);
  std::size_t checked = 0;
  for (const auto& v : b.val)
    for (const auto& inst : v.instances) {
      std::vector<double> mean(cfg.dim, 0.0);
      const auto lo = static_cast<std::size_t>(inst.start), hi = static_cast<std::size_t>(inst.end);
      for (std::size_t r = lo; r < hi; ++r)
        for (std::size_t d = 0; d < cfg.dim; ++d)
          mean[d] += v.features.features(r, d) / static_cast<double>(hi - lo);
      std::size_t best = 0;
      double best_sim = -2.0;
      for (std::size_t c = 0; c < b.vocab.size(); ++c) {
        const double s = dot(mean, b.vocab.prototypes.row(c)) / std::sqrt(dot(mean, mean));
        if (s > best_sim) best_sim = s, best = c;
      }
      CHECK(best == *inst.class_id);
      ++checked;
    }
  CHECK(checked > 0);
}

TEST_CASE("interpolation hand cases") {
  Matrix m(2, 1);
  m.values = {0.0, 1.0};
  const auto r = interpolate_features(m, 3);
  CHECK(r.values == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(interpolate_features(m, 2) == m);
  Matrix c(5, 2, 0.7);
  const auto rc = interpolate_features(c, 11);
  CHECK(rc.rows == 11);
  for (double x : rc.values) CHECK(x == doctest::Approx(0.7));
}

TEST_CASE("interpolating a video rescales its instances") {
  auto cfg = small_config();
  const auto v = gen_vocabulary(cfg);
  const auto video = gen_video(v.prototypes, {0, 1}, cfg, CounterRng(9), "x", 2, 96);
  const auto r = interpolate_video(video, 192);
  CHECK(r.features.num_snippets() == 192);
  REQUIRE(r.instances.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(r.instances[i].start == doctest::Approx(2.0 * video.instances[i].start));
    CHECK(r.instances[i].end == doctest::Approx(2.0 * video.instances[i].end));
  }
}

TEST_CASE("config validation") {
  auto cfg = small_config();
  cfg.noise_sigma = -1.0;
  CHECK_THROWS(cfg.validate());
  cfg = small_config();
  cfg.background_sigma = 0.0;
  CHECK_THROWS(cfg.validate());
  cfg = small_config();
  cfg.num_base = 0;
  CHECK_THROWS(cfg.validate());
  cfg = small_config();
  cfg.min_snippets = 200;
  CHECK_THROWS(cfg.validate());
}
