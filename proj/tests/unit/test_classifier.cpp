#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "ovtal/classifier.hpp"
#include "ovtal/error.hpp"
#include "ovtal/rng.hpp"

using namespace ovtal;

namespace {

Vocabulary make_vocab(std::size_t c, std::size_t d, std::uint64_t seed) {
  CounterRng rng(seed);
  Vocabulary v;
  v.prototypes = Matrix(c, d);
  for (std::size_t i = 0; i < c; ++i) {
    v.names.push_back("class" + std::to_string(i));
    v.splits.push_back(i % 2 ? Split::kNovel : Split::kBase);
    for (auto& x : v.prototypes.row(i)) x = rng.normal();
  }
  return v;
}

Vocabulary one_hot_vocab(std::size_t c) {
  Vocabulary v;
  v.prototypes = Matrix(c, c);
  for (std::size_t i = 0; i < c; ++i) {
    v.names.push_back("c" + std::to_string(i));
    v.splits.push_back(Split::kBase);
    v.prototypes(i, i) = 1.0;
  }
  return v;
}

ActionInstance inst(double s, double e, double score) {
  ActionInstance a;
  a.start = s;
  a.end = e;
  a.actionness = score;
  a.score = score;
  return a;
}

}  // namespace

TEST_CASE("roi align of a constant sequence is that constant") {
  Matrix f(6, 3);
  for (std::size_t r = 0; r < 6; ++r) f.row(r)[0] = 2.0, f.row(r)[1] = -1.0, f.row(r)[2] = 0.5;
  for (std::size_t bins : {1u, 3u, 7u}) {
    const auto v = roi_align_1d(f, {0.3, 5.2}, bins);
    CHECK(v[0] == doctest::Approx(2.0));
    CHECK(v[1] == doctest::Approx(-1.0));
    CHECK(v[2] == doctest::Approx(0.5));
  }
}

TEST_CASE("roi align hand cases") {
  Matrix f(3, 1);
  f.values = {0.0, 1.0, 4.0};
  CHECK(roi_align_1d(f, {1, 2}, 1)[0] == 1.0);
  Matrix g(2, 1);
  g.values = {0.0, 1.0};
  CHECK(roi_align_1d(g, {0.5, 1.5}, 1)[0] == doctest::Approx(0.5));
  CHECK_THROWS_AS(roi_align_1d(g, {-0.5, 1.0}, 1), InvalidInput);
  CHECK_THROWS_AS(roi_align_1d(g, {0.5, 2.5}, 1), InvalidInput);
  CHECK_THROWS_AS(roi_align_1d(g, {0.5, 1.0}, 0), InvalidInput);
}

TEST_CASE("roi align is linear in the features") {
  CounterRng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix a(9, 4), b(9, 4), ab(9, 4);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      a.values[i] = rng.normal();
      b.values[i] = rng.normal();
      ab.values[i] = a.values[i] + b.values[i];
    }
    const double s = rng.uniform(0, 8);
    const Interval iv{s, rng.uniform(s + 0.1, 9.0)};
    const auto bins = static_cast<std::size_t>(rng.uniform_int(1, 8));
    const auto ra = roi_align_1d(a, iv, bins), rb = roi_align_1d(b, iv, bins);
    const auto rab = roi_align_1d(ab, iv, bins);
    for (std::size_t k = 0; k < 4; ++k) CHECK(rab[k] == doctest::Approx(ra[k] + rb[k]));
  }
}

TEST_CASE("classification picks the matching orthogonal prototype") {
  const auto v = one_hot_vocab(4);
  Matrix f(4, 4);
  for (std::size_t i = 0; i < 4; ++i) f(i, 3 - i) = 2.5;
  const auto top = classify(f, v, {});
  for (std::size_t i = 0; i < 4; ++i) CHECK(top[i][0].class_id == 3 - i);
}

TEST_CASE("equal similarities give a uniform distribution") {
  Vocabulary v;
  v.prototypes = Matrix(5, 2, 1.0);
  for (int i = 0; i < 5; ++i) {
    v.names.push_back("c" + std::to_string(i));
    v.splits.push_back(Split::kNovel);
  }
  Matrix f(1, 2);
  f.values = {0.3, -0.7};
  const auto p = category_probabilities(f, v, 0.07);
  for (double x : p.values) CHECK(x == doctest::Approx(0.2));
}

TEST_CASE("temperature-scaled softmax hand case") {
  const auto v = one_hot_vocab(2);
  Matrix f(1, 2);
  f.values = {1.0, 0.0};
  const auto p = category_probabilities(f, v, 0.5);
  const double e2 = std::exp(2.0);
  CHECK(p(0, 0) == doctest::Approx(e2 / (e2 + 1.0)).epsilon(1e-14));
  CHECK(p(0, 1) == doctest::Approx(1.0 / (e2 + 1.0)).epsilon(1e-14));
  CHECK(p(0, 0) == doctest::Approx(0.881).epsilon(1e-3));
}

TEST_CASE("probabilities sum to one and ignore prototype scale") {
  auto v = make_vocab(6, 8, 3);
  CounterRng rng(4);
  Matrix f(10, 8);
  for (auto& x : f.values) x = rng.normal();
  const auto p = category_probabilities(f, v, 0.1);
  for (std::size_t r = 0; r < 10; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 6; ++c) s += p(r, c);
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
  for (auto& x : v.prototypes.row(2)) x *= 17.0;
  const auto q = category_probabilities(f, v, 0.1);
  for (std::size_t i = 0; i < p.values.size(); ++i)
    CHECK(q.values[i] == doctest::Approx(p.values[i]).epsilon(1e-12));
}

TEST_CASE("zero instance features are rejected") {
  const auto v = make_vocab(3, 4, 1);
  CHECK_THROWS_AS(category_probabilities(Matrix(1, 4), v, 0.07), InvalidInput);
  CHECK_THROWS_AS(category_probabilities(Matrix(1, 5, 1.0), v, 0.07), InvalidInput);
}

TEST_CASE("top-k returns categories best first") {
  const auto v = make_vocab(5, 6, 2);
  CounterRng rng(5);
  Matrix f(3, 6);
  for (auto& x : f.values) x = rng.normal();
  ClassifierConfig cfg;
  cfg.top_k_categories = 3;
  const auto top = classify(f, v, cfg);
  for (const auto& row : top) {
    REQUIRE(row.size() == 3);
    CHECK(row[0].score >= row[1].score);
    CHECK(row[1].score >= row[2].score);
  }
}

TEST_CASE("fusion hand cases") {
  CHECK(fuse_scores(0.81, 0.25, FusionMode::kGeometric) == doctest::Approx(0.45));
  CHECK(fuse_scores(1.0, 0.0, FusionMode::kGeometric) == 0.0);
  CHECK(fuse_scores(1.0, 0.0, FusionMode::kArithmetic) == 0.5);
  CHECK(fuse_scores(0.3, 0.9, FusionMode::kActionnessOnly) == 0.3);
  CHECK(fuse_scores(0.3, 0.9, FusionMode::kCategoryOnly) == 0.9);
  for (double x : {0.0, 0.1, 0.64, 1.0}) {
    CHECK(fuse_scores(x, x, FusionMode::kGeometric) == doctest::Approx(x));
    CHECK(fuse_scores(x, x, FusionMode::kArithmetic) == doctest::Approx(x));
  }
  CHECK_THROWS_AS(fuse_scores(1.2, 0.5, FusionMode::kGeometric), InvalidInput);
  CHECK_THROWS_AS(fuse_scores(0.5, -0.1, FusionMode::kArithmetic), InvalidInput);
  CHECK(parse_fusion("geometric") == FusionMode::kGeometric);
  CHECK(std::string(fusion_name(FusionMode::kCategoryOnly)) == "category");
  CHECK_THROWS(parse_fusion("median"));
}

TEST_CASE("fused scores lie between their inputs") {
  CounterRng rng(6);
  for (int i = 0; i < 500; ++i) {
    const double a = rng.uniform(), c = rng.uniform();
    for (auto m : {FusionMode::kGeometric, FusionMode::kArithmetic}) {
      const double s = fuse_scores(a, c, m);
      CHECK(s >= std::min(a, c) - 1e-15);
      CHECK(s <= std::max(a, c) + 1e-15);
    }
  }
}

TEST_CASE("top-1 class is the same under every fusion mode") {
  const auto v = make_vocab(7, 8, 9);
  CounterRng rng(10);
  SnippetFeatures video;
  video.video_id = "x";
  video.features = Matrix(24, 8);
  for (auto& x : video.features.values) x = rng.normal();
  std::vector<ActionInstance> props;
  for (int i = 0; i < 30; ++i) {
    const double s = rng.uniform(0, 20);
    props.push_back(inst(s, s + rng.uniform(0.5, 4.0), rng.uniform(0.01, 1.0)));
  }
  InferenceConfig cfg;
  cfg.nms.top_k = 1000;
  cfg.nms.iou_threshold = 1.0;
  cfg.nms.min_score = 0.0;
  std::vector<std::vector<std::size_t>> labels;
  for (auto m : {FusionMode::kGeometric, FusionMode::kArithmetic, FusionMode::kActionnessOnly,
                 FusionMode::kCategoryOnly}) {
    cfg.classifier.fusion = m;
    auto out = classify_proposals(props, video, v, cfg);
    std::sort(out.begin(), out.end(), [](const ActionInstance& a, const ActionInstance& b) {
      return a.start < b.start;
    });
    std::vector<std::size_t> ids;
    for (const auto& o : out) ids.push_back(*o.class_id);
    labels.push_back(ids);
  }
  for (const auto& l : labels) CHECK(l == labels[0]);
}

TEST_CASE("soft-nms hand cases") {
  SoftNmsConfig cfg;
  const auto one = soft_nms({inst(1, 3, 0.4)}, cfg);
  REQUIRE(one.size() == 1);
  CHECK(*one[0].score == 0.4);

  const auto dup = soft_nms({inst(2, 5, 0.9), inst(2, 5, 0.8)}, cfg);
  REQUIRE(dup.size() == 1);
  CHECK(*dup[0].score == 0.9);

  const auto disjoint = soft_nms({inst(0, 1, 0.3), inst(4, 6, 0.7), inst(2, 3, 0.5)}, cfg);
  REQUIRE(disjoint.size() == 3);
  CHECK(*disjoint[0].score == 0.7);
  CHECK(*disjoint[1].score == 0.5);
  CHECK(*disjoint[2].score == 0.3);
}

TEST_CASE("soft-nms linear decay hand case") {
  SoftNmsConfig cfg;
  const auto out = soft_nms({inst(0, 4, 0.9), inst(2, 6, 0.6)}, cfg);
  REQUIRE(out.size() == 2);
  CHECK(*out[1].score == doctest::Approx(0.6 * (1.0 - 2.0 / 6.0)));
  cfg.decay = NmsDecay::kGaussian;
  cfg.sigma = 0.5;
  const auto g = soft_nms({inst(0, 4, 0.9), inst(2, 6, 0.6)}, cfg);
  CHECK(*g[1].score == doctest::Approx(0.6 * std::exp(-(1.0 / 9.0) / 0.5)));
}

TEST_CASE("soft-nms never raises scores and keeps the top instance") {
  CounterRng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ActionInstance> in;
    const auto n = rng.uniform_int(1, 40);
    for (std::int64_t i = 0; i < n; ++i) {
      const double s = rng.uniform(0, 30);
      in.push_back(inst(s, s + rng.uniform(0.2, 8), rng.uniform(0.0005, 1.0)));
    }
    SoftNmsConfig cfg;
    cfg.top_k = static_cast<std::size_t>(rng.uniform_int(1, 50));
    cfg.decay = trial % 2 ? NmsDecay::kGaussian : NmsDecay::kLinear;
    const auto out = soft_nms(in, cfg);
    CHECK(out.size() <= cfg.top_k);
    const auto best = *std::max_element(in.begin(), in.end(), [](const auto& a, const auto& b) {
      return *a.score < *b.score;
    });
    if (*best.score >= cfg.min_score) {
      REQUIRE_FALSE(out.empty());
      CHECK(*out[0].score == *best.score);
      CHECK(out[0].start == best.start);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (i) CHECK(*out[i].score <= *out[i - 1].score);
      CHECK(*out[i].score >= cfg.min_score);
      const auto src = std::find_if(in.begin(), in.end(), [&](const ActionInstance& a) {
        return a.start == out[i].start && a.end == out[i].end;
      });
      REQUIRE(src != in.end());
      CHECK(*out[i].score <= *src->score);
    }
  }
}

TEST_CASE("soft-nms on actionness leaves other fields alone") {
  auto a = inst(0, 4, 0.9), b = inst(0, 4, 0.5);
  a.score.reset();
  b.score.reset();
  const auto out = soft_nms({b, a}, SoftNmsConfig{}, ScoreField::kActionness);
  REQUIRE(out.size() == 1);
  CHECK(out[0].actionness == 0.9);
}
