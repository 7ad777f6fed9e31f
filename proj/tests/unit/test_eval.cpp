#include <algorithm>
#include <cmath>
#include <map>

#include "common/ap_oracle.hpp"
#include "doctest.h"
#include "ovtal/error.hpp"
#include "ovtal/eval.hpp"
#include "ovtal/rng.hpp"

using namespace ovtal;
using ovtal::testing::brute_force_ap;
using ovtal::testing::random_toy;

namespace {

Prediction pred(const std::string& v, double s, double e, std::size_t c, double score) {
  return {v, s, e, c, score};
}

GroundTruth truth(const std::string& v, double s, double e, std::size_t c) {
  return {v, s, e, c};
}

Vocabulary vocab4() {
  Vocabulary v;
  v.names = {"b0", "b1", "n0", "n1"};
  v.splits = {Split::kBase, Split::kBase, Split::kNovel, Split::kNovel};
  v.prototypes = Matrix(4, 4);
  for (std::size_t i = 0; i < 4; ++i) v.prototypes(i, i) = 1.0;
  return v;
}

template <class T>
std::vector<T> of_class(const std::vector<T>& v, std::size_t c) {
  std::vector<T> out;
  for (const auto& x : v)
    if (x.class_id == c) out.push_back(x);
  return out;
}

}  // namespace

TEST_CASE("tIoU hand cases") {
  CHECK(tiou({2, 5}, {2, 5}) == 1.0);
  CHECK(tiou({0, 1}, {2, 3}) == 0.0);
  CHECK(tiou({0, 10}, {5, 15}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(tiou({1, 1}, {0, 2}), InvalidInput);
}

TEST_CASE("tIoU symmetry and invariance") {
  CounterRng rng(21);
  for (int i = 0; i < 500; ++i) {
    const double a = rng.uniform(-5, 5), b = rng.uniform(-5, 5);
    const Interval x{a, a + rng.uniform(0.1, 4)}, y{b, b + rng.uniform(0.1, 4)};
    const double v = tiou(x, y);
    CHECK(v == tiou(y, x));
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    const double sh = rng.uniform(-100, 100), k = rng.uniform(0.01, 50);
    CHECK(tiou({x.start * k + sh, x.end * k + sh}, {y.start * k + sh, y.end * k + sh}) ==
          doctest::Approx(v).epsilon(1e-9));
  }
}

TEST_CASE("AP hand cases") {
  const std::vector<GroundTruth> one{truth("v", 0, 10, 0)};
  CHECK(average_precision({pred("v", 0, 10, 0, 0.9)}, one, 0.5) == 1.0);
  CHECK(average_precision({}, one, 0.5) == 0.0);
  CHECK(average_precision({pred("v", 0, 10, 0, 0.9)}, {}, 0.5) == 0.0);
  // Higher-scored prediction has tIoU 0.2 with the only GT; the lower one matches.
  const std::vector<Prediction> two{pred("v", 8, 10, 0, 0.9), pred("v", 0, 10, 0, 0.5)};
  CHECK(average_precision(two, one, 0.5) == 0.5);
}

TEST_CASE("each ground truth is matched at most once") {
  const std::vector<GroundTruth> g{truth("v", 0, 10, 0)};
  const std::vector<Prediction> p{pred("v", 0, 10, 0, 0.9), pred("v", 0, 10, 0, 0.8)};
  CHECK(average_precision(p, g, 0.5) == 1.0);
  const std::vector<GroundTruth> g2{truth("v", 0, 10, 0), truth("w", 0, 10, 0)};
  CHECK(average_precision(p, g2, 0.5) == 0.5);
}

TEST_CASE("ties break by start then video id") {
  const std::vector<GroundTruth> g{truth("b", 5, 6, 0)};
  const std::vector<Prediction> p{pred("b", 5, 6, 0, 0.5), pred("a", 5, 6, 0, 0.5)};
  // "a" ranks first and is a false positive.
  CHECK(average_precision(p, g, 0.5) == 0.5);
  const std::vector<Prediction> q{pred("a", 7, 8, 0, 0.5), pred("b", 5, 6, 0, 0.5)};
  CHECK(average_precision(q, g, 0.5) == 1.0);
}

TEST_CASE("AP matches the brute-force oracle") {
  CounterRng rng(31);
  int trials = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto t = random_toy(rng, 1, 6, 4);
    for (double thr : {0.1, 0.3, 0.5, 0.7}) {
      CHECK(std::abs(average_precision(t.preds, t.gt, thr) - brute_force_ap(t.preds, t.gt, thr)) <=
            1e-12);
      ++trials;
    }
  }
  CHECK(trials >= 500);
}

TEST_CASE("AP is invariant under strictly increasing score transforms") {
  CounterRng rng(32);
  for (int i = 0; i < 300; ++i) {
    auto t = random_toy(rng, 1, 8, 4);
    const double base = average_precision(t.preds, t.gt, 0.5);
    for (auto& p : t.preds) p.score = std::exp(3.0 * p.score) - 7.0;
    CHECK(average_precision(t.preds, t.gt, 0.5) == base);
  }
}

TEST_CASE("AP does not increase with the threshold") {
  CounterRng rng(33);
  for (int i = 0; i < 300; ++i) {
    const auto t = random_toy(rng, 1, 8, 4);
    double prev = 1.0;
    for (double thr = 0.05; thr <= 1.0; thr += 0.05) {
      const double ap = average_precision(t.preds, t.gt, thr);
      CHECK(ap <= prev + 1e-15);
      prev = ap;
    }
  }
}

TEST_CASE("per-class AP only depends on that class") {
  CounterRng rng(34);
  const auto v = vocab4();
  for (int i = 0; i < 100; ++i) {
    auto t = random_toy(rng, 4, 12, 8);
    const auto r = evaluate(t.preds, t.gt, v, Protocol::kGeneralized, {0.5});
    // Mutate everything outside class 2.
    for (auto& p : t.preds)
      if (p.class_id != 2) p.score = rng.uniform(), p.end += 1.0;
    t.gt.push_back(truth("va", 1, 2, 0));
    const auto m = evaluate(t.preds, t.gt, v, Protocol::kGeneralized, {0.5});
    CHECK(m.classes[2].ap[0] == r.classes[2].ap[0]);
    CHECK(r.classes[2].ap[0] ==
          doctest::Approx(brute_force_ap(of_class(t.preds, 2), of_class(t.gt, 2), 0.5))
              .epsilon(1e-12));
  }
}

TEST_CASE("evaluate is invariant to class and video ordering") {
  CounterRng rng(35);
  const auto v = vocab4();
  Vocabulary rev;
  rev.prototypes = Matrix(4, 4);
  for (std::size_t i = 4; i-- > 0;) {
    rev.names.push_back(v.names[i]);
    rev.splits.push_back(v.splits[i]);
  }
  for (int i = 0; i < 100; ++i) {
    auto t = random_toy(rng, 4, 12, 8);
    const auto a = evaluate(t.preds, t.gt, v, Protocol::kGeneralized, {0.3, 0.5, 0.7});
    std::reverse(t.preds.begin(), t.preds.end());
    std::reverse(t.gt.begin(), t.gt.end());
    for (auto& p : t.preds) p.class_id = 3 - p.class_id;
    for (auto& g : t.gt) g.class_id = 3 - g.class_id;
    const auto b = evaluate(t.preds, t.gt, rev, Protocol::kGeneralized, {0.3, 0.5, 0.7});
    for (std::size_t c = 0; c < 4; ++c) CHECK(a.classes[c].ap == b.classes[3 - c].ap);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(a.map_all[k].has_value() == b.map_all[k].has_value());
      if (a.map_all[k]) CHECK(*a.map_all[k] == doctest::Approx(*b.map_all[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("perfect predictions score one everywhere") {
  const auto v = vocab4();
  std::vector<GroundTruth> gt;
  std::vector<Prediction> p;
  for (std::size_t c = 0; c < 4; ++c) {
    gt.push_back(truth("v", 2.0 * c, 2.0 * c + 1.5, c));
    p.push_back(pred("v", 2.0 * c, 2.0 * c + 1.5, c, 0.9));
  }
  const auto r = evaluate(p, gt, v, Protocol::kGeneralized, {0.5});
  CHECK(*r.map_all[0] == 1.0);
  CHECK(*r.map_base[0] == 1.0);
  CHECK(*r.map_novel[0] == 1.0);
  CHECK(*r.avg_all == 1.0);
}

TEST_CASE("constrained protocols restrict rows and reject foreign predictions") {
  const auto v = vocab4();
  std::vector<GroundTruth> gt{truth("v", 0, 2, 0), truth("v", 3, 5, 2), truth("v", 6, 8, 3)};
  std::vector<Prediction> novel{pred("v", 3, 5, 2, 0.8), pred("v", 6, 8, 2, 0.6)};
  const auto r = evaluate(novel, gt, v, Protocol::kConstrainedNovel, {0.5});
  REQUIRE(r.classes.size() == 2);
  for (const auto& c : r.classes) CHECK(c.split == Split::kNovel);
  CHECK_FALSE(r.map_base[0].has_value());
  CHECK(r.classes[0].ap[0] == 1.0);
  CHECK(r.classes[1].ap[0] == 0.0);
  CHECK(*r.map_novel[0] == 0.5);
  CHECK_THROWS_AS(evaluate({pred("v", 0, 2, 0, 0.9)}, gt, v, Protocol::kConstrainedNovel, {0.5}),
                  InvalidInput);
}

TEST_CASE("classes without ground truth are left out of the means") {
  const auto v = vocab4();
  std::vector<GroundTruth> gt{truth("v", 0, 2, 0)};
  std::vector<Prediction> p{pred("v", 0, 2, 0, 0.9), pred("v", 0, 2, 1, 0.9)};
  const auto r = evaluate(p, gt, v, Protocol::kGeneralized, {0.5});
  CHECK(r.classes[1].num_gt == 0);
  CHECK(*r.map_all[0] == 1.0);
  CHECK_FALSE(r.map_novel[0].has_value());
}

TEST_CASE("grid parsing") {
  const auto g = parse_tiou_grid("0.3:0.1:0.7");
  CHECK(g == std::vector<double>{0.3, 0.4, 0.5, 0.6, 0.7});
  CHECK(parse_tiou_grid("[0.5:0.05:0.95]").size() == 10);
  CHECK(parse_tiou_grid("0.5,0.75") == std::vector<double>{0.5, 0.75});
  CHECK_THROWS_AS(parse_tiou_grid("0.5,abc"), InvalidInput);
  CHECK_THROWS_AS(parse_tiou_grid("1.5"), InvalidInput);
  CHECK_THROWS_AS(parse_tiou_grid(""), InvalidInput);
  CHECK(parse_protocol("constrained_novel") == Protocol::kConstrainedNovel);
  CHECK_THROWS_AS(parse_protocol("open"), InvalidInput);
}

TEST_CASE("averages over the grid agree in either order") {
  CounterRng rng(36);
  const auto v = vocab4();
  for (int i = 0; i < 50; ++i) {
    const auto t = random_toy(rng, 4, 12, 8);
    const auto r = evaluate(t.preds, t.gt, v, Protocol::kGeneralized, {0.3, 0.5, 0.7});
    if (!r.avg_all) continue;
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& c : r.classes) {
      if (c.num_gt == 0) continue;
      s += (c.ap[0] + c.ap[1] + c.ap[2]) / 3.0;
      ++n;
    }
    CHECK(std::abs(s / static_cast<double>(n) - *r.avg_all) <= 1e-9);
  }
}

TEST_CASE("spearman") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 2, 3}, {1, 3, 2}) == doctest::Approx(0.5));
  // Tied ranks are averaged: x ranks (1.5, 1.5, 3), y ranks (1, 2, 3).
  CHECK(spearman({5, 5, 9}, {1, 2, 3}) == doctest::Approx(std::sqrt(0.75)));
  CHECK_THROWS_AS(spearman({1, 2}, {1}), InvalidInput);
}
