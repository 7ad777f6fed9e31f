#include <sstream>

#include "doctest.h"
#include "ovtal/error.hpp"
#include "ovtal/experiment.hpp"

using namespace ovtal;

namespace {

ExperimentConfig tiny() {
  auto c = ExperimentConfig::synthetic_defaults();
  c.synth.num_base = 3;
  c.synth.num_novel = 2;
  c.synth.dim = 12;
  c.synth.labeled_videos = 8;
  c.synth.id_videos = 4;
  c.synth.od_videos = 3;
  c.synth.val_videos = 4;
  c.synth.min_snippets = 32;
  c.synth.max_snippets = 48;
  c.synth.max_length = 12;
  c.synth.distractor_classes = 1;
  c.model.in_dim = 12;
  c.model.hidden = 8;
  c.model.levels = 3;
  c.stage1.main_epochs = 3;
  c.stage2.main_epochs = 1;
  return c;
}

std::size_t lines(const std::string& s) {
  std::size_t n = 0;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) ++n;
  return n;
}

}  // namespace

TEST_CASE("defaults validate and the seed reaches every stage") {
  auto c = ExperimentConfig::synthetic_defaults();
  CHECK_NOTHROW(c.validate());
  CHECK(c.model.in_dim == c.synth.dim);
  c.apply_seed(42);
  CHECK(c.seed == 42);
  CHECK(c.synth.seed == 42);
  CHECK(c.stage1.seed == 42);
  CHECK(c.stage2.seed == 42);
  c.model.in_dim = c.synth.dim + 1;
  CHECK_THROWS(c.validate());
}

TEST_CASE("ground truth drops distractor classes") {
  const auto b = gen_benchmark(tiny().synth);
  std::size_t planted = 0, distractor = 0;
  for (const auto& v : b.unlabeled_od)
    for (const auto& i : v.instances) {
      ++planted;
      if (*i.class_id >= b.vocab.size()) ++distractor;
    }
  CHECK(ground_truth(b.unlabeled_od, b.vocab).size() == planted - distractor);
}

TEST_CASE("constrained prediction only emits protocol classes") {
  const auto c = tiny();
  const auto b = gen_benchmark(c.synth);
  const auto params = localizer_init(c.model, 0);
  for (auto p : {Protocol::kConstrainedBase, Protocol::kConstrainedNovel}) {
    const auto targets = protocol_targets(b.vocab, p);
    for (const auto& pred : predict(params, b.val, b.vocab, p, c.inference))
      CHECK(std::find(targets.begin(), targets.end(), pred.class_id) != targets.end());
  }
  const auto r = evaluate_model(params, b.val, b.vocab, Protocol::kConstrainedNovel, {0.5},
                                c.inference);
  for (const auto& row : r.classes) CHECK(row.split == Split::kNovel);
}

TEST_CASE("threaded prediction matches serial prediction") {
  const auto c = tiny();
  const auto b = gen_benchmark(c.synth);
  const auto params = localizer_init(c.model, 1);
  const auto a = predict(params, b.val, b.vocab, Protocol::kGeneralized, c.inference, 1);
  const auto t = predict(params, b.val, b.vocab, Protocol::kGeneralized, c.inference, 3);
  REQUIRE(a.size() == t.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].video_id == t[i].video_id);
    CHECK(a[i].score == t[i].score);
    CHECK(a[i].start == t[i].start);
  }
}

TEST_CASE("an empty pseudo pool returns the stage-1 model") {
  const auto c = tiny();
  const auto b = gen_benchmark(c.synth);
  const auto s1 = train_stage1(b.labeled_train, c.model, c.stage1);
  auto pc = c.pseudo;
  pc.threshold = 1.0;
  const auto out = self_train(s1.params, b.labeled_train, b.unlabeled_id, pc, c.stage2);
  CHECK_FALSE(out.stage2_ran);
  CHECK(out.model.identical(s1.params));
}

TEST_CASE("pseudo-label quality pairs every pseudo-label with a tIoU") {
  const auto c = tiny();
  const auto b = gen_benchmark(c.synth);
  const auto s1 = train_stage1(b.labeled_train, c.model, c.stage1);
  auto pc = c.pseudo;
  pc.threshold = 0.0;
  const auto ps = generate_pseudo_labels(s1.params, b.unlabeled_id, pc);
  const auto q = pseudo_label_quality(ps, b.unlabeled_id);
  std::size_t n = 0;
  for (const auto& v : ps.videos) n += v.instances.size();
  CHECK(q.size() == n);
  for (const auto& [sa, iou] : q) {
    CHECK(sa >= 0.0);
    CHECK(iou >= 0.0);
    CHECK(iou <= 1.0);
  }
}

TEST_CASE("sweeps emit one row per value and seed") {
  const auto c = tiny();
  const auto rows = run_sweep(c, SweepAxis::kFusion,
                              {"geometric", "arithmetic", "actionness", "category"}, {0});
  CHECK(rows.size() == 4);
  const auto csv = sweep_csv(SweepAxis::kFusion, rows);
  CHECK(lines(csv) == 5);
  CHECK(csv.rfind("axis,value,seed,", 0) == 0);

  const auto thr = run_sweep(c, SweepAxis::kThreshold, {"1.0", "0.3"}, {0, 1});
  CHECK(thr.size() == 4);
  CHECK(thr[0].pseudo_instances == 0);
  CHECK_THROWS(run_sweep(c, SweepAxis::kThreshold, {"abc"}, {0}));
  CHECK_THROWS(parse_sweep_axis("epochs"));
  CHECK(parse_sweep_axis("od-size") == SweepAxis::kOdSize);
}

TEST_CASE("evaluation is deterministic per seed") {
  const auto c = tiny();
  const auto a = run_sweep(c, SweepAxis::kThreshold, {"0.2"}, {3});
  const auto b = run_sweep(c, SweepAxis::kThreshold, {"0.2"}, {3});
  CHECK(sweep_csv(SweepAxis::kThreshold, a) == sweep_csv(SweepAxis::kThreshold, b));
}
