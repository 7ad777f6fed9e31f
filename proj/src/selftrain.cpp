#include "ovtal/selftrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "ovtal/error.hpp"
#include "ovtal/parallel.hpp"
#include "ovtal/rng.hpp"

namespace ovtal {

void TrainConfig::validate() const {
  if (!(max_lr > 0.0) || !(min_lr >= 0.0) || min_lr > max_lr)
    throw InvalidInput("train: need 0 <= min_lr <= max_lr and max_lr > 0");
  if (main_epochs == 0) throw InvalidInput("train: main_epochs must be >= 1");
  if (batch_size == 0) throw InvalidInput("train: batch_size must be >= 1");
  if (!(weight_decay >= 0.0)) throw InvalidInput("train: weight_decay must be >= 0");
  if (!(pseudo_label_threshold >= 0.0 && pseudo_label_threshold <= 1.0))
    throw InvalidInput("train: pseudo_label_threshold must be in [0, 1]");
  if (!(ema_lambda >= 0.0 && ema_lambda <= 1.0))
    throw InvalidInput("train: ema_lambda must be in [0, 1]");
  if (!(loss.reg_weight >= 0.0) || !(loss.focal.gamma >= 0.0) ||
      !(loss.focal.alpha >= 0.0 && loss.focal.alpha <= 1.0))
    throw InvalidInput("train: bad loss weights");
}

double profile_threshold(const std::string& profile) {
  if (profile == "anet" || profile == "activitynet") return 0.2;
  if (profile == "thumos" || profile == "thumos14") return 0.05;
  if (profile == "fineaction") return 0.4;
  throw InvalidInput("unknown dataset profile '" + profile + "'");
}

namespace {

struct Example {
  const SnippetFeatures* features;
  AssignedTargets targets;
};

std::vector<Example> build_examples(const std::vector<Video>& videos,
                                    const PyramidGeometry& geometry) {
  std::vector<Example> out;
  out.reserve(videos.size());
  for (const auto& v : videos)
    out.push_back({&v.features, assign_targets(v.instances, geometry, v.features.num_snippets())});
  return out;
}

// Shared loop for both stages. When `teacher` is set it follows the student
// by EMA after every optimizer step.
std::vector<double> run_training(LocalizerParams& student, LocalizerParams* teacher,
                                 const std::vector<Video>& videos, const TrainConfig& cfg,
                                 std::uint64_t stream, std::size_t& steps) {
  const auto examples = build_examples(videos, student.geometry);
  const std::size_t n = examples.size();
  const std::size_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t epochs = cfg.warmup_epochs + cfg.main_epochs;
  LrSchedule sched{cfg.max_lr, cfg.min_lr, cfg.warmup_epochs * per_epoch, epochs * per_epoch};

  auto params = student.handles();
  OptimizerState opt = OptimizerState::for_params(params, {0.9, 0.999, 1e-8, cfg.weight_decay});
  const CounterRng rng = CounterRng(cfg.seed).split(stream);

  std::vector<double> trace;
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    CounterRng shuffle = rng.split(epoch);
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(
                                  shuffle.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < per_epoch && steps < cfg.step_limit; ++b) {
      const std::size_t lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
      student.zero_grad();
      const double w = 1.0 / static_cast<double>(hi - lo);
      for (std::size_t k = lo; k < hi; ++k) {
        const auto& ex = examples[order[k]];
        const auto out = localizer_forward(student, *ex.features);
        auto loss = localizer_loss(out, ex.targets, cfg.loss);
        const double value = loss.total.item();
        if (!std::isfinite(value)) throw NumericalError("non-finite training loss");
        epoch_loss += value;
        ++seen;
        scale(loss.total, w).backward();
      }
      if (cfg.clip_norm > 0.0) clip_grad_norm(params, cfg.clip_norm);
      adamw_step(params, opt, lr_at(sched, epoch * per_epoch + b + 1));
      for (const auto& p : params)
        for (double v : p.data())
          if (!std::isfinite(v)) throw NumericalError("non-finite parameter after update");
      if (teacher) ema_update(*teacher, student, cfg.ema_lambda);
      ++steps;
    }
    if (seen == 0) break;
    trace.push_back(epoch_loss / static_cast<double>(seen));
  }
  return trace;
}

}  // namespace

TrainResult train_stage1(const std::vector<Video>& labeled, const LocalizerShape& shape,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (labeled.empty()) throw InvalidInput("train_stage1: empty dataset");
  TrainResult r;
  r.params = localizer_init(shape, cfg.seed);
  r.epoch_loss = run_training(r.params, nullptr, labeled, cfg, 1, r.steps);
  return r;
}

PseudoDataset generate_pseudo_labels(const LocalizerParams& params,
                                     const std::vector<Video>& unlabeled,
                                     const PseudoLabelConfig& cfg) {
  if (!(cfg.threshold >= 0.0 && cfg.threshold <= 1.0))
    throw InvalidInput("generate_pseudo_labels: threshold must be in [0, 1]");
  cfg.nms.validate();

  std::vector<std::vector<ActionInstance>> kept(unlabeled.size());
  parallel_for(unlabeled.size(), cfg.threads, [&](std::size_t i) {
    NoGradGuard no_grad;
    const auto& f = unlabeled[i].features;
    const auto outputs = localizer_forward(params, f);
    kept[i] = soft_nms(decode_instances(outputs, params.geometry, f.num_snippets()), cfg.nms,
                       ScoreField::kActionness);
  });

  PseudoDataset ds;
  ds.videos_seen = unlabeled.size();
  ds.actionness_histogram.assign(20, 0);
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    Video v;
    v.features = unlabeled[i].features;
    v.provenance = unlabeled[i].provenance == Provenance::kLabeled ? Provenance::kInDomain
                                                                    : unlabeled[i].provenance;
    for (const auto& inst : kept[i]) {
      ++ds.instances_before_threshold;
      const auto bin = std::min<std::size_t>(19, static_cast<std::size_t>(inst.actionness * 20.0));
      ++ds.actionness_histogram[bin];
      if (inst.actionness < cfg.threshold) continue;
      ActionInstance p;
      p.start = inst.start;
      p.end = inst.end;
      p.actionness = inst.actionness;
      v.instances.push_back(p);
    }
    std::sort(v.instances.begin(), v.instances.end(),
              [](const ActionInstance& a, const ActionInstance& b) { return a.start < b.start; });
    if (!v.instances.empty() || cfg.keep_empty_videos) ds.videos.push_back(std::move(v));
  }
  return ds;
}

std::size_t JointDataset::count(Provenance p) const {
  return static_cast<std::size_t>(std::count_if(videos.begin(), videos.end(),
                                                [p](const Video& v) { return v.provenance == p; }));
}

JointDataset merge_datasets(const std::vector<Video>& labeled, const PseudoDataset& pseudo) {
  JointDataset j;
  std::set<std::string> ids;
  auto push = [&](const Video& v) {
    if (!ids.insert(v.id()).second)
      throw InvalidInput("merge_datasets: video id '" + v.id() + "' appears twice");
    j.videos.push_back(v);
  };
  for (const auto& v : labeled) push(v);
  for (const auto& v : pseudo.videos) push(v);
  return j;
}

void ema_update(std::span<double> teacher, std::span<const double> student, double lambda) {
  if (teacher.size() != student.size()) throw InvalidInput("ema_update: shape mismatch");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidInput("ema_update: lambda must be in [0, 1]");
  for (std::size_t i = 0; i < teacher.size(); ++i)
    teacher[i] = (1.0 - lambda) * student[i] + lambda * teacher[i];
}

void ema_update(LocalizerParams& teacher, const LocalizerParams& student, double lambda) {
  if (teacher.tensors.size() != student.tensors.size())
    throw InvalidInput("ema_update: parameter count mismatch");
  for (std::size_t i = 0; i < teacher.tensors.size(); ++i) {
    auto& t = teacher.tensors[i];
    const auto& s = student.tensors[i];
    if (t.name != s.name || t.value.shape() != s.value.shape())
      throw InvalidInput("ema_update: shape mismatch at '" + t.name + "'");
    ema_update(t.value.mutable_data(), s.value.data(), lambda);
  }
}

Stage2Result train_stage2(const LocalizerParams& stage1, const JointDataset& joint,
                          const TrainConfig& cfg) {
  cfg.validate();
  if (joint.videos.empty()) throw InvalidInput("train_stage2: empty joint dataset");
  Stage2Result r;
  r.teacher = stage1;
  LocalizerParams student = stage1;
  r.epoch_loss = run_training(student, &r.teacher, joint.videos, cfg, 2, r.steps);
  return r;
}

}  // namespace ovtal
