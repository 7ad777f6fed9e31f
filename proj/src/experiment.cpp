#include "ovtal/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>

#include "ovtal/error.hpp"
#include "ovtal/parallel.hpp"
#include "ovtal/tensor.hpp"

namespace ovtal {

ExperimentConfig ExperimentConfig::synthetic_defaults() {
  ExperimentConfig c;
  c.synth.background_sigma = 0.1;
  c.model.in_dim = c.synth.dim;
  c.model.hidden = 32;
  c.stage1.main_epochs = 10;
  c.stage1.max_lr = 2e-3;
  c.stage1.weight_decay = 0.05;
  c.stage2.main_epochs = 3;
  c.stage2.max_lr = 1e-3;
  c.stage2.weight_decay = 0.05;
  c.stage2.ema_lambda = 0.995;
  c.pseudo.threshold = 0.1;
  return c;
}

void ExperimentConfig::apply_seed(std::uint64_t s) {
  seed = s;
  synth.seed = s;
  stage1.seed = s;
  stage2.seed = s;
}

void ExperimentConfig::validate() const {
  synth.validate();
  stage1.validate();
  stage2.validate();
  inference.classifier.validate();
  inference.nms.validate();
  pseudo.nms.validate();
  if (!(pseudo.threshold >= 0.0 && pseudo.threshold <= 1.0))
    throw InvalidInput("pseudo.threshold must be in [0, 1]");
  if (model.in_dim != synth.dim)
    throw InvalidInput("model.in_dim must equal synth.dim");
  if (tiou_grid.empty()) throw InvalidInput("tiou grid is empty");
}

std::vector<GroundTruth> ground_truth(const std::vector<Video>& videos, const Vocabulary& vocab) {
  std::vector<GroundTruth> out;
  for (const auto& v : videos)
    for (const auto& inst : v.instances)
      if (inst.class_id && *inst.class_id < vocab.size())
        out.push_back({v.id(), inst.start, inst.end, *inst.class_id});
  return out;
}

std::vector<Prediction> predict(const LocalizerParams& params, const std::vector<Video>& videos,
                                const Vocabulary& vocab, Protocol protocol,
                                const InferenceConfig& cfg, std::size_t threads) {
  const auto targets = protocol_targets(vocab, protocol);
  const Vocabulary restricted = vocab.subset(targets);
  std::vector<std::vector<Prediction>> per_video(videos.size());
  parallel_for(videos.size(), threads, [&](std::size_t i) {
    NoGradGuard no_grad;
    for (const auto& d : detect_actions(params, videos[i].features, restricted, cfg))
      per_video[i].push_back({videos[i].id(), d.start, d.end, targets.at(*d.class_id), *d.score});
  });
  std::vector<Prediction> out;
  for (auto& p : per_video) out.insert(out.end(), p.begin(), p.end());
  return out;
}

EvalReport evaluate_model(const LocalizerParams& params, const std::vector<Video>& videos,
                          const Vocabulary& vocab, Protocol protocol,
                          const std::vector<double>& tiou_grid, const InferenceConfig& cfg,
                          std::size_t threads) {
  return evaluate(predict(params, videos, vocab, protocol, cfg, threads),
                  ground_truth(videos, vocab), vocab, protocol, tiou_grid);
}

SelfTrainOutcome self_train(const LocalizerParams& stage1, const std::vector<Video>& labeled,
                            const std::vector<Video>& pool, const PseudoLabelConfig& pseudo,
                            const TrainConfig& stage2) {
  SelfTrainOutcome r;
  r.pseudo = generate_pseudo_labels(stage1, pool, pseudo);
  if (r.pseudo.videos.empty()) {
    r.model = stage1;
    return r;
  }
  auto s2 = train_stage2(stage1, merge_datasets(labeled, r.pseudo), stage2);
  r.model = std::move(s2.teacher);
  r.stage2_ran = true;
  r.stage2_steps = s2.steps;
  return r;
}

std::vector<std::pair<double, double>> pseudo_label_quality(const PseudoDataset& pseudo,
                                                            const std::vector<Video>& hidden) {
  std::map<std::string, const Video*> by_id;
  for (const auto& v : hidden) by_id[v.id()] = &v;
  std::vector<std::pair<double, double>> out;
  for (const auto& v : pseudo.videos) {
    auto it = by_id.find(v.id());
    if (it == by_id.end())
      throw InvalidInput("pseudo_label_quality: no hidden annotation for '" + v.id() + "'");
    for (const auto& p : v.instances) {
      double best = 0.0;
      for (const auto& g : it->second->instances)
        best = std::max(best, tiou(p.interval(), g.interval()));
      out.emplace_back(p.actionness, best);
    }
  }
  return out;
}

const char* sweep_axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::kOdSize: return "od-size";
    case SweepAxis::kThreshold: return "threshold";
    case SweepAxis::kFusion: return "fusion";
  }
  return "od-size";
}

SweepAxis parse_sweep_axis(const std::string& s) {
  if (s == "od-size" || s == "od_size") return SweepAxis::kOdSize;
  if (s == "threshold") return SweepAxis::kThreshold;
  if (s == "fusion") return SweepAxis::kFusion;
  throw InvalidInput("unknown sweep axis '" + s + "' (expected od-size, threshold or fusion)");
}

namespace {

double parse_number(const std::string& s, const char* what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || !std::isfinite(v))
    throw InvalidInput(std::string("bad ") + what + " value '" + s + "'");
  return v;
}

SweepRow summarize(const EvalReport& rep, std::string value, std::uint64_t seed) {
  const auto k = rep.grid_index(0.5);
  SweepRow row;
  row.value = std::move(value);
  row.seed = seed;
  row.map_all = rep.map_all[k].value_or(0.0);
  row.map_base = rep.map_base[k].value_or(0.0);
  row.map_novel = rep.map_novel[k].value_or(0.0);
  row.avg_all = rep.avg_all.value_or(0.0);
  return row;
}

}  // namespace

std::vector<SweepRow> run_sweep(const ExperimentConfig& base_cfg, SweepAxis axis,
                                const std::vector<std::string>& values,
                                const std::vector<std::uint64_t>& seeds) {
  if (values.empty()) throw InvalidInput("sweep: no values");
  if (seeds.empty()) throw InvalidInput("sweep: no seeds");
  base_cfg.validate();
  auto grid = base_cfg.tiou_grid;
  bool has_half = false;
  for (double t : grid) has_half = has_half || std::fabs(t - 0.5) < 1e-9;
  if (!has_half) grid.push_back(0.5);

  std::vector<SweepRow> rows;
  for (std::uint64_t seed : seeds) {
    ExperimentConfig cfg = base_cfg;
    cfg.apply_seed(seed);
    cfg.pseudo.threads = cfg.threads;
    const Benchmark bench = gen_benchmark(cfg.synth);
    const auto stage1 = train_stage1(bench.labeled_train, cfg.model, cfg.stage1).params;
    // The fusion ablation scores the full model: stage 1 plus ID self-training.
    SelfTrainOutcome full;
    if (axis == SweepAxis::kFusion)
      full = self_train(stage1, bench.labeled_train, bench.unlabeled_id, cfg.pseudo, cfg.stage2);

    for (const auto& value : values) {
      SweepRow row;
      switch (axis) {
        case SweepAxis::kOdSize: {
          const double mult = parse_number(value, "od-size");
          if (mult < 0.0) throw InvalidInput("sweep: od-size must be >= 0");
          LocalizerParams model = stage1;
          std::size_t pv = 0, pi = 0;
          if (mult > 0.0) {
            SynthConfig sc = cfg.synth;
            sc.od_multiplier = mult;
            const auto pool = gen_benchmark(sc).unlabeled_od;
            auto st = self_train(stage1, bench.labeled_train, pool, cfg.pseudo, cfg.stage2);
            model = std::move(st.model);
            pv = st.pseudo.videos.size();
            for (const auto& v : st.pseudo.videos) pi += v.instances.size();
          }
          row = summarize(evaluate_model(model, bench.val, bench.vocab, cfg.protocol, grid,
                                         cfg.inference, cfg.threads),
                          value, seed);
          row.pseudo_videos = pv;
          row.pseudo_instances = pi;
          break;
        }
        case SweepAxis::kThreshold: {
          PseudoLabelConfig pc = cfg.pseudo;
          pc.threshold = parse_number(value, "threshold");
          auto st = self_train(stage1, bench.labeled_train, bench.unlabeled_id, pc, cfg.stage2);
          row = summarize(evaluate_model(st.model, bench.val, bench.vocab, cfg.protocol, grid,
                                         cfg.inference, cfg.threads),
                          value, seed);
          row.pseudo_videos = st.pseudo.videos.size();
          for (const auto& v : st.pseudo.videos) row.pseudo_instances += v.instances.size();
          break;
        }
        case SweepAxis::kFusion: {
          InferenceConfig ic = cfg.inference;
          ic.classifier.fusion = parse_fusion(value);
          row = summarize(
              evaluate_model(full.model, bench.val, bench.vocab, cfg.protocol, grid, ic, cfg.threads),
              value, seed);
          row.pseudo_videos = full.pseudo.videos.size();
          for (const auto& v : full.pseudo.videos) row.pseudo_instances += v.instances.size();
          break;
        }
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows) {
  std::string out = "axis,value,seed,map_all@0.5,map_base@0.5,map_novel@0.5,avg_map_all,"
                    "pseudo_videos,pseudo_instances\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%llu,%.6f,%.6f,%.6f,%.6f,%zu,%zu\n",
                  sweep_axis_name(axis), r.value.c_str(), static_cast<unsigned long long>(r.seed),
                  r.map_all, r.map_base, r.map_novel, r.avg_all, r.pseudo_videos,
                  r.pseudo_instances);
    out += buf;
  }
  return out;
}

}  // namespace ovtal
