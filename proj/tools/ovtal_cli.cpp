// ovtal: command-line driver for data generation, two-stage training,
// pseudo-labelling, evaluation and sweeps.
//
// Exit codes: 0 success, 1 unexpected failure, 2 bad configuration or
// arguments, 3 bad data file, 4 numerical failure.

#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ovtal/error.hpp"
#include "ovtal/experiment.hpp"
#include "ovtal/io.hpp"
#include "ovtal/selftrain.hpp"
#include "ovtal/vocabsplit.hpp"

namespace {

using namespace ovtal;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool quiet = false;
};

Globals g;

void log(const std::string& msg) {
  if (!g.quiet) std::cerr << msg << '\n';
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ExperimentConfig load_config(const std::string& path) {
  ExperimentConfig c =
      path.empty() ? ExperimentConfig::synthetic_defaults() : config_from_json(read_json(path, true));
  if (g.seed) c.apply_seed(*g.seed);
  if (g.threads) c.threads = *g.threads;
  c.pseudo.threads = c.threads;
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  return c;
}

std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_to_json(c).dump())));
  return buf;
}

std::string absolute(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

void manifest(const fs::path& artifact, const std::string& command, const ExperimentConfig& c,
              std::vector<std::string> inputs) {
  write_manifest(artifact, {command, c.seed, config_hash(c), std::move(inputs), {artifact.string()}});
}

std::vector<std::string> read_lines(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(line.substr(b, line.find_last_not_of(" \t") - b + 1));
  }
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

ModelFile load_model(const std::string& path) { return model_from_json(read_json(path)); }

// ---- subcommands -----------------------------------------------------------------

int gen_data(const std::string& config_path, const std::string& out) {
  const auto cfg = load_config(config_path);
  log("generating synthetic benchmark (seed " + std::to_string(cfg.seed) + ")");
  const Benchmark b = gen_benchmark(cfg.synth);
  write_dataset(out, b, cfg);
  manifest(out, "gen-data", cfg, {config_path});
  log("wrote " + std::to_string(b.labeled_train.size()) + " train, " +
      std::to_string(b.unlabeled_id.size()) + " id, " + std::to_string(b.unlabeled_od.size()) +
      " od, " + std::to_string(b.val.size()) + " val videos to " + out);
  return 0;
}

int train_stage1_cmd(const std::string& data, const std::string& config_path, const std::string& out) {
  const auto cfg = load_config(config_path);
  const DatasetDir d = read_dataset(data);
  LocalizerShape shape = cfg.model;
  shape.in_dim = d.vocab.dim();
  const auto r = train_stage1(d.train, shape, cfg.stage1);
  log("stage 1: " + std::to_string(r.steps) + " steps, final loss " +
      fmt("%.4f", r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back()));
  write_file_atomic(out, dump_json(model_to_json({r.params, absolute(data), "stage1"})));
  manifest(out, "train-stage1", cfg, {data, config_path});
  return 0;
}

int pseudo_label_cmd(const std::string& model_path, const std::string& data_override,
                     const std::string& pool, std::optional<double> threshold,
                     const std::string& config_path, const std::string& out) {
  auto cfg = load_config(config_path);
  if (threshold) {
    if (!(*threshold >= 0.0 && *threshold <= 1.0))
      throw ConfigError("--threshold must be in [0, 1]");
    cfg.pseudo.threshold = *threshold;
  }
  if (pool != "id" && pool != "od") throw ConfigError("--pool must be 'id' or 'od'");
  const ModelFile m = load_model(model_path);
  const std::string data = data_override.empty() ? m.data_dir : absolute(data_override);
  if (data.empty()) throw ConfigError("model has no data_dir; pass --data");
  const DatasetDir d = read_dataset(data);
  const auto& unlabeled = d.split(pool);

  const PseudoDataset ps = generate_pseudo_labels(m.params, unlabeled, cfg.pseudo);
  std::size_t kept = 0;
  for (const auto& v : ps.videos) kept += v.instances.size();
  log("pseudo-labels: " + std::to_string(kept) + " of " + std::to_string(ps.instances_before_threshold) +
      " instances kept at threshold " + fmt("%.3f", cfg.pseudo.threshold) + " in " +
      std::to_string(ps.videos.size()) + " of " + std::to_string(ps.videos_seen) + " videos");

  const fs::path dir(out);
  const JointDataset joint = merge_datasets(d.train, ps);
  write_file_atomic(dir / "joint.json", dump_json(joint_to_json(joint, d.all_class_names(), data)));

  Json summary = {{"pool", pool},
                  {"threshold", cfg.pseudo.threshold},
                  {"videos_seen", ps.videos_seen},
                  {"videos_kept", ps.videos.size()},
                  {"instances_before_threshold", ps.instances_before_threshold},
                  {"instances_kept", kept},
                  {"actionness_histogram", ps.actionness_histogram}};
  write_file_atomic(dir / "summary.json", dump_json(summary));

  // Actionness against localization quality, from the pool's hidden annotations.
  std::string csv = "video_id,start,end,actionness,best_tiou\n";
  const auto pairs = pseudo_label_quality(ps, unlabeled);
  std::size_t k = 0;
  for (const auto& v : ps.videos)
    for (const auto& p : v.instances) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f\n", v.id().c_str(), p.start, p.end,
                    pairs[k].first, pairs[k].second);
      csv += buf;
      ++k;
    }
  write_file_atomic(dir / "quality.csv", csv);
  manifest(dir, "pseudo-label", cfg, {model_path, data});
  return 0;
}

int train_stage2_cmd(const std::string& model_path, const std::string& joint_dir,
                     const std::string& config_path, const std::string& out) {
  const auto cfg = load_config(config_path);
  const ModelFile m = load_model(model_path);
  const fs::path jpath = fs::path(joint_dir) / "joint.json";
  const Json jj = read_json(jpath);
  // Class names come from the dataset the joint file points at.
  std::string data;
  if (jj.is_object() && jj.contains("data_dir") && jj["data_dir"].is_string())
    data = jj["data_dir"].get<std::string>();
  if (data.empty()) throw DataError(DataError::Kind::kSchema, jpath.string() + ": $.data_dir missing");
  const DatasetDir d = read_dataset(data);
  JointFile jf = joint_from_json(jj, d.all_class_names());
  load_features(jf.data_dir, jf.joint.videos);
  if (jf.joint.videos.empty()) throw DataError(DataError::Kind::kSchema, jpath.string() + ": no videos");

  const auto r = train_stage2(m.params, jf.joint, cfg.stage2);
  log("stage 2: " + std::to_string(r.steps) + " steps on " + std::to_string(jf.joint.videos.size()) +
      " videos (" + std::to_string(jf.joint.count(Provenance::kLabeled)) + " labeled), final loss " +
      fmt("%.4f", r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back()));
  write_file_atomic(out, dump_json(model_to_json({r.teacher, m.data_dir, "stage2"})));
  manifest(out, "train-stage2", cfg, {model_path, jpath.string(), config_path});
  return 0;
}

int evaluate_cmd(const std::string& model_path, const std::string& predictions_path,
                 const std::string& data, const std::string& split, const std::string& protocol,
                 const std::string& tiou, const std::string& config_path, const std::string& out,
                 const std::string& predictions_out) {
  auto cfg = load_config(config_path);
  try {
    if (!protocol.empty()) cfg.protocol = parse_protocol(protocol);
    if (!tiou.empty()) cfg.tiou_grid = parse_tiou_grid(tiou);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  if (model_path.empty() == predictions_path.empty())
    throw ConfigError("give exactly one of --model or --predictions");
  const DatasetDir d = read_dataset(data);
  const auto& videos = d.split(split);

  std::vector<Prediction> preds;
  if (!model_path.empty()) {
    preds = predict(load_model(model_path).params, videos, d.vocab, cfg.protocol, cfg.inference,
                    cfg.threads);
  } else {
    preds = predictions_from_json(read_json(predictions_path), d.vocab);
  }
  const EvalReport rep = evaluate(preds, ground_truth(videos, d.vocab), d.vocab, cfg.protocol,
                                  cfg.tiou_grid);
  write_file_atomic(out, dump_json(report_to_json(rep)));
  if (!predictions_out.empty())
    write_file_atomic(predictions_out, dump_json(predictions_to_json(preds, d.vocab)));
  manifest(out, "evaluate", cfg, {model_path.empty() ? predictions_path : model_path, data});

  if (!g.quiet) {
    std::printf("protocol %s, %zu predictions\n", protocol_name(rep.protocol), preds.size());
    std::printf("%8s %8s %8s %8s\n", "tIoU", "mAP_A", "mAP_B", "mAP_N");
    auto cell = [](const std::optional<double>& v) { return v ? fmt("%8.4f", *v) : "       -"; };
    for (std::size_t i = 0; i < rep.tiou_grid.size(); ++i)
      std::printf("%8.2f %s %s %s\n", rep.tiou_grid[i], cell(rep.map_all[i]).c_str(),
                  cell(rep.map_base[i]).c_str(), cell(rep.map_novel[i]).c_str());
    std::printf("%8s %s %s %s\n", "avg", cell(rep.avg_all).c_str(), cell(rep.avg_base).c_str(),
                cell(rep.avg_novel).c_str());
  }
  return 0;
}

int split_vocab_cmd(const std::string& benchmark, const std::string& reference,
                    const std::string& stopwords_path, const std::string& out) {
  const auto bench = read_lines(benchmark);
  const auto ref = read_lines(reference);
  if (bench.empty()) throw DataError(DataError::Kind::kSchema, benchmark + ": no classes");
  std::set<std::string> stop = default_stopwords();
  if (!stopwords_path.empty()) {
    const auto lines = read_lines(stopwords_path);
    stop = std::set<std::string>(lines.begin(), lines.end());
  }
  CategorySplit s;
  try {
    s = split_categories(bench, ref, stop);
  } catch (const InvalidInput& e) {
    throw DataError(DataError::Kind::kSchema, benchmark + ": " + e.what());
  }
  write_file_atomic(out, dump_json({{"base", s.base}, {"novel", s.novel}}));
  write_manifest(out, {"split-vocab", 0, "", {benchmark, reference}, {out}});
  log(std::to_string(s.base.size()) + " base, " + std::to_string(s.novel.size()) + " novel");
  return 0;
}

int sweep_cmd(const std::string& axis_name, const std::string& values, const std::string& seeds_text,
              const std::string& config_path, const std::string& out) {
  const auto cfg = load_config(config_path);
  SweepAxis axis;
  std::vector<std::uint64_t> seeds;
  try {
    axis = parse_sweep_axis(axis_name);
    if (seeds_text.empty()) {
      seeds.push_back(cfg.seed);
    } else {
      for (const auto& s : split_list(seeds_text)) seeds.push_back(std::stoull(s));
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto list = split_list(values);
  if (list.empty()) throw ConfigError("--values is empty");
  std::vector<SweepRow> rows;
  try {
    rows = run_sweep(cfg, axis, list, seeds);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  write_file_atomic(out, sweep_csv(axis, rows));
  manifest(out, "sweep", cfg, {config_path});
  log("wrote " + std::to_string(rows.size()) + " rows to " + out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-vocabulary temporal action localization with self-training"};
  app.require_subcommand(1);
  app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_option("--threads", g.threads, "Worker threads for inference stages")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", g.quiet, "Suppress progress output");
  app.set_version_flag("--version", OVTAL_VERSION);

  std::string config, out, data, model, pool = "id", joint, protocol, tiou, benchmark, reference,
                                              stopwords, axis, values, seeds, predictions,
                                              predictions_out, split = "val";
  std::optional<double> threshold;
  std::function<int()> run;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic benchmark directory");
  gen->add_option("--config", config, "Experiment config JSON")->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Output directory")->required();
  gen->callback([&] { run = [&] { return gen_data(config, out); }; });

  auto* s1 = app.add_subcommand("train-stage1", "Supervised training on the labeled split");
  s1->add_option("--data", data, "Dataset directory")->required();
  s1->add_option("--config", config, "Experiment config JSON")->check(CLI::ExistingFile);
  s1->add_option("--out", out, "Output model JSON")->required();
  s1->callback([&] { run = [&] { return train_stage1_cmd(data, config, out); }; });

  auto* pl = app.add_subcommand("pseudo-label", "Pseudo-label an unlabeled pool and build the joint set");
  pl->add_option("--model", model, "Stage-1 model JSON")->required();
  pl->add_option("--pool", pool, "Unlabeled pool: id or od");
  pl->add_option("--threshold", threshold, "Actionness threshold");
  pl->add_option("--data", data, "Dataset directory (defaults to the model's)");
  pl->add_option("--config", config, "Experiment config JSON")->check(CLI::ExistingFile);
  pl->add_option("--out", out, "Output directory")->required();
  pl->callback([&] { run = [&] { return pseudo_label_cmd(model, data, pool, threshold, config, out); }; });

  auto* s2 = app.add_subcommand("train-stage2", "Mean-Teacher training on a joint set");
  s2->add_option("--model", model, "Stage-1 model JSON")->required();
  s2->add_option("--joint", joint, "Directory written by pseudo-label")->required();
  s2->add_option("--config", config, "Experiment config JSON")->check(CLI::ExistingFile);
  s2->add_option("--out", out, "Output teacher model JSON")->required();
  s2->callback([&] { run = [&] { return train_stage2_cmd(model, joint, config, out); }; });

  auto* ev = app.add_subcommand("evaluate", "Score a model or a predictions file");
  ev->add_option("--model", model, "Model JSON");
  ev->add_option("--predictions", predictions, "Predictions JSON instead of a model");
  ev->add_option("--data", data, "Dataset directory")->required();
  ev->add_option("--split", split, "Split to evaluate (default val)");
  ev->add_option("--protocol", protocol, "generalized, constrained-base or constrained-novel");
  ev->add_option("--tiou", tiou, "tIoU grid, e.g. 0.3:0.1:0.7");
  ev->add_option("--config", config, "Experiment config JSON")->check(CLI::ExistingFile);
  ev->add_option("--out", out, "Output report JSON")->required();
  ev->add_option("--predictions-out", predictions_out, "Also write the predictions");
  ev->callback([&] {
    run = [&] {
      return evaluate_cmd(model, predictions, data, split, protocol, tiou, config, out, predictions_out);
    };
  });

  auto* sv = app.add_subcommand("split-vocab", "Split benchmark classes into base and novel");
  sv->add_option("--benchmark", benchmark, "Benchmark classes, one per line")->required();
  sv->add_option("--reference", reference, "Reference classes, one per line")->required();
  sv->add_option("--stopwords", stopwords, "Stopwords, one per line (default: built-in list)");
  sv->add_option("--out", out, "Output JSON")->required();
  sv->callback([&] { run = [&] { return split_vocab_cmd(benchmark, reference, stopwords, out); }; });

  auto* sw = app.add_subcommand("sweep", "Run an experiment sweep on synthetic data");
  sw->add_option("--axis", axis, "od-size, threshold or fusion")->required();
  sw->add_option("--values", values, "Comma-separated values")->required();
  sw->add_option("--seeds", seeds, "Comma-separated seeds (default: --seed)");
  sw->add_option("--config", config, "Experiment config JSON")->check(CLI::ExistingFile);
  sw->add_option("--out", out, "Output CSV")->required();
  sw->callback([&] { run = [&] { return sweep_cmd(axis, values, seeds, config, out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    return run();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 4;
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
