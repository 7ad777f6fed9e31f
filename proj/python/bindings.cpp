#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "ovtal/error.hpp"
#include "ovtal/experiment.hpp"
#include "ovtal/io.hpp"
#include "ovtal/localizer.hpp"
#include "ovtal/selftrain.hpp"
#include "ovtal/synth.hpp"
#include "ovtal/vocabsplit.hpp"

namespace py = pybind11;
using namespace ovtal;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const Matrix& m) {
  Array a({m.rows, m.cols});
  std::copy(m.values.begin(), m.values.end(), a.mutable_data());
  return a;
}

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw InvalidInput("expected a 2-D array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.values.begin());
  return m;
}

py::dict instance_dict(const ActionInstance& a) {
  py::dict d;
  d["start"] = a.start;
  d["end"] = a.end;
  d["actionness"] = a.actionness;
  d["class_id"] = a.class_id ? py::cast(*a.class_id) : py::none();
  d["category_score"] = a.category_score ? py::cast(*a.category_score) : py::none();
  d["score"] = a.score ? py::cast(*a.score) : py::none();
  return d;
}

py::list instance_list(const std::vector<ActionInstance>& v) {
  py::list out;
  for (const auto& a : v) out.append(instance_dict(a));
  return out;
}

py::object json_to_py(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

ExperimentConfig config_of(const std::string& json_text) {
  return json_text.empty() ? ExperimentConfig::synthetic_defaults()
                           : config_from_json(Json::parse(json_text));
}

Video make_video(const std::string& id, const Array& features, const std::vector<py::dict>& inst) {
  Video v;
  v.features.video_id = id;
  v.features.features = to_matrix(features);
  for (const auto& d : inst) {
    ActionInstance a;
    a.start = d["start"].cast<double>();
    a.end = d["end"].cast<double>();
    if (d.contains("class_id") && !d["class_id"].is_none()) a.class_id = d["class_id"].cast<std::size_t>();
    if (d.contains("actionness")) a.actionness = d["actionness"].cast<double>();
    v.instances.push_back(a);
  }
  return v;
}

}  // namespace

PYBIND11_MODULE(_ovtal, m) {
  m.doc() = "Open-vocabulary temporal action localization core";
  m.attr("__version__") = OVTAL_VERSION;

  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_IOError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<Video>(m, "Video")
      .def(py::init(&make_video), py::arg("video_id"), py::arg("features"),
           py::arg("instances") = std::vector<py::dict>{})
      .def_property_readonly("video_id", &Video::id)
      .def_property_readonly("features", [](const Video& v) { return to_array(v.features.features); })
      .def_property_readonly("instances", [](const Video& v) { return instance_list(v.instances); })
      .def_property_readonly("provenance", [](const Video& v) { return provenance_name(v.provenance); })
      .def("__repr__", [](const Video& v) {
        return "<Video " + v.id() + " S=" + std::to_string(v.features.num_snippets()) + " instances=" +
               std::to_string(v.instances.size()) + ">";
      });

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_readonly("names", &Vocabulary::names)
      .def_property_readonly("prototypes", [](const Vocabulary& v) { return to_array(v.prototypes); })
      .def_property_readonly("splits", [](const Vocabulary& v) {
        std::vector<std::string> s;
        for (auto x : v.splits) s.push_back(x == Split::kBase ? "base" : "novel");
        return s;
      })
      .def("__len__", &Vocabulary::size);

  py::class_<Benchmark>(m, "Benchmark")
      .def(py::init([](const std::string& cfg) { return gen_benchmark(config_of(cfg).synth); }),
           py::arg("config_json") = "")
      .def_readonly("vocab", &Benchmark::vocab)
      .def_readonly("train", &Benchmark::labeled_train)
      .def_readonly("unlabeled_id", &Benchmark::unlabeled_id)
      .def_readonly("unlabeled_od", &Benchmark::unlabeled_od)
      .def_readonly("val", &Benchmark::val);

  py::class_<LocalizerParams>(m, "Model")
      .def_property_readonly("parameter_count", &LocalizerParams::parameter_count)
      .def("to_json", [](const LocalizerParams& p) { return dump_json(model_to_json({p, "", "python"})); })
      .def_static("from_json",
                  [](const std::string& text) { return model_from_json(Json::parse(text)).params; })
      .def("identical", &LocalizerParams::identical);

  py::class_<PseudoDataset>(m, "PseudoDataset")
      .def_readonly("videos", &PseudoDataset::videos)
      .def_readonly("videos_seen", &PseudoDataset::videos_seen)
      .def_readonly("instances_before_threshold", &PseudoDataset::instances_before_threshold)
      .def_readonly("actionness_histogram", &PseudoDataset::actionness_histogram);

  m.def("default_config", [] { return json_to_py(config_to_json(ExperimentConfig::synthetic_defaults())); });
  m.def("normalize_config", [](const std::string& cfg) { return json_to_py(config_to_json(config_of(cfg))); });

  m.def(
      "train_stage1",
      [](const std::vector<Video>& labeled, const std::string& cfg) {
        const auto c = config_of(cfg);
        return train_stage1(labeled, c.model, c.stage1).params;
      },
      py::arg("labeled"), py::arg("config_json") = "", py::call_guard<py::gil_scoped_release>());

  m.def(
      "pseudo_label",
      [](const LocalizerParams& model, const std::vector<Video>& pool, const std::string& cfg) {
        return generate_pseudo_labels(model, pool, config_of(cfg).pseudo);
      },
      py::arg("model"), py::arg("pool"), py::arg("config_json") = "",
      py::call_guard<py::gil_scoped_release>());

  m.def(
      "train_stage2",
      [](const LocalizerParams& stage1, const std::vector<Video>& labeled, const PseudoDataset& pseudo,
         const std::string& cfg) {
        return train_stage2(stage1, merge_datasets(labeled, pseudo), config_of(cfg).stage2).teacher;
      },
      py::arg("stage1"), py::arg("labeled"), py::arg("pseudo"), py::arg("config_json") = "",
      py::call_guard<py::gil_scoped_release>());

  m.def(
      "self_train",
      [](const LocalizerParams& stage1, const std::vector<Video>& labeled,
         const std::vector<Video>& pool, const std::string& cfg) {
        const auto c = config_of(cfg);
        auto r = self_train(stage1, labeled, pool, c.pseudo, c.stage2);
        return py::make_tuple(std::move(r.model), std::move(r.pseudo));
      },
      py::arg("stage1"), py::arg("labeled"), py::arg("pool"), py::arg("config_json") = "");

  m.def(
      "proposals",
      [](const LocalizerParams& model, const Video& video) {
        NoGradGuard g;
        return instance_list(decode_instances(localizer_forward(model, video.features), model.geometry,
                                              video.features.num_snippets()));
      },
      py::arg("model"), py::arg("video"));

  m.def(
      "detect",
      [](const LocalizerParams& model, const Video& video, const Vocabulary& vocab,
         const std::string& cfg) {
        NoGradGuard g;
        return instance_list(detect_actions(model, video.features, vocab, config_of(cfg).inference));
      },
      py::arg("model"), py::arg("video"), py::arg("vocab"), py::arg("config_json") = "");

  m.def(
      "evaluate_model",
      [](const LocalizerParams& model, const std::vector<Video>& videos, const Vocabulary& vocab,
         const std::string& cfg) {
        const auto c = config_of(cfg);
        EvalReport r;
        {
          py::gil_scoped_release release;
          r = evaluate_model(model, videos, vocab, c.protocol, c.tiou_grid, c.inference, c.threads);
        }
        return json_to_py(report_to_json(r));
      },
      py::arg("model"), py::arg("videos"), py::arg("vocab"), py::arg("config_json") = "");

  m.def(
      "pseudo_label_quality",
      [](const PseudoDataset& p, const std::vector<Video>& hidden) { return pseudo_label_quality(p, hidden); },
      py::arg("pseudo"), py::arg("hidden"));

  m.def(
      "run_sweep",
      [](const std::string& axis, const std::vector<std::string>& values,
         const std::vector<std::uint64_t>& seeds, const std::string& cfg) {
        const auto a = parse_sweep_axis(axis);
        std::vector<SweepRow> rows;
        {
          py::gil_scoped_release release;
          rows = run_sweep(config_of(cfg), a, values, seeds);
        }
        return sweep_csv(a, rows);
      },
      py::arg("axis"), py::arg("values"), py::arg("seeds"), py::arg("config_json") = "");

  m.def(
      "average_precision",
      [](const std::vector<std::tuple<std::string, double, double, double>>& preds,
         const std::vector<std::tuple<std::string, double, double>>& gts, double threshold) {
        std::vector<Prediction> p;
        for (const auto& [v, s, e, sc] : preds) p.push_back({v, s, e, 0, sc});
        std::vector<GroundTruth> g;
        for (const auto& [v, s, e] : gts) g.push_back({v, s, e, 0});
        return average_precision(p, g, threshold);
      },
      py::arg("predictions"), py::arg("ground_truth"), py::arg("tiou_threshold"),
      "Single-class AP; predictions are (video_id, start, end, score), ground truth (video_id, start, end).");

  m.def(
      "tiou", [](double s0, double e0, double s1, double e1) { return tiou({s0, e0}, {s1, e1}); },
      py::arg("start_a"), py::arg("end_a"), py::arg("start_b"), py::arg("end_b"));
  m.def(
      "diou_loss", [](double s0, double e0, double s1, double e1) { return diou_loss_1d({s0, e0}, {s1, e1}); },
      py::arg("pred_start"), py::arg("pred_end"), py::arg("gt_start"), py::arg("gt_end"));

  m.def(
      "soft_nms",
      [](const std::vector<std::tuple<double, double, double>>& items, double iou_threshold,
         double min_score, std::size_t top_k, const std::string& decay, double sigma) {
        std::vector<ActionInstance> in;
        for (const auto& [s, e, sc] : items) {
          ActionInstance a;
          a.start = s;
          a.end = e;
          a.actionness = sc;
          in.push_back(a);
        }
        SoftNmsConfig c{iou_threshold, min_score, top_k,
                        decay == "gaussian" ? NmsDecay::kGaussian : NmsDecay::kLinear, sigma};
        if (decay != "linear" && decay != "gaussian") throw InvalidInput("decay must be linear or gaussian");
        std::vector<std::tuple<double, double, double>> out;
        for (const auto& a : soft_nms(in, c, ScoreField::kActionness)) out.emplace_back(a.start, a.end, a.actionness);
        return out;
      },
      py::arg("items"), py::arg("iou_threshold") = 0.1, py::arg("min_score") = 0.001,
      py::arg("top_k") = 200, py::arg("decay") = "linear", py::arg("sigma") = 0.5);

  m.def(
      "ema_update",
      [](const Array& teacher, const Array& student, double lambda) {
        if (teacher.size() != student.size()) throw InvalidInput("ema_update: shape mismatch");
        Array out(teacher.request().shape);
        std::copy(teacher.data(), teacher.data() + teacher.size(), out.mutable_data());
        ema_update(std::span<double>(out.mutable_data(), out.size()),
                   std::span<const double>(student.data(), student.size()), lambda);
        return out;
      },
      py::arg("teacher"), py::arg("student"), py::arg("lam"));

  m.def("spearman", &spearman, py::arg("x"), py::arg("y"));
  m.def("porter_stem", &porter_stem, py::arg("word"));
  m.def("normalize_word", &normalize_word, py::arg("word"));
  m.def(
      "split_categories",
      [](const std::vector<std::string>& bench, const std::vector<std::string>& ref) {
        const auto s = split_categories(bench, ref);
        return py::make_tuple(s.base, s.novel);
      },
      py::arg("benchmark"), py::arg("reference"));
  m.def(
      "interpolate_features",
      [](const Array& f, std::size_t n) { return to_array(interpolate_features(to_matrix(f), n)); },
      py::arg("features"), py::arg("target_len"));
  m.def(
      "encode_talf",
      [](const Array& f) {
        const auto b = encode_talf(to_matrix(f));
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      },
      py::arg("features"));
  m.def(
      "decode_talf",
      [](const py::bytes& b) {
        const std::string s = b;
        return to_array(decode_talf({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}));
      },
      py::arg("data"));
}
