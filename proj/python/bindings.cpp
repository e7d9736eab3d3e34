#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "remtkd/common.hpp"
#include "remtkd/config.hpp"
#include "remtkd/cuenet.hpp"
#include "remtkd/distill.hpp"
#include "remtkd/evalkit.hpp"
#include "remtkd/io.hpp"
#include "remtkd/losses.hpp"
#include "remtkd/pipeline.hpp"
#include "remtkd/redts.hpp"
#include "remtkd/synth.hpp"

namespace py = pybind11;
using namespace remtkd;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using F32 = py::array_t<float, py::array::c_style | py::array::forcecast>;
using U8 = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

template <class T>
std::span<const T> view(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), static_cast<std::size_t>(a.size())};
}

template <class T>
py::array_t<T> to_numpy(const std::vector<T>& v, std::vector<py::ssize_t> shape) {
  py::array_t<T> out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<float> image_array(const ImageTensor& img) { return to_numpy(img.pixels, {img.height, img.width, 3}); }
py::array_t<std::uint8_t> mask_array(const MaskMap& m) { return to_numpy(m.values, {m.height, m.width}); }

ImageTensor image_from(const F32& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("image must be an H x W x 3 array");
  ImageTensor img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

py::dict loss_dict(const LossGrad<double>& l) {
  py::dict d;
  d["value"] = l.value;
  d["grad"] = to_numpy(l.grad, {static_cast<py::ssize_t>(l.grad.size())});
  return d;
}

py::dict outputs_dict(const ModelOutputs<float>& o) {
  const auto h = static_cast<py::ssize_t>(o.seg.shape[1]), w = static_cast<py::ssize_t>(o.seg.shape[2]);
  py::dict d;
  d["seg"] = to_numpy(o.seg.data, {h, w});
  d["edge"] = to_numpy(o.edge.data, {h, w});
  d["cls"] = o.cls;
  return d;
}

py::dict metrics_dict(const MetricsReport& r) {
  auto row = [](const TypeMetrics& m) {
    py::dict d;
    d["count"] = m.count;
    d["pixel_f1"] = m.pixel_f1;
    d["pixel_iou"] = m.pixel_iou;
    d["pixel_auc"] = m.pixel_auc;
    d["image_acc"] = m.image_acc;
    d["image_f1"] = m.image_f1;
    d["image_auc"] = m.image_auc;
    return d;
  };
  py::dict per_type;
  for (const auto& [t, m] : r.per_type) per_type[py::str(std::string(to_string(t)))] = row(m);
  py::dict d;
  d["per_type"] = per_type;
  d["average"] = row(r.average);
  d["average_f1"] = r.average_f1();
  return d;
}

RunConfig make_config(const py::dict& overrides) {
  RunConfig cfg;
  nlohmann::json j = nlohmann::json::parse(py::str(py::module_::import("json").attr("dumps")(overrides)).cast<std::string>());
  cfg.merge(j, "python");
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_remtkd, m) {
  m.doc() = "Reinforced multi-teacher distillation for image forgery localization";

  // Translators registered later are tried first, so the base class goes first.
  const auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<ShapeError>(m, "ShapeError", base);
  py::register_exception<StorageError>(m, "StorageError", base);
  py::register_exception<ChecksumError>(m, "ChecksumError", base);

  // configuration
  py::class_<RunConfig>(m, "Config")
      .def(py::init(&make_config), py::arg("overrides") = py::dict())
      .def("set", &RunConfig::set)
      .def("to_json", &RunConfig::dump)
      .def_static("keys", &RunConfig::keys);

  // synthetic data
  py::class_<SampleRecord>(m, "Sample")
      .def_readonly("id", &SampleRecord::id)
      .def_readonly("label", &SampleRecord::label)
      .def_property_readonly("type", [](const SampleRecord& s) { return std::string(to_string(s.forgery_type)); })
      .def_property_readonly("image", [](const SampleRecord& s) { return image_array(s.image); })
      .def_property_readonly("mask", [](const SampleRecord& s) { return mask_array(s.mask); })
      .def_property_readonly("edge", [](const SampleRecord& s) { return mask_array(s.edge.map); });

  m.def("gen_base_image", [](std::uint64_t seed, int size) { return image_array(gen_base_image(seed, size)); },
        py::arg("seed"), py::arg("size") = 64);
  m.def(
      "generate_split",
      [](std::uint64_t seed, int image_size, const std::map<std::string, int>& counts, const std::string& split) {
        DatasetConfig dc;
        dc.seed = seed;
        dc.image_size = image_size;
        dc.split = split;
        for (const auto& [k, v] : counts) dc.counts[forgery_type_from_string(k)] = v;
        return generate_split(dc);
      },
      py::arg("seed"), py::arg("image_size"), py::arg("counts"), py::arg("split") = "train");
  m.def(
      "mask_to_edge",
      [](const U8& mask, int width) {
        if (mask.ndim() != 2) throw ShapeError("mask must be 2-D");
        MaskMap mm(static_cast<int>(mask.shape(0)), static_cast<int>(mask.shape(1)));
        std::copy(mask.data(), mask.data() + mask.size(), mm.values.begin());
        return mask_array(mask_to_edge(mm, width).map);
      },
      py::arg("mask"), py::arg("width") = 2);

  py::class_<Suite>(m, "Suite").def_readonly("train", &Suite::train).def_readonly("test", &Suite::test);
  m.def("make_suite", &make_suite, py::arg("config"));

  // losses
  m.def("dice_loss", [](const F64& p, const F64& y) { return loss_dict(dice_loss<double>(view(p), view(y))); });
  m.def("wbce_loss", [](const F64& p, const F64& y) { return loss_dict(wbce_loss<double>(view(p), view(y))); });
  m.def("bce_loss", [](const F64& p, const F64& y) { return loss_dict(bce_loss<double>(view(p), view(y))); });
  m.def(
      "loss_seg", [](const F64& p, const F64& y, double l0) { return loss_dict(loss_seg<double>(view(p), view(y), l0)); },
      py::arg("pred"), py::arg("target"), py::arg("lambda0_s") = 0.1);
  m.def(
      "loss_hard",
      [](const F64& seg, const F64& seg_t, const F64& cls, const F64& cls_t, const F64& edge, const F64& edge_t,
         double alpha, double beta, double l0) {
        LossWeights w;
        w.alpha = alpha;
        w.beta = beta;
        w.lambda0_s = l0;
        w.validate();
        const auto h = loss_hard<double>(view(seg), view(seg_t), view(cls), view(cls_t), view(edge), view(edge_t), w);
        py::dict d;
        d["seg"] = h.seg;
        d["cls"] = h.cls;
        d["edg"] = h.edg;
        d["hard"] = h.hard;
        return d;
      },
      py::arg("seg"), py::arg("seg_target"), py::arg("cls"), py::arg("cls_target"), py::arg("edge"),
      py::arg("edge_target"), py::arg("alpha") = 1.0, py::arg("beta") = 0.2, py::arg("lambda0_s") = 0.1);
  m.def(
      "loss_soft",
      [](const F64& ss, const F64& sc, const F64& ts, const F64& tc, const std::string& variant, double l0) {
        return loss_soft<double>(view(ss), view(sc), view(ts), view(tc), soft_variant_from_string(variant), l0).value;
      },
      py::arg("student_seg"), py::arg("student_cls"), py::arg("teacher_seg"), py::arg("teacher_cls"),
      py::arg("variant") = "soft3", py::arg("lambda0_s") = 0.1);

  // metrics and perturbations
  m.def(
      "pixel_metrics",
      [](const F32& pred, const U8& mask, double thr) -> std::optional<std::pair<double, double>> {
        const auto r = pixel_metrics(view(pred), view(mask), thr);
        if (!r) return std::nullopt;
        return std::pair{r->f1, r->iou};
      },
      py::arg("pred"), py::arg("mask"), py::arg("threshold") = 0.5);
  m.def("auc", [](const F64& s, const py::array_t<int, py::array::c_style | py::array::forcecast>& y) {
    return auc(view(s), std::span<const int>(y.data(), static_cast<std::size_t>(y.size())));
  });
  m.def(
      "perturb",
      [](const F32& img, const std::string& spec, std::uint64_t seed) {
        return image_array(perturb(image_from(img), parse_perturbation(spec), seed));
      },
      py::arg("image"), py::arg("spec"), py::arg("seed") = 0);

  // models
  py::class_<ModelParams>(m, "Model")
      .def(py::init([](const RunConfig& cfg, std::uint64_t seed) {
             ModelParams mp{cfg.arch(), {}};
             mp.store = CueNet<float>(mp.arch).init_params(seed);
             return mp;
           }),
           py::arg("config"), py::arg("seed") = 0)
      .def_property_readonly("arch", [](const ModelParams& mp) { return mp.arch.to_json(); })
      .def_property_readonly("num_params", [](const ModelParams& mp) { return mp.store.num_values(); })
      .def_property_readonly("hash", [](const ModelParams& mp) { return param_hash(mp.store); })
      .def("run",
           [](const ModelParams& mp, const F32& img) {
             return outputs_dict(CueNet<float>(mp.arch).run(mp.store, to_chw<float>(image_from(img))));
           })
      .def("save", [](const ModelParams& mp, const std::filesystem::path& p) { io::save_model(p, mp); })
      .def_static("load", &io::load_model);

  py::class_<TeacherBundle>(m, "TeacherBundle")
      .def_property_readonly("types",
                             [](const TeacherBundle& b) {
                               std::vector<std::string> out;
                               for (const auto& [t, mp] : b.members) out.emplace_back(to_string(t));
                               return out;
                             })
      .def("get", [](const TeacherBundle& b, const std::string& t) { return b.get(forgery_type_from_string(t)); });

  // training
  m.def(
      "train_teachers", [](const std::vector<SampleRecord>& train, const RunConfig& cfg) {
        py::gil_scoped_release release;
        return train_teachers(train, cfg);
      },
      py::arg("train"), py::arg("config"));
  m.def(
      "distill",
      [](const TeacherBundle* teachers, const std::vector<SampleRecord>& train, const RunConfig& cfg) {
        py::gil_scoped_release release;
        auto res = train_student(teachers, {}, train, cfg.student_trainer(), cfg.arch());
        return std::pair{std::move(res.student), res.log.to_jsonl()};
      },
      py::arg("teachers"), py::arg("train"), py::arg("config"),
      "Train a student under config['strategy']; returns (model, jsonl training log).");
  m.def(
      "evaluate",
      [](const ModelParams& mp, const std::vector<SampleRecord>& samples, const std::optional<std::string>& spec,
         const RunConfig* cfg) {
        std::optional<PerturbationSpec> ps;
        if (spec) ps = parse_perturbation(*spec);
        const auto opts = cfg ? cfg->eval_options() : EvalOptions{};
        MetricsReport r;
        {
          py::gil_scoped_release release;
          r = evaluate(CueNet<float>(mp.arch), mp.store, samples, ps, opts);
        }
        return metrics_dict(r);
      },
      py::arg("model"), py::arg("samples"), py::arg("perturbation") = py::none(), py::arg("config") = nullptr);

  // teacher selection
  m.def("state_dim", [](int d) { return 2 * d + 3; });
  m.def(
      "policy_prob",
      [](const F64& state, const F64& w, double b) {
        const auto s = view(state);
        if ((s.size() - 3) % 2 != 0 || w.size() != state.size()) throw ShapeError("state and weight lengths must be 2d+3");
        StateVector sv{std::vector<double>(s.begin(), s.end()), static_cast<int>((s.size() - 3) / 2)};
        const auto wv = view(w);
        return policy_prob(sv, PolicyParams{std::vector<double>(wv.begin(), wv.end()), b});
      },
      py::arg("state"), py::arg("W"), py::arg("b") = 0.0);
  m.def(
      "compute_reward",
      [](const std::string& variant, double hard, double soft, double f1, double acc, double gamma) {
        RewardConfig rc;
        rc.variant = reward_variant_from_string(variant);
        rc.gamma = gamma;
        rc.validate();
        return compute_reward(rc, hard, soft, f1, acc);
      },
      py::arg("variant"), py::arg("hard"), py::arg("soft"), py::arg("f1_seg"), py::arg("acc_cls"),
      py::arg("gamma") = 0.2);
}
