#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "w2s/checkpoint.hpp"
#include "w2s/errors.hpp"
#include "w2s/harness.hpp"
#include "w2s/ops.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

template <typename Real, typename A>
w2s::Tensor<Real> to_tensor(const A& a, bool requires_grad = false) {
  w2s::Shape shape(a.shape(), a.shape() + a.ndim());
  return w2s::Tensor<Real>(shape, std::vector<Real>(a.data(), a.data() + a.size()), requires_grad);
}

template <typename Real>
py::array_t<Real> to_numpy(std::span<const Real> data, const w2s::Shape& shape) {
  py::array_t<Real> out(std::vector<py::ssize_t>(shape.begin(), shape.end()));
  std::copy(data.begin(), data.end(), out.mutable_data());
  return out;
}

template <typename Real>
py::array_t<Real> to_numpy(const w2s::Tensor<Real>& t) {
  return to_numpy<Real>(t.data(), t.shape());
}

std::vector<int> to_ints(const IntArray& a) { return {a.data(), a.data() + a.size()}; }

// Python dicts cross the boundary as JSON text.
json from_py(const py::object& obj) {
  return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

w2s::LossConfig loss_config(const py::object& obj) {
  return obj.is_none() ? w2s::LossConfig{} : from_py(obj).get<w2s::LossConfig>();
}

w2s::Dataset make_dataset(const FloatArray& images, const IntArray& labels, std::size_t num_classes,
                          const std::optional<IntArray>& coarse) {
  w2s::Dataset ds;
  ds.name = "numpy";
  ds.images = to_tensor<float>(images);
  ds.labels = to_ints(labels);
  ds.num_classes = num_classes;
  if (coarse) ds.coarse_labels = to_ints(*coarse);
  ds.validate();
  return ds;
}

// Loss value and gradient with respect to the student logits.
py::tuple objective(const Array& student, const std::optional<Array>& teacher,
                    const std::optional<IntArray>& labels, const py::object& cfg_obj,
                    const std::optional<Array>& beta) {
  const auto cfg = loss_config(cfg_obj);
  auto z = to_tensor<double>(student, true);
  std::optional<w2s::TeacherSignal<double>> ts;
  if (teacher) ts = w2s::TeacherSignal<double>::from_logits(to_tensor<double>(*teacher));
  std::vector<int> gt;
  if (labels) gt = to_ints(*labels);
  w2s::Tape<double> tape;
  w2s::Tensor<double> loss;
  if (beta) {
    if (!ts) throw w2s::ConfigError("beta override needs teacher logits");
    const std::vector<double> b(beta->data(), beta->data() + beta->size());
    // Same composition as total_objective, with the distillation term pinned.
    loss = w2s::adaptconf_loss(z, *ts, cfg, &tape, std::optional<std::span<const double>>(b));
    if (cfg.distill_weight != 1.0) loss = w2s::ops::scale(loss, cfg.distill_weight, &tape);
    if (labels && cfg.gt_weight > 0.0) {
      loss = w2s::ops::add(w2s::total_objective<double>(z, nullptr, std::span<const int>(gt), cfg, &tape), loss, &tape);
    }
  } else {
    loss = w2s::total_objective(z, ts ? &*ts : nullptr,
                                labels ? std::optional<std::span<const int>>(gt) : std::nullopt, cfg, &tape);
  }
  if (!tape.empty()) tape.backward(loss);
  auto grad = z.has_grad() ? to_numpy<double>(z.grad(), z.shape())
                           : to_numpy<double>(std::vector<double>(z.size(), 0.0), z.shape());
  return py::make_tuple(loss.item(), grad);
}

class PyModel {
 public:
  PyModel(const py::object& cfg, std::uint64_t seed)
      : model_(w2s::Model<float>::build(from_py(cfg).get<w2s::ModelConfig>(), seed)) {}
  explicit PyModel(w2s::Model<float> m) : model_(std::move(m)) {}

  py::array_t<float> forward(const FloatArray& x) const { return to_numpy(model_.forward(to_tensor<float>(x))); }
  py::array_t<float> features(const FloatArray& x) const { return to_numpy(model_.features(to_tensor<float>(x))); }
  std::size_t num_params() const { return model_.num_params(); }
  py::object config() const { return to_py(model_.config()); }
  py::dict params() const {
    py::dict out;
    for (const auto& p : model_.params()) out[py::str(p.name)] = to_numpy<float>(p.value.data(), p.value.shape());
    return out;
  }
  void save(const std::string& path) const { w2s::save_checkpoint(model_, nullptr, nullptr, 0, "", path); }

 private:
  w2s::Model<float> model_;
};

}  // namespace

PYBIND11_MODULE(_w2s, m) {
  m.doc() = "Weak-to-strong distillation engine";

  // Translators run newest first, so the base class goes in before its subclasses.
  py::register_exception<w2s::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<w2s::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<w2s::ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<w2s::ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<w2s::TrainingAborted>(m, "TrainingAborted", PyExc_RuntimeError);

  m.def("softmax", [](const Array& logits, double t) { return to_numpy(w2s::softmax_T(to_tensor<double>(logits), t)); },
        py::arg("logits"), py::arg("temperature") = 1.0);

  m.def("objective", &objective, py::arg("student_logits"), py::arg("teacher_logits") = py::none(),
        py::arg("labels") = py::none(), py::arg("config") = py::none(), py::arg("beta") = py::none(),
        "total_objective value and d/d(student logits). A beta array pins AdaptConf's weights.");

  m.def("kd_loss", [](const Array& s, const Array& t, double temp) {
    return w2s::kd_loss(to_tensor<double>(s), to_tensor<double>(t), temp).item();
  }, py::arg("student_logits"), py::arg("teacher_logits"), py::arg("temperature") = 1.0);

  m.def("beta_weights", [](const Array& s, const Array& t, double temp) {
    const auto ts = w2s::TeacherSignal<double>::from_logits(to_tensor<double>(t));
    const auto p = w2s::softmax_T(to_tensor<double>(s), temp);
    const auto b = w2s::beta_weights(p, ts.hard);
    return to_numpy<double>(b, {b.size()});
  }, py::arg("student_logits"), py::arg("teacher_logits"), py::arg("temperature") = 1.0);

  py::class_<PyModel>(m, "Model")
      .def(py::init<const py::object&, std::uint64_t>(), py::arg("config"), py::arg("seed") = 0)
      .def("forward", &PyModel::forward)
      .def("features", &PyModel::features)
      .def_property_readonly("num_params", &PyModel::num_params)
      .def_property_readonly("config", &PyModel::config)
      .def("params", &PyModel::params)
      .def("save", &PyModel::save);

  m.def("load_model", [](const std::string& path) {
    return PyModel(w2s::restore_model(w2s::load_checkpoint(path)));
  });

  m.def("synth_blobs", [](const py::object& spec) {
    const auto ds = w2s::synth_blobs(from_py(spec).get<w2s::SynthSpec>());
    return py::make_tuple(to_numpy(ds.images), to_numpy<int>(ds.labels, {ds.size()}));
  });

  m.def("inject_noise", [](const IntArray& labels, std::size_t num_classes, const py::object& spec,
                           const std::optional<IntArray>& coarse) {
    // Images are irrelevant to relabeling; a 1-pixel placeholder keeps the dataset valid.
    FloatArray pixels(std::vector<py::ssize_t>{labels.size(), 1, 1, 1});
    std::fill(pixels.mutable_data(), pixels.mutable_data() + pixels.size(), 0.0f);
    const auto ds = make_dataset(pixels, labels, num_classes, coarse);
    w2s::NoiseReport report;
    const auto noisy = w2s::inject_noise(ds, from_py(spec).get<w2s::NoiseSpec>(), &report);
    return py::make_tuple(to_numpy<int>(noisy.labels, {noisy.size()}), report.eligible, report.selected);
  }, py::arg("labels"), py::arg("num_classes"), py::arg("spec"), py::arg("coarse") = py::none());

  m.def("sample_episode", [](const IntArray& labels, std::size_t num_classes, const py::object& spec,
                             std::size_t index) {
    FloatArray pixels(std::vector<py::ssize_t>{labels.size(), 1, 1, 1});
    std::fill(pixels.mutable_data(), pixels.mutable_data() + pixels.size(), 0.0f);
    const auto ds = make_dataset(pixels, labels, num_classes, std::nullopt);
    const auto ep = w2s::sample_episode(ds, from_py(spec).get<w2s::EpisodeSpec>(), index);
    py::dict out;
    out["classes"] = ep.classes;
    out["support"] = ep.support;
    out["support_labels"] = ep.support_labels;
    out["query"] = ep.query;
    out["query_labels"] = ep.query_labels;
    return out;
  });

  m.def("episode_accuracy", [](const FloatArray& support, const IntArray& sl, const FloatArray& query,
                               const IntArray& ql, std::size_t n_way) {
    const auto s = to_ints(sl), q = to_ints(ql);
    return w2s::episode_accuracy(to_tensor<float>(support), s, to_tensor<float>(query), q, n_way);
  });

  m.def("confidence_interval95", [](const std::vector<double>& acc) { return w2s::confidence_interval95(acc); });

  m.def("run_experiment", [](const py::object& cfg) {
    const auto config = from_py(cfg).get<w2s::ExperimentConfig>();
    w2s::ExperimentResult result;
    {
      py::gil_scoped_release release;
      result = w2s::run_experiment(config);
    }
    return to_py(w2s::summary_json(result));
  }, "Runs an experiment config (dict) and returns its summary.");
}
