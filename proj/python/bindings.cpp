#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "mmcast/config.hpp"
#include "mmcast/forecast.hpp"
#include "mmcast/seeds.hpp"
#include "mmcast/storage.hpp"
#include "mmcast/verification.hpp"

namespace py = pybind11;
using namespace mmcast;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Field field_from(const FloatArray& a) {
  if (a.ndim() != 3) throw std::invalid_argument("expected a (C, W, H) array");
  Field f(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
  std::memcpy(f.data().data(), a.data(), f.size() * sizeof(float));
  return f;
}

py::array_t<float> stack(const std::vector<StateTensor>& states, int c, int w, int h) {
  py::array_t<float> out({static_cast<py::ssize_t>(states.size()), static_cast<py::ssize_t>(c),
                          static_cast<py::ssize_t>(w), static_cast<py::ssize_t>(h)});
  auto* dst = out.mutable_data();
  for (const auto& s : states) {
    std::memcpy(dst, s.values.data().data(), s.values.size() * sizeof(float));
    dst += s.values.size();
  }
  return out;
}

py::dict trajectory_dict(const Trajectory& t) {
  py::dict d;
  d["states"] = stack(t.states, t.schema.total_channels(), t.grid.n_lat(), t.grid.n_lon);
  std::vector<std::int64_t> times;
  for (const auto& s : t.states) times.push_back(s.time_index);
  d["time_index"] = py::array_t<std::int64_t>(static_cast<py::ssize_t>(times.size()), times.data());
  d["channels"] = t.schema.channel_labels();
  d["latitudes"] = t.grid.latitudes;
  d["steps_per_day"] = t.steps_per_day;
  return d;
}

torch::Tensor tensor_from(const DoubleArray& a) {
  std::vector<std::int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kDouble).clone();
}

py::array_t<double> array_from(const torch::Tensor& t) {
  const auto c = t.contiguous();
  std::vector<py::ssize_t> shape(c.sizes().begin(), c.sizes().end());
  py::array_t<double> out(shape);
  std::memcpy(out.mutable_data(), c.data_ptr<double>(), c.numel() * sizeof(double));
  return out;
}

LossConfig loss_config(bool latitude_weighted, bool include_constant) {
  LossConfig cfg;
  cfg.latitude_weight_in_loss = latitude_weighted;
  cfg.include_constant = include_constant;
  return cfg;
}

const char* type_name(ValueType t) {
  switch (t) {
    case ValueType::Int: return "int";
    case ValueType::UInt: return "uint";
    case ValueType::Double: return "float";
    case ValueType::Bool: return "bool";
    case ValueType::String: return "str";
    case ValueType::OptionalInt: return "int|none";
  }
  return "?";
}

class Forecaster {
 public:
  explicit Forecaster(const std::filesystem::path& dir) : ckpt_(load_checkpoint(dir)) {}

  py::array_t<float> rollout(const FloatArray& initial, std::int64_t n_steps, std::int64_t init_time) {
    const StateTensor state{field_from(initial), init_time};
    check_state(state, ckpt_.info.schema, ckpt_.info.grid);
    Rollout r;
    {
      py::gil_scoped_release release;
      r = mmcast::rollout(ckpt_.model, ckpt_.info.norm, state, n_steps);
    }
    return stack(r.states, state.values.channels(), state.values.n_lat(), state.values.n_lon());
  }

  const std::string& content_hash() const { return ckpt_.info.content_hash; }
  std::vector<std::string> channels() const { return ckpt_.info.schema.channel_labels(); }
  std::int64_t forward_calls() const { return ckpt_.model->forward_calls(); }

 private:
  LoadedCheckpoint ckpt_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "mmcast native core";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IntegrityError>(m, "IntegrityError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("derive_seed", &derive_seed, py::arg("base"), py::arg("tag"));

  m.def("regular_latitudes", [](int n_lat) { return GridSpec::regular(n_lat, 1).latitudes; },
        py::arg("n_lat"));
  m.def("latitude_weights",
        [](std::vector<double> lats) { return latitude_weights(GridSpec{std::move(lats), 1}); },
        py::arg("latitudes"), "cos(latitude) weights normalized to mean one");

  m.def("config_keys", [] {
    std::vector<py::tuple> out;
    for (const auto& k : config_schema()) {
      out.push_back(py::make_tuple(k.key, type_name(k.type),
                                   k.default_value ? py::cast(*k.default_value) : py::none(), k.help));
    }
    return out;
  });

  m.def("simulate",
        [](const std::string& config_text, std::optional<std::int64_t> n_steps) {
          const auto cfg = RunConfig::parse(config_text);
          Trajectory t;
          {
            py::gil_scoped_release release;
            t = simulate(cfg.sim_params(), n_steps.value_or(cfg.sim_steps()));
          }
          return trajectory_dict(t);
        },
        py::arg("config"), py::arg("n_steps") = py::none(),
        "Integrate the toy atmosphere for a `key = value` configuration.");

  m.def("read_archive", [](const std::filesystem::path& dir) {
    ArchiveReader reader(dir);
    auto d = trajectory_dict(reader.read_all());
    d["kind"] = reader.kind();
    d["init_time_index"] = reader.init_time_index();
    return d;
  }, py::arg("path"));

  m.def("field_rmse",
        [](const FloatArray& forecast, const FloatArray& truth, const std::vector<double>& weights) {
          return field_rmse(field_from(forecast), field_from(truth), weights);
        },
        py::arg("forecast"), py::arg("truth"), py::arg("weights"));
  m.def("field_acc",
        [](const FloatArray& forecast, const FloatArray& truth, const FloatArray& climatology,
           const std::vector<double>& weights) {
          return field_acc(field_from(forecast), field_from(truth), field_from(climatology), weights);
        },
        py::arg("forecast"), py::arg("truth"), py::arg("climatology"), py::arg("weights"),
        "Per-channel ACC; None where the anomaly variance vanishes.");

  m.def("skillful_lead_time",
        [](const std::vector<double>& acc, double threshold, int steps_per_day) {
          const auto s = skillful_lead_time(acc, threshold, steps_per_day);
          py::dict d;
          d["lead_steps"] = s.lead_steps;
          d["days"] = s.days;
          d["fractional_days"] = s.fractional_days;
          d["unbounded"] = s.unbounded;
          return d;
        },
        py::arg("acc"), py::arg("threshold"), py::arg("steps_per_day") = 4);

  m.def("uncertainty_nll",
        [](const DoubleArray& mean, const DoubleArray& log_variance, const DoubleArray& target,
           const std::vector<double>& weights, bool include_constant) {
          torch::NoGradGuard guard;
          return uncertainty_nll(tensor_from(mean), tensor_from(log_variance), tensor_from(target),
                                 weights, loss_config(!weights.empty(), include_constant))
              .item<double>();
        },
        py::arg("mean"), py::arg("log_variance"), py::arg("target"),
        py::arg("latitude_weights") = std::vector<double>{}, py::arg("include_constant") = false,
        "Gaussian NLL; latitude weighting applies when weights are given.");
  m.def("nll_gradients",
        [](const DoubleArray& mean, const DoubleArray& log_variance, const DoubleArray& target,
           const std::vector<double>& weights, bool include_constant) {
          const auto g = nll_gradients(tensor_from(mean), tensor_from(log_variance), tensor_from(target),
                                       weights, loss_config(!weights.empty(), include_constant));
          return py::make_tuple(array_from(g.d_mean), array_from(g.d_log_variance));
        },
        py::arg("mean"), py::arg("log_variance"), py::arg("target"),
        py::arg("latitude_weights") = std::vector<double>{}, py::arg("include_constant") = false);

  py::class_<Forecaster>(m, "Forecaster")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def("rollout", &Forecaster::rollout, py::arg("initial"), py::arg("n_steps"),
           py::arg("init_time") = 0, "Mean-only autoregressive forecast, shape (n_steps, C, W, H).")
      .def_property_readonly("content_hash", &Forecaster::content_hash)
      .def_property_readonly("channels", &Forecaster::channels)
      .def_property_readonly("forward_calls", &Forecaster::forward_calls);
}
