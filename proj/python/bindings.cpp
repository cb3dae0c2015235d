// Python bindings. Configs and presets cross the boundary as plain dicts
// (through the same JSON readers the CLI uses); reports come back as dicts.

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "glopt/errors.hpp"
#include "glopt/eval.hpp"
#include "glopt/json_io.hpp"
#include "glopt/rng.hpp"
#include "glopt/spline.hpp"
#include "glopt/trainer.hpp"
#include "glopt/verify.hpp"

namespace py = pybind11;
using namespace glopt;

namespace {

Json to_cpp(const py::object& o) {
  return Json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::object to_py(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

DifficultyPreset resolve_preset(const py::object& p) {
  if (py::isinstance<py::str>(p)) return preset_by_name(p.cast<std::string>());
  return preset_from_json(to_cpp(p));
}

template <typename C, typename F>
C resolve_config(const py::object& o, F from_json) {
  if (o.is_none()) return C{};
  return from_json(to_cpp(o));
}

SeedDomain resolve_domain(const std::string& d) {
  if (d == "train" || d == "training") return SeedDomain::kTraining;
  if (d == "eval" || d == "evaluation") return SeedDomain::kEvaluation;
  throw std::invalid_argument("domain must be 'train' or 'eval', got '" + d + "'");
}

py::dict trajectory_dict(const Trajectory& t) {
  py::list steps;
  for (const auto& s : t.steps) {
    py::dict d;
    d["t"] = s.t;
    d["x"] = s.x;
    d["s"] = s.s;
    d["d"] = s.d;
    d["x_next"] = s.x_next;
    steps.append(d);
  }
  py::dict out;
  out["x0"] = t.x0;
  out["x_final"] = t.x_final;
  out["stop_reason"] = to_string(t.stop_reason);
  out["positions"] = t.positions();
  out["steps"] = steps;
  return out;
}

py::dict counts_dict(const ParamCounts& c) {
  py::dict d;
  d["main_encoder"] = c.main_encoder;
  d["iterator"] = c.iterator;
  d["updater"] = c.updater;
  d["total"] = c.total;
  return d;
}

ModelInputs inputs_from(const std::vector<double>& xs, const std::vector<double>& ys) {
  NoisySamples s;
  s.xs = xs;
  s.ys = ys;
  return make_inputs(s);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Learned global optimizer for noisy 1D functions";
#ifdef GLOPT_VERSION
  m.attr("__version__") = GLOPT_VERSION;
#endif

  py::register_exception<GenerationFailedError>(m, "GenerationFailedError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_OSError);

  m.def("case_seed", [](std::uint64_t run_seed, const std::string& domain, std::uint64_t index) {
    return case_seed(run_seed, resolve_domain(domain), index);
  }, py::arg("run_seed"), py::arg("domain"), py::arg("index"));

  m.def("preset", [](const std::string& name) { return to_py(to_json(preset_by_name(name))); }, py::arg("name"),
        "Preset fields as a dict.");

  py::class_<SplineFit>(m, "Spline")
      .def("__call__", [](const SplineFit& f, double x) { return spline_eval(f, x); })
      .def("__call__", [](const SplineFit& f, py::array_t<double> xs) {
        return py::vectorize([&f](double x) { return spline_eval(f, x); })(xs);
      })
      .def("derivative", [](const SplineFit& f, double x, int order) { return f.curve.derivative(x, order); },
           py::arg("x"), py::arg("order") = 1)
      .def("argmin", [](const SplineFit& f, std::size_t grid) { return spline_argmin(f, GridSpec(grid)); },
           py::arg("grid") = kOracleGrid, "Grid argmin over {0, 1/grid, ..., 1}.")
      .def("local_minima", [](const SplineFit& f, std::size_t grid) {
        return count_grid_local_minima(f.curve, GridSpec(grid));
      }, py::arg("grid") = kOracleGrid)
      .def_property_readonly("coeffs", [](const SplineFit& f) {
        return std::vector<double>(f.coeffs().begin(), f.coeffs().end());
      });

  m.def("fit_spline", [](const std::vector<double>& xs, const std::vector<double>& ys) {
    return fit_interpolating_spline(xs, ys);
  }, py::arg("xs"), py::arg("ys"), "Interpolating cubic B-spline through (xs, ys).");

  m.def("make_case", [](const py::object& preset, std::uint64_t seed) {
    const Case c = make_case(resolve_preset(preset), seed);
    py::dict d;
    d["seed"] = c.seed;
    d["x_star"] = c.function.argmin_true;
    d["value_range"] = c.function.value_range;
    d["xs"] = c.samples.xs;
    d["ys"] = c.samples.ys;
    d["sigma"] = c.samples.sigma;
    d["curve"] = SplineFit{c.function.curve, 0};
    return d;
  }, py::arg("preset"), py::arg("seed"), "Generated function, its true argmin and noisy samples.");

  py::class_<Model<float>>(m, "Model")
      .def(py::init([](const py::object& config, std::uint64_t init_seed) {
             return Model<float>(resolve_config<ModelConfig>(config, model_config_from_json), init_seed);
           }),
           py::arg("config") = py::none(), py::arg("init_seed") = 0)
      .def_static("load", [](const std::filesystem::path& dir) {
        auto p = dir;
        if (std::filesystem::exists(p / "final" / "params.bin")) p /= "final";
        return load_checkpoint(p).model;
      }, py::arg("path"), "Loads a checkpoint directory (or a run directory containing final/).")
      .def("save", [](const Model<float>& mdl, const std::filesystem::path& dir) { save_checkpoint(mdl, dir); },
           py::arg("path"))
      .def("run", [](const Model<float>& mdl, const std::vector<double>& xs, const std::vector<double>& ys) {
        const auto in = inputs_from(xs, ys);
        Trajectory t;
        {
          py::gil_scoped_release release;
          t = mdl.run(in);
        }
        return trajectory_dict(t);
      }, py::arg("xs"), py::arg("ys"), "Optimizer trajectory from the noisy samples.")
      .def_property_readonly("config", [](const Model<float>& mdl) { return to_py(to_json(mdl.config())); })
      .def("param_counts", [](const Model<float>& mdl) { return counts_dict(mdl.param_count()); });

  m.def("published_counts", [] { return counts_dict(kPublishedCounts); });

  m.def("evaluate", [](const py::object& model, const py::object& preset, std::size_t n_cases, std::uint64_t seed,
                       int threads) {
    const auto p = resolve_preset(preset);
    const Model<float>* mdl = model.is_none() ? nullptr : &model.cast<const Model<float>&>();
    EvalReport r;
    {
      py::gil_scoped_release release;
      r = mdl ? evaluate(*mdl, p, n_cases, seed, threads) : evaluate(identity_trajectory, p, n_cases, seed, threads);
    }
    return to_py(report_json(r, true));
  }, py::arg("model"), py::arg("preset") = "nightmare", py::arg("n_cases") = 50, py::arg("seed") = 1,
        py::arg("threads") = 1, "Held-out evaluation; model=None scores the spline start point.");

  m.def("spline_baseline", [](const py::object& preset, std::size_t n_cases, std::uint64_t seed) {
    const auto b = spline_baseline(resolve_preset(preset), n_cases, seed);
    py::dict d;
    d["seeds"] = b.seeds;
    d["errors"] = b.errors;
    d["failures"] = b.failures.size();
    d["mean"] = b.stats.mean;
    d["median"] = b.stats.median;
    d["std"] = b.stats.std;
    return d;
  }, py::arg("preset") = "nightmare", py::arg("n_cases") = 500, py::arg("seed") = 1);

  m.def("gradcheck", [](std::size_t full_size_samples) {
    std::vector<SuiteResult> all;
    {
      py::gil_scoped_release release;
      all = all_gradcheck_suites(toy_model_config());
      ModelConfig full;
      full.fixed_unroll = 2;
      if (full_size_samples > 0) all.push_back(trajectory_gradcheck(full, full_size_samples));
    }
    py::list out;
    for (const auto& s : all) {
      py::dict d;
      d["name"] = s.name;
      d["max_rel_error"] = s.max_rel_error;
      d["threshold"] = s.threshold;
      d["checked"] = s.checked;
      d["passed"] = s.passed();
      out.append(d);
    }
    return out;
  }, py::arg("full_size_samples") = 0, "Finite-difference checks of the primitives and the unrolled trajectory.");

  m.def("train", [](const py::object& train_config, const py::object& model_config, const py::object& loss_config,
                    std::optional<std::filesystem::path> out_dir) {
    const auto t = resolve_config<TrainConfig>(train_config, train_config_from_json);
    const auto mc = resolve_config<ModelConfig>(model_config, model_config_from_json);
    const auto lc = resolve_config<LossConfig>(loss_config, loss_config_from_json);
    TrainResult r = [&] {
      py::gil_scoped_release release;
      return train(t, lc, mc, out_dir);
    }();
    py::list log;
    for (const auto& rec : r.log) {
      py::dict d;
      d["epoch"] = rec.epoch;
      d["loss"] = rec.loss;
      d["mean_error"] = rec.mean_error;
      d["mean_steps"] = rec.mean_steps;
      log.append(d);
    }
    py::dict out;
    out["model"] = std::move(r.model);
    out["log"] = log;
    return out;
  }, py::arg("train_config") = py::none(), py::arg("model_config") = py::none(), py::arg("loss_config") = py::none(),
        py::arg("out_dir") = py::none());
}
