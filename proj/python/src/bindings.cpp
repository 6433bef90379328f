#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>

#include "fisale/harness.hpp"
#include "fisale/pcm.hpp"

namespace py = pybind11;
using namespace fisale;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() < 1 || a.ndim() > 2) throw std::invalid_argument("expected a 1-D or 2-D array");
  Shape shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<std::size_t>(a.shape(i)));
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::dict state_to_dict(const SystemState& s) {
  py::dict d;
  for (auto dom : kDomains) {
    const auto& obs = s.domain(dom);
    d[domain_name(dom)] = py::make_tuple(to_array(obs.positions), to_array(obs.quantities));
  }
  d["time"] = s.time;
  d["conditions"] = s.conditions;
  return d;
}

SystemState dict_to_state(const py::dict& d) {
  SystemState s;
  for (auto dom : kDomains) {
    const auto pair = d[domain_name(dom)].cast<std::pair<Array, Array>>();
    s.domain(dom) = DomainObservation{to_tensor(pair.first), to_tensor(pair.second)};
  }
  if (d.contains("time")) s.time = d["time"].cast<double>();
  if (d.contains("conditions")) {
    s.conditions = d["conditions"].cast<std::vector<std::pair<std::string, double>>>();
  }
  return s;
}

py::object to_python(const nlohmann::ordered_json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_fisale, m) {
  m.doc() = "Fisale FSI surrogate: latent ALE grid, partitioned coupling module and tools.";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  // ---- kernels -------------------------------------------------------------
  m.def(
      "softmax", [](const Array& x, int axis) { return to_array(softmax(to_tensor(x), axis)); },
      py::arg("x"), py::arg("axis"));
  m.def(
      "linear_attention",
      [](const Array& q, const Array& k, const Array& v) {
        Graph g(false);
        return to_array(linear_attention(g.constant(to_tensor(q)), g.constant(to_tensor(k)),
                                         g.constant(to_tensor(v)))
                            .value());
      },
      py::arg("q"), py::arg("k"), py::arg("v"), "softmax(Q) (softmax(K)^T V) / D");
  m.def(
      "attention_logits",
      [](const Array& q, const Array& k) {
        return to_array(attention_logits(to_tensor(q), to_tensor(k)));
      },
      py::arg("q"), py::arg("k"), "Dense softmax(Q) softmax(K)^T");
  m.def(
      "knn_edges",
      [](const Array& coords, std::size_t k) {
        const Neighborhoods e = knn_edges(to_tensor(coords), k);
        py::array_t<std::int64_t> out(
            {static_cast<py::ssize_t>(e.nodes), static_cast<py::ssize_t>(e.k)});
        std::copy(e.index.begin(), e.index.end(), out.mutable_data());
        return out;
      },
      py::arg("coords"), py::arg("k"));
  m.def(
      "seed_regular_grid",
      [](const std::vector<std::size_t>& counts) {
        return to_array(seed_regular_grid(counts).points);
      },
      py::arg("axis_counts"));

  // ---- metrics -------------------------------------------------------------
  m.def("relative_l2", [](const Array& u, const Array& u_hat) {
    return relative_l2(to_tensor(u), to_tensor(u_hat));
  });
  m.def("rmse_metric", [](const Array& u, const Array& u_hat) {
    return rmse_metric(to_tensor(u), to_tensor(u_hat));
  });

  // ---- reference solvers ---------------------------------------------------
  py::class_<PistonParams>(m, "PistonParams")
      .def(py::init<>())
      .def_readwrite("L0", &PistonParams::L0)
      .def_readwrite("mass", &PistonParams::mass)
      .def_readwrite("kappa", &PistonParams::kappa)
      .def_readwrite("damping", &PistonParams::damping)
      .def_readwrite("area", &PistonParams::area)
      .def_readwrite("rho0", &PistonParams::rho0)
      .def_readwrite("c", &PistonParams::c)
      .def_readwrite("p0", &PistonParams::p0)
      .def_readwrite("s0", &PistonParams::s0)
      .def_readwrite("nodes", &PistonParams::nodes)
      .def_readwrite("dt", &PistonParams::dt)
      .def_readwrite("steps", &PistonParams::steps)
      .def_readwrite("tol", &PistonParams::tol)
      .def_readwrite("omega", &PistonParams::omega)
      .def_readwrite("save_every", &PistonParams::save_every)
      .def_readwrite("dim", &PistonParams::dim)
      .def("validate", &PistonParams::validate);

  m.def(
      "run_piston",
      [](const PistonParams& p) {
        const PistonRun run = run_piston(p);
        std::vector<double> t, s, s_dot, energy;
        for (const auto& st : run.states) {
          t.push_back(st.time);
          s.push_back(st.s);
          s_dot.push_back(st.s_dot);
          energy.push_back(piston_energy(st, p));
        }
        std::vector<std::size_t> iters;
        for (const auto& r : run.reports) iters.push_back(r.subiterations);
        py::dict d;
        d["time"] = t;
        d["displacement"] = s;
        d["velocity"] = s_dot;
        d["energy"] = energy;
        d["subiterations"] = iters;
        return d;
      },
      py::arg("params"), "Saved states of one partitioned piston run.");
  m.def("damped_oscillator", &damped_oscillator, py::arg("s0"), py::arg("mass"), py::arg("kappa"),
        py::arg("damping"), py::arg("t"));
  m.def(
      "cylinder_flow",
      [](double U, double R, double rho, double p_inf, double x, double y) {
        const FlowSample f = cylinder_flow(U, R, rho, p_inf, x, y);
        return py::make_tuple(f.velocity[0], f.velocity[1], f.pressure);
      },
      py::arg("U"), py::arg("R"), py::arg("rho"), py::arg("p_inf"), py::arg("x"), py::arg("y"));

  // ---- data ----------------------------------------------------------------
  m.def(
      "read_trajectory",
      [](const std::filesystem::path& path) {
        py::list frames;
        for (const auto& f : read_trajectory(path).frames) frames.append(state_to_dict(f));
        return frames;
      },
      py::arg("path"), "Frames of an FSL1 file as dicts of (positions, quantities) pairs.");
  m.def(
      "write_trajectory",
      [](const std::filesystem::path& path, const py::list& frames) {
        Trajectory t;
        for (const auto& f : frames) t.frames.push_back(dict_to_state(f.cast<py::dict>()));
        write_trajectory(t, path);
      },
      py::arg("path"), py::arg("frames"));
  m.def(
      "generate_piston_dataset",
      [](const std::filesystem::path& dir, std::size_t trajectories, std::uint64_t seed,
         std::size_t steps, std::size_t save_every, double ood_fraction) {
        PistonDatasetOptions opt;
        opt.trajectories = trajectories;
        opt.seed = seed;
        opt.base.steps = steps;
        opt.base.save_every = save_every;
        opt.ood_fraction = ood_fraction;
        const Manifest mf = generate_piston_dataset(dir, opt);
        py::dict counts;
        for (auto s : {Split::train, Split::val, Split::test, Split::ood}) {
          counts[split_name(s)] = mf.ids(s);
        }
        return counts;
      },
      py::arg("dir"), py::arg("trajectories"), py::arg("seed"), py::arg("steps") = 1000,
      py::arg("save_every") = 1, py::arg("ood_fraction") = 0.0,
      "Simulates piston trajectories into `dir` and returns the split ids.");

  // ---- model ---------------------------------------------------------------
  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_static("tiny", &ModelConfig::tiny)
      .def_static("defaults_for", &ModelConfig::defaults_for, py::arg("dim"))
      .def_static(
          "parse",
          [](const std::string& text) { return parse_model_config(parse_key_values(text)); },
          py::arg("text"))
      .def("to_text", &format_model_config)
      .def_readwrite("dim", &ModelConfig::dim)
      .def_readwrite("levels", &ModelConfig::levels)
      .def_readwrite("grid_shapes", &ModelConfig::grid_shapes)
      .def_readwrite("channels", &ModelConfig::channels)
      .def_readwrite("k", &ModelConfig::k)
      .def_readwrite("stride", &ModelConfig::stride)
      .def_readwrite("noise_variance", &ModelConfig::noise_variance)
      .def_property(
          "task", [](const ModelConfig& c) { return std::string(task_name(c.task)); },
          [](ModelConfig& c, const std::string& s) { c.task = parse_task(s); })
      .def_property(
          "processor",
          [](const ModelConfig& c) { return std::string(processor_name(c.processor)); },
          [](ModelConfig& c, const std::string& s) { c.processor = parse_processor(s); })
      .def_property(
          "ordering", [](const ModelConfig& c) { return c.ordering.to_string(); },
          [](ModelConfig& c, const std::string& s) { c.ordering = OrderingSpec::parse(s); })
      .def("validate", &ModelConfig::validate);

  py::class_<FisaleModel>(m, "Model")
      .def(py::init([](const ModelConfig& cfg, std::size_t fluid_channels,
                       std::size_t solid_channels, std::size_t conditions, std::uint64_t seed) {
             return std::make_unique<FisaleModel>(
                 cfg, DataLayout{cfg.dim, fluid_channels, solid_channels, conditions}, seed);
           }),
           py::arg("config"), py::arg("fluid_channels"), py::arg("solid_channels"),
           py::arg("conditions") = 0, py::arg("seed") = 0)
      .def_static(
          "load", [](const std::filesystem::path& path) { return load_model(path); },
          py::arg("path"))
      .def(
          "save",
          [](const FisaleModel& model, const std::filesystem::path& path, std::uint64_t seed) {
            save_model(model, seed, path);
          },
          py::arg("path"), py::arg("seed") = 0)
      .def_property_readonly("config", &FisaleModel::config)
      .def("parameter_count",
           [](const FisaleModel& model) { return model.params().parameter_count(); })
      .def(
          "predict",
          [](FisaleModel& model, const py::dict& state) {
            const Prediction p = model.predict(dict_to_state(state));
            SystemState s;
            s.fluid = p.fluid;
            s.solid = p.solid;
            s.interface = p.interface;
            return state_to_dict(s);
          },
          py::arg("state"), "Normalised next state for a normalised input state.");

  m.def(
      "grad_check",
      [](const ModelConfig& cfg, std::uint64_t seed, double tol) {
        const GradCheckReport r = model_grad_check(cfg, seed, tol);
        py::dict d;
        d["passed"] = r.passed();
        d["worst"] = r.worst();
        d["parameters"] = r.entries.size();
        return d;
      },
      py::arg("config"), py::arg("seed") = 0, py::arg("tol") = 1e-4);

  // ---- harness -------------------------------------------------------------
  m.def(
      "train",
      [](const std::filesystem::path& data_dir, const std::string& config_text,
         const std::filesystem::path& out) {
        const RunConfig rc = parse_run_config(config_text);
        const Dataset data = Dataset::open(data_dir);
        FisaleModel model(rc.model, data.manifest.layout(), rc.train.seed);
        std::ofstream log(out.string() + ".log.csv", std::ios::app);
        const TrainResult r = train_loop(model, data, rc.train, out, &log);
        py::dict d;
        d["losses"] = r.losses;
        d["steps"] = r.steps;
        if (r.validated) {
          d["best_val"] = r.best_validation;
          d["best_step"] = r.best_step;
        }
        return d;
      },
      py::arg("data_dir"), py::arg("config_text"), py::arg("out"),
      "Trains from a key = value config and writes the best checkpoint to `out`.");
  m.def(
      "evaluate",
      [](const std::filesystem::path& data_dir, const std::filesystem::path& ckpt,
         const std::string& split) {
        auto model = load_model(ckpt);
        return to_python(
            evaluate_split(*model, Dataset::open(data_dir), parse_split(split)).to_json());
      },
      py::arg("data_dir"), py::arg("ckpt"), py::arg("split"));
  m.def(
      "rollout",
      [](const std::filesystem::path& data_dir, const std::filesystem::path& ckpt,
         const std::string& traj, std::size_t steps) {
        auto model = load_model(ckpt);
        return to_python(rollout(*model, Dataset::open(data_dir), traj, steps).report.to_json());
      },
      py::arg("data_dir"), py::arg("ckpt"), py::arg("traj"), py::arg("steps"));
}
