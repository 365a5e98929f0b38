#include "mfgc/cli_io.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

namespace py = pybind11;
using namespace mfgc;

namespace {

// (N_t + 1, N) in 1-D, (N_t + 1, N, N) in 2-D; node (i0, i1) is [n, i0, i1].
py::array_t<double> to_array(const SpaceTimeField& f) {
    const PeriodicGrid& g = f.grid();
    const auto n = static_cast<py::ssize_t>(g.points_per_dim());
    std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(f.steps()) + 1, n};
    if (g.dim() == 2) shape.push_back(n);
    py::array_t<double> out(shape);
    double* dst = out.mutable_data();
    for (const Field& s : f.slices) {
        std::memcpy(dst, s.values.data(), s.size() * sizeof(double));
        dst += s.size();
    }
    return out;
}

SpaceTimeField from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                          const PeriodicGrid& grid, const TimeGrid& time) {
    const auto expected = static_cast<py::ssize_t>((time.steps() + 1) * grid.size());
    if (a.ndim() != grid.dim() + 1 || a.shape(0) != time.steps() + 1 || a.size() != expected)
        throw GridMismatch("array shape does not match the configured grid");
    SpaceTimeField f(grid, time);
    const double* src = a.data();
    for (Field& s : f.slices) {
        std::memcpy(s.values.data(), src, s.size() * sizeof(double));
        src += s.size();
    }
    return f;
}

RunConfig config_of(const std::string& text) { return text.empty() ? RunConfig{} : parse_config(text); }

py::dict record_dict(const CheckRecord& r) {
    py::dict values;
    for (const auto& [k, v] : r.values) values[py::str(k)] = v;
    py::dict d;
    d["anchor"] = r.anchor;
    d["policy"] = r.policy;
    d["passed"] = r.passed;
    d["location"] = r.location;
    d["values"] = values;
    return d;
}

struct Solution {
    std::string status;
    std::string message;
    double lambda = 1.0;
    double residual = 0.0;
    std::vector<std::string> log;
    SpaceTimeField u;
    SpaceTimeField m;
};

Solution solve(const std::string& text) {
    const RunConfig c = config_of(text);
    const MFGProblem p = build_problem(c.problem);
    Solution s;
    PathResult path;
    {
        py::gil_scoped_release release;
        path = solve_path(p, c.solver, [&](const ContinuationState& st) { s.log.push_back(progress_line(st)); });
    }
    s.status = path_status_name(path.status);
    s.message = path.message;
    s.lambda = path.last().lambda;
    s.residual = path.last().residual_norm;
    s.u = path.last().pair.u;
    s.m = path.last().pair.m;
    return s;
}

PVec vec(const std::vector<double>& x) {
    if (x.empty() || x.size() > 2) throw std::invalid_argument("vectors must have 1 or 2 components");
    PVec v(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) v[static_cast<Eigen::Index>(i)] = x[i];
    return v;
}

LagrangianModel lagrangian(double gamma_prime, double a, std::size_t dim) {
    return LagrangianModel(gamma_prime, Field::constant(PeriodicGrid(static_cast<int>(dim), 2), a));
}

}  // namespace

PYBIND11_MODULE(_mfgc, m) {
    m.doc() = "Congestion mean-field game solver";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<GridMismatch>(m, "GridMismatch", PyExc_ValueError);

    m.attr("EXIT_OK") = static_cast<int>(kExitOk);
    m.attr("EXIT_CHECK_FAILED") = static_cast<int>(kExitCheckFailed);
    m.attr("EXIT_SOLVER_FAILED") = static_cast<int>(kExitSolverFailed);
    m.attr("EXIT_USAGE") = static_cast<int>(kExitUsage);

    m.def("default_config", [] { return write_config(RunConfig{}); }, "INI text of the default (reference) configuration.");
    m.def("normalize_config", [](const std::string& text) { return write_config(parse_config(text)); },
          py::arg("text"), "Parse, validate and re-emit a configuration with every key.");

    py::class_<Solution>(m, "Solution")
        .def_readonly("status", &Solution::status)
        .def_readonly("message", &Solution::message)
        .def_readonly("lambda_", &Solution::lambda)
        .def_readonly("residual", &Solution::residual)
        .def_readonly("log", &Solution::log)
        .def_property_readonly("u", [](const Solution& s) { return to_array(s.u); })
        .def_property_readonly("m", [](const Solution& s) { return to_array(s.m); })
        .def("__repr__", [](const Solution& s) {
            return "<Solution " + s.status + " lambda=" + std::to_string(s.lambda) + ">";
        });

    m.def("solve", &solve, py::arg("config") = "",
          "Continuation from lambda = 1 to solver.lambda_target for an INI configuration (empty = defaults).");

    m.def(
        "trivial_solution",
        [](const std::string& text) {
            const MFGProblem p = build_problem(config_of(text).problem);
            const ContinuationState s = trivial_solution(p);
            return py::make_tuple(to_array(s.pair.u), to_array(s.pair.m));
        },
        py::arg("config") = "", "The lambda = 1 pair (u, m).");

    m.def(
        "residual_norm",
        [](const std::string& text, const py::array_t<double>& u, const py::array_t<double>& mm, double lambda) {
            const MFGProblem p = build_problem(config_of(text).problem);
            const SolutionPair pair{from_array(u, p.grid, p.time), from_array(mm, p.grid, p.time)};
            return residual_full(p, lambda_data(p, lambda), pair).sup_norm();
        },
        py::arg("config"), py::arg("u"), py::arg("m"), py::arg("lam") = 0.0);

    m.def(
        "estimate_report",
        [](const std::string& text, const py::array_t<double>& u, const py::array_t<double>& mm, double lambda) {
            const MFGProblem p = build_problem(config_of(text).problem);
            const SolutionPair pair{from_array(u, p.grid, p.time), from_array(mm, p.grid, p.time)};
            EstimateReport rep;
            {
                py::gil_scoped_release release;
                rep = run_estimates(pair, p, lambda_data(p, lambda));
            }
            py::dict out;
            for (const auto& r : rep.records) out[py::str(r.name)] = record_dict(r);
            return out;
        },
        py::arg("config"), py::arg("u"), py::arg("m"), py::arg("lam") = 0.0,
        "Estimate checks without refinement, keyed by check name.");

    m.def(
        "mc_l1",
        [](const std::string& text, const py::array_t<double>& u, const py::array_t<double>& mm, double lambda,
           std::int64_t paths, std::uint64_t seed) {
            const RunConfig c = config_of(text);
            const MFGProblem p = build_problem(c.problem);
            const SolutionPair pair{from_array(u, p.grid, p.time), from_array(mm, p.grid, p.time)};
            SDEConfig cfg = c.mc.sde;
            cfg.paths = paths;
            cfg.seed = seed;
            MCEstimate est;
            {
                py::gil_scoped_release release;
                est = simulate(p, lambda_data(p, lambda), pair, cfg);
            }
            return py::make_tuple(l1_distance(est.density, pair.m), est.noise_floor);
        },
        py::arg("config"), py::arg("u"), py::arg("m"), py::arg("lam") = 0.0, py::arg("paths") = 100000,
        py::arg("seed") = 1, "Per-slice L1 distance of the particle density to m, and the batch noise floor.");

    m.def(
        "legendre_transform",
        [](double gamma_prime, double a, const std::vector<double>& p, double v_radius, int v_samples) {
            return legendre_transform(lagrangian(gamma_prime, a, p.size()), 0, vec(p), v_radius, v_samples);
        },
        py::arg("gamma_prime"), py::arg("a"), py::arg("p"), py::arg("v_radius"), py::arg("v_samples"),
        "sup_v [-v.p - a (1 + |v|^2)^{gamma'/2}] by brute force.");
    m.def(
        "double_legendre_transform",
        [](double gamma_prime, double a, const std::vector<double>& v, double radius, int samples) {
            return double_legendre_transform(lagrangian(gamma_prime, a, v.size()), 0, vec(v), radius, samples);
        },
        py::arg("gamma_prime"), py::arg("a"), py::arg("v"), py::arg("radius"), py::arg("samples"));

    m.def(
        "read_field_file",
        [](const std::string& path) {
            const FieldFile f = read_field_file(path);
            return py::make_tuple(f.name, f.field.time.horizon(), to_array(f.field));
        },
        py::arg("path"), "Returns (name, T, array).");
    m.def(
        "write_field_file",
        [](const std::string& path, const std::string& name, double horizon,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
            if (a.ndim() < 2 || a.ndim() > 3) throw std::invalid_argument("array must have 2 or 3 dimensions");
            const PeriodicGrid g(static_cast<int>(a.ndim()) - 1, static_cast<int>(a.shape(1)));
            write_field_file(path, name, from_array(a, g, TimeGrid(horizon, static_cast<int>(a.shape(0)) - 1)));
        },
        py::arg("path"), py::arg("name"), py::arg("horizon"), py::arg("array"));
}
