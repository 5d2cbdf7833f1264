#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pmuplace/case.hpp"
#include "pmuplace/dynamics.hpp"
#include "pmuplace/errors.hpp"
#include "pmuplace/estimation.hpp"
#include "pmuplace/experiments.hpp"
#include "pmuplace/gramian.hpp"
#include "pmuplace/network.hpp"
#include "pmuplace/placement.hpp"
#include "pmuplace/robustness.hpp"
#include "pmuplace/synthetic.hpp"

namespace py = pybind11;
using namespace pmuplace;

namespace {

struct Model {
    PowerSystemCase c;
    PowerFlowSolution pf;
    ReducedModel reduced;
};

Model make_model(const PowerSystemCase& c, const std::string& kind)
{
    Model m;
    m.c = c;
    m.pf = solve_power_flow(c);
    if (!m.pf.converged)
        throw NumericalError("power flow did not converge");
    m.reduced = init_steady_state(c, m.pf, parse_model_kind(kind));
    return m;
}

GramianConfig config(double dt, double horizon, unsigned threads)
{
    GramianConfig cfg;
    cfg.dt = dt;
    cfg.horizon = horizon;
    cfg.threads = threads;
    return cfg;
}

GramianBank to_bank(const std::vector<Eigen::MatrixXd>& mats)
{
    GramianBank b;
    b.per_generator = mats;
    return b;
}

py::dict placement_dict(const Placement& p)
{
    py::dict d;
    d["placement"] = p.generators;
    d["logdet"] = p.objective;
    d["solver"] = std::string(to_string(p.solver));
    d["evaluations"] = p.evaluations;
    d["converged"] = p.converged;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Optimal PMU placement with empirical observability Gramians";
    m.attr("__version__") = std::string(tool_version());

    auto base = py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<GuardError>(m, "GuardError", PyExc_RuntimeError);
    (void)base;

    py::class_<PowerSystemCase>(m, "Case")
        .def_static("from_file", [](const std::string& path) { return load_case(path); })
        .def_static("from_json", [](const std::string& text) { return parse_case(text); })
        .def_static("synthetic",
                    [](std::uint64_t seed, std::size_t generators) {
                        SyntheticOptions o;
                        o.generators = generators;
                        return synthetic_case(seed, o);
                    },
                    py::arg("seed"), py::arg("generators") = 20)
        .def_readonly("name", &PowerSystemCase::name)
        .def_property_readonly("generator_count", &PowerSystemCase::generator_count)
        .def_property_readonly("bus_count", [](const PowerSystemCase& c) { return c.buses.size(); })
        .def("to_json", [](const PowerSystemCase& c) { return to_json(c).dump(); });

    m.def(
        "power_flow",
        [](const PowerSystemCase& c) {
            const PowerFlowSolution pf = solve_power_flow(c);
            py::dict d;
            d["converged"] = pf.converged;
            d["iterations"] = pf.iterations;
            d["v_mag"] = pf.v_mag;
            d["v_ang"] = pf.v_ang;
            d["p_inj"] = pf.p_inj;
            d["q_inj"] = pf.q_inj;
            return d;
        },
        py::arg("case"));

    py::class_<Model>(m, "Model")
        .def(py::init(&make_model), py::arg("case"), py::arg("kind") = "m1")
        .def_property_readonly("kind", [](const Model& mm) { return std::string(to_string(mm.reduced.kind)); })
        .def_property_readonly("x0", [](const Model& mm) { return mm.reduced.x0; })
        .def_property_readonly("omega0", [](const Model& mm) { return mm.reduced.omega0; })
        .def_property_readonly("state_dim", [](const Model& mm) { return mm.reduced.state_dim(); })
        .def_property_readonly("generator_count", [](const Model& mm) { return mm.reduced.generator_count(); })
        .def_property_readonly("state_names", [](const Model& mm) { return state_names(mm.reduced); })
        .def("derivative", [](const Model& mm, const Eigen::VectorXd& x) { return derivative(mm.reduced, x); })
        .def("measure", [](const Model& mm, const Eigen::VectorXd& x,
                           const std::vector<int>& ids) { return measure(mm.reduced, x, ids); })
        .def(
            "simulate",
            [](const Model& mm, const Eigen::VectorXd& x, double horizon, double dt) {
                const Trajectory t = simulate(mm.reduced, x, horizon, dt);
                return py::make_tuple(t.time, t.states);
            },
            py::arg("x"), py::arg("horizon") = 5.0, py::arg("dt") = 1.0 / 120.0)
        .def(
            "gramian",
            [](const Model& mm, const std::vector<int>& ids, double dt, double horizon, unsigned threads) {
                return empirical_gramian(mm.reduced, ids, config(dt, horizon, threads)).matrix;
            },
            py::arg("placement"), py::arg("dt") = 1.0 / 30.0, py::arg("horizon") = 5.0, py::arg("threads") = 1)
        .def(
            "gramian_bank",
            [](const Model& mm, double dt, double horizon, unsigned threads) {
                return per_generator_bank(mm.reduced, config(dt, horizon, threads)).per_generator;
            },
            py::arg("dt") = 1.0 / 30.0, py::arg("horizon") = 5.0, py::arg("threads") = 1)
        .def(
            "estimation_batch",
            [](const Model& mm, const std::vector<int>& ids, std::size_t runs, std::uint64_t seed, unsigned threads) {
                const EstimatorConfig cfg = EstimatorConfig::defaults(mm.reduced);
                const BatchSummary s = method1_batch(mm.reduced, ids, cfg, runs, seed, threads);
                py::dict d;
                d["e_delta_mean"] = s.e_delta_mean;
                d["e_omega_mean"] = s.e_omega_mean;
                d["n_delta_mean"] = s.n_delta_mean;
                d["diverged_count"] = s.diverged;
                return d;
            },
            py::arg("placement"), py::arg("runs") = 50, py::arg("seed") = 1, py::arg("threads") = 1);

    m.def("logdet", &logdet, py::arg("w"));
    m.def(
        "place",
        [](const std::vector<Eigen::MatrixXd>& bank, int k, const std::string& solver, std::uint64_t seed,
           std::optional<std::size_t> budget) {
            MadsOptions o;
            o.seed = seed;
            o.budget = budget;
            return placement_dict(solve_placement(to_bank(bank), k, parse_solver(solver), o));
        },
        py::arg("bank"), py::arg("k"), py::arg("solver") = "mads", py::arg("seed") = 1,
        py::arg("budget") = py::none());
    m.def(
        "place_incremental",
        [](const std::vector<Eigen::MatrixXd>& bank, const std::vector<int>& pinned, int k_total,
           const std::string& solver, std::uint64_t seed) {
            MadsOptions o;
            o.seed = seed;
            return placement_dict(incremental(to_bank(bank), pinned, k_total, parse_solver(solver), o));
        },
        py::arg("bank"), py::arg("pinned"), py::arg("k_total"), py::arg("solver") = "mads", py::arg("seed") = 1);
    m.def("overlap_ratio", [](const std::vector<int>& a, const std::vector<int>& b) { return overlap_ratio(a, b); });
}
