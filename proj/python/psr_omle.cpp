#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "omle/exact.hpp"
#include "omle/experiment.hpp"
#include "omle/gamma.hpp"
#include "omle/l1.hpp"
#include "omle/psr.hpp"

namespace py = pybind11;
using namespace omle;

namespace {

nlohmann::json to_json(const py::object& o) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::object from_json(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

TabularPOMDP model_of(const py::object& o) {
    const nlohmann::json j = to_json(o);
    return TabularPOMDP::from_json(j.contains("model") ? j.at("model") : j);
}

}  // namespace

PYBIND11_MODULE(psr_omle, m) {
    m.doc() = "Exact PSR/POMDP dynamics, OMLE experiments and SAIL certificates";
    m.attr("__version__") = kVersion;

    static py::exception<Error> base(m, "OmleError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<CapExceeded>(m, "CapExceeded", base.ptr());
    py::register_exception<InvalidModel>(m, "InvalidModel", base.ptr());

    m.def(
        "generate_env", [](const py::object& recipe) { return from_json(generate_env(to_json(recipe))); },
        py::arg("recipe"), "Instance document for a recipe dict (same schema as `omle-bench gen-env`).");

    m.def(
        "observability_alpha",
        [](const py::object& model, int steps) {
            const AlphaReport r = observability_alpha(model_of(model), steps);
            return py::dict(py::arg("alpha") = r.alpha, py::arg("per_step") = r.alpha_h,
                            py::arg("argmin_h") = r.argmin_h);
        },
        py::arg("model"), py::arg("m") = 1, "m-step observability coefficient of a POMDP dict.");

    m.def(
        "uniform_trajectory_distribution",
        [](const py::object& model) {
            const TabularPOMDP p = model_of(model);
            const auto d = trajectory_distribution(p, *HistoryPolicy::uniform(p.spec()));
            return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size())));
        },
        py::arg("model"), "Exact probabilities of all full trajectories under the uniform policy.");

    m.def(
        "l1_min_pseudoinverse",
        [](const Eigen::MatrixXd& O) {
            const L1Inverse g = l1_min_pseudoinverse(O);
            return py::make_tuple(g.G, g.norm, g.residual);
        },
        py::arg("O"), "Left inverse of O with minimal l1 operator norm: (G, norm, residual).");

    m.def(
        "psr_residuals",
        [](const py::object& model) {
            const TabularPOMDP p = model_of(model);
            const CondTable t = cond_table(p);
            const SystemDynamics sd = SystemDynamics::from_table(t);
            const SelfConsistentPsr psr = build_self_consistent_psr(sd, select_core_tests(sd));
            const PsrCheck c = verify_psr(psr.rep, t);
            const GammaReport g = gamma_well_conditioned(psr.rep);
            return py::dict(py::arg("psr1") = c.psr1, py::arg("psr2") = c.psr2, py::arg("rank") = psr_rank(sd).rank,
                            py::arg("gamma_inv") = g.gamma_inv);
        },
        py::arg("model"), "Spectral self-consistent PSR of a POMDP dict with its identity residuals and 1/gamma.");

    m.def(
        "run_experiment",
        [](const py::object& config, int threads) {
            const ExperimentConfig cfg = ExperimentConfig::from_json(to_json(config));
            std::vector<SeedRun> runs;
            {
                py::gil_scoped_release release;
                runs = run_experiment(cfg, threads);
            }
            py::list out;
            for (const auto& r : runs)
                out.append(py::dict(py::arg("seed") = r.seed, py::arg("csv") = r.csv,
                                    py::arg("summary") = from_json(r.summary),
                                    py::arg("invariants_ok") = r.invariants_ok));
            return out;
        },
        py::arg("config"), py::arg("threads") = 1, "Runs every seed of an experiment config dict.");

    m.def(
        "sail_report", [](const py::object& instance) { return from_json(sail_report(to_json(instance))); },
        py::arg("instance"), "Witness and SAIL certificates for a factored, bandit or kernel-linear instance.");

    m.def(
        "factored_chain_rank",
        [](int n) {
            const FactoredChain c = gen_factored_chain(n);
            return py::make_tuple(c.measured_rank, c.claimed_rank);
        },
        py::arg("n"), "(measured rank of D_{H-1}, claimed 2^{H-2}) for the n-factor chain.");

    m.def("beta_default", &beta_default, py::arg("class_size"), py::arg("episodes"), py::arg("delta") = 0.05,
          py::arg("c") = 2.0, "Confidence radius c log(T |Theta| / delta).");
}
