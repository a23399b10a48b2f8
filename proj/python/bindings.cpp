#include "modev/errors.hpp"
#include "modev/estimators.hpp"
#include "modev/experiment.hpp"
#include "modev/families.hpp"
#include "modev/rarevent.hpp"
#include "modev/region.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace modev;

namespace {

py::dict estimate_dict(const ProbEstimate& e) {
    py::dict d;
    d["p_hat"] = e.p_hat;
    d["log_p"] = e.log_p;
    d["stderr_p"] = e.stderr_p;
    d["stderr_log"] = e.stderr_log;
    d["method"] = to_string(e.method);
    d["n_reps"] = e.n_reps;
    d["hits"] = e.hits;
    d["zero_hits"] = e.zero_hits;
    d["upper_bound"] = e.upper_bound;
    d["ess"] = e.ess;
    d["warnings"] = e.warnings;
    return d;
}

EventSpec make_event(const ParametricFamily& fam, const std::string& target, const std::string& region,
                     double level, const std::string& prior, const std::string& loss, double eps) {
    EventSpec e;
    e.target = parse_target(target);
    e.region = parse_region(region, fam.dim());
    e.level = level;
    e.prior = parse_prior(prior, fam.dim());
    e.loss = parse_loss(loss);
    e.eps = eps;
    return e;
}

}  // namespace

PYBIND11_MODULE(_modev, m) {
    m.doc() = "Moderate-deviation rates for parametric estimators";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<EmptyDirError>(m, "EmptyDirError", base.ptr());
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
    py::register_exception<BudgetError>(m, "BudgetError", base.ptr());

    m.def("families", &builtin_family_ids);

    m.def(
        "fisher_information",
        [](const std::string& family, const Vector& theta0) {
            auto f = make_family(family);
            return Matrix(fisher_information(*f, theta0).matrix);
        },
        py::arg("family"), py::arg("theta0"));

    m.def(
        "draw_sample",
        [](const std::string& family, const Vector& theta, std::size_t n, std::uint64_t seed) {
            auto f = make_family(family);
            return draw_sample(*f, theta, n, seed).observations;
        },
        py::arg("family"), py::arg("theta"), py::arg("n"), py::arg("seed"));

    m.def(
        "mle",
        [](const std::string& family, const std::vector<double>& obs) {
            auto f = make_family(family);
            return Vector(mle(*f, obs).theta_hat);
        },
        py::arg("family"), py::arg("obs"));

    m.def(
        "rate_functional", [](const std::string& region, int d) { return parse_region(region, d).rate_functional(); },
        py::arg("region"), py::arg("d") = 1);

    m.def("normalized_rate", &normalized_rate, py::arg("log_p"), py::arg("n"), py::arg("u_n"));

    m.def(
        "event_probability",
        [](const std::string& family, const Vector& theta0, std::size_t n, double u_n, const std::string& region,
           const std::string& target, const std::string& method, std::size_t n_reps, std::uint64_t seed,
           unsigned workers, double level, const std::string& prior, const std::string& loss, double eps) {
            auto f = make_family(family);
            const EventSpec e = make_event(*f, target, region, level, prior, loss, eps);
            const Method meth = parse_method(method);
            ProbEstimate est;
            {
                py::gil_scoped_release release;
                if (meth == Method::Exact) {
                    est = exact_prob(e, *f, theta0, n, u_n, Vector());
                } else {
                    McOptions o;
                    o.method = meth;
                    o.n_reps = n_reps;
                    o.seed = seed;
                    o.workers = workers;
                    est = estimate_prob(e, *f, theta0, n, u_n, Vector(), o);
                }
            }
            return estimate_dict(est);
        },
        py::arg("family"), py::arg("theta0"), py::arg("n"), py::arg("u_n"), py::arg("region") = "half_space:1:1",
        py::arg("target") = "mle", py::arg("method") = "tilted", py::arg("n_reps") = 100000, py::arg("seed") = 1,
        py::arg("workers") = 0, py::arg("level") = 0.5, py::arg("prior") = "flat", py::arg("loss") = "power:2",
        py::arg("eps") = std::numeric_limits<double>::infinity());

    m.def("config_keys", [] {
        std::vector<std::tuple<std::string, std::string, std::string>> out;
        for (const auto& k : config_keys()) out.emplace_back(k.key, k.fallback, k.help);
        return out;
    });

    m.def(
        "run_experiment",
        [](const std::string& experiment, const std::map<std::string, std::string>& config,
           std::optional<std::string> out_dir, std::optional<unsigned> workers, std::optional<std::uint64_t> seed,
           bool quiet) {
            ExperimentConfig cfg;
            for (const auto& [k, v] : config) cfg.set(k, v);
            RunOptions o;
            o.experiment = experiment;
            o.out_dir = std::move(out_dir);
            o.workers = workers;
            o.seed_override = seed;
            o.quiet = quiet;
            py::gil_scoped_release release;
            const RunResult r = run_experiment(cfg, o);
            return std::make_tuple(r.output_dir, r.artifacts, r.manifest_path);
        },
        py::arg("experiment"), py::arg("config"), py::arg("out_dir") = py::none(), py::arg("workers") = py::none(),
        py::arg("seed") = py::none(), py::arg("quiet") = true);

    m.def(
        "emit_report",
        [](const std::string& results_dir, std::optional<std::string> out_dir) {
            return emit_report(results_dir, out_dir);
        },
        py::arg("results_dir"), py::arg("out_dir") = py::none());
}
