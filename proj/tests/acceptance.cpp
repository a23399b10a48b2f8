// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 when any fails.

#include "modev/conditions.hpp"
#include "modev/errors.hpp"
#include "modev/estimators.hpp"
#include "modev/experiment.hpp"
#include "modev/families.hpp"
#include "modev/lan.hpp"
#include "modev/rarevent.hpp"
#include "modev/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace modev;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kRateTol = 0.10;        // criteria 1, 2, 5
constexpr double kExactRateTol = 0.05;   // criterion 1 exact tail, criterion 9
constexpr double kPosteriorTol = 0.15;   // criterion 6
constexpr double kLanAbsTol = 1e-10;     // criterion 3 Gaussian
constexpr double kExceedMax = 0.01;      // criterion 3 Laplace
constexpr double kIdentityTol = 1e-10;   // criterion 4 Gaussian
constexpr double kBayesTol = 1e-4;       // criterion 5 conjugate
constexpr double kA0Tol = 1e-4;          // criterion 7
constexpr double kStderrs = 3.0;         // criteria 2, 9

const std::vector<std::size_t> kNs{400, 1600, 6400};
constexpr std::size_t kReps = 100000;

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct Outcome {
    bool pass = true;
    std::vector<std::string> details;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        details.push_back(std::string(ok ? "" : "!") + what);
    }
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
        out = body();
    } catch (const std::exception& e) {
        out.pass = false;
        out.details.push_back(std::string("!error: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string joined;
    for (const auto& d : out.details) joined += (joined.empty() ? "" : "; ") + d;
    std::printf("%s criterion %d: %s [%s] (%.1f s)\n", out.pass ? "PASS" : "FAIL", id, title.c_str(), joined.c_str(),
                secs);
    std::fflush(stdout);
    if (!out.pass) ++failures;
}

double rel_gap(double value, double target) { return std::abs(value - target) / target; }

EventSpec event(Target t, const std::string& region = "half_space:1:1") {
    EventSpec e;
    e.target = t;
    e.region = parse_region(region, 1);
    return e;
}

Budget budget(Method m, std::size_t reps, std::uint64_t seed = 1) {
    Budget b;
    b.method = m;
    b.n_reps = reps;
    b.seed = seed;
    return b;
}

const RatePoint& at(const RateCurve& c, std::size_t n) {
    for (const auto& p : c.points)
        if (p.n == n) return p;
    throw Error("no point at n = " + std::to_string(n));
}

double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Shared between criteria 1 and 5.
RateCurve gaussian_mle_mc;

}  // namespace

int main() {
    auto gauss = make_family("gaussian");
    auto laplace = make_family("laplace");
    const Vector zero = make_vector({0.0});
    const auto sched = DeviationSchedule::power(kNs, 0.25);

    report(1, "Gaussian MLE rate, tilted IS and exact tail", [&] {
        Outcome o;
        gaussian_mle_mc = ldp_curve(event(Target::Mle), *gauss, zero, sched, budget(Method::Tilted, kReps));
        const auto exact = ldp_curve(event(Target::Mle), *gauss, zero, sched, budget(Method::Exact, kReps));
        const double mc = at(gaussian_mle_mc, 6400).normalized_rate;
        const double ex = at(exact, 6400).normalized_rate;
        o.check(rel_gap(mc, 1.0) <= kRateTol, "MC rate " + fmt("%.4f", mc) + " within 10% of 1");
        o.check(rel_gap(ex, 1.0) <= kExactRateTol, "exact rate " + fmt("%.4f", ex) + " within 5% of 1");
        return o;
    });

    report(2, "psi_n LDP against the rate functional", [&] {
        Outcome o;
        const auto mc = ldp_curve(event(Target::Psi), *gauss, zero, sched, budget(Method::Tilted, kReps));
        const auto exact = ldp_curve(event(Target::Psi), *gauss, zero, sched, budget(Method::Exact, kReps));
        const auto& pm = at(mc, 6400);
        const auto& pe = at(exact, 6400);
        o.check(rel_gap(pm.normalized_rate, mc.target_rate) <= kRateTol,
                "MC rate " + fmt("%.4f", pm.normalized_rate) + " vs target " + fmt("%.4f", mc.target_rate));
        const double z = std::abs(pm.estimate.log_p - pe.estimate.log_p) / pm.estimate.stderr_log;
        o.check(z <= kStderrs, "MC vs exact " + fmt("%.2f", z) + " stderr");
        return o;
    });

    report(3, "LAN decomposition: Gaussian exact, Laplace residual scale", [&] {
        Outcome o;
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 1000; ++seed) {
            const std::size_t n = 400;
            const double u_n = std::pow(static_cast<double>(n), -0.25);
            const auto batch = draw_sample(*gauss, zero, n, seed);
            Rng rng(seed, 7);
            const Vector u = make_vector({(2.0 * rng.uniform() - 1.0) * 2.0 * u_n});
            const auto dec = lan_residual(*gauss, batch.data(), zero, zero, u, TruncationPolicy::inactive(u_n));
            worst = std::max(worst, std::abs(dec.residual));
        }
        o.check(worst <= kLanAbsTol, "Gaussian max |residual| " + fmt("%.2e", worst));

        const std::size_t seeds = 1000;
        std::vector<double> medians, scaled;
        double exceed_at_max = 0.0;
        for (std::size_t n : {256u, 1024u, 4096u}) {
            const double u_n = std::pow(static_cast<double>(n), -1.0 / 3.0);
            const double nu2 = static_cast<double>(n) * u_n * u_n;
            const LanModel model(*laplace, zero, TruncationPolicy::inactive(u_n));
            const Vector u = make_vector({u_n});
            std::vector<double> sups;
            std::size_t exceed = 0;
            for (std::uint64_t s = 0; s < seeds; ++s) {
                const auto batch = draw_sample(*laplace, zero, n, 1000 * n + s);
                if (std::abs(model.decompose(batch.data(), u).residual) > 0.05 * nu2) ++exceed;
                if (s < 200) sups.push_back(model.sup_residual(batch.data(), 1.0, u_n / 20.0));
            }
            std::sort(sups.begin(), sups.end());
            const double med = 0.5 * (sups[99] + sups[100]);
            medians.push_back(med);
            scaled.push_back(med / nu2);
            exceed_at_max = static_cast<double>(exceed) / static_cast<double>(seeds);
        }
        o.check(exceed_at_max < kExceedMax, "Laplace n=4096 exceed fraction " + fmt("%.3f", exceed_at_max));
        o.check(medians[0] > medians[1] && medians[1] > medians[2],
                "sup median " + fmt("%.3f", medians[0]) + ", " + fmt("%.3f", medians[1]) + ", " +
                    fmt("%.3f", medians[2]) + " decreasing");
        // Informational: the same medians per n u_n^2.
        o.details.push_back("sup median / n u_n^2 " + fmt("%.3f", scaled[0]) + ", " + fmt("%.3f", scaled[1]) + ", " +
                            fmt("%.3f", scaled[2]));
        return o;
    });

    report(4, "statistic equivalence: Gaussian identity, Laplace superexponential tail", [&] {
        Outcome o;
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 1000; ++seed) {
            const auto batch = draw_sample(*gauss, make_vector({0.05}), 20 + seed % 500, seed);
            const auto s = test_statistics(*gauss, batch.data(), zero);
            const double scale = std::max(1.0, s.wald);
            worst = std::max({worst, std::abs(s.wald - s.rao) / scale, std::abs(s.wald - s.lr) / scale});
        }
        o.check(worst <= kIdentityTol, "Gaussian max |wald - rao|, |wald - lr| " + fmt("%.2e", worst));

        // |2 sum xi - wald| > 0.25 n u_n^2 is the lr_wald curve with delta = 0.125.
        const auto lsched = DeviationSchedule::power({256, 1024, 4096}, 1.0 / 3.0);
        const auto eq = equivalence_tail(*laplace, zero, lsched, 0.125, budget(Method::Tilted, 50000));
        const auto& c = eq.lr_wald;
        const double p0 = c.points[0].estimate.p_hat, p1 = c.points[1].estimate.p_hat,
                     p2 = c.points[2].estimate.p_hat;
        o.check(p0 > p1 && p1 > p2, "Laplace tail " + fmt("%.2e", p0) + ", " + fmt("%.2e", p1) + ", " +
                                        fmt("%.2e", p2) + " strictly decreasing");
        const auto mle = ldp_curve(event(Target::Mle), *laplace, zero, lsched, budget(Method::Tilted, 50000));
        const double r_eq = c.points[2].normalized_rate, r_mle = at(mle, 4096).normalized_rate;
        o.check(r_eq > r_mle, "rate at n=4096 " + fmt("%.3f", r_eq) + " > MLE rate " + fmt("%.3f", r_mle));
        return o;
    });

    report(5, "Bayes estimator: conjugate mean and LDP rate", [&] {
        Outcome o;
        const auto prior = Prior::gaussian(zero, make_vector({1.0}));
        double worst = 0.0;
        for (std::size_t n : {4u, 64u}) {
            for (std::uint64_t seed = 0; seed < 200; ++seed) {
                const auto batch = draw_sample(*gauss, make_vector({0.3}), n, seed);
                const double target = static_cast<double>(n) * mean(batch.data()) / (static_cast<double>(n) + 1.0);
                const auto post =
                    posterior_grid(*gauss, batch.data(), prior, default_posterior_box(*gauss, batch.data(), 0.0));
                worst = std::max(worst, std::abs(bayes_estimate(post, LossSpec::power_loss(2.0))[0] - target));
            }
        }
        o.check(worst <= kBayesTol, "max |bayes - n xbar/(n+1)| " + fmt("%.2e", worst));
        const auto bayes = ldp_curve(event(Target::Bayes), *gauss, zero, sched, budget(Method::Tilted, kReps));
        const double rb = at(bayes, 6400).normalized_rate, rm = at(gaussian_mle_mc, 6400).normalized_rate;
        o.check(rel_gap(rb, rm) <= kRateTol, "Bayes rate " + fmt("%.4f", rb) + " vs MLE " + fmt("%.4f", rm));
        return o;
    });

    report(6, "posterior concentration rate", [&] {
        Outcome o;
        const auto mc = ldp_curve(event(Target::PosteriorMass), *gauss, zero, sched, budget(Method::Tilted, kReps));
        const double r = at(mc, 6400).normalized_rate;
        o.check(rel_gap(r, 1.0) <= kPosteriorTol, "MC rate " + fmt("%.4f", r) + " within 15% of 1");
        return o;
    });

    report(7, "condition suite", [&] {
        Outcome o;
        for (double delta : {0.5, 1.0, 2.0}) {
            const auto r = check_a0(*gauss, Box::cube(1, -1.0, 1.0), delta);
            const double oracle = 2.0 * (1.0 - std::exp(-delta * delta / 8.0));
            const double err = std::abs(r.parameters.at("infimum") - oracle);
            o.check(err <= kA0Tol, "A0 delta=" + fmt("%g", delta) + " error " + fmt("%.1e", err));
        }
        const auto c = check_c(*gauss, zero, {0.4, 0.2, 0.1, 0.05});
        o.check(c.c2_exponent >= 3.8 && c.c2_exponent <= 4.2, "C2 exponent " + fmt("%.3f", c.c2_exponent));
        const std::vector<double> as{1.1, 2.0, 5.0, 10.0}, xs{0.01, 0.1, 1.0, 10.0};
        for (double p : {1.0, 2.0}) {
            o.check(check_loss(LossSpec::power_loss(p), as, xs).verdict == Verdict::Pass,
                    "power loss p=" + fmt("%g", p) + " certified");
        }
        bool rejected = false;
        try {
            check_loss(LossSpec::from_table({{0, 0}, {1, 1}, {2, 0.5}}), {2.0}, {1.0});
        } catch (const MonotoneError&) {
            rejected = true;
        }
        o.check(rejected, "non-monotone table rejected");
        return o;
    });

    report(8, "determinism across worker counts", [&] {
        Outcome o;
        const fs::path dir = fs::temp_directory_path() / "modev_acceptance_determinism";
        fs::remove_all(dir);
        RunOptions first;
        first.experiment = "ldp-curve";
        first.out_dir = (dir / "first").string();
        first.workers = 3;
        first.quiet = true;
        run_experiment(ExperimentConfig::from_text("family = laplace\nn_values = 256,1024,4096\nalpha = 0.3\n"
                                                   "method = tilted\nn_reps = 20000\nseed = 2024\n"),
                       first);
        const auto manifest = ExperimentConfig::load((dir / "first" / "manifest.json").string());
        std::string csv[2];
        for (unsigned w : {1u, 8u}) {
            RunOptions r = first;
            r.workers = w;
            r.out_dir = (dir / ("w" + std::to_string(w))).string();
            run_experiment(manifest, r);
            csv[w == 8] = slurp(dir / ("w" + std::to_string(w)) / "rate_curve.csv");
        }
        o.check(!csv[0].empty() && csv[0] == csv[1], "workers 1 and 8 CSVs byte-identical");
        o.check(csv[0] == slurp(dir / "first" / "rate_curve.csv"), "manifest rerun reproduces the original");
        fs::remove_all(dir);
        return o;
    });

    report(9, "Bahadur sweep: limiting rates approach 1", [&] {
        Outcome o;
        const std::vector<double> us{0.3, 0.2, 0.1};
        const auto exact = bahadur_sweep(event(Target::Mle), *gauss, zero, us, 10000, budget(Method::Exact, 0));
        std::string seq;
        bool all = true;
        for (const auto& b : exact) {
            seq += (seq.empty() ? "" : ", ") + fmt("%.4f", b.limiting_rate);
            all = all && rel_gap(b.limiting_rate, 1.0) <= kExactRateTol;
        }
        o.check(all, "exact limiting rates " + seq + " within 5% of 1");

        std::string zs;
        bool within = true;
        for (double u : us) {
            const std::size_t n_large = std::min<std::size_t>(10000, static_cast<std::size_t>(std::floor(50.0 / (u * u))));
            const auto ex = bahadur_sweep(event(Target::Mle), *gauss, zero, {u}, n_large, budget(Method::Exact, 0));
            const auto mc =
                bahadur_sweep(event(Target::Mle), *gauss, zero, {u}, n_large, budget(Method::Tilted, 20000, 9));
            const double z = std::abs(mc[0].limiting_rate - ex[0].limiting_rate) / mc[0].limiting_stderr;
            zs += (zs.empty() ? "" : ", ") + fmt("%.2f", z);
            within = within && z <= kStderrs;
        }
        o.check(within, "MC vs exact limiting rate " + zs + " stderr");
        return o;
    });

    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
