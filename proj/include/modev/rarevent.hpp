#pragma once

#include "modev/estimators.hpp"
#include "modev/families.hpp"
#include "modev/lan.hpp"
#include "modev/loss.hpp"
#include "modev/region.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace modev {

// Standard normal helpers, accurate far into the upper tail.
double normal_sf(double z);
double log_normal_sf(double z);
double normal_cdf(double z);
double normal_quantile(double p);

/// u_n = c n^{-alpha}, or u_n = c for every n when `fixed` is set.
struct DeviationSchedule {
    std::vector<std::size_t> n_values;
    double alpha = 0.25;
    double c = 1.0;
    Vector b;
    bool fixed = false;

    static DeviationSchedule power(std::vector<std::size_t> n_values, double alpha, double c = 1.0,
                                   const Vector& b = Vector());
    static DeviationSchedule constant(std::vector<std::size_t> n_values, double u, const Vector& b = Vector());

    [[nodiscard]] double u_n(std::size_t n) const;
    /// Shift b, zero-padded to dimension d when unset.
    [[nodiscard]] Vector shift(int d) const;
    /// n increasing, alpha in (0, 1/2), u_n decreasing and n u_n^2 increasing
    /// between the endpoints. Throws PreconditionError.
    void validate() const;
};

enum class Target { Mle, Bayes, Psi, PosteriorMass };
std::string to_string(Target t);
Target parse_target(const std::string& text);

/// An estimator event {statistic in u_n Omega} in I(theta0)-standardized
/// coordinates centred at theta0 + u_n b. PosteriorMass is the event
/// {Q_n(theta0 + u_n b + u_n I^{-1/2} Omega) > level}.
struct EventSpec {
    Target target = Target::Mle;
    RegionSpec region;
    double level = 0.5;
    Prior prior = Prior::flat();
    LossSpec loss = LossSpec::power_loss(2.0);
    /// Truncation for psi_n; infinite means no truncation.
    double eps = std::numeric_limits<double>::infinity();
    int resolution = 128;
};

/// Evaluates one event on samples of a fixed size. Thread-safe.
class EventEvaluator {
public:
    EventEvaluator(const EventSpec& spec, const ParametricFamily& family, const Vector& theta0, std::size_t n,
                   double u_n, const Vector& b);

    /// Standardized statistic for mle, bayes and psi targets.
    [[nodiscard]] Vector statistic(std::span<const double> obs) const;
    /// Q_n of the moving region (posterior_mass target).
    [[nodiscard]] double posterior_mass_of(std::span<const double> obs) const;
    [[nodiscard]] bool occurs(std::span<const double> obs) const;

    [[nodiscard]] const Vector& reference() const { return ref_; }
    [[nodiscard]] const FisherInfo& fisher() const { return info_; }

private:
    EventSpec spec_;
    const ParametricFamily* family_;
    Vector theta0_;
    std::size_t n_;
    double u_n_;
    Vector ref_;
    FisherInfo info_;
    std::optional<LanModel> lan_;
    bool conjugate_;
};

enum class Method { Crude, Tilted, Exact };
std::string to_string(Method m);
Method parse_method(const std::string& text);

struct McOptions {
    Method method = Method::Tilted;
    std::size_t n_reps = 100000;
    std::uint64_t seed = 1;
    /// 0 means the number of hardware threads.
    unsigned workers = 0;
    /// Tilt in parameter units: replications are drawn under
    /// theta0 + u_n b + u_n b_tilt. Unset means (1 + margin) I^{-1/2} x* with
    /// x* the point of Omega nearest the origin.
    std::optional<Vector> b_tilt;
    double margin = 0.1;
};

struct ProbEstimate {
    double p_hat = 0.0;
    /// log p_hat, or log of the one-sided bound when no replication hit.
    double log_p = 0.0;
    double stderr_p = 0.0;
    double stderr_log = 0.0;
    Method method = Method::Crude;
    Vector b_tilt;
    Vector theta_gen;
    std::size_t n_reps = 0;
    std::uint64_t seed = 0;
    std::size_t hits = 0;
    bool zero_hits = false;
    /// p < upper_bound = 3 / n_reps when zero_hits.
    double upper_bound = 0.0;
    /// (sum v)^2 / sum v^2 over the weighted indicators.
    double ess = 0.0;
    bool degenerate_weights = false;
    std::vector<std::string> warnings;
};

/// Crude or tilted Monte Carlo over replications drawn from per-replication
/// streams; results do not depend on the worker count.
ProbEstimate estimate_prob(const EventSpec& event, const ParametricFamily& family, const Vector& theta0,
                           std::size_t n, double u_n, const Vector& b, const McOptions& options);

/// Exact probability where a closed form exists: gaussian (all targets;
/// posterior mass with half-spaces), bernoulli (all targets, by enumeration),
/// exponential and laplace (mle). Throws PreconditionError otherwise.
ProbEstimate exact_prob(const EventSpec& event, const ParametricFamily& family, const Vector& theta0,
                        std::size_t n, double u_n, const Vector& b);

/// Generic event on a raw sample; must be safe to call concurrently.
using SampleEvent = std::function<bool(std::span<const double>)>;

/// Monte Carlo core: replications drawn under theta_sample, indicators
/// weighted by prod f(X, theta_nominal) / f(X, theta_sample). Only n_reps,
/// seed, workers and the method label are read from `options`.
ProbEstimate estimate_event(const SampleEvent& event, const ParametricFamily& family, const Vector& theta_nominal,
                            const Vector& theta_sample, std::size_t n, const McOptions& options);

struct Budget {
    Method method = Method::Tilted;
    std::size_t n_reps = 100000;
    /// Cap on n * n_reps summed over a curve.
    double max_draws = 1e9;
    std::uint64_t seed = 1;
    unsigned workers = 0;
    double margin = 0.1;
    std::optional<Vector> b_tilt;
};

struct RatePoint {
    std::size_t n = 0;
    double u_n = 0.0;
    ProbEstimate estimate;
    double normalized_rate = 0.0;
};

struct RateCurve {
    std::string label;
    double target_rate = 0.0;
    std::vector<RatePoint> points;

    /// Columns n,u_n,method,p_hat,stderr_log,normalized_rate,target_rate.
    void write_csv(std::ostream& os) const;
    [[nodiscard]] std::string csv() const;
};

inline constexpr const char* kRateCsvHeader = "n,u_n,method,p_hat,stderr_log,normalized_rate,target_rate";

/// -log p / (n u^2 / 2).
double normalized_rate(double log_p, std::size_t n, double u_n);

RateCurve ldp_curve(const EventSpec& event, const ParametricFamily& family, const Vector& theta0,
                    const DeviationSchedule& schedule, const Budget& budget);

/// Discrepancies between the estimator and its score surrogates on one sample,
/// all centred at the reference theta0 + u_n b with v = theta_hat - reference:
///   gap     = |I^{1/2} v - 2 n^{-1/2} psi_n|
///   psi_lr  = |sum log f(X, theta_hat)/f(X, ref) - 2 psi_n' psi_n|
///   lr_wald = |2 sum log f(X, theta_hat)/f(X, ref) - n v' I v|
struct Discrepancies {
    double gap = 0.0;
    double psi_lr = 0.0;
    double lr_wald = 0.0;
    Vector theta_hat;
};

Discrepancies discrepancies(const ParametricFamily& family, std::span<const double> obs, const LanModel& model);

struct EquivalenceCurves {
    RateCurve gap;      // threshold delta u_n
    RateCurve psi_lr;   // threshold delta n u_n^2
    RateCurve lr_wald;  // threshold 2 delta n u_n^2
};

/// Tail probabilities of the three discrepancies along the schedule; the
/// tilt defaults to 1.1 standardized units along the first axis.
EquivalenceCurves equivalence_tail(const ParametricFamily& family, const Vector& theta0,
                                   const DeviationSchedule& schedule, double delta, const Budget& budget,
                                   double eps = std::numeric_limits<double>::infinity());

struct BahadurRate {
    double u = 0.0;
    RateCurve curve;
    /// Rate at the largest n.
    double rate_at_max_n = 0.0;
    /// Fit r_i - log(n_i u^2)/(n_i u^2) = R + c/(n_i u^2); R estimates the n -> inf limit.
    double limiting_rate = 0.0;
    double limiting_stderr = 0.0;
};

/// n grid used for each u: n_large / 16, / 8, / 4, / 2 and n_large.
std::vector<std::size_t> bahadur_n_grid(std::size_t n_large);

/// For each fixed u, an LDP curve with u_n = u over the n grid. Monte Carlo
/// budgets raise BudgetError when exp(-n u^2 R / 2) < 1e-12.
std::vector<BahadurRate> bahadur_sweep(const EventSpec& event, const ParametricFamily& family, const Vector& theta0,
                                       const std::vector<double>& u_values, std::size_t n_large,
                                       const Budget& budget);

}  // namespace modev
