#include "modev/rarevent.hpp"

#include "modev/errors.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>
#include <thread>
#include <utility>

namespace modev {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Fixed-order pairwise summation: the result depends only on the values.
double pairwise_sum(const double* x, std::size_t n) {
    if (n <= 16) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

double pairwise_sum(const std::vector<double>& x) { return pairwise_sum(x.data(), x.size()); }

unsigned resolve_workers(unsigned workers) {
    if (workers > 0) return workers;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

// Runs body(lo, hi) over contiguous chunks of [0, count).
template <class Body>
void parallel_chunks(std::size_t count, unsigned workers, Body body) {
    const std::size_t w = std::min<std::size_t>(resolve_workers(workers), std::max<std::size_t>(count, 1));
    if (w <= 1) {
        body(std::size_t{0}, count);
        return;
    }
    std::vector<std::thread> threads;
    std::exception_ptr failure;
    std::mutex mu;
    for (std::size_t t = 0; t < w; ++t) {
        const std::size_t lo = count * t / w;
        const std::size_t hi = count * (t + 1) / w;
        threads.emplace_back([&, lo, hi] {
            try {
                body(lo, hi);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& th : threads) th.join();
    if (failure) std::rethrow_exception(failure);
}

std::uint64_t point_seed(std::uint64_t seed, std::size_t n) {
    std::uint64_t s = seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(n) + 1));
    return splitmix64(s);
}

// log(exp(a) + exp(b)).
double log_add(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

// log(A - B) given log A >= log B.
double log_sub(double la, double lb) {
    if (lb == -kInf) return la;
    if (!(la > lb)) return -kInf;
    return la + std::log1p(-std::exp(lb - la));
}

// log P(a < Z < b) for standard normal Z.
double log_normal_interval(double a, double b) {
    if (!(b > a)) return -kInf;
    if (a >= 0.0) return log_sub(log_normal_sf(a), log_normal_sf(b));
    if (b <= 0.0) return log_sub(log_normal_sf(-b), log_normal_sf(-a));
    return std::log1p(-normal_sf(-a) - normal_sf(b));
}

double normal_interval(double a, double b) {
    if (!(b > a)) return 0.0;
    if (a >= 0.0) return normal_sf(a) - normal_sf(b);
    if (b <= 0.0) return normal_sf(-b) - normal_sf(-a);
    return 1.0 - normal_sf(-a) - normal_sf(b);
}

using Interval = std::pair<double, double>;

// Omega in one dimension as disjoint open intervals, in increasing order.
std::vector<Interval> region_intervals(const RegionSpec& r) {
    if (r.dim != 1) throw DimensionError("exact oracle: region must be one-dimensional");
    switch (r.shape) {
        case RegionSpec::Shape::HalfSpace:
            if (r.a[0] > 0) return {{r.c, kInf}};
            return {{-kInf, -r.c}};
        case RegionSpec::Shape::ComplementBall:
            return {{-kInf, -r.r}, {r.r, kInf}};
        case RegionSpec::Shape::Box:
            return {{r.lo[0], r.hi[0]}};
        case RegionSpec::Shape::ComplementBox:
            return {{-kInf, r.lo[0]}, {r.hi[0], kInf}};
    }
    return {};
}

bool is_gaussian(const ParametricFamily& f) { return f.name().rfind("gaussian", 0) == 0; }

bool squared_loss(const LossSpec& l) {
    return l.shape == LossSpec::Shape::Power && l.power == 2.0 && l.norm != LossSpec::Norm::Max;
}

ProbEstimate aggregate(const std::vector<double>& lv, Method method, std::uint64_t seed) {
    ProbEstimate e;
    e.method = method;
    e.n_reps = lv.size();
    e.seed = seed;
    const double N = static_cast<double>(lv.size());
    double m = -kInf;
    for (double v : lv) {
        if (v > -kInf) {
            ++e.hits;
            m = std::max(m, v);
        }
    }
    if (e.hits == 0) {
        e.zero_hits = true;
        e.upper_bound = 3.0 / N;
        e.p_hat = 0.0;
        e.log_p = std::log(e.upper_bound);
        e.stderr_p = 0.0;
        e.stderr_log = kNaN;
        e.ess = 0.0;
        e.degenerate_weights = true;
        e.warnings.push_back("no replication hit the event; reporting p < 3/n_reps");
        return e;
    }
    std::vector<double> scaled(lv.size());
    for (std::size_t i = 0; i < lv.size(); ++i) scaled[i] = lv[i] > -kInf ? std::exp(lv[i] - m) : 0.0;
    const double s = pairwise_sum(scaled);
    const double mean = s / N;
    std::vector<double> tmp(lv.size());
    for (std::size_t i = 0; i < lv.size(); ++i) tmp[i] = (scaled[i] - mean) * (scaled[i] - mean);
    const double var = N > 1 ? pairwise_sum(tmp) / (N - 1.0) : 0.0;
    for (std::size_t i = 0; i < lv.size(); ++i) tmp[i] = scaled[i] * scaled[i];
    const double s2 = pairwise_sum(tmp);

    e.log_p = m + std::log(mean);
    e.p_hat = std::exp(e.log_p);
    e.stderr_p = std::exp(m) * std::sqrt(var / N);
    e.stderr_log = std::sqrt(var / N) / mean;
    e.ess = s * s / s2;
    if (e.ess < 0.01 * N) {
        e.degenerate_weights = true;
        char buf[128];
        std::snprintf(buf, sizeof buf, "DegenerateWeights: effective sample size %.1f below 1%% of %zu replications",
                      e.ess, lv.size());
        e.warnings.emplace_back(buf);
    }
    return e;
}

// Draws every replication, records per-event log weighted indicators.
std::vector<ProbEstimate> mc_core(const ParametricFamily& family, const Vector& nominal, const Vector& sample,
                                  std::size_t n, const McOptions& opt, std::size_t n_events,
                                  const std::function<void(std::span<const double>, std::vector<char>&)>& events) {
    if (n == 0) throw PreconditionError("estimate_prob: n must be positive");
    if (opt.n_reps < 1000) throw PreconditionError("estimate_prob: n_reps must be at least 1000");
    family.require_in_domain(nominal, "theta_gen");
    if (!family.theta_domain().contains_open(sample)) {
        throw TiltDomainError("tilt parameter " + format_vector(sample) + " outside the parameter domain");
    }
    const bool weighted = !(sample - nominal).isZero(0.0);
    const std::size_t k = static_cast<std::size_t>(family.obs_dim());
    std::vector<std::vector<double>> lv(n_events, std::vector<double>(opt.n_reps, -kInf));

    parallel_chunks(opt.n_reps, opt.workers, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> buf(n * k);
        std::vector<char> hit(n_events, 0);
        for (std::size_t r = lo; r < hi; ++r) {
            Rng rng(opt.seed, r);
            family.sample_into(sample, rng, buf);
            std::fill(hit.begin(), hit.end(), 0);
            events(buf, hit);
            bool any = false;
            for (char h : hit) any = any || h;
            if (!any) continue;
            double lw = 0.0;
            if (weighted) {
                if (auto summary = family.summarize(buf)) {
                    lw = family.log_likelihood_summary(*summary, nominal) -
                         family.log_likelihood_summary(*summary, sample);
                } else {
                    std::vector<double> terms(n);
                    for (std::size_t i = 0; i < n; ++i) {
                        terms[i] = family.log_ratio_raw(Obs(buf.data() + i * k, k), sample, nominal);
                    }
                    lw = pairwise_sum(terms);
                }
            }
            for (std::size_t j = 0; j < n_events; ++j) {
                if (hit[j]) lv[j][r] = lw;
            }
        }
    });

    std::vector<ProbEstimate> out;
    for (std::size_t j = 0; j < n_events; ++j) {
        ProbEstimate e = aggregate(lv[j], opt.method, opt.seed);
        e.theta_gen = sample;
        out.push_back(std::move(e));
    }
    return out;
}

ProbEstimate exact_estimate(double log_p) {
    ProbEstimate e;
    e.method = Method::Exact;
    e.log_p = log_p;
    e.p_hat = std::exp(log_p);
    e.stderr_p = 0.0;
    e.stderr_log = 0.0;
    e.ess = kInf;
    return e;
}

// log P(xbar in union of intervals), xbar ~ N(mean, 1/n).
double gaussian_mean_log_prob(const std::vector<Interval>& xs, double mean, std::size_t n) {
    const double rn = std::sqrt(static_cast<double>(n));
    double lp = -kInf;
    for (const auto& [a, b] : xs) lp = log_add(lp, log_normal_interval((a - mean) * rn, (b - mean) * rn));
    return lp;
}

ProbEstimate exact_gaussian(const EventSpec& ev, const ParametricFamily& family, std::size_t n, double u_n,
                            const Vector& ref) {
    if (family.dim() != 1) throw PreconditionError("exact oracle: gaussian family must be one-dimensional");
    const double r = ref[0];
    const double nd = static_cast<double>(n);
    // Posterior mean m = slope * xbar + shift and variance V.
    double slope = 1.0, shift = 0.0, V = 1.0 / nd;
    if (ev.prior.kind == Prior::Kind::Gaussian) {
        const double prec = 1.0 / (ev.prior.sd[0] * ev.prior.sd[0]);
        slope = nd / (nd + prec);
        shift = ev.prior.mean[0] * prec / (nd + prec);
        V = 1.0 / (nd + prec);
    }
    std::vector<Interval> xs;
    auto map_estimator = [&](double a, double b) {
        // estimator m in (a, b)  <=>  xbar in ((a - shift)/slope, (b - shift)/slope)
        return Interval{(a - shift) / slope, (b - shift) / slope};
    };
    std::vector<std::string> warnings;
    switch (ev.target) {
        case Target::Mle:
        case Target::Psi:
            for (const auto& [a, b] : region_intervals(ev.region)) xs.emplace_back(r + u_n * a, r + u_n * b);
            if (ev.target == Target::Psi && !std::isinf(ev.eps)) {
                warnings.emplace_back("exact oracle neglects score truncation");
            }
            break;
        case Target::Bayes:
            if (!squared_loss(ev.loss)) throw PreconditionError("exact oracle: bayes target needs squared loss");
            for (const auto& [a, b] : region_intervals(ev.region)) xs.push_back(map_estimator(r + u_n * a, r + u_n * b));
            break;
        case Target::PosteriorMass: {
            if (ev.region.shape != RegionSpec::Shape::HalfSpace) {
                throw PreconditionError("exact oracle: posterior mass needs a half-space region");
            }
            const double q = std::sqrt(V) * normal_quantile(ev.level);
            if (ev.region.a[0] > 0) {
                xs.push_back(map_estimator(r + u_n * ev.region.c + q, kInf));
            } else {
                xs.push_back(map_estimator(-kInf, r - u_n * ev.region.c - q));
            }
            break;
        }
    }
    ProbEstimate e = exact_estimate(gaussian_mean_log_prob(xs, r, n));
    e.theta_gen = ref;
    e.warnings = std::move(warnings);
    return e;
}

ProbEstimate exact_bernoulli(const EventEvaluator& evaluator, std::size_t n, const Vector& ref) {
    const double t = ref[0];
    const double nd = static_cast<double>(n);
    std::vector<double> obs(n, 0.0);
    double lp = -kInf;
    for (std::size_t k = 0; k <= n; ++k) {
        if (k > 0) obs[k - 1] = 1.0;
        if (!evaluator.occurs(obs)) continue;
        const double kd = static_cast<double>(k);
        const double lpmf = std::lgamma(nd + 1) - std::lgamma(kd + 1) - std::lgamma(nd - kd + 1) + kd * std::log(t) +
                            (nd - kd) * std::log1p(-t);
        lp = log_add(lp, lpmf);
    }
    ProbEstimate e = exact_estimate(lp);
    e.theta_gen = ref;
    return e;
}

// Estimator intervals for a one-dimensional mle event.
std::vector<Interval> mle_intervals(const EventSpec& ev, const EventEvaluator& evaluator, double u_n) {
    const double r = evaluator.reference()[0];
    const double root = evaluator.fisher().sqrt(0, 0);
    std::vector<Interval> out;
    for (const auto& [a, b] : region_intervals(ev.region)) out.emplace_back(r + u_n * a / root, r + u_n * b / root);
    return out;
}

ProbEstimate exact_exponential(const EventSpec& ev, const EventEvaluator& evaluator, std::size_t n, double u_n) {
    using boost::math::gamma_p;
    using boost::math::gamma_q;
    const double rate = evaluator.reference()[0];
    const double nd = static_cast<double>(n);
    // theta_hat = n / S with rate * S ~ Gamma(n, 1); theta_hat in (a, b) <=> S in (n/b, n/a).
    auto log_between = [&](double x1, double x2) {
        if (!(x2 > x1)) return -kInf;
        auto lq = [&](double x) { return x <= 0 ? 0.0 : (std::isinf(x) ? -kInf : std::log(gamma_q(nd, x))); };
        auto lpf = [&](double x) { return x <= 0 ? -kInf : (std::isinf(x) ? 0.0 : std::log(gamma_p(nd, x))); };
        if (x1 >= nd) return log_sub(lq(x1), lq(x2));
        if (x2 <= nd) return log_sub(lpf(x2), lpf(x1));
        const double lo = x1 <= 0 ? 0.0 : gamma_p(nd, x1);
        const double hi = std::isinf(x2) ? 0.0 : gamma_q(nd, x2);
        return std::log1p(-lo - hi);
    };
    double lp = -kInf;
    for (const auto& [a, b] : mle_intervals(ev, evaluator, u_n)) {
        const double s1 = std::isinf(b) ? 0.0 : (b <= 0 ? kInf : nd / b);
        const double s2 = a <= 0 ? kInf : nd / a;
        lp = log_add(lp, log_between(rate * s1, rate * s2));
    }
    ProbEstimate e = exact_estimate(lp);
    e.theta_gen = evaluator.reference();
    return e;
}

ProbEstimate exact_laplace(const EventSpec& ev, const EventEvaluator& evaluator, std::size_t n, double u_n) {
    using boost::math::ibeta;
    const double loc = evaluator.reference()[0];
    // Lower median: order statistic m = floor((n - 1) / 2) + 1.
    const double m = static_cast<double>((n - 1) / 2 + 1);
    const double nd = static_cast<double>(n);
    auto cdf = [&](double t) { return t < loc ? 0.5 * std::exp(t - loc) : 1.0 - 0.5 * std::exp(loc - t); };
    auto sf = [&](double t) { return t > loc ? 0.5 * std::exp(loc - t) : 1.0 - 0.5 * std::exp(t - loc); };
    // P(X_(m) <= t) = P(Bin(n, F(t)) >= m); P(X_(m) > t) = P(Bin(n, 1 - F(t)) >= n - m + 1).
    auto log_lower = [&](double t) {
        if (std::isinf(t)) return t > 0 ? 0.0 : -kInf;
        return std::log(ibeta(m, nd - m + 1.0, cdf(t)));
    };
    auto log_upper = [&](double t) {
        if (std::isinf(t)) return t < 0 ? 0.0 : -kInf;
        return std::log(ibeta(nd - m + 1.0, m, sf(t)));
    };
    double lp = -kInf;
    for (const auto& [a, b] : mle_intervals(ev, evaluator, u_n)) {
        double piece;
        if (a >= loc) {
            piece = log_sub(log_upper(a), log_upper(b));
        } else if (b <= loc) {
            piece = log_sub(log_lower(b), log_lower(a));
        } else {
            piece = std::log1p(-std::exp(log_lower(a)) - std::exp(log_upper(b)));
        }
        lp = log_add(lp, piece);
    }
    ProbEstimate e = exact_estimate(lp);
    e.theta_gen = evaluator.reference();
    return e;
}

Vector shift_or_zero(const Vector& b, int d) { return b.size() == 0 ? Vector(Vector::Zero(d)) : b; }

}  // namespace

// ----------------------------------------------------------------------------
// Normal helpers

double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double log_normal_sf(double z) {
    if (std::isinf(z)) return z > 0 ? -kInf : 0.0;
    if (z < 30.0) return std::log(normal_sf(z));
    // Mills-ratio series; the first omitted term is O(z^-8).
    const double z2 = z * z;
    const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
    return -0.5 * z2 - std::log(z) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw PreconditionError("normal_quantile: p must lie in (0, 1)");
    // Acklam's rational approximation, then two Newton steps.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01,  -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    double x;
    if (p < 0.02425) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p > 1.0 - 0.02425) {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    for (int it = 0; it < 2; ++it) {
        const double err = normal_cdf(x) - p;
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        if (pdf <= 0.0) break;
        x -= err / pdf;
    }
    return x;
}

// ----------------------------------------------------------------------------
// Schedule

DeviationSchedule DeviationSchedule::power(std::vector<std::size_t> n_values, double alpha, double c, const Vector& b) {
    DeviationSchedule s;
    s.n_values = std::move(n_values);
    s.alpha = alpha;
    s.c = c;
    s.b = b;
    return s;
}

DeviationSchedule DeviationSchedule::constant(std::vector<std::size_t> n_values, double u, const Vector& b) {
    DeviationSchedule s;
    s.n_values = std::move(n_values);
    s.alpha = 0.0;
    s.c = u;
    s.b = b;
    s.fixed = true;
    return s;
}

double DeviationSchedule::u_n(std::size_t n) const {
    if (fixed) return c;
    return c * std::pow(static_cast<double>(n), -alpha);
}

Vector DeviationSchedule::shift(int d) const {
    if (b.size() == 0) return Vector::Zero(d);
    if (b.size() != d) throw DimensionError("schedule shift b has the wrong dimension");
    return b;
}

void DeviationSchedule::validate() const {
    if (n_values.empty()) throw PreconditionError("schedule: n_values is empty");
    for (std::size_t i = 0; i < n_values.size(); ++i) {
        if (n_values[i] == 0) throw PreconditionError("schedule: n must be positive");
        if (i > 0 && n_values[i] <= n_values[i - 1]) throw PreconditionError("schedule: n_values must increase");
    }
    if (!(c > 0.0) || !std::isfinite(c)) throw PreconditionError("schedule: scale c must be positive");
    if (!fixed && !(alpha > 0.0 && alpha < 0.5)) throw PreconditionError("schedule: alpha must lie in (0, 1/2)");
    if (n_values.size() >= 2) {
        const std::size_t n0 = n_values.front(), n1 = n_values.back();
        const double u0 = u_n(n0), u1 = u_n(n1);
        if (!fixed && !(u1 < u0)) throw PreconditionError("schedule: u_n must decrease");
        if (!(n1 * u1 * u1 > n0 * u0 * u0)) throw PreconditionError("schedule: n u_n^2 must increase");
    }
}

// ----------------------------------------------------------------------------
// Names

std::string to_string(Target t) {
    switch (t) {
        case Target::Mle: return "mle";
        case Target::Bayes: return "bayes";
        case Target::Psi: return "psi";
        case Target::PosteriorMass: return "posterior_mass";
    }
    return "?";
}

Target parse_target(const std::string& text) {
    if (text == "mle") return Target::Mle;
    if (text == "bayes") return Target::Bayes;
    if (text == "psi") return Target::Psi;
    if (text == "posterior_mass") return Target::PosteriorMass;
    throw ConfigError("unknown target '" + text + "'");
}

std::string to_string(Method m) {
    switch (m) {
        case Method::Crude: return "crude";
        case Method::Tilted: return "tilted";
        case Method::Exact: return "exact";
    }
    return "?";
}

Method parse_method(const std::string& text) {
    if (text == "crude") return Method::Crude;
    if (text == "tilted") return Method::Tilted;
    if (text == "exact") return Method::Exact;
    throw ConfigError("unknown method '" + text + "'");
}

// ----------------------------------------------------------------------------
// Events

EventEvaluator::EventEvaluator(const EventSpec& spec, const ParametricFamily& family, const Vector& theta0,
                               std::size_t n, double u_n, const Vector& b)
    : spec_(spec), family_(&family), theta0_(theta0), n_(n), u_n_(u_n) {
    const int d = family.dim();
    if (n == 0) throw PreconditionError("event: n must be positive");
    if (!(u_n > 0.0)) throw PreconditionError("event: u_n must be positive");
    if (spec.region.dim != d) throw DimensionError("event: region dimension differs from the family");
    family.require_in_domain(theta0, "theta0");
    const Vector shift = shift_or_zero(b, d);
    if (shift.size() != d) throw DimensionError("event: shift b has the wrong dimension");
    ref_ = theta0 + u_n * shift;
    family.require_in_domain(ref_, "theta0 + u_n b");
    info_ = fisher_information(family, theta0);
    if (spec.target == Target::Psi) lan_.emplace(family, theta0, TruncationPolicy{spec.eps, u_n}, shift);
    if (spec.target == Target::PosteriorMass && !(spec.level > 0.0 && spec.level < 1.0)) {
        throw PreconditionError("event: posterior mass level must lie in (0, 1)");
    }
    conjugate_ = spec.target == Target::PosteriorMass && is_gaussian(family) &&
                 !(spec.region.shape == RegionSpec::Shape::ComplementBall && d > 1);
}

Vector EventEvaluator::statistic(std::span<const double> obs) const {
    Vector est;
    switch (spec_.target) {
        case Target::Mle:
            est = mle_fast(*family_, obs).theta_hat;
            break;
        case Target::Bayes: {
            const Box box = default_posterior_box(*family_, obs, u_n_);
            const auto post = posterior_grid(*family_, obs, spec_.prior, box, spec_.resolution);
            est = bayes_estimate(post, spec_.loss);
            break;
        }
        case Target::Psi: {
            const Vector psi = lan_->psi(obs);
            return 2.0 * psi / (std::sqrt(static_cast<double>(n_)) * u_n_);
        }
        case Target::PosteriorMass:
            throw PreconditionError("posterior_mass target has no estimator statistic");
    }
    return info_.sqrt * (est - ref_) / u_n_;
}

double EventEvaluator::posterior_mass_of(std::span<const double> obs) const {
    if (!conjugate_) {
        const Box box = default_posterior_box(*family_, obs, u_n_);
        const auto post = posterior_grid(*family_, obs, spec_.prior, box, spec_.resolution);
        return posterior_mass(post, spec_.region, ref_, Matrix(info_.sqrt / u_n_)).mass;
    }
    // Gaussian location with identity information: the posterior is
    // N(m, diag V) up to truncation to the parameter box.
    const int d = family_->dim();
    const std::size_t k = static_cast<std::size_t>(d);
    const double nd = static_cast<double>(obs.size() / k);
    Vector mu(d), sd(d);
    for (int j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = static_cast<std::size_t>(j); i < obs.size(); i += k) s += obs[i];
        double m = s / nd, v = 1.0 / nd;
        if (spec_.prior.kind == Prior::Kind::Gaussian) {
            const double prec = 1.0 / (spec_.prior.sd[j] * spec_.prior.sd[j]);
            m = (s + spec_.prior.mean[j] * prec) / (nd + prec);
            v = 1.0 / (nd + prec);
        }
        // Standardized coordinates x = (theta - ref) / u_n.
        mu[j] = (m - ref_[j]) / u_n_;
        sd[j] = std::sqrt(v) / u_n_;
    }
    const RegionSpec& r = spec_.region;
    auto box_prob = [&](const Vector& lo, const Vector& hi) {
        double p = 1.0;
        for (int j = 0; j < d; ++j) p *= normal_interval((lo[j] - mu[j]) / sd[j], (hi[j] - mu[j]) / sd[j]);
        return p;
    };
    switch (r.shape) {
        case RegionSpec::Shape::HalfSpace: {
            const double s = std::sqrt((r.a.array().square() * sd.array().square()).sum());
            return normal_sf((r.c - r.a.dot(mu)) / s);
        }
        case RegionSpec::Shape::Box:
            return box_prob(r.lo, r.hi);
        case RegionSpec::Shape::ComplementBox:
            return 1.0 - box_prob(r.lo, r.hi);
        case RegionSpec::Shape::ComplementBall:
            return 1.0 - normal_interval((-r.r - mu[0]) / sd[0], (r.r - mu[0]) / sd[0]);
    }
    return 0.0;
}

bool EventEvaluator::occurs(std::span<const double> obs) const {
    if (spec_.target == Target::PosteriorMass) return posterior_mass_of(obs) > spec_.level;
    return spec_.region.contains(statistic(obs));
}

// ----------------------------------------------------------------------------
// Probability estimates

ProbEstimate estimate_event(const SampleEvent& event, const ParametricFamily& family, const Vector& theta_nominal,
                            const Vector& theta_sample, std::size_t n, const McOptions& options) {
    auto out = mc_core(family, theta_nominal, theta_sample, n, options, 1,
                       [&](std::span<const double> obs, std::vector<char>& hit) { hit[0] = event(obs) ? 1 : 0; });
    return std::move(out.front());
}

ProbEstimate estimate_prob(const EventSpec& event, const ParametricFamily& family, const Vector& theta0,
                           std::size_t n, double u_n, const Vector& b, const McOptions& options) {
    if (options.method == Method::Exact) return exact_prob(event, family, theta0, n, u_n, b);
    const EventEvaluator evaluator(event, family, theta0, n, u_n, b);
    const Vector& ref = evaluator.reference();
    Vector b_tilt = Vector::Zero(family.dim());
    if (options.method == Method::Tilted) {
        if (options.b_tilt) {
            if (options.b_tilt->size() != family.dim()) throw DimensionError("b_tilt has the wrong dimension");
            b_tilt = *options.b_tilt;
        } else {
            b_tilt = (1.0 + options.margin) * evaluator.fisher().inv_sqrt * event.region.nearest_point();
        }
    }
    const Vector sample = ref + u_n * b_tilt;
    ProbEstimate e = estimate_event([&](std::span<const double> obs) { return evaluator.occurs(obs); }, family, ref,
                                    sample, n, options);
    e.b_tilt = b_tilt;
    return e;
}

ProbEstimate exact_prob(const EventSpec& event, const ParametricFamily& family, const Vector& theta0,
                        std::size_t n, double u_n, const Vector& b) {
    const EventEvaluator evaluator(event, family, theta0, n, u_n, b);
    const std::string& name = family.name();
    if (name == "gaussian") return exact_gaussian(event, family, n, u_n, evaluator.reference());
    if (name == "bernoulli") return exact_bernoulli(evaluator, n, evaluator.reference());
    if (event.target == Target::Mle && name == "exponential") return exact_exponential(event, evaluator, n, u_n);
    if (event.target == Target::Mle && name == "laplace") return exact_laplace(event, evaluator, n, u_n);
    throw PreconditionError("no exact oracle for target " + to_string(event.target) + " in family " + name);
}

// ----------------------------------------------------------------------------
// Curves

double normalized_rate(double log_p, std::size_t n, double u_n) {
    return -log_p / (0.5 * static_cast<double>(n) * u_n * u_n);
}

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

RatePoint make_point(std::size_t n, double u, ProbEstimate e) {
    RatePoint p;
    p.n = n;
    p.u_n = u;
    p.normalized_rate = normalized_rate(e.log_p, n, u);
    p.estimate = std::move(e);
    return p;
}

void check_draws(const std::vector<std::size_t>& ns, const Budget& budget) {
    if (budget.method == Method::Exact) return;
    double draws = 0.0;
    for (std::size_t n : ns) draws += static_cast<double>(n) * static_cast<double>(budget.n_reps);
    if (draws > budget.max_draws) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "curve needs %.3g sample draws, above the cap of %.3g", draws, budget.max_draws);
        throw BudgetError(buf);
    }
}

McOptions options_for(const Budget& budget, std::size_t n) {
    McOptions o;
    o.method = budget.method;
    o.n_reps = budget.n_reps;
    o.seed = point_seed(budget.seed, n);
    o.workers = budget.workers;
    o.b_tilt = budget.b_tilt;
    o.margin = budget.margin;
    return o;
}

}  // namespace

void RateCurve::write_csv(std::ostream& os) const {
    os << kRateCsvHeader << '\n';
    for (const auto& p : points) {
        os << p.n << ',' << fmt(p.u_n) << ',' << to_string(p.estimate.method) << ',' << fmt(p.estimate.p_hat) << ','
           << fmt(p.estimate.stderr_log) << ',' << fmt(p.normalized_rate) << ',' << fmt(target_rate) << '\n';
    }
}

std::string RateCurve::csv() const {
    std::ostringstream os;
    write_csv(os);
    return os.str();
}

RateCurve ldp_curve(const EventSpec& event, const ParametricFamily& family, const Vector& theta0,
                    const DeviationSchedule& schedule, const Budget& budget) {
    schedule.validate();
    check_draws(schedule.n_values, budget);
    RateCurve curve;
    curve.label = to_string(event.target) + " " + event.region.describe();
    curve.target_rate = event.region.rate_functional();
    const Vector b = schedule.shift(family.dim());
    for (std::size_t n : schedule.n_values) {
        const double u = schedule.u_n(n);
        curve.points.push_back(make_point(n, u, estimate_prob(event, family, theta0, n, u, b, options_for(budget, n))));
    }
    return curve;
}

Discrepancies discrepancies(const ParametricFamily& family, std::span<const double> obs, const LanModel& model) {
    const std::size_t n = model.sample_size(obs);
    if (n == 0) throw PreconditionError("discrepancies: empty sample");
    Discrepancies out;
    out.theta_hat = mle_fast(family, obs).theta_hat;
    const Vector v = out.theta_hat - model.reference();
    const FisherInfo& info = model.fisher();
    const double rn = std::sqrt(static_cast<double>(n));
    const Vector psi = model.psi_from_sum(model.score_sum(obs), n);
    const double llr = model.loglr_sum(obs, v);
    out.gap = (info.sqrt * v - 2.0 * psi / rn).norm();
    out.psi_lr = std::abs(llr - 2.0 * psi.squaredNorm());
    out.lr_wald = std::abs(2.0 * llr - static_cast<double>(n) * v.dot(info.matrix * v));
    return out;
}

EquivalenceCurves equivalence_tail(const ParametricFamily& family, const Vector& theta0,
                                   const DeviationSchedule& schedule, double delta, const Budget& budget, double eps) {
    if (!(delta > 0.0)) throw PreconditionError("equivalence_tail: delta must be positive");
    schedule.validate();
    check_draws(schedule.n_values, budget);
    family.require_in_domain(theta0, "theta0");
    const int d = family.dim();
    const Vector b = schedule.shift(d);

    EquivalenceCurves out;
    out.gap.label = "equivalence gap";
    out.psi_lr.label = "equivalence psi_lr";
    out.lr_wald.label = "equivalence lr_wald";
    for (RateCurve* c : {&out.gap, &out.psi_lr, &out.lr_wald}) c->target_rate = kInf;

    for (std::size_t n : schedule.n_values) {
        const double u = schedule.u_n(n);
        const double nu2 = static_cast<double>(n) * u * u;
        const LanModel model(family, theta0, TruncationPolicy{eps, u}, b);
        const double th[3] = {delta * u, delta * nu2, 2.0 * delta * nu2};
        std::vector<ProbEstimate> est;
        if (budget.method == Method::Exact) {
            if (!is_gaussian(family)) {
                throw PreconditionError("equivalence_tail: exact method only for the gaussian family");
            }
            // Gaussian location: the three discrepancies vanish identically.
            for (int j = 0; j < 3; ++j) {
                ProbEstimate e = exact_estimate(-kInf);
                e.theta_gen = model.reference();
                est.push_back(e);
            }
        } else {
            McOptions o = options_for(budget, n);
            Vector b_tilt = Vector::Zero(d);
            if (o.method == Method::Tilted) {
                if (o.b_tilt) {
                    b_tilt = *o.b_tilt;
                } else {
                    Vector e1 = Vector::Zero(d);
                    e1[0] = 1.0;
                    b_tilt = 1.1 * model.fisher().inv_sqrt * e1;
                }
            }
            const Vector& ref = model.reference();
            est = mc_core(family, ref, ref + u * b_tilt, n, o, 3,
                          [&](std::span<const double> obs, std::vector<char>& hit) {
                              const Discrepancies dd = discrepancies(family, obs, model);
                              hit[0] = dd.gap > th[0];
                              hit[1] = dd.psi_lr > th[1];
                              hit[2] = dd.lr_wald > th[2];
                          });
            for (auto& e : est) e.b_tilt = b_tilt;
        }
        out.gap.points.push_back(make_point(n, u, est[0]));
        out.psi_lr.points.push_back(make_point(n, u, est[1]));
        out.lr_wald.points.push_back(make_point(n, u, est[2]));
    }
    return out;
}

std::vector<std::size_t> bahadur_n_grid(std::size_t n_large) {
    if (n_large < 16) throw PreconditionError("bahadur: n_large must be at least 16");
    return {n_large / 16, n_large / 8, n_large / 4, n_large / 2, n_large};
}

std::vector<BahadurRate> bahadur_sweep(const EventSpec& event, const ParametricFamily& family, const Vector& theta0,
                                       const std::vector<double>& u_values, std::size_t n_large,
                                       const Budget& budget) {
    if (u_values.empty()) throw PreconditionError("bahadur: u_values is empty");
    for (std::size_t i = 0; i < u_values.size(); ++i) {
        if (!(u_values[i] > 0.0)) throw PreconditionError("bahadur: u values must be positive");
        if (i > 0 && !(u_values[i] < u_values[i - 1])) throw PreconditionError("bahadur: u values must decrease");
    }
    const double u_min = u_values.back();
    if (!(static_cast<double>(n_large) * u_min * u_min >= 10.0)) {
        throw PreconditionError("bahadur: n_large u^2 must be at least 10 for the smallest u");
    }
    const auto grid = bahadur_n_grid(n_large);
    const double target = event.region.rate_functional();
    if (budget.method != Method::Exact) {
        for (double u : u_values) {
            const double log_pred = -0.5 * static_cast<double>(n_large) * u * u * target;
            if (log_pred < std::log(1e-12)) {
                char buf[200];
                std::snprintf(buf, sizeof buf,
                              "bahadur: predicted probability exp(%.1f) at u=%g, n=%zu is below 1e-12; reduce n_large "
                              "or use the exact method",
                              log_pred, u, n_large);
                throw BudgetError(buf);
            }
        }
    }
    std::vector<BahadurRate> out;
    for (double u : u_values) {
        BahadurRate br;
        br.u = u;
        br.curve = ldp_curve(event, family, theta0, DeviationSchedule::constant(grid, u), budget);
        br.rate_at_max_n = br.curve.points.back().normalized_rate;

        // Least squares over the usable points, with the log correction of
        // Gaussian-type tails when the rate is positive.
        std::vector<double> xs, ys, se;
        for (const auto& p : br.curve.points) {
            if (p.estimate.zero_hits || !std::isfinite(p.normalized_rate)) continue;
            const double z2 = static_cast<double>(p.n) * u * u;
            xs.push_back(1.0 / z2);
            ys.push_back(target > 0.0 ? p.normalized_rate - std::log(z2) / z2 : p.normalized_rate);
            se.push_back(p.estimate.stderr_log / (0.5 * z2));
        }
        if (xs.size() < 2) {
            br.limiting_rate = br.rate_at_max_n;
            br.limiting_stderr = kNaN;
        } else {
            const double m = static_cast<double>(xs.size());
            double xbar = 0.0;
            for (double x : xs) xbar += x / m;
            double sxx = 0.0;
            for (double x : xs) sxx += (x - xbar) * (x - xbar);
            double r = 0.0, var = 0.0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const double w = 1.0 / m - xbar * (xs[i] - xbar) / sxx;
                r += w * ys[i];
                var += w * w * se[i] * se[i];
            }
            br.limiting_rate = r;
            br.limiting_stderr = std::sqrt(var);
        }
        out.push_back(std::move(br));
    }
    return out;
}

}  // namespace modev
