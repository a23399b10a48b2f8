#include "modev/families.hpp"

#include "modev/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace modev {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

std::string describe_vector(const Vector& v) {
    std::ostringstream os;
    os << '(';
    for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
    os << ')';
    return os.str();
}

// ---------------------------------------------------------------------------
// Gaussian location, identity covariance, k = d in {1, 2}.

class GaussianLocation final : public ParametricFamily {
public:
    explicit GaussianLocation(int k)
        : ParametricFamily(k == 1 ? "gaussian" : "gaussian" + std::to_string(k), k, Box::cube(k, -10.0, 10.0),
                           Support{SupportKind::RealLine, k}) {}

    double log_density_raw(Obs x, const Vector& theta) const override {
        double q = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double r = x[j] - theta[static_cast<Eigen::Index>(j)];
            q += r * r;
        }
        return -0.5 * static_cast<double>(x.size()) * kLogTwoPi - 0.5 * q;
    }

    // (to - from)^T (x - (from + to) / 2): exact linear form, no cancellation.
    double log_ratio_raw(Obs x, const Vector& from, const Vector& to) const override {
        double acc = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const auto i = static_cast<Eigen::Index>(j);
            acc += (to[i] - from[i]) * (x[j] - 0.5 * (from[i] + to[i]));
        }
        return acc;
    }

    std::optional<Vector> score_closed_form(Obs x, const Vector& theta0) const override {
        Vector phi(dim());
        for (int j = 0; j < dim(); ++j) phi[j] = 0.5 * (x[static_cast<std::size_t>(j)] - theta0[j]);
        return phi;
    }

    bool score_into(Obs x, const Vector& theta0, double* out) const override {
        for (int j = 0; j < dim(); ++j) out[j] = 0.5 * (x[static_cast<std::size_t>(j)] - theta0[j]);
        return true;
    }

    std::optional<Vector> grad_log_density(Obs x, const Vector& theta) const override {
        Vector g(dim());
        for (int j = 0; j < dim(); ++j) g[j] = x[static_cast<std::size_t>(j)] - theta[j];
        return g;
    }

    std::optional<Matrix> fisher_closed_form(const Vector&) const override {
        return Matrix::Identity(dim(), dim());
    }

    void sample_into(const Vector& theta, Rng& rng, std::span<double> out) const override {
        const std::size_t k = static_cast<std::size_t>(dim());
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = theta[static_cast<Eigen::Index>(i % k)] + rng.normal();
        }
    }

    std::vector<double> breakpoints(const Vector& theta) const override { return to_std(theta); }

    std::optional<Summary> summarize(std::span<const double> obs) const override {
        const std::size_t k = static_cast<std::size_t>(dim());
        Summary s;
        s.count = static_cast<double>(obs.size() / k);
        for (std::size_t i = 0; i < obs.size(); ++i) {
            s.sums[0] += obs[i] * obs[i];
            s.sums[1 + i % k] += obs[i];
        }
        return s;
    }

    double log_likelihood_summary(const Summary& s, const Vector& theta) const override {
        const double k = static_cast<double>(dim());
        double lin = 0.0;
        for (int j = 0; j < dim(); ++j) lin += theta[j] * s.sums[static_cast<std::size_t>(1 + j)];
        return -0.5 * s.count * k * kLogTwoPi - 0.5 * s.sums[0] + lin - 0.5 * s.count * theta.squaredNorm();
    }

    std::optional<Vector> closed_form_mle(std::span<const double> obs) const override {
        const std::size_t k = static_cast<std::size_t>(dim());
        const std::size_t n = obs.size() / k;
        Vector mean = Vector::Zero(dim());
        for (std::size_t i = 0; i < obs.size(); ++i) mean[static_cast<Eigen::Index>(i % k)] += obs[i];
        mean /= static_cast<double>(n);
        return clamp_interior(mean);
    }
};

// ---------------------------------------------------------------------------
// Bernoulli(theta) on {0, 1}.

class Bernoulli final : public ParametricFamily {
public:
    Bernoulli()
        : ParametricFamily("bernoulli", 1, Box::cube(1, 0.01, 0.99), Support{SupportKind::Binary, 1}) {}

    double log_density_raw(Obs x, const Vector& theta) const override {
        return x[0] > 0.5 ? std::log(theta[0]) : std::log1p(-theta[0]);
    }

    std::optional<Vector> score_closed_form(Obs x, const Vector& theta0) const override {
        const double t = theta0[0];
        return make_vector({0.5 * (x[0] - t) / (t * (1.0 - t))});
    }

    bool score_into(Obs x, const Vector& theta0, double* out) const override {
        const double t = theta0[0];
        out[0] = 0.5 * (x[0] - t) / (t * (1.0 - t));
        return true;
    }

    std::optional<Vector> grad_log_density(Obs x, const Vector& theta) const override {
        const double t = theta[0];
        return make_vector({(x[0] - t) / (t * (1.0 - t))});
    }

    std::optional<Matrix> fisher_closed_form(const Vector& theta) const override {
        const double t = theta[0];
        return Matrix::Constant(1, 1, 1.0 / (t * (1.0 - t)));
    }

    void sample_into(const Vector& theta, Rng& rng, std::span<double> out) const override {
        for (double& v : out) v = rng.uniform() < theta[0] ? 1.0 : 0.0;
    }

    std::optional<Summary> summarize(std::span<const double> obs) const override {
        Summary s;
        s.count = static_cast<double>(obs.size());
        for (double v : obs) s.sums[0] += v;
        return s;
    }

    double log_likelihood_summary(const Summary& s, const Vector& theta) const override {
        const double k = s.sums[0];
        const double m = s.count - k;
        return (k > 0 ? k * std::log(theta[0]) : 0.0) + (m > 0 ? m * std::log1p(-theta[0]) : 0.0);
    }

    std::optional<Vector> closed_form_mle(std::span<const double> obs) const override {
        double k = 0.0;
        for (double v : obs) k += v;
        return clamp_interior(make_vector({k / static_cast<double>(obs.size())}));
    }
};

// ---------------------------------------------------------------------------
// Exponential with rate theta on [0, inf).

class Exponential final : public ParametricFamily {
public:
    Exponential()
        : ParametricFamily("exponential", 1, Box::cube(1, 0.1, 10.0), Support{SupportKind::HalfLine, 1}) {}

    double log_density_raw(Obs x, const Vector& theta) const override {
        return std::log(theta[0]) - theta[0] * x[0];
    }

    double log_ratio_raw(Obs x, const Vector& from, const Vector& to) const override {
        return std::log(to[0] / from[0]) - (to[0] - from[0]) * x[0];
    }

    std::optional<Vector> score_closed_form(Obs x, const Vector& theta0) const override {
        return make_vector({0.5 * (1.0 / theta0[0] - x[0])});
    }

    bool score_into(Obs x, const Vector& theta0, double* out) const override {
        out[0] = 0.5 * (1.0 / theta0[0] - x[0]);
        return true;
    }

    std::optional<Vector> grad_log_density(Obs x, const Vector& theta) const override {
        return make_vector({1.0 / theta[0] - x[0]});
    }

    std::optional<Matrix> fisher_closed_form(const Vector& theta) const override {
        return Matrix::Constant(1, 1, 1.0 / (theta[0] * theta[0]));
    }

    void sample_into(const Vector& theta, Rng& rng, std::span<double> out) const override {
        for (double& v : out) v = rng.exponential() / theta[0];
    }

    std::vector<double> breakpoints(const Vector& theta) const override { return {1.0 / theta[0]}; }

    std::optional<Summary> summarize(std::span<const double> obs) const override {
        Summary s;
        s.count = static_cast<double>(obs.size());
        for (double v : obs) s.sums[0] += v;
        return s;
    }

    double log_likelihood_summary(const Summary& s, const Vector& theta) const override {
        return s.count * std::log(theta[0]) - theta[0] * s.sums[0];
    }

    std::optional<Vector> closed_form_mle(std::span<const double> obs) const override {
        double total = 0.0;
        for (double v : obs) total += v;
        if (total <= 0.0) return clamp_interior(theta_domain().hi);
        return clamp_interior(make_vector({static_cast<double>(obs.size()) / total}));
    }
};

// ---------------------------------------------------------------------------
// Laplace location, unit scale. Quadratic-mean differentiable but with a
// kink in theta at every observation.

class LaplaceLocation final : public ParametricFamily {
public:
    LaplaceLocation()
        : ParametricFamily("laplace", 1, Box::cube(1, -10.0, 10.0), Support{SupportKind::RealLine, 1}) {}

    double log_density_raw(Obs x, const Vector& theta) const override {
        return -std::numbers::ln2 - std::abs(x[0] - theta[0]);
    }

    double log_ratio_raw(Obs x, const Vector& from, const Vector& to) const override {
        return std::abs(x[0] - from[0]) - std::abs(x[0] - to[0]);
    }

    std::optional<Vector> score_closed_form(Obs x, const Vector& theta0) const override {
        const double r = x[0] - theta0[0];
        return make_vector({r > 0 ? 0.5 : (r < 0 ? -0.5 : 0.0)});
    }

    bool score_into(Obs x, const Vector& theta0, double* out) const override {
        const double r = x[0] - theta0[0];
        out[0] = r > 0 ? 0.5 : (r < 0 ? -0.5 : 0.0);
        return true;
    }

    std::optional<Vector> grad_log_density(Obs x, const Vector& theta) const override {
        const double r = x[0] - theta[0];
        return make_vector({r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0)});
    }

    std::optional<Matrix> fisher_closed_form(const Vector&) const override { return Matrix::Identity(1, 1); }

    void sample_into(const Vector& theta, Rng& rng, std::span<double> out) const override {
        for (double& v : out) {
            const double u = rng.uniform();
            v = u < 0.5 ? theta[0] + std::log(2.0 * u) : theta[0] - std::log(2.0 * (1.0 - u));
        }
    }

    std::vector<double> breakpoints(const Vector& theta) const override { return {theta[0]}; }
    bool differentiable_in_theta() const override { return false; }

    // Lower median: the smallest maximizer of the piecewise-linear likelihood.
    std::optional<Vector> closed_form_mle(std::span<const double> obs) const override {
        std::vector<double> xs(obs.begin(), obs.end());
        const std::size_t k = (xs.size() - 1) / 2;
        std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(k), xs.end());
        return clamp_interior(make_vector({xs[k]}));
    }
};

}  // namespace

// ---------------------------------------------------------------------------

bool Support::contains(Obs x) const {
    if (static_cast<int>(x.size()) != obs_dim) return false;
    for (double v : x) {
        if (!std::isfinite(v)) return false;
        if (kind == SupportKind::HalfLine && v < 0.0) return false;
        if (kind == SupportKind::Binary && v != 0.0 && v != 1.0) return false;
    }
    return true;
}

std::string Support::describe() const {
    switch (kind) {
        case SupportKind::RealLine: return obs_dim == 1 ? "real line" : "R^" + std::to_string(obs_dim);
        case SupportKind::HalfLine: return "half-line [0, inf)";
        case SupportKind::Binary: return "{0, 1}";
    }
    return "unknown";
}

ParametricFamily::ParametricFamily(std::string name, int dim, Box domain, Support support)
    : name_(std::move(name)), dim_(dim), domain_(std::move(domain)), support_(support) {}

void ParametricFamily::require_in_domain(const Vector& theta, std::string_view what) const {
    if (theta.size() != dim_) {
        throw DomainError(std::string(what) + " has dimension " + std::to_string(theta.size()) + ", family " + name_ +
                          " expects " + std::to_string(dim_));
    }
    if (!domain_.contains_open(theta)) {
        throw DomainError(std::string(what) + " = " + describe_vector(theta) + " is outside the open domain of " +
                          name_);
    }
}

void ParametricFamily::require_in_support(Obs x) const {
    if (!support_.contains(x)) {
        throw SupportError("observation outside the support (" + support_.describe() + ") of " + name_);
    }
}

double ParametricFamily::log_ratio_raw(Obs x, const Vector& from, const Vector& to) const {
    return log_density_raw(x, to) - log_density_raw(x, from);
}

std::optional<Vector> ParametricFamily::score_closed_form(Obs, const Vector&) const { return std::nullopt; }
std::optional<Vector> ParametricFamily::grad_log_density(Obs, const Vector&) const { return std::nullopt; }

bool ParametricFamily::score_into(Obs x, const Vector& theta0, double* out) const {
    const auto phi = score_closed_form(x, theta0);
    if (!phi) return false;
    for (int j = 0; j < dim_; ++j) out[j] = (*phi)[j];
    return true;
}
std::optional<Matrix> ParametricFamily::fisher_closed_form(const Vector&) const { return std::nullopt; }
std::vector<double> ParametricFamily::breakpoints(const Vector&) const { return {}; }
std::optional<Summary> ParametricFamily::summarize(std::span<const double>) const { return std::nullopt; }
std::optional<Vector> ParametricFamily::closed_form_mle(std::span<const double>) const { return std::nullopt; }

double ParametricFamily::log_likelihood_summary(const Summary&, const Vector&) const {
    throw Error("family " + name_ + " has no sufficient-statistic likelihood");
}

Vector ParametricFamily::clamp_interior(const Vector& theta) const {
    Vector out = theta;
    for (int j = 0; j < dim_; ++j) {
        const double margin = kInteriorMargin * (domain_.hi[j] - domain_.lo[j]);
        out[j] = std::clamp(theta[j], domain_.lo[j] + margin, domain_.hi[j] - margin);
    }
    return out;
}

FamilyPtr make_family(std::string_view id) {
    if (id == "gaussian") return std::make_shared<GaussianLocation>(1);
    if (id == "gaussian2") return std::make_shared<GaussianLocation>(2);
    if (id == "bernoulli") return std::make_shared<Bernoulli>();
    if (id == "exponential") return std::make_shared<Exponential>();
    if (id == "laplace") return std::make_shared<LaplaceLocation>();
    throw ConfigError("unknown family '" + std::string(id) + "'");
}

std::vector<std::string> builtin_family_ids() { return {"gaussian", "gaussian2", "bernoulli", "exponential", "laplace"}; }

double log_density(const ParametricFamily& family, Obs x, const Vector& theta) {
    family.require_in_domain(theta);
    family.require_in_support(x);
    return family.log_density_raw(x, theta);
}

SampleBatch draw_sample(const ParametricFamily& family, const Vector& theta, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw Error("draw_sample requires n >= 1");
    family.require_in_domain(theta);
    SampleBatch batch;
    batch.family = family.name();
    batch.theta_gen = theta;
    batch.n = n;
    batch.obs_dim = family.obs_dim();
    batch.seed = seed;
    batch.observations.resize(n * static_cast<std::size_t>(family.obs_dim()));
    Rng rng(seed);
    family.sample_into(theta, rng, batch.observations);
    return batch;
}

double hellinger_g(const ParametricFamily& family, const Vector& theta0, const Vector& tau, Obs x) {
    family.require_in_domain(theta0, "theta0");
    const Vector theta1 = theta0 + tau;
    family.require_in_domain(theta1, "theta0 + tau");
    family.require_in_support(x);
    return std::expm1(0.5 * family.log_ratio_raw(x, theta0, theta1));
}

QuadResult integrate_base(const ParametricFamily& family, const ObsFn& fn, const std::vector<double>& breakpoints,
                          const QuadOptions& opts) {
    const Support& s = family.support();
    switch (s.kind) {
        case SupportKind::Binary: {
            const double zero = 0.0;
            const double one = 1.0;
            QuadResult r;
            r.value = fn(Obs(&zero, 1)) + fn(Obs(&one, 1));
            r.l1 = std::abs(r.value);
            return r;
        }
        case SupportKind::HalfLine: {
            auto f = [&](double x) { return fn(Obs(&x, 1)); };
            return integrate_split(f, 0.0, std::numeric_limits<double>::infinity(), breakpoints, opts);
        }
        case SupportKind::RealLine: {
            const double inf = std::numeric_limits<double>::infinity();
            if (s.obs_dim == 1) {
                auto f = [&](double x) { return fn(Obs(&x, 1)); };
                return integrate_split(f, -inf, inf, breakpoints, opts);
            }
            if (s.obs_dim == 2) {
                QuadOptions inner = opts;
                auto outer = [&](double x0) {
                    auto g = [&](double x1) {
                        const double pt[2] = {x0, x1};
                        return fn(Obs(pt, 2));
                    };
                    return integrate_split(g, -inf, inf, breakpoints, inner).value;
                };
                return integrate_split(outer, -inf, inf, breakpoints, opts);
            }
            throw DimensionError("quadrature supports observation dimension <= 2");
        }
    }
    throw Error("unreachable support kind");
}

QuadResult expectation(const ParametricFamily& family, const Vector& theta, const ObsFn& fn,
                       std::vector<double> breakpoints, const QuadOptions& opts) {
    family.require_in_domain(theta);
    const auto own = family.breakpoints(theta);
    breakpoints.insert(breakpoints.end(), own.begin(), own.end());
    auto weighted = [&](Obs x) {
        const double dens = std::exp(family.log_density_raw(x, theta));
        if (dens == 0.0) return 0.0;
        return fn(x) * dens;
    };
    return integrate_base(family, weighted, breakpoints, opts);
}

double hellinger_affinity(const ParametricFamily& family, const Vector& theta0, const Vector& tau,
                          const QuadOptions& opts) {
    family.require_in_domain(theta0, "theta0");
    const Vector theta1 = theta0 + tau;
    family.require_in_domain(theta1, "theta0 + tau");
    auto bps = family.breakpoints(theta0);
    const auto more = family.breakpoints(theta1);
    bps.insert(bps.end(), more.begin(), more.end());
    auto root_product = [&](Obs x) {
        return std::exp(0.5 * (family.log_density_raw(x, theta0) + family.log_density_raw(x, theta1)));
    };
    return integrate_base(family, root_product, bps, opts).value;
}

Vector score_finite_difference(const ParametricFamily& family, const Vector& theta0, Obs x) {
    family.require_in_domain(theta0, "theta0");
    Vector phi(family.dim());
    for (int j = 0; j < family.dim(); ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(theta0[j]));
        Vector step = Vector::Zero(family.dim());
        step[j] = h;
        const double up = std::expm1(0.5 * family.log_ratio_raw(x, theta0, theta0 + step));
        const double down = std::expm1(0.5 * family.log_ratio_raw(x, theta0, theta0 - step));
        phi[j] = (up - down) / (2.0 * h);
    }
    return phi;
}

Vector score(const ParametricFamily& family, const Vector& theta0, Obs x) {
    family.require_in_domain(theta0, "theta0");
    family.require_in_support(x);
    if (auto phi = family.score_closed_form(x, theta0)) return *phi;
    return score_finite_difference(family, theta0, x);
}

FisherInfo make_fisher_info(const Vector& theta, const Matrix& matrix) {
    const Matrix sym = 0.5 * (matrix + matrix.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    const double smallest = eig.eigenvalues().minCoeff();
    if (!(smallest >= 1e-10)) {
        throw RankError("Fisher information is rank deficient: smallest eigenvalue " + std::to_string(smallest));
    }
    FisherInfo info;
    info.theta = theta;
    info.matrix = sym;
    info.sqrt = eig.operatorSqrt();
    info.inv_sqrt = eig.operatorInverseSqrt();
    return info;
}

FisherInfo fisher_information(const ParametricFamily& family, const Vector& theta0, FisherMethod method) {
    family.require_in_domain(theta0, "theta0");
    if (method != FisherMethod::Quadrature) {
        if (auto closed = family.fisher_closed_form(theta0)) return make_fisher_info(theta0, *closed);
        if (method == FisherMethod::ClosedForm) throw Error("family " + family.name() + " has no closed-form Fisher");
    }
    const int d = family.dim();
    Matrix m(d, d);
    for (int a = 0; a < d; ++a) {
        for (int b = a; b < d; ++b) {
            auto entry = [&](Obs x) {
                const Vector phi = score(family, theta0, x);
                return 4.0 * phi[a] * phi[b];
            };
            m(a, b) = m(b, a) = expectation(family, theta0, entry).value;
        }
    }
    return make_fisher_info(theta0, m);
}

// ---------------------------------------------------------------------------

LogLikelihood::LogLikelihood(const ParametricFamily& family, std::span<const double> obs)
    : family_(&family),
      obs_(obs),
      n_(obs.size() / static_cast<std::size_t>(family.obs_dim())),
      summary_(family.summarize(obs)) {}

double LogLikelihood::operator()(const Vector& theta) const {
    if (summary_) return family_->log_likelihood_summary(*summary_, theta);
    const std::size_t k = static_cast<std::size_t>(family_->obs_dim());
    double total = 0.0;
    for (std::size_t i = 0; i < n_; ++i) total += family_->log_density_raw(obs_.subspan(i * k, k), theta);
    return total;
}

Vector LogLikelihood::gradient(const Vector& theta) const {
    const int d = family_->dim();
    const std::size_t k = static_cast<std::size_t>(family_->obs_dim());
    if (n_ > 0 && family_->grad_log_density(obs_.subspan(0, k), theta)) {
        Vector g = Vector::Zero(d);
        for (std::size_t i = 0; i < n_; ++i) g += *family_->grad_log_density(obs_.subspan(i * k, k), theta);
        return g;
    }
    Vector g(d);
    for (int j = 0; j < d; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(theta[j]));
        Vector up = theta;
        Vector down = theta;
        up[j] += h;
        down[j] -= h;
        g[j] = ((*this)(up) - (*this)(down)) / (2.0 * h);
    }
    return g;
}

}  // namespace modev
