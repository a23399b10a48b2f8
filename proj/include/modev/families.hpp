#pragma once

#include "modev/linalg.hpp"
#include "modev/quadrature.hpp"
#include "modev/rng.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace modev {

using Obs = std::span<const double>;

enum class SupportKind { RealLine, HalfLine, Binary };

/// Observation space with its base measure: Lebesgue on R^k or [0, inf),
/// counting measure on {0, 1}.
struct Support {
    SupportKind kind = SupportKind::RealLine;
    int obs_dim = 1;

    [[nodiscard]] bool contains(Obs x) const;
    [[nodiscard]] std::string describe() const;
};

/// i.i.d. observations stored row-major, `obs_dim` doubles per observation.
struct SampleBatch {
    std::string family;
    Vector theta_gen;
    std::size_t n = 0;
    int obs_dim = 1;
    std::vector<double> observations;
    std::uint64_t seed = 0;

    [[nodiscard]] Obs at(std::size_t i) const {
        return {observations.data() + i * static_cast<std::size_t>(obs_dim), static_cast<std::size_t>(obs_dim)};
    }
    [[nodiscard]] std::span<const double> data() const { return observations; }
};

/// Sufficient statistics for families whose likelihood factors through a
/// handful of sums. `count` is the sample size.
struct Summary {
    double count = 0.0;
    std::array<double, 4> sums{};
};

struct FisherInfo {
    Vector theta;
    Matrix matrix;
    Matrix sqrt;
    Matrix inv_sqrt;
};

/// A dominated parametric experiment {f(x, theta) : theta in an open box}.
///
/// Implementations are immutable after construction and every evaluator is
/// const, so one instance can be shared across worker threads. The `*_raw`
/// evaluators skip domain and support validation; callers on hot paths use
/// them after validating once.
class ParametricFamily {
public:
    ParametricFamily(std::string name, int dim, Box domain, Support support);
    virtual ~ParametricFamily() = default;

    ParametricFamily(const ParametricFamily&) = delete;
    ParametricFamily& operator=(const ParametricFamily&) = delete;

    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] int dim() const { return dim_; }
    [[nodiscard]] int obs_dim() const { return support_.obs_dim; }
    [[nodiscard]] const Box& theta_domain() const { return domain_; }
    [[nodiscard]] const Support& support() const { return support_; }

    /// Throws DomainError unless theta lies strictly inside the domain.
    void require_in_domain(const Vector& theta, std::string_view what = "theta") const;
    void require_in_support(Obs x) const;

    [[nodiscard]] virtual double log_density_raw(Obs x, const Vector& theta) const = 0;
    /// log f(x, to) - log f(x, from).
    [[nodiscard]] virtual double log_ratio_raw(Obs x, const Vector& from, const Vector& to) const;
    /// Closed-form phi of the quadratic-mean expansion (half the score).
    [[nodiscard]] virtual std::optional<Vector> score_closed_form(Obs x, const Vector& theta0) const;
    /// Allocation-free variant writing dim() entries; false when no closed form exists.
    virtual bool score_into(Obs x, const Vector& theta0, double* out) const;
    /// Gradient of log f in theta; defined almost everywhere for kinked densities.
    [[nodiscard]] virtual std::optional<Vector> grad_log_density(Obs x, const Vector& theta) const;
    [[nodiscard]] virtual std::optional<Matrix> fisher_closed_form(const Vector& theta) const;
    /// Writes n observations drawn under theta into `out` (size n * obs_dim).
    virtual void sample_into(const Vector& theta, Rng& rng, std::span<double> out) const = 0;
    /// Observation points worth splitting quadrature at (kinks, modes).
    [[nodiscard]] virtual std::vector<double> breakpoints(const Vector& theta) const;
    [[nodiscard]] virtual bool differentiable_in_theta() const { return true; }

    [[nodiscard]] virtual std::optional<Summary> summarize(std::span<const double> obs) const;
    /// Only valid for summaries produced by this family's `summarize`.
    [[nodiscard]] virtual double log_likelihood_summary(const Summary& s, const Vector& theta) const;
    [[nodiscard]] virtual std::optional<Vector> closed_form_mle(std::span<const double> obs) const;

    /// Clamps theta into the closed domain shrunk by a relative margin; used
    /// wherever an argmax over the open box must be represented by a point.
    [[nodiscard]] Vector clamp_interior(const Vector& theta) const;

protected:
    static constexpr double kInteriorMargin = 1e-9;

private:
    std::string name_;
    int dim_;
    Box domain_;
    Support support_;
};

using FamilyPtr = std::shared_ptr<const ParametricFamily>;

/// Built-in families: "gaussian", "gaussian2", "bernoulli", "exponential",
/// "laplace". Throws ConfigError for unknown identifiers.
FamilyPtr make_family(std::string_view id);
std::vector<std::string> builtin_family_ids();

double log_density(const ParametricFamily& family, Obs x, const Vector& theta);

SampleBatch draw_sample(const ParametricFamily& family, const Vector& theta, std::size_t n, std::uint64_t seed);

/// (f(x, theta0 + tau) / f(x, theta0))^{1/2} - 1.
double hellinger_g(const ParametricFamily& family, const Vector& theta0, const Vector& tau, Obs x);

/// Integral of sqrt(f(x, theta0) f(x, theta0 + tau)) over the support.
double hellinger_affinity(const ParametricFamily& family, const Vector& theta0, const Vector& tau,
                          const QuadOptions& opts = {});

inline double hellinger_distance_sq(double affinity) { return 2.0 * (1.0 - affinity); }

Vector score(const ParametricFamily& family, const Vector& theta0, Obs x);
/// Central difference of hellinger_g in tau at 0 with step 1e-5 * max(1, |theta_j|).
Vector score_finite_difference(const ParametricFamily& family, const Vector& theta0, Obs x);

enum class FisherMethod { Auto, ClosedForm, Quadrature };

FisherInfo fisher_information(const ParametricFamily& family, const Vector& theta0,
                              FisherMethod method = FisherMethod::Auto);
/// Builds the square roots of an SPD matrix. Throws RankError when the
/// smallest eigenvalue is below 1e-10.
FisherInfo make_fisher_info(const Vector& theta, const Matrix& matrix);

using ObsFn = std::function<double(Obs)>;

/// Integral of fn over the support against the base measure.
QuadResult integrate_base(const ParametricFamily& family, const ObsFn& fn, const std::vector<double>& breakpoints,
                          const QuadOptions& opts = {});
/// E_theta fn(X).
QuadResult expectation(const ParametricFamily& family, const Vector& theta, const ObsFn& fn,
                       std::vector<double> breakpoints = {}, const QuadOptions& opts = {});

/// Log-likelihood of a fixed sample as a function of theta. Uses the
/// family's sufficient statistics when it has them.
class LogLikelihood {
public:
    LogLikelihood(const ParametricFamily& family, std::span<const double> obs);

    [[nodiscard]] double operator()(const Vector& theta) const;
    /// Analytic gradient when the family provides one, else central differences.
    [[nodiscard]] Vector gradient(const Vector& theta) const;
    [[nodiscard]] std::size_t size() const { return n_; }

private:
    const ParametricFamily* family_;
    std::span<const double> obs_;
    std::size_t n_;
    std::optional<Summary> summary_;
};

}  // namespace modev
