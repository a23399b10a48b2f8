#pragma once

#include "modev/families.hpp"
#include "modev/lan.hpp"
#include "modev/loss.hpp"
#include "modev/region.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace modev {

struct MleSearch {
    /// Coarse grid step per axis; 0 means 1e-2 of the domain width.
    double grid_step = 0.0;
    int n_restarts = 16;
    double tol = 1e-10;
};

struct MleResult {
    Vector theta_hat;
    double loglik = 0.0;
    int n_restarts = 0;
    bool converged = false;
    bool tie_broken = false;
    /// theta_hat within tol of the domain boundary; the supremum may not be
    /// attained inside the open box.
    bool boundary_warning = false;
};

/// Numerical maximum likelihood over the open parameter box.
MleResult mle(const ParametricFamily& family, std::span<const double> obs, const MleSearch& search = {});

/// Closed-form estimator when the family has one, otherwise `mle`.
MleResult mle_fast(const ParametricFamily& family, std::span<const double> obs, const MleSearch& search = {});

/// Continuous prior on the parameter box: flat, or Gaussian (independent
/// coordinates) truncated to the box.
struct Prior {
    enum class Kind { Flat, Gaussian };
    Kind kind = Kind::Flat;
    Vector mean;
    Vector sd;

    static Prior flat();
    static Prior gaussian(const Vector& mean, const Vector& sd);
    [[nodiscard]] double log_density(const Vector& theta) const;
    [[nodiscard]] std::string id() const;
};

/// "flat" or "gaussian:m1;m2:s1;s2" (a scalar mean/sd is broadcast).
Prior parse_prior(const std::string& text, int d);

/// Posterior density on a midpoint tensor grid over a sub-box.
struct PosteriorGrid {
    Box box;
    int resolution = 0;
    std::vector<std::vector<double>> axes;  // node coordinates per axis
    Vector cell;                            // cell widths
    std::vector<double> log_weights;        // log q_n up to a constant, row-major
    double normalizer = 0.0;                // log(sum exp(log_weights) * cell volume)
    std::string prior;

    [[nodiscard]] int dim() const { return static_cast<int>(axes.size()); }
    [[nodiscard]] std::size_t size() const { return log_weights.size(); }
    [[nodiscard]] Vector node(std::size_t i) const;
    [[nodiscard]] double cell_volume() const { return cell.prod(); }
    /// Density at node i after normalization.
    [[nodiscard]] double density(std::size_t i) const;
    /// Probability of cell i; these sum to 1.
    [[nodiscard]] double weight(std::size_t i) const;
    [[nodiscard]] std::vector<double> weights() const;
    [[nodiscard]] Vector mean() const;
    /// One "theta_node log_weight" line per node.
    void dump(std::ostream& os) const;
};

/// Sub-box centred at the pilot estimate with half-width max(10/sqrt(n), 5 u_n),
/// clipped to the parameter domain.
Box default_posterior_box(const ParametricFamily& family, std::span<const double> obs, double u_n);

PosteriorGrid posterior_grid(const ParametricFamily& family, std::span<const double> obs, const Prior& prior,
                             const Box& box, int resolution = 128);

/// argmin_t sum_i l(t - theta_i) w_i: coarse search over the grid nodes, one
/// 10x finer local grid around the coarse argmin, then a parabolic vertex step
/// per axis. Ties resolve to the lexicographically smallest t. Squared
/// Euclidean or weighted-diagonal loss returns the grid posterior mean
/// directly unless `closed_form` is false.
Vector bayes_estimate(const PosteriorGrid& posterior, const LossSpec& loss, bool closed_form = true);

/// Posterior risk sum_i l(t - theta_i) w_i.
double posterior_risk(const PosteriorGrid& posterior, const LossSpec& loss, const Vector& t);

struct PosteriorMass {
    double mass = 0.0;
    /// Mass of cells whose corners straddle the region boundary.
    double boundary_mass = 0.0;
    bool resolution_warning = false;
};

/// Q_n of {theta : to_region (theta - center) in region}. An empty `to_region`
/// means the identity.
PosteriorMass posterior_mass(const PosteriorGrid& posterior, const RegionSpec& region, const Vector& center,
                             const Matrix& to_region = Matrix());

struct TestStatistics {
    double wald = 0.0;
    double rao = 0.0;
    double lr = 0.0;
    Vector theta_hat;
};

/// wald = n (th - t0)' I (th - t0); rao = 4 psi'psi; lr = 2 sum log f(X, th)/f(X, t0).
TestStatistics test_statistics(const ParametricFamily& family, std::span<const double> obs, const Vector& theta0,
                               const TruncationPolicy& policy = TruncationPolicy::inactive());

}  // namespace modev
