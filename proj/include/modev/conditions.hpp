#pragma once

#include "modev/families.hpp"
#include "modev/loss.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace modev {

enum class Condition { DQM, A0, A1A2, B, C1, C2, D, E, LOSS };
enum class Verdict { Pass, Fail, Inconclusive };

std::string to_string(Condition c);
std::string to_string(Verdict v);

struct Witness {
    std::vector<double> input;
    double value = 0.0;
    double threshold = 0.0;
};

struct ConditionReport {
    Condition condition = Condition::DQM;
    Verdict verdict = Verdict::Inconclusive;
    std::vector<Witness> witnesses;
    std::map<std::string, double> parameters;
    std::vector<std::string> notes;

    /// JSON object {condition, verdict, parameters, witnesses, notes}.
    [[nodiscard]] std::string to_json(int indent = 2) const;
};

/// Modulus fit of the quadratic-mean expansion at theta0.
struct ScoreModel {
    struct OmegaPoint {
        double magnitude = 0.0;
        double omega_raw = 0.0;
        double omega_iso = 0.0;
    };

    FamilyPtr family;
    Vector theta0;
    std::vector<OmegaPoint> omega_fit;  // ascending |tau|

    [[nodiscard]] Vector phi(Obs x) const { return score(*family, theta0, x); }
    /// Isotonic omega at |tau| (step interpolation from the right; 0 below the grid).
    [[nodiscard]] double omega(double magnitude) const;
};

struct DqmResult {
    ScoreModel model;
    ConditionReport report;
};

/// Constants left free by the regularity conditions.
struct ConditionConstants {
    double eps = 0.5;
    double gamma = 1.0;
    double lambda = 1.0;
    double bound = 1e6;
    /// Half-width of the theta-neighbourhood grid U around theta0 and its
    /// points per axis (odd, so theta0 itself is on the grid).
    double neighborhood = 0.05;
    int neighborhood_points = 3;
};

/// Mean-square residual E_theta0 (g(X, tau) - tau' phi(X))^2.
double dqm_residual(const ParametricFamily& family, const Vector& theta0, const Vector& tau,
                    const QuadOptions& opts = {});

DqmResult check_dqm(FamilyPtr family, const Vector& theta0, const std::vector<Vector>& tau_grid);

ConditionReport check_a0(const ParametricFamily& family, const Box& compact, double delta);

struct MomentBOptions {
    double u_n = 0.1;
    double eps = 0.5;
    double gamma_n = 1.0;
    /// Taus must satisfy |tau| < c1 * u_n.
    double c1 = 10.0;
    ConditionConstants constants;
};

ConditionReport check_moment_b(const ParametricFamily& family, const Vector& theta0, const std::vector<Vector>& tau_grid,
                               const MomentBOptions& opts);

/// E_theta exp{gamma h(X)} with divergence detection over growing windows.
double exp_moment(const ParametricFamily& family, const Vector& theta, const ObsFn& h, double gamma);

ConditionReport check_exp_moment(const ParametricFamily& family, const Vector& theta0, const ObsFn& envelope_h,
                                 double gamma, const ConditionConstants& constants = {});

struct CReports {
    ConditionReport c1;
    ConditionReport c2;
    double c1_slope = 0.0;
    double c2_exponent = 0.0;
};

ConditionReport check_c1(const ParametricFamily& family, const Vector& theta0, const std::vector<double>& u_grid,
                         const ConditionConstants& constants = {});
ConditionReport check_c2(const ParametricFamily& family, const Vector& theta0, const std::vector<double>& u_grid,
                         const ConditionConstants& constants = {});
CReports check_c(const ParametricFamily& family, const Vector& theta0, const std::vector<double>& u_grid,
                 const ConditionConstants& constants = {});

/// sup over a theta grid (inclusive of the box corners) of E_theta |grad log f|^m.
ConditionReport check_d(const ParametricFamily& family, double m, std::optional<Box> box = std::nullopt,
                        int points_per_axis = 21, const ConditionConstants& constants = {});

struct EOptions {
    double eps = 0.5;
    double u_n = 0.1;
    double beta1 = 2.0;
    double beta2 = 2.0;
    ConditionConstants constants;
};

/// E_theta0 |log f(X, theta0+v)/f(X, theta0+u) - 2 (v-u)' phi_eps(X)|^beta1.
double e_moment(const ParametricFamily& family, const Vector& theta0, const Vector& u, const Vector& v,
                const EOptions& opts);

ConditionReport check_e(const ParametricFamily& family, const Vector& theta0,
                        const std::vector<std::pair<Vector, Vector>>& pair_grid, const EOptions& opts);

ConditionReport check_loss(const LossSpec& loss, const std::vector<double>& a_grid, const std::vector<double>& x_grid);

/// Least-squares slope of log y on log x over pairs with positive y.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Nondecreasing least-squares fit (pool adjacent violators).
std::vector<double> isotonic_increasing(const std::vector<double>& y);

}  // namespace modev
