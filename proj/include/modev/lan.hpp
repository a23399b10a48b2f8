#pragma once

#include "modev/families.hpp"

#include <cmath>
#include <optional>
#include <span>
#include <string>

namespace modev {

/// phi_eps(x) = phi(x) 1(|phi(x)| < eps / u_n).
struct TruncationPolicy {
    double eps = 0.5;
    double u_n = 1.0;

    [[nodiscard]] double threshold() const { return eps / u_n; }
    [[nodiscard]] bool is_inactive() const { return std::isinf(eps); }
    static TruncationPolicy inactive(double u_n = 1.0);
    /// Throws PreconditionError unless eps > 0 and u_n > 0.
    void validate() const;
};

struct LanDecomposition {
    std::size_t n = 0;
    double u_n = 0.0;
    double eps = 0.0;
    Vector b;
    Vector u;
    double sum_xi = 0.0;
    double zeta = 0.0;
    Vector psi;
    double residual = 0.0;
};

/// Score-side LAN quantities at a fixed reference point.
///
/// The reference point is theta0 + u_n b: phi, phi_eps and I are taken there
/// so that Gaussian location is exact for every shift b. For b = 0 it is theta0.
class LanModel {
public:
    LanModel(const ParametricFamily& family, const Vector& theta0, const TruncationPolicy& policy,
             const Vector& b = Vector());

    [[nodiscard]] const ParametricFamily& family() const { return *family_; }
    [[nodiscard]] const Vector& theta0() const { return theta0_; }
    [[nodiscard]] const Vector& reference() const { return ref_; }
    [[nodiscard]] const Vector& b() const { return b_; }
    [[nodiscard]] const TruncationPolicy& policy() const { return policy_; }
    [[nodiscard]] const FisherInfo& fisher() const { return info_; }

    [[nodiscard]] Vector phi(Obs x) const;
    [[nodiscard]] Vector truncated_score(Obs x) const;
    /// Sum of phi_eps over a row-major sample.
    [[nodiscard]] Vector score_sum(std::span<const double> obs) const;
    [[nodiscard]] Vector psi(std::span<const double> obs) const;
    [[nodiscard]] Vector psi_from_sum(const Vector& sum, std::size_t n) const;
    [[nodiscard]] double zeta(const Vector& u, std::span<const double> obs) const;
    [[nodiscard]] double zeta_from_sum(const Vector& u, const Vector& sum, std::size_t n) const;
    /// sum_i log f(X_i, ref + u) / f(X_i, ref).
    [[nodiscard]] double loglr_sum(std::span<const double> obs, const Vector& u) const;
    [[nodiscard]] LanDecomposition decompose(std::span<const double> obs, const Vector& u) const;
    /// max |residual| over the axis grid {k * grid_step} inside |u| < C u_n.
    [[nodiscard]] double sup_residual(std::span<const double> obs, double C, double grid_step) const;

    [[nodiscard]] std::size_t sample_size(std::span<const double> obs) const {
        return obs.size() / static_cast<std::size_t>(family_->obs_dim());
    }

private:
    const ParametricFamily* family_;
    Vector theta0_;
    Vector b_;
    Vector ref_;
    TruncationPolicy policy_;
    FisherInfo info_;
    bool closed_score_;
};

Vector truncated_score(const ParametricFamily& family, const Vector& theta0, const TruncationPolicy& policy, Obs x);
Vector psi_n(const ParametricFamily& family, std::span<const double> obs, const Vector& theta0,
             const TruncationPolicy& policy);
double zeta_n(const ParametricFamily& family, const Vector& u, std::span<const double> obs, const Vector& theta0,
              const TruncationPolicy& policy);
double loglr_sum(const ParametricFamily& family, std::span<const double> obs, const Vector& theta0, const Vector& b,
                 const Vector& u, double u_n);
LanDecomposition lan_residual(const ParametricFamily& family, std::span<const double> obs, const Vector& theta0,
                              const Vector& b, const Vector& u, const TruncationPolicy& policy);
double sup_lan_residual(const ParametricFamily& family, std::span<const double> obs, const Vector& theta0,
                        const Vector& b, double C, const TruncationPolicy& policy, double grid_step);
/// exp(loglr_sum with b = 0).
double lr_process(const ParametricFamily& family, std::span<const double> obs, const Vector& theta0, const Vector& u);

/// CSV: n,u_n,eps,b,u,sum_xi,zeta,psi_1..psi_d,residual (vectors joined with ';').
std::string lan_csv_header(int d);
std::string lan_csv_row(const LanDecomposition& dec);

}  // namespace modev
