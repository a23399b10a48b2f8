#include "modev/lan.hpp"

#include "modev/errors.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

namespace modev {

TruncationPolicy TruncationPolicy::inactive(double u_n) {
    return {std::numeric_limits<double>::infinity(), u_n};
}

void TruncationPolicy::validate() const {
    if (!(eps > 0.0)) throw PreconditionError("truncation: eps must be positive");
    if (!(u_n > 0.0) || !std::isfinite(u_n)) throw PreconditionError("truncation: u_n must be positive");
}

LanModel::LanModel(const ParametricFamily& family, const Vector& theta0, const TruncationPolicy& policy,
                   const Vector& b)
    : family_(&family), theta0_(theta0), b_(b.size() == 0 ? Vector::Zero(family.dim()) : b), policy_(policy) {
    policy_.validate();
    if (theta0_.size() != family.dim() || b_.size() != family.dim()) {
        throw DimensionError("lan: parameter dimension mismatch");
    }
    family.require_in_domain(theta0_, "theta0");
    ref_ = theta0_ + policy_.u_n * b_;
    family.require_in_domain(ref_, "theta0 + u_n b");
    info_ = fisher_information(family, ref_);
    const double probe = family.support().kind == SupportKind::HalfLine ? 1.0 : 0.0;
    std::vector<double> x(static_cast<std::size_t>(family.obs_dim()), probe);
    closed_score_ = family.score_closed_form(Obs(x), ref_).has_value();
}

Vector LanModel::phi(Obs x) const {
    if (closed_score_) return *family_->score_closed_form(x, ref_);
    return score_finite_difference(*family_, ref_, x);
}

Vector LanModel::truncated_score(Obs x) const {
    Vector p = phi(x);
    if (!(p.norm() < policy_.threshold())) p.setZero();
    return p;
}

Vector LanModel::score_sum(std::span<const double> obs) const {
    const auto k = static_cast<std::size_t>(family_->obs_dim());
    const int d = family_->dim();
    Vector sum = Vector::Zero(d);
    if (!closed_score_) {
        for (std::size_t i = 0; i + k <= obs.size(); i += k) sum += truncated_score(obs.subspan(i, k));
        return sum;
    }
    const double limit = policy_.threshold();
    std::array<double, 8> buf{};
    std::vector<double> heap(d > 8 ? static_cast<std::size_t>(d) : 0);
    double* p = d > 8 ? heap.data() : buf.data();
    for (std::size_t i = 0; i + k <= obs.size(); i += k) {
        family_->score_into(obs.subspan(i, k), ref_, p);
        double sq = 0.0;
        for (int j = 0; j < d; ++j) sq += p[j] * p[j];
        if (!(std::sqrt(sq) < limit)) continue;
        for (int j = 0; j < d; ++j) sum[j] += p[j];
    }
    return sum;
}

Vector LanModel::psi_from_sum(const Vector& sum, std::size_t n) const {
    return info_.inv_sqrt * sum / std::sqrt(static_cast<double>(n));
}

Vector LanModel::psi(std::span<const double> obs) const {
    const std::size_t n = sample_size(obs);
    if (n == 0) throw PreconditionError("psi_n: empty sample");
    return psi_from_sum(score_sum(obs), n);
}

double LanModel::zeta_from_sum(const Vector& u, const Vector& sum, std::size_t n) const {
    return 2.0 * u.dot(sum) - 0.5 * static_cast<double>(n) * u.dot(info_.matrix * u);
}

double LanModel::zeta(const Vector& u, std::span<const double> obs) const {
    return zeta_from_sum(u, score_sum(obs), sample_size(obs));
}

double LanModel::loglr_sum(std::span<const double> obs, const Vector& u) const {
    const Vector to = ref_ + u;
    family_->require_in_domain(to, "theta0 + u_n b + u");
    if (u.isZero(0.0)) return 0.0;
    const auto k = static_cast<std::size_t>(family_->obs_dim());
    double s = 0.0;
    for (std::size_t i = 0; i + k <= obs.size(); i += k) s += family_->log_ratio_raw(obs.subspan(i, k), ref_, to);
    return s;
}

LanDecomposition LanModel::decompose(std::span<const double> obs, const Vector& u) const {
    LanDecomposition d;
    d.n = sample_size(obs);
    d.u_n = policy_.u_n;
    d.eps = policy_.eps;
    d.b = b_;
    d.u = u;
    const Vector sum = score_sum(obs);
    d.sum_xi = loglr_sum(obs, u);
    d.zeta = zeta_from_sum(u, sum, d.n);
    d.psi = d.n > 0 ? psi_from_sum(sum, d.n) : Vector::Zero(family_->dim());
    d.residual = d.sum_xi - d.zeta;
    return d;
}

double LanModel::sup_residual(std::span<const double> obs, double C, double grid_step) const {
    const double u_n = policy_.u_n;
    if (!(grid_step > 0.0) || grid_step > u_n / 20.0 * (1.0 + 1e-12)) {
        throw GridError("sup_lan_residual: grid step must be in (0, u_n/20]");
    }
    if (!(C > 0.0)) return 0.0;
    const double radius = C * u_n;
    const int d = family_->dim();
    const int kmax = static_cast<int>(std::ceil(radius / grid_step));
    const Vector sum = score_sum(obs);
    const std::size_t n = sample_size(obs);

    double best = 0.0;
    std::vector<int> idx(static_cast<std::size_t>(d), -kmax);
    while (true) {
        Vector u(d);
        for (int j = 0; j < d; ++j) u[j] = idx[static_cast<std::size_t>(j)] * grid_step;
        if (u.norm() < radius) {
            const double r = loglr_sum(obs, u) - zeta_from_sum(u, sum, n);
            best = std::max(best, std::abs(r));
        }
        int j = d - 1;
        while (j >= 0 && ++idx[static_cast<std::size_t>(j)] > kmax) idx[static_cast<std::size_t>(j--)] = -kmax;
        if (j < 0) break;
    }
    return best;
}

Vector truncated_score(const ParametricFamily& family, const Vector& theta0, const TruncationPolicy& policy, Obs x) {
    policy.validate();
    Vector p = score(family, theta0, x);
    if (!(p.norm() < policy.threshold())) p.setZero();
    return p;
}

Vector psi_n(const ParametricFamily& family, std::span<const double> obs, const Vector& theta0,
             const TruncationPolicy& policy) {
    return LanModel(family, theta0, policy).psi(obs);
}

double zeta_n(const ParametricFamily& family, const Vector& u, std::span<const double> obs, const Vector& theta0,
              const TruncationPolicy& policy) {
    return LanModel(family, theta0, policy).zeta(u, obs);
}

double loglr_sum(const ParametricFamily& family, std::span<const double> obs, const Vector& theta0, const Vector& b,
                 const Vector& u, double u_n) {
    const Vector from = theta0 + u_n * b;
    family.require_in_domain(from, "theta0 + u_n b");
    const Vector to = from + u;
    family.require_in_domain(to, "theta0 + u_n b + u");
    const auto k = static_cast<std::size_t>(family.obs_dim());
    double s = 0.0;
    for (std::size_t i = 0; i + k <= obs.size(); i += k) s += family.log_ratio_raw(obs.subspan(i, k), from, to);
    return s;
}

LanDecomposition lan_residual(const ParametricFamily& family, std::span<const double> obs, const Vector& theta0,
                              const Vector& b, const Vector& u, const TruncationPolicy& policy) {
    return LanModel(family, theta0, policy, b).decompose(obs, u);
}

double sup_lan_residual(const ParametricFamily& family, std::span<const double> obs, const Vector& theta0,
                        const Vector& b, double C, const TruncationPolicy& policy, double grid_step) {
    return LanModel(family, theta0, policy, b).sup_residual(obs, C, grid_step);
}

double lr_process(const ParametricFamily& family, std::span<const double> obs, const Vector& theta0, const Vector& u) {
    return std::exp(loglr_sum(family, obs, theta0, Vector::Zero(family.dim()), u, 0.0));
}

std::string lan_csv_header(int d) {
    std::string h = "n,u_n,eps,b,u,sum_xi,zeta";
    for (int j = 1; j <= d; ++j) h += ",psi_" + std::to_string(j);
    return h + ",residual";
}

std::string lan_csv_row(const LanDecomposition& dec) {
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    std::string row = std::to_string(dec.n) + "," + num(dec.u_n) + "," + num(dec.eps) + "," + format_vector(dec.b) +
                      "," + format_vector(dec.u) + "," + num(dec.sum_xi) + "," + num(dec.zeta);
    for (Eigen::Index j = 0; j < dec.psi.size(); ++j) row += "," + num(dec.psi[j]);
    return row + "," + num(dec.residual);
}

}  // namespace modev
