#include "modev/conditions.hpp"

#include "modev/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace modev {

namespace {

constexpr double kLogHuge = 690.7755278982137;  // log(1e300)

std::vector<double> concat(const Vector& a, const Vector& b) {
    std::vector<double> out = to_std(a);
    for (Eigen::Index i = 0; i < b.size(); ++i) out.push_back(b[i]);
    return out;
}

std::vector<double> joined_breakpoints(const ParametricFamily& family, std::initializer_list<Vector> thetas) {
    std::vector<double> out;
    for (const auto& t : thetas) {
        auto b = family.breakpoints(t);
        out.insert(out.end(), b.begin(), b.end());
    }
    return out;
}

/// Axis-aligned grid of `points` per axis centred at theta0 with half-width
/// `radius`, restricted to the parameter domain. Row-major over axes.
std::vector<Vector> neighborhood_grid(const ParametricFamily& family, const Vector& theta0, double radius, int points) {
    const int d = family.dim();
    points = std::max(points, 1);
    std::vector<double> offsets;
    for (int k = 0; k < points; ++k) {
        offsets.push_back(points == 1 ? 0.0 : -radius + 2.0 * radius * k / (points - 1));
    }
    std::vector<Vector> out;
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    while (true) {
        Vector t = theta0;
        for (int j = 0; j < d; ++j) t[j] += offsets[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
        if (family.theta_domain().contains_open(t)) out.push_back(t);
        int j = d - 1;
        while (j >= 0 && ++idx[static_cast<std::size_t>(j)] == points) idx[static_cast<std::size_t>(j--)] = 0;
        if (j < 0) break;
    }
    return out;
}

/// Grid with inclusive endpoints over each axis of `box`.
std::vector<Vector> box_grid(const Box& box, const std::vector<int>& counts) {
    const int d = box.dim();
    std::vector<Vector> out;
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    while (true) {
        Vector t(d);
        for (int j = 0; j < d; ++j) {
            const int c = counts[static_cast<std::size_t>(j)];
            const int k = idx[static_cast<std::size_t>(j)];
            t[j] = c == 1 ? 0.5 * (box.lo[j] + box.hi[j]) : box.lo[j] + (box.hi[j] - box.lo[j]) * k / (c - 1);
        }
        out.push_back(t);
        int j = d - 1;
        while (j >= 0 && ++idx[static_cast<std::size_t>(j)] == counts[static_cast<std::size_t>(j)]) {
            idx[static_cast<std::size_t>(j--)] = 0;
        }
        if (j < 0) break;
    }
    return out;
}

/// Unit directions used for tau grids: +-e_j in d=1, evenly spaced angles in
/// d=2, +-e_j otherwise.
std::vector<Vector> directions(int d, int angles_2d = 8) {
    std::vector<Vector> out;
    if (d == 2) {
        for (int k = 0; k < angles_2d; ++k) {
            const double a = 2.0 * std::numbers::pi * k / angles_2d;
            out.push_back(make_vector({std::cos(a), std::sin(a)}));
        }
        return out;
    }
    for (int j = 0; j < d; ++j) {
        for (double s : {1.0, -1.0}) {
            Vector e = Vector::Zero(d);
            e[j] = s;
            out.push_back(e);
        }
    }
    return out;
}

void require_positive_decreasing(const std::vector<double>& u, const char* what) {
    if (u.size() < 3) throw GridError(std::string(what) + ": need at least 3 grid points");
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (!(u[i] > 0.0) || (i > 0 && !(u[i] < u[i - 1]))) {
            throw GridError(std::string(what) + ": grid must be positive and strictly decreasing");
        }
    }
}

/// Integral of fn over a finite window of the support centred at `center`.
QuadResult integrate_window(const ParametricFamily& family, const ObsFn& fn, double center, double half,
                            const std::vector<double>& bps) {
    const Support& s = family.support();
    if (s.kind == SupportKind::HalfLine) {
        auto f = [&](double x) { return fn(Obs(&x, 1)); };
        return integrate_split(f, 0.0, std::max(center, 0.0) + half, bps);
    }
    if (s.obs_dim == 1) {
        auto f = [&](double x) { return fn(Obs(&x, 1)); };
        return integrate_split(f, center - half, center + half, bps);
    }
    auto outer = [&](double x0) {
        auto g = [&](double x1) {
            const double pt[2] = {x0, x1};
            return fn(Obs(pt, 2));
        };
        return integrate_split(g, center - half, center + half, bps).value;
    };
    return integrate_split(outer, center - half, center + half, bps);
}

}  // namespace

std::string to_string(Condition c) {
    switch (c) {
        case Condition::DQM: return "DQM";
        case Condition::A0: return "A0";
        case Condition::A1A2: return "A1A2";
        case Condition::B: return "B";
        case Condition::C1: return "C1";
        case Condition::C2: return "C2";
        case Condition::D: return "D";
        case Condition::E: return "E";
        case Condition::LOSS: return "LOSS";
    }
    return "?";
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::Pass: return "pass";
        case Verdict::Fail: return "fail";
        case Verdict::Inconclusive: return "inconclusive";
    }
    return "?";
}

std::string ConditionReport::to_json(int indent) const {
    nlohmann::ordered_json j;
    j["condition"] = to_string(condition);
    j["verdict"] = to_string(verdict);
    j["parameters"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : parameters) j["parameters"][k] = v;
    j["witnesses"] = nlohmann::ordered_json::array();
    for (const auto& w : witnesses) {
        j["witnesses"].push_back({{"input", w.input}, {"value", w.value}, {"threshold", w.threshold}});
    }
    j["notes"] = notes;
    return j.dump(indent);
}

double ScoreModel::omega(double magnitude) const {
    if (omega_fit.empty() || magnitude < omega_fit.front().magnitude) return 0.0;
    for (const auto& p : omega_fit) {
        if (p.magnitude >= magnitude) return p.omega_iso;
    }
    return omega_fit.back().omega_iso;
}

std::vector<double> isotonic_increasing(const std::vector<double>& y) {
    struct Block {
        double sum;
        std::size_t count;
    };
    std::vector<Block> blocks;
    for (double v : y) {
        blocks.push_back({v, 1});
        while (blocks.size() > 1) {
            const Block& b = blocks[blocks.size() - 1];
            const Block& a = blocks[blocks.size() - 2];
            if (a.sum / static_cast<double>(a.count) <= b.sum / static_cast<double>(b.count)) break;
            Block merged{a.sum + b.sum, a.count + b.count};
            blocks.pop_back();
            blocks.back() = merged;
        }
    }
    std::vector<double> out;
    out.reserve(y.size());
    for (const auto& b : blocks) out.insert(out.end(), b.count, b.sum / static_cast<double>(b.count));
    return out;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) continue;
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++m;
    }
    if (m < 2) return std::numeric_limits<double>::infinity();
    const double denom = m * sxx - sx * sx;
    if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return (m * sxy - sx * sy) / denom;
}

// ---------------------------------------------------------------- DQM

double dqm_residual(const ParametricFamily& family, const Vector& theta0, const Vector& tau, const QuadOptions& opts) {
    family.require_in_domain(theta0, "theta0");
    const Vector theta1 = theta0 + tau;
    family.require_in_domain(theta1, "theta0 + tau");
    auto sq = [&](Obs x) {
        const double g = std::expm1(0.5 * family.log_ratio_raw(x, theta0, theta1));
        const double lin = tau.dot(score(family, theta0, x));
        return (g - lin) * (g - lin);
    };
    return expectation(family, theta0, sq, family.breakpoints(theta1), opts).value;
}

DqmResult check_dqm(FamilyPtr family, const Vector& theta0, const std::vector<Vector>& tau_grid) {
    const ParametricFamily& fam = *family;
    fam.require_in_domain(theta0, "theta0");
    for (const auto& tau : tau_grid) {
        if (tau.size() != fam.dim()) throw DimensionError("check_dqm: tau dimension mismatch");
        fam.require_in_domain(theta0 + tau, "theta0 + tau");
    }

    // Largest R/|tau|^2 per magnitude; magnitudes equal to 1e-9 relative are merged.
    std::vector<std::pair<double, double>> per_mag;
    std::vector<Witness> witnesses;
    for (const auto& tau : tau_grid) {
        const double m = tau.norm();
        if (m == 0.0) continue;
        const double omega = dqm_residual(fam, theta0, tau) / (m * m);
        witnesses.push_back({to_std(tau), omega, 1e-3});
        auto it = std::find_if(per_mag.begin(), per_mag.end(),
                               [&](const auto& p) { return std::abs(p.first - m) <= 1e-9 * m; });
        if (it == per_mag.end()) {
            per_mag.emplace_back(m, omega);
        } else {
            it->second = std::max(it->second, omega);
        }
    }
    if (per_mag.size() < 3) throw GridError("check_dqm: tau grid needs at least 3 distinct magnitudes");
    std::sort(per_mag.begin(), per_mag.end());
    const double lo = per_mag.front().first;
    const double hi = per_mag.back().first;
    if (lo > 1e-3 * (1 + 1e-9) || hi < 100.0 * lo * (1 - 1e-9)) {
        throw GridError("check_dqm: |tau| must span two decades down to 1e-3");
    }

    std::vector<double> raw;
    for (const auto& p : per_mag) raw.push_back(p.second);
    const auto iso = isotonic_increasing(raw);

    DqmResult out;
    out.model.family = family;
    out.model.theta0 = theta0;
    for (std::size_t i = 0; i < per_mag.size(); ++i) {
        out.model.omega_fit.push_back({per_mag[i].first, raw[i], iso[i]});
    }

    ConditionReport& r = out.report;
    r.condition = Condition::DQM;
    r.parameters = {{"tau_min", lo},
                    {"tau_max", hi},
                    {"omega_at_min", raw.front()},
                    {"omega_iso_at_min", iso.front()},
                    {"omega_at_max", raw.back()},
                    {"extremal_value", raw.front()},
                    {"threshold", 1e-3}};
    const bool small = iso.front() < 1e-3;
    const bool decreasing = raw.front() <= raw.back();
    r.verdict = small && decreasing ? Verdict::Pass : Verdict::Fail;
    if (!decreasing) {
        witnesses.push_back({{lo, hi}, raw.front(), raw.back()});
        r.notes.push_back("omega does not decrease toward |tau| = 0 on the grid");
    }
    if (!small) r.notes.push_back("omega at the smallest |tau| is not below 1e-3");
    if (!fam.differentiable_in_theta()) r.notes.push_back("density not differentiable in theta; phi from closed form");
    r.witnesses = std::move(witnesses);
    return out;
}

// ---------------------------------------------------------------- A0

ConditionReport check_a0(const ParametricFamily& family, const Box& compact, double delta) {
    const Box& dom = family.theta_domain();
    if (compact.dim() != family.dim()) throw DimensionError("check_a0: compact dimension mismatch");
    if (!(delta > 0.0)) throw PreconditionError("check_a0: delta must be positive");
    for (int j = 0; j < family.dim(); ++j) {
        if (!(compact.lo[j] <= compact.hi[j]) || !(compact.lo[j] > dom.lo[j]) || !(compact.hi[j] < dom.hi[j])) {
            throw DomainError("check_a0: compact set must lie inside the parameter domain");
        }
    }
    const double diameter = dom.diameter();
    if (delta >= diameter) throw GridError("check_a0: delta exceeds the parameter box diameter");

    // theta grid at step delta/10 (at most 41 nodes per axis, noted when coarsened).
    const double step = delta / 10.0;
    std::vector<int> counts;
    bool coarsened = false;
    for (int j = 0; j < family.dim(); ++j) {
        const double w = compact.hi[j] - compact.lo[j];
        int c = static_cast<int>(std::floor(w / step + 1e-9)) + 1;
        if (w > 0 && c < 2) c = 2;
        if (c > 41) {
            c = 41;
            coarsened = true;
        }
        counts.push_back(c);
    }
    const auto thetas = box_grid(compact, counts);

    // |tau| from delta to 2 delta at step delta/10, then geometric (x1.25) up to the diameter.
    std::vector<double> mags;
    for (int k = 0; k <= 10; ++k) mags.push_back(delta * (1.0 + k / 10.0));
    for (double m = 2.5 * delta; m < diameter; m *= 1.25) mags.push_back(m);
    const auto dirs = directions(family.dim());

    double best = std::numeric_limits<double>::infinity();
    Vector best_theta, best_tau;
    std::size_t evaluated = 0;
    for (const auto& theta : thetas) {
        for (double m : mags) {
            for (const auto& e : dirs) {
                const Vector tau = m * e;
                if (!dom.contains_open(theta + tau)) continue;
                const double h2 = hellinger_distance_sq(hellinger_affinity(family, theta, tau));
                ++evaluated;
                if (h2 < best) {
                    best = h2;
                    best_theta = theta;
                    best_tau = tau;
                }
            }
        }
    }
    if (evaluated == 0) throw GridError("check_a0: no admissible (theta, tau) pair with |tau| >= delta");

    ConditionReport r;
    r.condition = Condition::A0;
    r.parameters = {{"delta", delta},
                    {"theta_step", step},
                    {"theta_points", static_cast<double>(thetas.size())},
                    {"tau_magnitudes", static_cast<double>(mags.size())},
                    {"infimum", best},
                    {"extremal_value", best},
                    {"threshold", 1e-6}};
    r.witnesses.push_back({concat(best_theta, best_tau), best, 1e-6});
    r.verdict = best > 1e-6 ? Verdict::Pass : Verdict::Fail;
    if (coarsened) r.notes.push_back("theta grid capped at 41 points per axis");
    return r;
}

// ---------------------------------------------------------------- B

ConditionReport check_moment_b(const ParametricFamily& family, const Vector& theta0, const std::vector<Vector>& tau_grid,
                               const MomentBOptions& opts) {
    if (!(opts.eps > 0.0)) throw PreconditionError("check_moment_b: eps must be positive");
    if (!(opts.gamma_n >= 1.0)) throw PreconditionError("check_moment_b: gamma_n must be >= 1");
    if (!(opts.u_n > 0.0)) throw PreconditionError("check_moment_b: u_n must be positive");
    family.require_in_domain(theta0, "theta0");
    for (const auto& tau : tau_grid) {
        if (tau.size() != family.dim()) throw DimensionError("check_moment_b: tau dimension mismatch");
        if (!(tau.norm() < opts.c1 * opts.u_n)) throw GridError("check_moment_b: |tau| must be below c1 * u_n");
        family.require_in_domain(theta0 + tau, "theta0 + tau");
    }
    const auto U = neighborhood_grid(family, theta0, opts.constants.neighborhood, opts.constants.neighborhood_points);

    ConditionReport r;
    r.condition = Condition::B;
    const double bound = opts.constants.bound;
    double worst = 0.0;
    bool overflow = false;
    Witness worst_w{concat(theta0, Vector::Zero(family.dim())), 0.0, bound};
    for (const auto& theta : U) {
        for (const auto& tau : tau_grid) {
            const Vector shifted = theta + tau;
            if (!family.theta_domain().contains_open(shifted)) continue;
            bool blew = false;
            auto integrand = [&](Obs x) {
                const double lr = family.log_ratio_raw(x, theta, shifted);
                const double log_val = opts.gamma_n * lr + family.log_density_raw(x, theta);
                if (log_val > kLogHuge) {
                    blew = true;
                    return 0.0;
                }
                if (!(std::abs(lr) > opts.eps)) return 0.0;
                return std::exp(log_val);
            };
            const double v =
                integrate_base(family, integrand, joined_breakpoints(family, {theta, shifted})).value;
            if (blew) {
                overflow = true;
                r.witnesses.push_back({concat(theta, tau), std::numeric_limits<double>::infinity(), bound});
                continue;
            }
            if (v >= worst) {
                worst = v;
                worst_w = {concat(theta, tau), v, bound};
            }
            if (v > bound) r.witnesses.push_back({concat(theta, tau), v, bound});
        }
    }
    r.witnesses.push_back(worst_w);
    r.parameters = {{"u_n", opts.u_n},        {"eps", opts.eps},     {"gamma_n", opts.gamma_n},
                    {"c1", opts.c1},          {"bound", bound},       {"max_moment", worst},
                    {"extremal_value", worst}, {"neighborhood", opts.constants.neighborhood}};
    if (overflow) {
        r.verdict = Verdict::Inconclusive;
        r.notes.push_back("integrand exceeded 1e300 before truncation");
    } else {
        r.verdict = worst <= bound ? Verdict::Pass : Verdict::Fail;
    }
    return r;
}

// ---------------------------------------------------------------- A1/A2

double exp_moment(const ParametricFamily& family, const Vector& theta, const ObsFn& h, double gamma) {
    family.require_in_domain(theta);
    auto integrand = [&](Obs x) {
        const double log_val = gamma * h(x) + family.log_density_raw(x, theta);
        return std::exp(log_val);
    };
    const auto bps = family.breakpoints(theta);
    if (family.support().kind == SupportKind::Binary) {
        const double v = integrate_base(family, integrand, bps).value;
        if (!std::isfinite(v)) throw DivergenceError("exp_moment: non-finite moment");
        return v;
    }
    // Growing windows: the integral must settle before the window reaches 4096.
    double center = 0.0;
    if (!bps.empty()) center = bps.front();
    double prev = 0.0;
    int settled = 0;
    for (int k = 0; k <= 10; ++k) {
        const double half = 4.0 * std::ldexp(1.0, k);
        QuadResult q;
        try {
            q = integrate_window(family, integrand, center, half, bps);
        } catch (const QuadratureError& e) {
            throw DivergenceError(std::string("exp_moment: integrand not integrable (") + e.what() + ")");
        }
        if (!std::isfinite(q.value)) throw DivergenceError("exp_moment: non-finite partial integral");
        if (k > 0 && std::abs(q.value - prev) <= 1e-12 * std::max(1.0, std::abs(q.value))) {
            if (++settled == 2) return q.value;
        } else {
            settled = 0;
        }
        prev = q.value;
    }
    throw DivergenceError("exp_moment: partial integrals keep growing");
}

ConditionReport check_exp_moment(const ParametricFamily& family, const Vector& theta0, const ObsFn& envelope_h,
                                 double gamma, const ConditionConstants& constants) {
    if (!(gamma > 0.0)) throw PreconditionError("check_exp_moment: gamma must be positive");
    if (!envelope_h) throw PreconditionError("check_exp_moment: envelope h is required");
    family.require_in_domain(theta0, "theta0");
    const auto U = neighborhood_grid(family, theta0, constants.neighborhood, constants.neighborhood_points);
    ConditionReport r;
    r.condition = Condition::A1A2;
    double worst = 0.0;
    Vector worst_theta = theta0;
    for (const auto& theta : U) {
        const double v = exp_moment(family, theta, envelope_h, gamma);
        if (v >= worst) {
            worst = v;
            worst_theta = theta;
        }
    }
    r.witnesses.push_back({to_std(worst_theta), worst, constants.bound});
    r.parameters = {{"gamma", gamma},
                    {"bound", constants.bound},
                    {"max_moment", worst},
                    {"extremal_value", worst},
                    {"neighborhood", constants.neighborhood}};
    r.verdict = worst <= constants.bound ? Verdict::Pass : Verdict::Fail;
    r.notes.push_back("envelope h treated as independent of n");
    return r;
}

// ---------------------------------------------------------------- C1 / C2

ConditionReport check_c1(const ParametricFamily& family, const Vector& theta0, const std::vector<double>& u_grid,
                         const ConditionConstants& constants) {
    require_positive_decreasing(u_grid, "check_c1");
    if (!(constants.gamma > 0.0) || !(constants.lambda > 0.0)) {
        throw PreconditionError("check_c1: gamma and lambda must be positive");
    }
    family.require_in_domain(theta0, "theta0");
    const int d = family.dim();
    const auto U = neighborhood_grid(family, theta0, constants.neighborhood, constants.neighborhood_points);

    ConditionReport r;
    r.condition = Condition::C1;
    std::vector<double> omegas;
    bool moment_ok = true;
    double worst_ratio = 0.0;
    for (double u : u_grid) {
        double omega = 0.0;
        for (const auto& e : directions(d)) {
            const Vector tau = u * e;
            if (!family.theta_domain().contains_open(theta0 + tau)) continue;
            omega = std::max(omega, dqm_residual(family, theta0, tau) / (u * u));
        }
        omegas.push_back(omega);

        const double cut = constants.eps / u;
        const double limit = constants.bound * std::pow(u, constants.gamma);
        for (const auto& theta : U) {
            auto tail = [&](Obs x) {
                const Vector phi = score(family, theta0, x);
                const double a = phi.norm();
                return a > cut ? a * a : 0.0;
            };
            const double t = expectation(family, theta, tail, family.breakpoints(theta0)).value;
            worst_ratio = std::max(worst_ratio, t / limit);
            if (t > limit) {
                moment_ok = false;
                r.witnesses.push_back({concat(theta, make_vector({u})), t, limit});
            }
        }
    }
    const double slope = loglog_slope(u_grid, omegas);
    const double need = constants.lambda - 0.1;
    const bool slope_ok = std::isinf(slope) ? slope > 0 : slope >= need;
    r.witnesses.push_back({{u_grid.front(), u_grid.back()}, slope, need});
    for (std::size_t i = 0; i < u_grid.size(); ++i) {
        r.witnesses.push_back({{u_grid[i]}, omegas[i], constants.bound * std::pow(u_grid[i], constants.lambda)});
    }
    r.parameters = {{"eps", constants.eps},
                    {"gamma", constants.gamma},
                    {"lambda", constants.lambda},
                    {"bound", constants.bound},
                    {"omega_slope", slope},
                    {"max_moment_ratio", worst_ratio},
                    {"extremal_value", slope}};
    if (std::isinf(slope)) r.notes.push_back("omega vanishes on the grid; slope treated as unbounded");
    r.verdict = slope_ok && moment_ok ? Verdict::Pass : Verdict::Fail;
    return r;
}

ConditionReport check_c2(const ParametricFamily& family, const Vector& theta0, const std::vector<double>& u_grid,
                         const ConditionConstants& constants) {
    require_positive_decreasing(u_grid, "check_c2");
    if (!(constants.gamma > 0.0)) throw PreconditionError("check_c2: gamma must be positive");
    family.require_in_domain(theta0, "theta0");
    const FisherInfo info = fisher_information(family, theta0);

    ConditionReport r;
    r.condition = Condition::C2;
    std::vector<double> diffs;
    bool ok = true;
    for (double u : u_grid) {
        double worst = 0.0;
        for (const auto& e : directions(family.dim())) {
            const Vector tau = u * e;
            const Vector shifted = theta0 + tau;
            if (!family.theta_domain().contains_open(shifted)) continue;
            auto g2 = [&](Obs x) {
                const double g = std::expm1(0.5 * family.log_ratio_raw(x, theta0, shifted));
                return g * g;
            };
            const double eg2 = expectation(family, theta0, g2, family.breakpoints(shifted)).value;
            const double diff = std::abs(eg2 - 0.25 * tau.dot(info.matrix * tau));
            const double limit = constants.bound * std::pow(u, 2.0 + constants.gamma);
            if (diff > limit) {
                ok = false;
                r.witnesses.push_back({to_std(tau), diff, limit});
            }
            worst = std::max(worst, diff);
        }
        diffs.push_back(worst);
        r.witnesses.push_back({{u}, worst, constants.bound * std::pow(u, 2.0 + constants.gamma)});
    }
    const double exponent = loglog_slope(u_grid, diffs);
    r.parameters = {{"gamma", constants.gamma},
                    {"bound", constants.bound},
                    {"measured_exponent", exponent},
                    {"max_difference", *std::max_element(diffs.begin(), diffs.end())},
                    {"extremal_value", *std::max_element(diffs.begin(), diffs.end())}};
    r.verdict = ok ? Verdict::Pass : Verdict::Fail;
    return r;
}

CReports check_c(const ParametricFamily& family, const Vector& theta0, const std::vector<double>& u_grid,
                 const ConditionConstants& constants) {
    CReports out;
    out.c1 = check_c1(family, theta0, u_grid, constants);
    out.c2 = check_c2(family, theta0, u_grid, constants);
    out.c1_slope = out.c1.parameters.at("omega_slope");
    out.c2_exponent = out.c2.parameters.at("measured_exponent");
    return out;
}

// ---------------------------------------------------------------- D

ConditionReport check_d(const ParametricFamily& family, double m, std::optional<Box> box, int points_per_axis,
                        const ConditionConstants& constants) {
    const int d = family.dim();
    if (!(m > d)) throw PreconditionError("check_d: m must exceed the parameter dimension");
    if (points_per_axis < 1) throw GridError("check_d: need at least one grid point per axis");
    const Box& dom = family.theta_domain();
    Box grid_box = box.value_or(Box{dom.lo + 0.05 * dom.width(), dom.hi - 0.05 * dom.width()});
    if (grid_box.dim() != d) throw DimensionError("check_d: box dimension mismatch");
    if (!grid_box.inside(dom)) throw DomainError("check_d: box must lie inside the parameter domain");

    const auto thetas = box_grid(grid_box, std::vector<int>(static_cast<std::size_t>(d), points_per_axis));
    double worst = -1.0;
    Vector arg = thetas.front();
    for (const auto& theta : thetas) {
        auto moment = [&](Obs x) {
            Vector grad;
            if (auto g = family.grad_log_density(x, theta)) {
                grad = *g;
            } else {
                grad.resize(d);
                for (int j = 0; j < d; ++j) {
                    const double h = 1e-6 * std::max(1.0, std::abs(theta[j]));
                    Vector up = theta, down = theta;
                    up[j] += h;
                    down[j] -= h;
                    grad[j] = (family.log_density_raw(x, up) - family.log_density_raw(x, down)) / (2 * h);
                }
            }
            return std::pow(grad.norm(), m);
        };
        const double v = expectation(family, theta, moment).value;
        if (v > worst) {
            worst = v;
            arg = theta;
        }
    }

    ConditionReport r;
    r.condition = Condition::D;
    r.parameters = {{"m", m},
                    {"bound", constants.bound},
                    {"points_per_axis", static_cast<double>(points_per_axis)},
                    {"sup_moment", worst},
                    {"extremal_value", worst}};
    r.witnesses.push_back({to_std(arg), worst, constants.bound});
    if (!family.differentiable_in_theta()) {
        r.notes.push_back("NonDifferentiableWarning: gradient defined almost everywhere; a.e. value used");
    }
    r.verdict = std::isfinite(worst) && worst <= constants.bound ? Verdict::Pass : Verdict::Fail;
    return r;
}

// ---------------------------------------------------------------- E

double e_moment(const ParametricFamily& family, const Vector& theta0, const Vector& u, const Vector& v,
                const EOptions& opts) {
    family.require_in_domain(theta0, "theta0");
    const Vector tu = theta0 + u;
    const Vector tv = theta0 + v;
    family.require_in_domain(tu, "theta0 + u");
    family.require_in_domain(tv, "theta0 + v");
    if (u == v) return 0.0;
    const double cut = opts.eps / opts.u_n;
    const Vector dv = v - u;
    auto integrand = [&](Obs x) {
        const Vector phi = score(family, theta0, x);
        const double lin = phi.norm() < cut ? 2.0 * dv.dot(phi) : 0.0;
        return std::pow(std::abs(family.log_ratio_raw(x, tu, tv) - lin), opts.beta1);
    };
    return expectation(family, theta0, integrand, joined_breakpoints(family, {tu, tv})).value;
}

ConditionReport check_e(const ParametricFamily& family, const Vector& theta0,
                        const std::vector<std::pair<Vector, Vector>>& pair_grid, const EOptions& opts) {
    const int d = family.dim();
    if (!(opts.beta1 > d) || !(opts.beta2 > d)) throw PreconditionError("check_e: beta1 and beta2 must exceed d");
    if (!(opts.eps > 0.0) || !(opts.u_n > 0.0)) throw PreconditionError("check_e: eps and u_n must be positive");
    if (pair_grid.empty()) throw GridError("check_e: empty pair grid");

    ConditionReport r;
    r.condition = Condition::E;
    double fitted = 0.0;
    std::vector<std::pair<std::size_t, double>> moments;
    for (std::size_t i = 0; i < pair_grid.size(); ++i) {
        const auto& [u, v] = pair_grid[i];
        if (u.size() != d || v.size() != d) throw DimensionError("check_e: pair dimension mismatch");
        const double mom = e_moment(family, theta0, u, v, opts);
        moments.emplace_back(i, mom);
        const double gap = (v - u).norm();
        if (gap > 0.0) fitted = std::max(fitted, mom / std::pow(gap, opts.beta2));
    }
    const double bound = opts.constants.bound;
    for (const auto& [i, mom] : moments) {
        const auto& [u, v] = pair_grid[i];
        r.witnesses.push_back({concat(u, v), mom, bound * std::pow((v - u).norm(), opts.beta2)});
    }
    r.parameters = {{"eps", opts.eps},     {"u_n", opts.u_n},     {"beta1", opts.beta1},
                    {"beta2", opts.beta2}, {"bound", bound},      {"fitted_C", fitted},
                    {"extremal_value", fitted}};
    r.verdict = fitted <= bound ? Verdict::Pass : Verdict::Fail;
    return r;
}

// ---------------------------------------------------------------- loss

ConditionReport check_loss(const LossSpec& loss, const std::vector<double>& a_grid, const std::vector<double>& x_grid) {
    if (a_grid.empty() || x_grid.empty()) throw GridError("check_loss: empty grid");
    for (double a : a_grid) {
        if (!(a > 1.0 && a <= 10.0)) throw GridError("check_loss: a must lie in (1, 10]");
    }
    for (double x : x_grid) {
        if (!(x > 0.0)) throw GridError("check_loss: x must be positive");
    }
    if (std::abs(loss.l1(0.0)) > 0.0) throw MonotoneError("check_loss: l1(0) must be 0");
    std::vector<double> pts{0.0};
    for (double x : x_grid) {
        pts.push_back(x);
        for (double a : a_grid) pts.push_back(a * x);
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (!(loss.l1(pts[i]) > loss.l1(pts[i - 1]))) {
            throw MonotoneError("check_loss: l1 not increasing between " + std::to_string(pts[i - 1]) + " and " +
                                std::to_string(pts[i]));
        }
    }

    double kappa1 = 0.0;
    for (double a : a_grid) {
        for (double x : x_grid) kappa1 = std::max(kappa1, std::log(loss.l1(a * x) / loss.l1(x)) / std::log(a));
    }
    const double kappa2 = kappa1;
    double c2 = std::numeric_limits<double>::infinity();
    std::vector<double> c2_arg{0.0, 0.0};
    ConditionReport r;
    r.condition = Condition::LOSS;
    for (double a : a_grid) {
        for (double x : x_grid) {
            const double lx = loss.l1(x);
            const double lax = loss.l1(a * x);
            r.witnesses.push_back({{a, x}, lax / lx, std::pow(a, kappa1)});
            const double c = (lax - lx) / lx / std::pow(a - 1.0, kappa2);
            if (c < c2) {
                c2 = c;
                c2_arg = {a, x};
            }
        }
    }
    const double a_min = c2_arg[0];
    const double x_min = c2_arg[1];
    const double rel_min = (loss.l1(a_min * x_min) - loss.l1(x_min)) / loss.l1(x_min);
    r.witnesses.push_back({c2_arg, rel_min, c2 * std::pow(a_min - 1.0, kappa2)});
    r.parameters = {{"C1", 1.0}, {"kappa1", kappa1}, {"C2", c2}, {"kappa2", kappa2}, {"extremal_value", kappa1}};
    r.notes.push_back("loss " + loss.describe());
    r.verdict = std::isfinite(kappa1) && c2 > 0.0 && std::isfinite(c2) ? Verdict::Pass : Verdict::Fail;
    return r;
}

}  // namespace modev
