#include "modev/estimators.hpp"

#include "modev/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>

namespace modev {

namespace {

constexpr double kGolden = 0.6180339887498949;

double radical_inverse(std::uint64_t i, int base) {
    double inv = 1.0 / base;
    double f = inv;
    double out = 0.0;
    while (i > 0) {
        out += f * static_cast<double>(i % static_cast<std::uint64_t>(base));
        i /= static_cast<std::uint64_t>(base);
        f *= inv;
    }
    return out;
}

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

bool near_boundary(const ParametricFamily& family, const Vector& theta, double tol) {
    const Box& dom = family.theta_domain();
    for (int j = 0; j < family.dim(); ++j) {
        const double slack = tol + 2e-9 * (dom.hi[j] - dom.lo[j]);
        if (theta[j] - dom.lo[j] <= slack || dom.hi[j] - theta[j] <= slack) return true;
    }
    return false;
}

double step_for(const ParametricFamily& family, const MleSearch& s, int j) {
    const double w = family.theta_domain().hi[j] - family.theta_domain().lo[j];
    return s.grid_step > 0.0 ? s.grid_step : 1e-2 * w;
}

/// Interior coarse-grid coordinates along axis j.
std::vector<double> coarse_axis(const ParametricFamily& family, double step, int j, std::size_t cap) {
    const double lo = family.theta_domain().lo[j];
    const double hi = family.theta_domain().hi[j];
    std::vector<double> out;
    for (double k = 1;; k += 1) {
        const double v = lo + k * step;
        if (!(v < hi)) break;
        out.push_back(v);
    }
    if (out.size() > cap) {
        std::vector<double> thin;
        const double stride = static_cast<double>(out.size()) / static_cast<double>(cap);
        for (std::size_t i = 0; i < cap; ++i) thin.push_back(out[static_cast<std::size_t>(i * stride)]);
        out = std::move(thin);
    }
    return out;
}

MleResult mle_1d(const ParametricFamily& family, const LogLikelihood& L, const MleSearch& s) {
    const Box& dom = family.theta_domain();
    const double step = step_for(family, s, 0);
    const auto nodes = coarse_axis(family, step, 0, 100000);
    auto eval = [&](double t) { return L(make_vector({t})); };
    auto slope = [&](double t) { return L.gradient(make_vector({t}))[0]; };

    double best_x = nodes.empty() ? dom.center()[0] : nodes.front();
    double best_l = eval(best_x);
    for (double x : nodes) {
        const double l = eval(x);
        if (l > best_l) {
            best_l = l;
            best_x = x;
        }
    }
    const double lo_in = family.clamp_interior(make_vector({dom.lo[0]}))[0];
    const double hi_in = family.clamp_interior(make_vector({dom.hi[0]}))[0];
    const double a0 = std::max(lo_in, best_x - step);
    const double b0 = std::min(hi_in, best_x + step);

    // Golden section on the bracket.
    double a = a0, b = b0;
    double c = b - kGolden * (b - a);
    double d = a + kGolden * (b - a);
    double fc = eval(c), fd = eval(d);
    int iters = 0;
    while (b - a > s.tol && iters++ < 300) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - kGolden * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + kGolden * (b - a);
            fd = eval(d);
        }
    }
    double theta = fc >= fd ? c : d;
    bool converged = b - a <= s.tol;

    // Polish on the sign of the score: the result is the leftmost point where
    // the slope stops being positive, which also resolves flat maxima.
    double left = a0, right = b0;
    const double sl = slope(left);
    const double sr = slope(right);
    if (sl <= 0.0 && left <= lo_in) {
        theta = left;
    } else if (sr > 0.0 && right >= hi_in) {
        theta = right;
    } else if (sl > 0.0 && sr <= 0.0) {
        for (int k = 0; k < 200; ++k) {
            const double mid = 0.5 * (left + right);
            if (mid <= left || mid >= right) break;
            if (slope(mid) > 0.0) {
                left = mid;
            } else {
                right = mid;
            }
        }
        const double tol_l = 1e-12 * (1.0 + std::abs(eval(theta)));
        if (eval(right) >= eval(theta) - tol_l) {
            theta = right;
            converged = true;
        }
    }
    if (eval(theta) < best_l) theta = best_x;

    MleResult r;
    r.theta_hat = make_vector({theta});
    r.loglik = eval(theta);
    r.n_restarts = 1;
    r.converged = converged;
    r.tie_broken = theta + s.tol < hi_in && slope(theta + s.tol) == 0.0;
    r.boundary_warning = near_boundary(family, r.theta_hat, s.tol);
    return r;
}

struct Candidate {
    Vector x;
    double l;
    bool converged;
};

Candidate bfgs_ascent(const ParametricFamily& family, const LogLikelihood& L, Vector x, double tol) {
    const int d = family.dim();
    auto project = [&](const Vector& v) { return family.clamp_interior(v); };
    x = project(x);
    double fx = L(x);
    Vector g = L.gradient(x);
    const double min_w = family.theta_domain().width().minCoeff();
    Matrix H = Matrix::Identity(d, d) * (0.1 * min_w / std::max(g.norm(), 1e-12));
    bool first = true;
    bool converged = false;
    for (int it = 0; it < 500; ++it) {
        Vector p = H * g;  // ascent direction
        if (p.dot(g) <= 0.0) {
            H = Matrix::Identity(d, d) * (0.1 * min_w / std::max(g.norm(), 1e-12));
            p = H * g;
        }
        double alpha = 1.0;
        Vector xn;
        double fn = fx;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls) {
            xn = project(x + alpha * p);
            fn = L(xn);
            if (fn >= fx + 1e-4 * g.dot(xn - x) && fn >= fx) {
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!moved) {
            converged = true;
            break;
        }
        const Vector sv = xn - x;
        const Vector gn = L.gradient(xn);
        const Vector y = g - gn;  // gradient of -L changes by -(gn - g)
        x = xn;
        const double df = fn - fx;
        fx = fn;
        g = gn;
        if (sv.norm() <= tol * (1.0 + x.norm()) || df <= 1e-15 * (1.0 + std::abs(fx))) {
            converged = true;
            break;
        }
        const double sy = sv.dot(y);
        if (sy > 1e-300) {
            if (first) {
                H = Matrix::Identity(d, d) * (sy / y.dot(y));
                first = false;
            }
            const double rho = 1.0 / sy;
            const Matrix I = Matrix::Identity(d, d);
            H = (I - rho * sv * y.transpose()) * H * (I - rho * y * sv.transpose()) + rho * sv * sv.transpose();
        }
    }
    return {x, fx, converged};
}

MleResult mle_nd(const ParametricFamily& family, const LogLikelihood& L, const MleSearch& s) {
    const int d = family.dim();
    const Box& dom = family.theta_domain();
    std::vector<std::vector<double>> axes;
    const auto cap = static_cast<std::size_t>(std::pow(250000.0, 1.0 / d));
    for (int j = 0; j < d; ++j) axes.push_back(coarse_axis(family, step_for(family, s, j), j, cap));

    Vector best_node = dom.center();
    double best_l = L(best_node);
    std::vector<std::size_t> idx(static_cast<std::size_t>(d), 0);
    bool empty = false;
    for (const auto& ax : axes) empty = empty || ax.empty();
    while (!empty) {
        Vector t(d);
        for (int j = 0; j < d; ++j) t[j] = axes[static_cast<std::size_t>(j)][idx[static_cast<std::size_t>(j)]];
        const double l = L(t);
        if (l > best_l) {
            best_l = l;
            best_node = t;
        }
        int j = d - 1;
        while (j >= 0 && ++idx[static_cast<std::size_t>(j)] == axes[static_cast<std::size_t>(j)].size()) {
            idx[static_cast<std::size_t>(j--)] = 0;
        }
        if (j < 0) break;
    }

    std::vector<Vector> starts{best_node};
    for (int k = 1; k <= s.n_restarts; ++k) {
        Vector h(d);
        for (int j = 0; j < d; ++j) h[j] = radical_inverse(static_cast<std::uint64_t>(k), kPrimes[j % 12]);
        starts.push_back(dom.lo + h.cwiseProduct(dom.width()));
    }

    std::vector<Candidate> results;
    for (const auto& x0 : starts) results.push_back(bfgs_ascent(family, L, x0, s.tol));

    double top = -std::numeric_limits<double>::infinity();
    for (const auto& c : results) top = std::max(top, c.l);
    const double tol_l = 1e-12 * (1.0 + std::abs(top));
    const Candidate* win = nullptr;
    int ties = 0;
    for (const auto& c : results) {
        if (c.l < top - tol_l) continue;
        if (win != nullptr && (c.x - win->x).norm() > 1e-6) ++ties;
        if (win == nullptr || lex_less(c.x, win->x)) win = &c;
    }
    MleResult r;
    r.theta_hat = win->x;
    r.loglik = win->l;
    if (r.loglik < best_l) {
        r.theta_hat = best_node;
        r.loglik = best_l;
    }
    r.n_restarts = static_cast<int>(starts.size());
    r.converged = win->converged;
    r.tie_broken = ties > 0;
    r.boundary_warning = near_boundary(family, r.theta_hat, s.tol);
    return r;
}

}  // namespace

MleResult mle(const ParametricFamily& family, std::span<const double> obs, const MleSearch& search) {
    if (obs.empty()) throw PreconditionError("mle: empty sample");
    for (std::size_t i = 0; i < obs.size(); i += static_cast<std::size_t>(family.obs_dim())) {
        family.require_in_support(obs.subspan(i, static_cast<std::size_t>(family.obs_dim())));
    }
    const LogLikelihood L(family, obs);
    return family.dim() == 1 ? mle_1d(family, L, search) : mle_nd(family, L, search);
}

MleResult mle_fast(const ParametricFamily& family, std::span<const double> obs, const MleSearch& search) {
    if (obs.empty()) throw PreconditionError("mle: empty sample");
    if (auto closed = family.closed_form_mle(obs)) {
        MleResult r;
        r.theta_hat = family.clamp_interior(*closed);
        r.loglik = LogLikelihood(family, obs)(r.theta_hat);
        r.converged = true;
        r.boundary_warning = near_boundary(family, r.theta_hat, search.tol);
        return r;
    }
    return mle(family, obs, search);
}

// ---------------------------------------------------------------- priors

Prior Prior::flat() { return {}; }

Prior Prior::gaussian(const Vector& mean, const Vector& sd) {
    if (mean.size() != sd.size()) throw DimensionError("prior: mean and sd dimensions differ");
    if (!(sd.array() > 0.0).all()) throw PreconditionError("prior: sd must be positive");
    Prior p;
    p.kind = Kind::Gaussian;
    p.mean = mean;
    p.sd = sd;
    return p;
}

double Prior::log_density(const Vector& theta) const {
    if (kind == Kind::Flat) return 0.0;
    const Vector z = (theta - mean).cwiseQuotient(sd);
    return -0.5 * z.squaredNorm() - sd.array().log().sum() - 0.5 * static_cast<double>(theta.size()) *
                                                                  std::log(2.0 * std::numbers::pi);
}

std::string Prior::id() const {
    if (kind == Kind::Flat) return "flat";
    return "gaussian:" + format_vector(mean) + ":" + format_vector(sd);
}

Prior parse_prior(const std::string& text, int d) {
    if (text == "flat") return Prior::flat();
    if (text.rfind("gaussian", 0) == 0) {
        std::vector<std::string> parts;
        std::size_t start = 0;
        while (true) {
            const auto pos = text.find(':', start);
            parts.push_back(text.substr(start, pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        if (parts.size() == 1) return Prior::gaussian(Vector::Zero(d), Vector::Ones(d));
        if (parts.size() != 3) throw ConfigError("prior: expected gaussian:<mean>:<sd>");
        auto list = [&](const std::string& s) {
            std::vector<double> v;
            std::size_t b = 0;
            while (true) {
                const auto e = s.find(';', b);
                try {
                    v.push_back(std::stod(s.substr(b, e - b)));
                } catch (const std::exception&) {
                    throw ConfigError("prior: bad number in '" + text + "'");
                }
                if (e == std::string::npos) break;
                b = e + 1;
            }
            if (v.size() == 1) v.assign(static_cast<std::size_t>(d), v[0]);
            if (static_cast<int>(v.size()) != d) throw ConfigError("prior: dimension mismatch in '" + text + "'");
            return make_vector(v);
        };
        try {
            return Prior::gaussian(list(parts[1]), list(parts[2]));
        } catch (const PreconditionError& e) {
            throw ConfigError(e.what());
        }
    }
    throw ConfigError("prior: unknown prior '" + text + "'");
}

// ---------------------------------------------------------------- posterior

Vector PosteriorGrid::node(std::size_t i) const {
    const int d = dim();
    Vector t(d);
    for (int j = d - 1; j >= 0; --j) {
        const auto& ax = axes[static_cast<std::size_t>(j)];
        t[j] = ax[i % ax.size()];
        i /= ax.size();
    }
    return t;
}

double PosteriorGrid::density(std::size_t i) const { return std::exp(log_weights[i] - normalizer); }

double PosteriorGrid::weight(std::size_t i) const { return density(i) * cell_volume(); }

std::vector<double> PosteriorGrid::weights() const {
    std::vector<double> w(size());
    for (std::size_t i = 0; i < size(); ++i) w[i] = weight(i);
    return w;
}

Vector PosteriorGrid::mean() const {
    Vector m = Vector::Zero(dim());
    for (std::size_t i = 0; i < size(); ++i) m += weight(i) * node(i);
    return m;
}

void PosteriorGrid::dump(std::ostream& os) const {
    char buf[64];
    for (std::size_t i = 0; i < size(); ++i) {
        std::snprintf(buf, sizeof buf, " %.17g\n", log_weights[i]);
        os << format_vector(node(i)) << buf;
    }
}

Box default_posterior_box(const ParametricFamily& family, std::span<const double> obs, double u_n) {
    const std::size_t n = obs.size() / static_cast<std::size_t>(family.obs_dim());
    const Box& dom = family.theta_domain();
    Vector center = dom.center();
    double half = std::max(5.0 * u_n, 0.0);
    if (n > 0) {
        center = mle_fast(family, obs).theta_hat;
        half = std::max(half, 10.0 / std::sqrt(static_cast<double>(n)));
    } else {
        half = std::max(half, 0.5 * dom.width().maxCoeff());
    }
    Box b{Vector(center.array() - half), Vector(center.array() + half)};
    const Vector margin = 1e-9 * dom.width();
    b.lo = b.lo.cwiseMax(dom.lo + margin);
    b.hi = b.hi.cwiseMin(dom.hi - margin);
    return b;
}

PosteriorGrid posterior_grid(const ParametricFamily& family, std::span<const double> obs, const Prior& prior,
                             const Box& box, int resolution) {
    const int d = family.dim();
    if (d > 2) throw DimensionError("posterior_grid: only d <= 2 is supported");
    if (resolution < 64) throw GridError("posterior_grid: resolution must be at least 64 per axis");
    if (box.dim() != d) throw DimensionError("posterior_grid: box dimension mismatch");
    if (!box.inside(family.theta_domain())) throw DomainError("posterior_grid: box must lie inside the domain");
    if (prior.kind == Prior::Kind::Gaussian && prior.mean.size() != d) {
        throw DimensionError("posterior_grid: prior dimension mismatch");
    }

    PosteriorGrid g;
    g.box = box;
    g.resolution = resolution;
    g.prior = prior.id();
    g.cell = box.width() / resolution;
    for (int j = 0; j < d; ++j) {
        std::vector<double> ax(static_cast<std::size_t>(resolution));
        for (int k = 0; k < resolution; ++k) ax[static_cast<std::size_t>(k)] = box.lo[j] + (k + 0.5) * g.cell[j];
        g.axes.push_back(std::move(ax));
    }
    const std::size_t total = static_cast<std::size_t>(std::pow(resolution, d));
    g.log_weights.resize(total);
    const bool has_data = !obs.empty();
    const LogLikelihood L(family, obs);
    const double log_flat = -family.theta_domain().width().array().log().sum();
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < total; ++i) {
        const Vector t = g.node(i);
        const double lp = prior.kind == Prior::Kind::Flat ? log_flat : prior.log_density(t);
        const double lw = (has_data ? L(t) : 0.0) + lp;
        g.log_weights[i] = std::isnan(lw) ? -std::numeric_limits<double>::infinity() : lw;
        top = std::max(top, g.log_weights[i]);
    }
    if (!std::isfinite(top)) throw UnderflowError("posterior_grid: all log-weights are -inf");
    double acc = 0.0;
    for (double lw : g.log_weights) acc += std::exp(lw - top);
    g.normalizer = top + std::log(acc) + std::log(g.cell_volume());
    if (!std::isfinite(g.normalizer)) throw UnderflowError("posterior_grid: normalizer is not finite");
    return g;
}

double posterior_risk(const PosteriorGrid& post, const LossSpec& loss, const Vector& t) {
    double r = 0.0;
    for (std::size_t i = 0; i < post.size(); ++i) {
        const double w = post.weight(i);
        if (w > 0.0) r += loss(t - post.node(i)) * w;
    }
    return r;
}

Vector bayes_estimate(const PosteriorGrid& post, const LossSpec& loss, bool closed_form) {
    const int d = post.dim();
    // Squared (weighted) Euclidean loss: the grid posterior mean is the exact minimizer.
    if (closed_form && loss.shape == LossSpec::Shape::Power && loss.power == 2.0 && loss.norm != LossSpec::Norm::Max) {
        return post.mean();
    }
    // Cache nodes and weights once; the risk is evaluated many times.
    std::vector<Vector> nodes;
    std::vector<double> w;
    for (std::size_t i = 0; i < post.size(); ++i) {
        const double wi = post.weight(i);
        if (wi > 0.0) {
            nodes.push_back(post.node(i));
            w.push_back(wi);
        }
    }
    auto risk = [&](const Vector& t) {
        double r = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) r += loss(t - nodes[i]) * w[i];
        return r;
    };
    auto better = [](double r, double best) { return std::isinf(best) ? r < best : r < best - 1e-15 * std::abs(best); };

    // Coarse: grid nodes in row-major (lexicographic) order; 2-d thins to ~32 per axis.
    const int stride = d == 1 ? 1 : std::max(1, post.resolution / 32);
    Vector best_t = post.node(0);
    double best_r = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> idx(static_cast<std::size_t>(d), 0);
    while (true) {
        Vector t(d);
        for (int j = 0; j < d; ++j) t[j] = post.axes[static_cast<std::size_t>(j)][idx[static_cast<std::size_t>(j)]];
        const double r = risk(t);
        if (better(r, best_r)) {
            best_r = r;
            best_t = t;
        }
        int j = d - 1;
        while (j >= 0) {
            idx[static_cast<std::size_t>(j)] += static_cast<std::size_t>(stride);
            if (idx[static_cast<std::size_t>(j)] < post.axes[static_cast<std::size_t>(j)].size()) break;
            idx[static_cast<std::size_t>(j--)] = 0;
        }
        if (j < 0) break;
    }

    // Fine: 10x finer local grid spanning one coarse step either side.
    const Vector h = post.cell * stride;
    const Vector fine = h / 10.0;
    const Vector center = best_t;
    const int half = 10;
    std::vector<int> k(static_cast<std::size_t>(d), -half);
    while (true) {
        Vector t = center;
        for (int j = 0; j < d; ++j) t[j] += k[static_cast<std::size_t>(j)] * fine[j];
        const double r = risk(t);
        if (better(r, best_r)) {
            best_r = r;
            best_t = t;
        }
        int j = d - 1;
        while (j >= 0 && ++k[static_cast<std::size_t>(j)] > half) k[static_cast<std::size_t>(j--)] = -half;
        if (j < 0) break;
    }

    // Parabolic vertex per axis through the fine neighbours.
    for (int j = 0; j < d; ++j) {
        Vector lo = best_t, hi = best_t;
        lo[j] -= fine[j];
        hi[j] += fine[j];
        const double rl = risk(lo), rh = risk(hi);
        const double curv = rl - 2.0 * best_r + rh;
        if (!(curv > 0.0)) continue;
        const double shift = std::clamp(0.5 * fine[j] * (rl - rh) / curv, -fine[j], fine[j]);
        Vector t = best_t;
        t[j] += shift;
        const double r = risk(t);
        if (r <= best_r) {
            best_r = r;
            best_t = t;
        }
    }
    return best_t;
}

PosteriorMass posterior_mass(const PosteriorGrid& post, const RegionSpec& region, const Vector& center,
                             const Matrix& to_region) {
    const int d = post.dim();
    if (region.dim != d || center.size() != d) throw DimensionError("posterior_mass: dimension mismatch");
    const Matrix M = to_region.size() == 0 ? Matrix::Identity(d, d) : to_region;
    auto inside = [&](const Vector& t) { return region.contains(M * (t - center)); };
    PosteriorMass out;
    const int corners = 1 << d;
    for (std::size_t i = 0; i < post.size(); ++i) {
        const double w = post.weight(i);
        const Vector t = post.node(i);
        if (inside(t)) out.mass += w;
        bool any_in = false, any_out = false;
        for (int c = 0; c < corners; ++c) {
            Vector corner = t;
            for (int j = 0; j < d; ++j) corner[j] += ((c >> j) & 1 ? 0.5 : -0.5) * post.cell[j];
            (inside(corner) ? any_in : any_out) = true;
        }
        if (any_in && any_out) out.boundary_mass += w;
    }
    out.mass = std::clamp(out.mass, 0.0, 1.0);
    out.resolution_warning = out.boundary_mass > 0.05;
    return out;
}

TestStatistics test_statistics(const ParametricFamily& family, std::span<const double> obs, const Vector& theta0,
                               const TruncationPolicy& policy) {
    family.require_in_domain(theta0, "theta0");
    const LanModel lan(family, theta0, policy);
    const std::size_t n = lan.sample_size(obs);
    TestStatistics s;
    s.theta_hat = mle_fast(family, obs).theta_hat;
    const Vector delta = s.theta_hat - theta0;
    s.wald = static_cast<double>(n) * delta.dot(lan.fisher().matrix * delta);
    const Vector psi = lan.psi(obs);
    s.rao = 4.0 * psi.squaredNorm();
    s.lr = 2.0 * lan.loglr_sum(obs, delta);
    return s;
}

}  // namespace modev
