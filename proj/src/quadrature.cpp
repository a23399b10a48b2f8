#include "modev/quadrature.hpp"

#include "modev/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

namespace modev {

namespace {

// Kronrod abscissae on [0, 1] (odd indices are the Gauss points) and weights.
constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851, 0.864864423359769072789712788640926,
    0.741531185599394439863864773280788, 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204, 0.104790010322250183839876322541518,
    0.140653259715525918745189590510238, 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                       0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
    double a;
    double b;
    double value;
    double error;
    double l1;
    bool operator<(const Segment& o) const { return error < o.error; }
};

template <class F>
Segment kronrod(const F& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double resk = fc * kWgk[7];
    double resg = fc * kWg[3];
    double l1 = std::abs(resk);
    for (int j = 0; j < 7; ++j) {
        const double dx = h * kXgk[static_cast<std::size_t>(j)];
        const double f1 = f(c - dx);
        const double f2 = f(c + dx);
        resk += kWgk[static_cast<std::size_t>(j)] * (f1 + f2);
        l1 += kWgk[static_cast<std::size_t>(j)] * (std::abs(f1) + std::abs(f2));
        if (j % 2 == 1) resg += kWg[static_cast<std::size_t>(j / 2)] * (f1 + f2);
    }
    return {a, b, resk * h, std::abs((resk - resg) * h), l1 * std::abs(h)};
}

template <class F>
QuadResult adapt(const F& f, double a, double b, const QuadOptions& opts) {
    std::priority_queue<Segment> heap;
    Segment first = kronrod(f, a, b);
    double value = first.value;
    double error = first.error;
    double l1 = first.l1;
    heap.push(first);
    int count = 1;
    while (error > std::max(opts.target_abs, opts.rel_tol * std::abs(value)) && count < opts.max_intervals) {
        const Segment worst = heap.top();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) break;  // interval exhausted at double resolution
        heap.pop();
        const Segment left = kronrod(f, worst.a, mid);
        const Segment right = kronrod(f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        l1 += left.l1 + right.l1 - worst.l1;
        heap.push(left);
        heap.push(right);
        ++count;
    }
    // Re-sum to shed accumulated update rounding.
    QuadResult out;
    while (!heap.empty()) {
        out.value += heap.top().value;
        out.error += heap.top().error;
        out.l1 += heap.top().l1;
        heap.pop();
    }
    return out;
}

}  // namespace

QuadResult integrate(const ScalarFn& f, double a, double b, const QuadOptions& opts) {
    QuadResult out;
    if (a == b) return out;
    const bool a_inf = std::isinf(a);
    const bool b_inf = std::isinf(b);
    if (a_inf && b_inf) {
        const QuadResult lo = integrate(f, a, 0.0, opts);
        const QuadResult hi = integrate(f, 0.0, b, opts);
        out = {lo.value + hi.value, lo.error + hi.error, lo.l1 + hi.l1};
    } else if (b_inf) {
        // x = a + t / (1 - t), t in [0, 1)
        auto g = [&](double t) {
            const double s = 1.0 - t;
            const double v = f(a + t / s);
            return v == 0.0 ? 0.0 : v / (s * s);
        };
        out = adapt(g, 0.0, 1.0, opts);
    } else if (a_inf) {
        auto g = [&](double t) {
            const double s = 1.0 - t;
            const double v = f(b - t / s);
            return v == 0.0 ? 0.0 : v / (s * s);
        };
        out = adapt(g, 0.0, 1.0, opts);
    } else {
        out = adapt(f, a, b, opts);
    }
    if (!std::isfinite(out.value) || !std::isfinite(out.error)) {
        throw QuadratureError("quadrature produced a non-finite value");
    }
    if (out.error > std::max(opts.abs_tol, opts.fail_rel * out.l1)) {
        throw QuadratureError("quadrature did not converge: error estimate " + std::to_string(out.error));
    }
    return out;
}

QuadResult integrate_split(const ScalarFn& f, double a, double b, std::vector<double> breakpoints,
                           const QuadOptions& opts) {
    std::sort(breakpoints.begin(), breakpoints.end());
    breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());
    std::vector<double> edges{a};
    for (double p : breakpoints) {
        if (p > a && p < b && std::isfinite(p)) edges.push_back(p);
    }
    edges.push_back(b);

    QuadResult total;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        const QuadResult piece = integrate(f, edges[i], edges[i + 1], opts);
        total.value += piece.value;
        total.error += piece.error;
        total.l1 += piece.l1;
    }
    return total;
}

}  // namespace modev
