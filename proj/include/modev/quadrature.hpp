#pragma once

#include <functional>
#include <vector>

namespace modev {

struct QuadOptions {
    double abs_tol = 1e-10;        // failure threshold on the final error estimate
    double target_abs = 1e-15;     // refinement stops below max(target_abs, rel_tol * |I|)
    double rel_tol = 1e-13;
    double fail_rel = 1e-8;        // large integrals fail only above fail_rel * L1
    int max_intervals = 4000;
};

struct QuadResult {
    double value = 0.0;
    double error = 0.0;
    double l1 = 0.0;
};

using ScalarFn = std::function<double(double)>;

/// Globally adaptive 7/15-point Gauss-Kronrod on [a, b]; either end may be
/// infinite (mapped to a finite interval). Throws QuadratureError when the
/// final error estimate exceeds max(abs_tol, fail_rel * L1).
QuadResult integrate(const ScalarFn& f, double a, double b, const QuadOptions& opts = {});

/// Integrates over [a, b] after splitting at every breakpoint strictly inside.
/// Breakpoints mark kinks or jumps of the integrand.
QuadResult integrate_split(const ScalarFn& f, double a, double b, std::vector<double> breakpoints,
                           const QuadOptions& opts = {});

}  // namespace modev
