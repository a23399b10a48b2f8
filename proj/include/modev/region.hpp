#pragma once

#include "modev/linalg.hpp"

#include <string>

namespace modev {

/// Open target set Omega in standardized coordinates.
struct RegionSpec {
    enum class Shape { HalfSpace, ComplementBall, Box, ComplementBox };

    Shape shape = Shape::HalfSpace;
    int dim = 1;
    Vector a;   // HalfSpace: unit normal
    double c = 0.0;
    double r = 0.0;
    Vector lo;  // Box / ComplementBox, entries may be +-inf for Box
    Vector hi;

    /// {x : a'x > c}; `a` is normalized, throws PreconditionError if zero.
    static RegionSpec half_space(const Vector& a, double c);
    /// {x : |x| > r}, r > 0.
    static RegionSpec complement_ball(int d, double r);
    /// Open box (lo, hi); infinite bounds allowed.
    static RegionSpec box(const Vector& lo, const Vector& hi);
    /// Complement of the closed box [lo, hi].
    static RegionSpec complement_box(const Vector& lo, const Vector& hi);
    /// All of R^d.
    static RegionSpec whole(int d);

    [[nodiscard]] bool contains(const Vector& x) const;
    /// inf over the region of |x|^2, in closed form.
    [[nodiscard]] double rate_functional() const;
    /// A point of the closure attaining the infimum (first axis on ties).
    [[nodiscard]] Vector nearest_point() const;
    [[nodiscard]] std::string describe() const;
};

/// Parses "half_space:a1;a2:c", "complement_ball:r", "box:lo1;lo2:hi1;hi2",
/// "complement_box:lo:hi" or "whole"; `d` fixes the dimension where implicit.
RegionSpec parse_region(const std::string& text, int d);

}  // namespace modev
