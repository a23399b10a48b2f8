#pragma once

#include "modev/linalg.hpp"

#include <string>
#include <utility>
#include <vector>

namespace modev {

/// Loss l(u) = l1(||u||) for Bayes estimation.
struct LossSpec {
    enum class Shape { Power, Linear, Table };
    enum class Norm { Euclidean, Max, WeightedDiag };

    Shape shape = Shape::Power;
    double power = 2.0;
    /// (x, l1(x)) knots for Shape::Table, interpolated linearly and extended
    /// past the last knot with the last slope.
    std::vector<std::pair<double, double>> table;
    Norm norm = Norm::Euclidean;
    Vector weights;  // WeightedDiag only

    static LossSpec power_loss(double p);
    static LossSpec linear();
    static LossSpec from_table(std::vector<std::pair<double, double>> knots);

    [[nodiscard]] double l1(double r) const;
    [[nodiscard]] double norm_of(const Vector& u) const;
    [[nodiscard]] double operator()(const Vector& u) const { return l1(norm_of(u)); }
    [[nodiscard]] std::string describe() const;
};

/// Parses "power:<p>", "linear", or "table:x0:y0,x1:y1,...".
LossSpec parse_loss(const std::string& text);

}  // namespace modev
