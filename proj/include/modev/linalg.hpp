#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace modev {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Axis-aligned box. Treated as open when used as a parameter domain.
struct Box {
    Vector lo;
    Vector hi;

    Box() = default;
    Box(Vector lo_, Vector hi_);
    static Box cube(int d, double lo, double hi);

    [[nodiscard]] int dim() const { return static_cast<int>(lo.size()); }
    [[nodiscard]] bool contains_open(const Vector& x) const;
    [[nodiscard]] bool contains_closed(const Vector& x) const;
    [[nodiscard]] bool inside(const Box& outer) const;  // closed this within open outer
    [[nodiscard]] Vector width() const { return hi - lo; }
    [[nodiscard]] Vector center() const { return 0.5 * (lo + hi); }
    [[nodiscard]] double diameter() const { return (hi - lo).norm(); }
};

Vector make_vector(std::initializer_list<double> values);
Vector make_vector(const std::vector<double>& values);
std::vector<double> to_std(const Vector& v);
std::string format_vector(const Vector& v, char sep = ';');

/// Lexicographic strict ordering, used for deterministic tie-breaks.
bool lex_less(const Vector& a, const Vector& b);

}  // namespace modev
