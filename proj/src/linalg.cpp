#include "modev/linalg.hpp"

#include <cstdio>
#include <sstream>

namespace modev {

Box::Box(Vector lo_, Vector hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {}

Box Box::cube(int d, double lo, double hi) {
    return Box(Vector::Constant(d, lo), Vector::Constant(d, hi));
}

bool Box::contains_open(const Vector& x) const {
    if (x.size() != lo.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (!(x[i] > lo[i] && x[i] < hi[i])) return false;
    }
    return true;
}

bool Box::contains_closed(const Vector& x) const {
    if (x.size() != lo.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (!(x[i] >= lo[i] && x[i] <= hi[i])) return false;
    }
    return true;
}

bool Box::inside(const Box& outer) const {
    return outer.contains_open(lo) && outer.contains_open(hi);
}

Vector make_vector(std::initializer_list<double> values) {
    Vector v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double x : values) v[i++] = x;
    return v;
}

Vector make_vector(const std::vector<double>& values) {
    Vector v(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<Eigen::Index>(i)] = values[i];
    return v;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

std::string format_vector(const Vector& v, char sep) {
    std::string out;
    char buf[32];
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) out.push_back(sep);
        std::snprintf(buf, sizeof buf, "%.17g", v[i]);
        out += buf;
    }
    return out;
}

bool lex_less(const Vector& a, const Vector& b) {
    for (Eigen::Index i = 0; i < a.size() && i < b.size(); ++i) {
        if (a[i] < b[i]) return true;
        if (a[i] > b[i]) return false;
    }
    return a.size() < b.size();
}

}  // namespace modev
