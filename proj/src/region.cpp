#include "modev/region.hpp"

#include "modev/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace modev {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vector parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ';')) {
        if (item == "inf" || item == "+inf") {
            out.push_back(kInf);
        } else if (item == "-inf") {
            out.push_back(-kInf);
        } else {
            try {
                std::size_t used = 0;
                out.push_back(std::stod(item, &used));
                if (used != item.size()) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                throw ConfigError("region: bad number '" + item + "'");
            }
        }
    }
    return make_vector(out);
}

}  // namespace

RegionSpec RegionSpec::half_space(const Vector& a, double c) {
    const double norm = a.norm();
    if (!(norm > 0.0)) throw PreconditionError("half_space: direction must be nonzero");
    RegionSpec s;
    s.shape = Shape::HalfSpace;
    s.dim = static_cast<int>(a.size());
    s.a = a / norm;
    s.c = c;
    return s;
}

RegionSpec RegionSpec::complement_ball(int d, double r) {
    if (!(r > 0.0)) throw PreconditionError("complement_ball: radius must be positive");
    RegionSpec s;
    s.shape = Shape::ComplementBall;
    s.dim = d;
    s.r = r;
    return s;
}

RegionSpec RegionSpec::box(const Vector& lo, const Vector& hi) {
    if (lo.size() != hi.size()) throw DimensionError("box: bound dimensions differ");
    for (Eigen::Index j = 0; j < lo.size(); ++j) {
        if (!(lo[j] < hi[j])) throw PreconditionError("box: need lo < hi on every axis");
    }
    RegionSpec s;
    s.shape = Shape::Box;
    s.dim = static_cast<int>(lo.size());
    s.lo = lo;
    s.hi = hi;
    return s;
}

RegionSpec RegionSpec::complement_box(const Vector& lo, const Vector& hi) {
    RegionSpec s = box(lo, hi);
    if (!lo.allFinite() || !hi.allFinite()) throw PreconditionError("complement_box: bounds must be finite");
    s.shape = Shape::ComplementBox;
    return s;
}

RegionSpec RegionSpec::whole(int d) { return box(Vector::Constant(d, -kInf), Vector::Constant(d, kInf)); }

bool RegionSpec::contains(const Vector& x) const {
    switch (shape) {
        case Shape::HalfSpace: return a.dot(x) > c;
        case Shape::ComplementBall: return x.norm() > r;
        case Shape::Box: return ((x.array() > lo.array()) && (x.array() < hi.array())).all();
        case Shape::ComplementBox: return !((x.array() >= lo.array()) && (x.array() <= hi.array())).all();
    }
    return false;
}

Vector RegionSpec::nearest_point() const {
    switch (shape) {
        case Shape::HalfSpace: return std::max(c, 0.0) * a;
        case Shape::ComplementBall: {
            Vector p = Vector::Zero(dim);
            p[0] = r;
            return p;
        }
        case Shape::Box: return Vector::Zero(dim).cwiseMax(lo).cwiseMin(hi);
        case Shape::ComplementBox: {
            Vector p = Vector::Zero(dim);
            if (!((p.array() >= lo.array()) && (p.array() <= hi.array())).all()) return p;
            double best = kInf;
            for (int j = 0; j < dim; ++j) {
                for (double v : {hi[j], lo[j]}) {
                    if (std::abs(v) < best) {
                        best = std::abs(v);
                        p = Vector::Zero(dim);
                        p[j] = v;
                    }
                }
            }
            return p;
        }
    }
    return Vector::Zero(dim);
}

double RegionSpec::rate_functional() const {
    if (shape == Shape::HalfSpace) {
        const double m = std::max(c, 0.0);
        return m * m;
    }
    if (shape == Shape::ComplementBall) return r * r;
    return nearest_point().squaredNorm();
}

std::string RegionSpec::describe() const {
    std::ostringstream os;
    switch (shape) {
        case Shape::HalfSpace: os << "half_space:" << format_vector(a) << ':' << c; break;
        case Shape::ComplementBall: os << "complement_ball:" << r; break;
        case Shape::Box: os << "box:" << format_vector(lo) << ':' << format_vector(hi); break;
        case Shape::ComplementBox: os << "complement_box:" << format_vector(lo) << ':' << format_vector(hi); break;
    }
    return os.str();
}

RegionSpec parse_region(const std::string& text, int d) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.empty()) throw ConfigError("region: empty specification");
    const std::string& kind = parts[0];
    auto check_dim = [&](const Vector& v) {
        if (v.size() != d) throw ConfigError("region: expected " + std::to_string(d) + " coordinates in '" + text + "'");
        return v;
    };
    try {
        if (kind == "whole" && parts.size() == 1) return RegionSpec::whole(d);
        if (kind == "half_space" && parts.size() == 3) {
            return RegionSpec::half_space(check_dim(parse_list(parts[1])), parse_list(parts[2])[0]);
        }
        if (kind == "complement_ball" && parts.size() == 2) return RegionSpec::complement_ball(d, parse_list(parts[1])[0]);
        if (kind == "box" && parts.size() == 3) {
            return RegionSpec::box(check_dim(parse_list(parts[1])), check_dim(parse_list(parts[2])));
        }
        if (kind == "complement_box" && parts.size() == 3) {
            return RegionSpec::complement_box(check_dim(parse_list(parts[1])), check_dim(parse_list(parts[2])));
        }
    } catch (const PreconditionError& e) {
        throw ConfigError(std::string("region: ") + e.what());
    } catch (const DimensionError& e) {
        throw ConfigError(std::string("region: ") + e.what());
    }
    throw ConfigError("region: cannot parse '" + text + "'");
}

}  // namespace modev
