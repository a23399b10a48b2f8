#include "modev/loss.hpp"

#include "modev/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace modev {

LossSpec LossSpec::power_loss(double p) {
    LossSpec s;
    s.shape = Shape::Power;
    s.power = p;
    return s;
}

LossSpec LossSpec::linear() {
    LossSpec s;
    s.shape = Shape::Linear;
    s.power = 1.0;
    return s;
}

LossSpec LossSpec::from_table(std::vector<std::pair<double, double>> knots) {
    LossSpec s;
    s.shape = Shape::Table;
    std::sort(knots.begin(), knots.end());
    s.table = std::move(knots);
    return s;
}

double LossSpec::l1(double r) const {
    switch (shape) {
        case Shape::Power: return std::pow(r, power);
        case Shape::Linear: return r;
        case Shape::Table: {
            if (table.empty()) return 0.0;
            if (table.size() == 1) return table.front().second;
            auto it = std::upper_bound(table.begin(), table.end(), r,
                                       [](double v, const auto& knot) { return v < knot.first; });
            std::size_t hi = static_cast<std::size_t>(it - table.begin());
            hi = std::clamp<std::size_t>(hi, 1, table.size() - 1);
            const auto& [x0, y0] = table[hi - 1];
            const auto& [x1, y1] = table[hi];
            return y0 + (y1 - y0) * (r - x0) / (x1 - x0);
        }
    }
    return 0.0;
}

double LossSpec::norm_of(const Vector& u) const {
    switch (norm) {
        case Norm::Euclidean: return u.norm();
        case Norm::Max: return u.cwiseAbs().maxCoeff();
        case Norm::WeightedDiag: return std::sqrt((weights.array() * u.array().square()).sum());
    }
    return u.norm();
}

std::string LossSpec::describe() const {
    std::ostringstream os;
    switch (shape) {
        case Shape::Power: os << "power:" << power; break;
        case Shape::Linear: os << "linear"; break;
        case Shape::Table:
            os << "table:";
            for (std::size_t i = 0; i < table.size(); ++i) {
                os << (i ? "," : "") << table[i].first << ':' << table[i].second;
            }
            break;
    }
    return os.str();
}

LossSpec parse_loss(const std::string& text) {
    if (text == "linear") return LossSpec::linear();
    if (text.rfind("power:", 0) == 0) {
        try {
            return LossSpec::power_loss(std::stod(text.substr(6)));
        } catch (const std::exception&) {
            throw ConfigError("loss: bad power in '" + text + "'");
        }
    }
    if (text.rfind("table:", 0) == 0) {
        std::vector<std::pair<double, double>> knots;
        std::stringstream ss(text.substr(6));
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) throw ConfigError("loss: table knot '" + item + "' needs x:y");
            try {
                knots.emplace_back(std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
            } catch (const std::exception&) {
                throw ConfigError("loss: bad table knot '" + item + "'");
            }
        }
        if (knots.size() < 2) throw ConfigError("loss: table needs at least two knots");
        return LossSpec::from_table(std::move(knots));
    }
    throw ConfigError("loss: unknown spec '" + text + "'");
}

}  // namespace modev
