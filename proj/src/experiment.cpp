#include "modev/experiment.hpp"

#include "modev/conditions.hpp"
#include "modev/errors.hpp"
#include "modev/estimators.hpp"
#include "modev/families.hpp"
#include "modev/lan.hpp"
#include "modev/rarevent.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace modev {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kManifestSchema = "modev.manifest.v1";
constexpr const char* kSummarySchema = "modev.summary.v1";
constexpr const char* kArtifactVersion = "0.1.0";

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, const std::string& seps) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (seps.find(ch) != std::string::npos) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(trim(cur));
    return out;
}

double to_double(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + text + "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& text) {
    try {
        if (text.empty() || text[0] == '-') throw std::invalid_argument(text);
        std::size_t used = 0;
        const auto v = std::stoull(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
    }
}

std::vector<double> to_doubles(const std::string& key, const std::string& text) {
    std::vector<double> out;
    for (const auto& item : split(text, ",;")) out.push_back(to_double(key, item));
    return out;
}

// Re-raises any library error from `fn` as a ConfigError naming `key`.
template <class Fn>
auto with_key(const std::string& key, Fn fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        if (what.rfind(key + ":", 0) == 0) throw;
        throw ConfigError(key + ": " + what);
    } catch (const std::exception& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

// Fully parsed configuration.
struct Resolved {
    std::string experiment;
    std::string family_id;
    FamilyPtr family;
    Vector theta0;
    DeviationSchedule schedule;
    EventSpec event;
    Budget budget;
    double delta = 0.25;
    double C1 = 1.0;
    double cond_eps = 0.5;
    double a0_delta = 0.5;
    std::vector<double> u_values;
    std::size_t n_large = 0;
    std::size_t lan_seeds = 0;
    std::vector<std::string> conditions;
    fs::path out;
};

const std::vector<std::string> kConditionNames{"dqm", "a0", "exp_moment", "moment_b", "c", "d", "e", "loss"};

Resolved resolve(const ExperimentConfig& cfg, const RunOptions& opt) {
    Resolved r;
    const auto& kinds = experiment_kinds();
    r.experiment = opt.experiment.empty() ? cfg.get("experiment") : opt.experiment;
    if (r.experiment.empty()) throw ConfigError("experiment: no experiment kind given");
    if (std::find(kinds.begin(), kinds.end(), r.experiment) == kinds.end()) {
        throw ConfigError("experiment: unknown kind '" + r.experiment + "'");
    }
    if (cfg.has("experiment") && !cfg.get("experiment").empty() && cfg.get("experiment") != r.experiment) {
        throw ConfigError("experiment: config is for '" + cfg.get("experiment") + "', not '" + r.experiment + "'");
    }

    r.family_id = cfg.get("family");
    r.family = with_key("family", [&] { return make_family(r.family_id); });
    const int d = r.family->dim();
    r.theta0 = with_key("theta0", [&] {
        const auto v = to_doubles("theta0", cfg.get("theta0"));
        if (static_cast<int>(v.size()) != d) {
            throw ConfigError("theta0: expected " + std::to_string(d) + " coordinates");
        }
        const Vector t = make_vector(v);
        r.family->require_in_domain(t, "theta0");
        return t;
    });

    r.schedule = with_key("n_values", [&] {
        DeviationSchedule s;
        for (const auto& item : split(cfg.get("n_values"), ",;")) s.n_values.push_back(to_u64("n_values", item));
        return s;
    });
    r.schedule.alpha = to_double("alpha", cfg.get("alpha"));
    r.schedule.c = to_double("scale", cfg.get("scale"));
    if (!cfg.get("b").empty()) {
        r.schedule.b = with_key("b", [&] {
            const auto v = to_doubles("b", cfg.get("b"));
            if (static_cast<int>(v.size()) != d) throw ConfigError("b: expected " + std::to_string(d) + " coordinates");
            return make_vector(v);
        });
    }
    with_key("n_values", [&] {
        if (!(r.schedule.alpha > 0.0 && r.schedule.alpha < 0.5)) throw ConfigError("alpha: must lie in (0, 1/2)");
        r.schedule.validate();
        return 0;
    });

    r.event.region = with_key("region", [&] { return parse_region(cfg.get("region"), d); });
    r.event.target = with_key("target", [&] { return parse_target(cfg.get("target")); });
    if (r.experiment == "posterior-concentration") {
        if (cfg.has("target") && r.event.target != Target::PosteriorMass) {
            throw ConfigError("target: posterior-concentration requires target = posterior_mass");
        }
        r.event.target = Target::PosteriorMass;
    }
    r.event.eps = to_double("eps", cfg.get("eps"));
    if (!(r.event.eps > 0.0)) throw ConfigError("eps: must be positive");
    r.event.loss = with_key("loss", [&] { return parse_loss(cfg.get("loss")); });
    r.event.prior = with_key("prior", [&] { return parse_prior(cfg.get("prior"), d); });
    r.event.level = to_double("level", cfg.get("level"));
    if (!(r.event.level > 0.0 && r.event.level < 1.0)) throw ConfigError("level: must lie in (0, 1)");
    const auto res = to_u64("resolution", cfg.get("resolution"));
    if (res < 64 || res > 4096) throw ConfigError("resolution: must lie in [64, 4096]");
    r.event.resolution = static_cast<int>(res);

    r.delta = to_double("delta", cfg.get("delta"));
    if (!(r.delta > 0.0)) throw ConfigError("delta: must be positive");
    r.C1 = to_double("C1", cfg.get("C1"));
    if (!(r.C1 > 0.0)) throw ConfigError("C1: must be positive");

    r.budget.method = with_key("method", [&] { return parse_method(cfg.get("method")); });
    r.budget.n_reps = to_u64("n_reps", cfg.get("n_reps"));
    if (r.budget.method != Method::Exact && r.budget.n_reps < 1000) throw ConfigError("n_reps: must be at least 1000");
    r.budget.max_draws = to_double("max_draws", cfg.get("max_draws"));
    if (!(r.budget.max_draws > 0.0)) throw ConfigError("max_draws: must be positive");
    r.budget.margin = to_double("margin", cfg.get("margin"));
    if (!(r.budget.margin >= 0.0)) throw ConfigError("margin: must be non-negative");
    r.budget.seed = opt.seed_override ? *opt.seed_override : to_u64("seed", cfg.get("seed"));
    r.budget.workers = opt.workers ? *opt.workers : 0;

    r.u_values = to_doubles("u_values", cfg.get("u_values"));
    r.n_large = to_u64("n_large", cfg.get("n_large"));
    if (r.experiment == "bahadur-sweep") {
        for (std::size_t i = 0; i < r.u_values.size(); ++i) {
            if (!(r.u_values[i] > 0.0) || (i > 0 && !(r.u_values[i] < r.u_values[i - 1]))) {
                throw ConfigError("u_values: must be positive and decreasing");
            }
        }
        const double um = r.u_values.back();
        if (r.n_large < 16 || !(static_cast<double>(r.n_large) * um * um >= 10.0)) {
            throw ConfigError("n_large: need n_large >= 16 and n_large u^2 >= 10 for the smallest u");
        }
    }
    r.lan_seeds = to_u64("lan_seeds", cfg.get("lan_seeds"));
    if (r.experiment == "lan-check" && r.lan_seeds == 0) throw ConfigError("lan_seeds: must be positive");
    for (const auto& c : split(cfg.get("conditions"), ",;")) {
        if (std::find(kConditionNames.begin(), kConditionNames.end(), c) == kConditionNames.end()) {
            throw ConfigError("conditions: unknown condition '" + c + "'");
        }
        r.conditions.push_back(c);
    }
    r.cond_eps = to_double("cond_eps", cfg.get("cond_eps"));
    if (!(r.cond_eps > 0.0)) throw ConfigError("cond_eps: must be positive");
    r.a0_delta = to_double("a0_delta", cfg.get("a0_delta"));
    if (!(r.a0_delta > 0.0)) throw ConfigError("a0_delta: must be positive");

    r.out = opt.out_dir ? fs::path(*opt.out_dir) : fs::path(cfg.get("output_dir"));
    if (r.out.empty()) throw ConfigError("output_dir: must not be empty");
    return r;
}

void log_line(const RunOptions& opt, const std::string& msg) {
    if (!opt.quiet) std::cerr << "[modev] " << msg << '\n';
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << text;
}

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = seed ^ (0x9E3779B97F4A7C15ULL * (a + 1)) ^ (0xBF58476D1CE4E5B9ULL * (b + 1));
    return splitmix64(s);
}

std::string curve_summary(const RateCurve& c) {
    std::ostringstream os;
    for (const auto& p : c.points) os << " n=" << p.n << ":" << fmt(p.normalized_rate);
    return os.str();
}

// ---------------------------------------------------------------- runners

std::vector<std::string> run_curve(const Resolved& r, const RunOptions& opt) {
    const RateCurve c = ldp_curve(r.event, *r.family, r.theta0, r.schedule, r.budget);
    log_line(opt, "normalized rates" + curve_summary(c) + " (target " + fmt(c.target_rate) + ")");
    write_file(r.out / "rate_curve.csv", c.csv());
    return {"rate_curve.csv"};
}

std::vector<std::string> run_equivalence(const Resolved& r, const RunOptions& opt) {
    const auto eq = equivalence_tail(*r.family, r.theta0, r.schedule, r.delta, r.budget, r.event.eps);
    std::vector<std::string> files;
    for (const auto& [name, curve] : {std::pair{"gap", &eq.gap}, {"psi_lr", &eq.psi_lr}, {"lr_wald", &eq.lr_wald}}) {
        const std::string file = std::string("equivalence_") + name + ".csv";
        write_file(r.out / file, curve->csv());
        log_line(opt, std::string(name) + ":" + curve_summary(*curve));
        files.push_back(file);
    }
    return files;
}

std::vector<std::string> run_bahadur(const Resolved& r, const RunOptions& opt) {
    const auto sweep = bahadur_sweep(r.event, *r.family, r.theta0, r.u_values, r.n_large, r.budget);
    std::vector<std::string> files;
    std::ostringstream lim;
    lim << "u,rate_at_max_n,limiting_rate,limiting_stderr,target_rate\n";
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        const std::string file = "bahadur_u" + std::to_string(i + 1) + ".csv";
        write_file(r.out / file, sweep[i].curve.csv());
        files.push_back(file);
        lim << fmt(sweep[i].u) << ',' << fmt(sweep[i].rate_at_max_n) << ',' << fmt(sweep[i].limiting_rate) << ','
            << fmt(sweep[i].limiting_stderr) << ',' << fmt(sweep[i].curve.target_rate) << '\n';
        log_line(opt, "u=" + fmt(sweep[i].u) + " limiting rate " + fmt(sweep[i].limiting_rate));
    }
    write_file(r.out / "bahadur_limits.csv", lim.str());
    files.push_back("bahadur_limits.csv");
    return files;
}

std::vector<std::string> run_lan(const Resolved& r, const RunOptions& opt) {
    const int d = r.family->dim();
    const Vector b = r.schedule.shift(d);
    std::ostringstream rows, sup;
    rows << lan_csv_header(d) << '\n';
    sup << "n,u_n,median_sup_residual,median_sup_over_nu2,exceed_fraction\n";
    for (std::size_t n : r.schedule.n_values) {
        const double u = r.schedule.u_n(n);
        const LanModel model(*r.family, r.theta0, TruncationPolicy{r.event.eps, u}, b);
        Vector uvec = Vector::Zero(d);
        uvec[0] = r.C1 * u;
        std::vector<double> sups;
        std::size_t exceed = 0;
        const double nu2 = static_cast<double>(n) * u * u;
        for (std::size_t s = 0; s < r.lan_seeds; ++s) {
            const auto batch = draw_sample(*r.family, model.reference(), n, mix_seed(r.budget.seed, n, s));
            const auto dec = model.decompose(batch.data(), uvec);
            rows << lan_csv_row(dec) << '\n';
            if (std::abs(dec.residual) > 0.05 * nu2) ++exceed;
            sups.push_back(model.sup_residual(batch.data(), r.C1, u / 20.0));
        }
        std::sort(sups.begin(), sups.end());
        const std::size_t m = sups.size();
        const double median = m % 2 ? sups[m / 2] : 0.5 * (sups[m / 2 - 1] + sups[m / 2]);
        const double frac = static_cast<double>(exceed) / static_cast<double>(r.lan_seeds);
        sup << n << ',' << fmt(u) << ',' << fmt(median) << ',' << fmt(median / nu2) << ',' << fmt(frac) << '\n';
        log_line(opt, "n=" + std::to_string(n) + " median sup residual " + fmt(median));
    }
    write_file(r.out / "lan.csv", rows.str());
    write_file(r.out / "lan_sup.csv", sup.str());
    return {"lan.csv", "lan_sup.csv"};
}

std::vector<std::string> run_conditions(const Resolved& r, const RunOptions& opt) {
    const auto& fam = *r.family;
    const int d = fam.dim();
    const Box& dom = fam.theta_domain();
    double dist = std::numeric_limits<double>::infinity();
    for (int j = 0; j < d; ++j) dist = std::min({dist, r.theta0[j] - dom.lo[j], dom.hi[j] - r.theta0[j]});
    const double u = r.schedule.u_n(r.schedule.n_values.front());

    json out;
    out["family"] = r.family_id;
    out["theta0"] = to_std(r.theta0);
    out["reports"] = json::array();
    for (const auto& name : r.conditions) {
        std::vector<ConditionReport> reports;
        try {
            if (name == "dqm") {
                std::vector<Vector> taus;
                for (double m : {1e-3, 3e-3, 1e-2, 3e-2, 1e-1}) {
                    if (!(m < 0.9 * dist)) continue;
                    for (int j = 0; j < d; ++j) {
                        for (double sgn : {-1.0, 1.0}) {
                            Vector t = Vector::Zero(d);
                            t[j] = sgn * m;
                            taus.push_back(t);
                        }
                    }
                }
                reports.push_back(check_dqm(r.family, r.theta0, taus).report);
            } else if (name == "a0") {
                const double h = std::min({0.5 * dist, 0.1 * dom.width().minCoeff(), 1.0});
                const Box compact(Vector(r.theta0.array() - h), Vector(r.theta0.array() + h));
                reports.push_back(check_a0(fam, compact, r.a0_delta));
            } else if (name == "exp_moment") {
                reports.push_back(check_exp_moment(fam, r.theta0, [](Obs x) { return std::abs(x[0]); }, 0.05));
            } else if (name == "moment_b") {
                MomentBOptions o;
                o.u_n = u;
                o.eps = r.cond_eps;
                std::vector<Vector> taus;
                for (double s : {-1.0, -0.5, 0.5, 1.0}) {
                    Vector t = Vector::Zero(d);
                    t[0] = s * std::min(u, 0.5 * dist);
                    taus.push_back(t);
                }
                reports.push_back(check_moment_b(fam, r.theta0, taus, o));
            } else if (name == "c") {
                const double s = std::min(0.4, 0.5 * dist);
                const auto c = check_c(fam, r.theta0, {s, s / 2, s / 4, s / 8});
                reports.push_back(c.c1);
                reports.push_back(c.c2);
            } else if (name == "d") {
                reports.push_back(check_d(fam, static_cast<double>(d) + 1.0));
            } else if (name == "e") {
                EOptions o;
                o.eps = r.cond_eps;
                o.u_n = u;
                o.beta1 = o.beta2 = static_cast<double>(d) + 1.0;
                const Vector z = Vector::Zero(d);
                Vector v = Vector::Zero(d);
                v[0] = std::min(u, 0.5 * dist);
                reports.push_back(check_e(fam, r.theta0, {{z, v}, {z, Vector(v / 2)}, {z, z}}, o));
            } else if (name == "loss") {
                reports.push_back(check_loss(r.event.loss, {1.1, 2.0, 5.0, 10.0}, {0.01, 0.1, 1.0, 10.0}));
            }
            for (const auto& rep : reports) {
                out["reports"].push_back(json::parse(rep.to_json(-1)));
                log_line(opt, name + ": " + to_string(rep.verdict));
            }
        } catch (const Error& e) {
            out["reports"].push_back({{"condition", name}, {"verdict", "error"}, {"error", e.what()}});
            log_line(opt, name + ": error: " + e.what());
        }
    }
    write_file(r.out / "conditions.json", out.dump(2) + "\n");
    return {"conditions.json"};
}

// ---------------------------------------------------------------- report

struct CsvRows {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::size_t malformed = 0;
};

CsvRows read_csv(const fs::path& path) {
    CsvRows out;
    std::ifstream is(path);
    std::string line;
    if (!std::getline(is, line)) return out;
    out.header = split(line, ",");
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        auto cells = split(line, ",");
        if (cells.size() != out.header.size()) {
            ++out.malformed;
            continue;
        }
        out.rows.push_back(std::move(cells));
    }
    return out;
}

bool parse_cell(const std::string& s, double& v) {
    if (s == "inf") {
        v = std::numeric_limits<double>::infinity();
        return true;
    }
    if (s == "nan") {
        v = std::numeric_limits<double>::quiet_NaN();
        return true;
    }
    try {
        std::size_t used = 0;
        v = std::stod(s, &used);
        return used == s.size();
    } catch (const std::exception&) {
        return false;
    }
}

json curve_entry(const fs::path& root, const fs::path& file) {
    json e;
    e["file"] = fs::relative(file, root).generic_string();
    const CsvRows csv = read_csv(file);
    std::size_t malformed = csv.malformed;
    const bool rate_csv = !csv.header.empty() && csv.header == split(kRateCsvHeader, ",");
    e["kind"] = rate_csv ? "rate_curve" : "table";
    e["rows"] = csv.rows.size();
    if (rate_csv) {
        double best_n = -1, rate = 0, target = 0, p_hat = 0;
        for (const auto& row : csv.rows) {
            double n, pr, r, t;
            if (!parse_cell(row[0], n) || !parse_cell(row[3], pr) || !parse_cell(row[5], r) || !parse_cell(row[6], t)) {
                ++malformed;
                continue;
            }
            if (n > best_n) {
                best_n = n;
                rate = r;
                target = t;
                p_hat = pr;
            }
        }
        if (best_n > 0) {
            e["max_n"] = best_n;
            e["p_hat"] = p_hat;
            e["normalized_rate"] = rate;
            e["target_rate"] = std::isfinite(target) ? json(target) : json("inf");
            if (std::isfinite(target)) {
                const double gap = std::abs(rate - target);
                e["rate_gap"] = gap;
                if (target > 0) e["within_10pct"] = gap <= 0.1 * target;
            } else {
                e["superexponential"] = p_hat == 0.0 || rate > 1.0;
            }
        }
    }
    e["malformed"] = malformed > 0;
    if (malformed > 0) e["malformed_rows"] = malformed;
    return e;
}

}  // namespace

// ---------------------------------------------------------------- config

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys{
        {"experiment", "", "experiment kind; must match the subcommand when set"},
        {"family", "gaussian", "gaussian, gaussian2, bernoulli, exponential or laplace"},
        {"theta0", "0", "true parameter, coordinates separated by ';'"},
        {"n_values", "400,1600,6400", "increasing sample sizes"},
        {"alpha", "0.25", "u_n = scale * n^-alpha, alpha in (0, 1/2)"},
        {"scale", "1", "scale c of u_n"},
        {"b", "", "local shift b (events centred at theta0 + u_n b); empty means 0"},
        {"region", "half_space:1:1", "target set Omega in standardized coordinates"},
        {"target", "mle", "mle, bayes, psi or posterior_mass"},
        {"eps", "inf", "score truncation eps for psi_n; inf disables truncation"},
        {"loss", "power:2", "Bayes loss: power:<p>, linear or table:x:y,..."},
        {"prior", "flat", "flat or gaussian:<mean>:<sd>"},
        {"level", "0.5", "posterior mass threshold c"},
        {"delta", "0.25", "equivalence threshold delta"},
        {"C1", "1", "LAN radius: |u| < C1 u_n"},
        {"method", "tilted", "crude, tilted or exact"},
        {"n_reps", "100000", "Monte Carlo replications per point"},
        {"max_draws", "1e9", "cap on sample draws per curve"},
        {"margin", "0.1", "automatic tilt overshoot"},
        {"seed", "1", "master seed"},
        {"output_dir", "results", "artifact directory"},
        {"u_values", "0.3,0.2,0.1", "fixed deviations for bahadur-sweep, decreasing"},
        {"n_large", "10000", "largest n of the bahadur-sweep grid"},
        {"resolution", "128", "posterior grid nodes per axis"},
        {"lan_seeds", "200", "samples per n for lan-check"},
        {"conditions", "dqm,a0,exp_moment,moment_b,c,d,e,loss", "checks run by check-conditions"},
        {"cond_eps", "0.5", "truncation eps used by condition checks"},
        {"a0_delta", "0.5", "separation delta for condition A0"},
    };
    return keys;
}

const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> kinds{"check-conditions", "lan-check",     "ldp-curve",
                                                "equivalence",      "bahadur-sweep", "posterior-concentration"};
    return kinds;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    const auto& keys = config_keys();
    const bool known = std::any_of(keys.begin(), keys.end(), [&](const ConfigKey& k) { return key == k.key; });
    if (!known) throw ConfigError(key + ": unknown config key");
    values_[key] = value;
}

const std::string& ExperimentConfig::get(const std::string& key) const {
    if (auto it = values_.find(key); it != values_.end()) return it->second;
    static std::map<std::string, std::string> defaults = [] {
        std::map<std::string, std::string> m;
        for (const auto& k : config_keys()) m[k.key] = k.fallback;
        return m;
    }();
    if (auto it = defaults.find(key); it != defaults.end()) return it->second;
    throw ConfigError(key + ": unknown config key");
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::resolved() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : config_keys()) out.emplace_back(k.key, get(k.key));
    return out;
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        if (cfg.has(key)) throw ConfigError(key + ": duplicate key");
        cfg.set(key, trim(line.substr(eq + 1)));
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::from_manifest(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("manifest: ") + e.what());
    }
    if (!j.contains("schema") || j["schema"] != kManifestSchema) {
        throw ConfigError(std::string("schema: expected ") + kManifestSchema);
    }
    if (!j.contains("config") || !j["config"].is_object()) throw ConfigError("config: manifest has no config object");
    ExperimentConfig cfg;
    for (const auto& [key, value] : j["config"].items()) {
        if (!value.is_string()) throw ConfigError(key + ": manifest values must be strings");
        cfg.set(key, value.get<std::string>());
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("config: cannot read '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    const std::string text = ss.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') return from_manifest(text);
    return from_text(text);
}

// ---------------------------------------------------------------- running

RunResult run_experiment(ExperimentConfig config, const RunOptions& options) {
    const Resolved r = resolve(config, options);
    // Record exactly what ran: the experiment kind, the effective seed and
    // output directory. Worker count is deliberately absent.
    config.set("experiment", r.experiment);
    config.set("seed", std::to_string(r.budget.seed));
    config.set("output_dir", r.out.generic_string());
    if (r.experiment == "posterior-concentration") config.set("target", "posterior_mass");

    std::error_code ec;
    fs::create_directories(r.out, ec);
    if (ec) throw Error("cannot create output directory " + r.out.string() + ": " + ec.message());

    const auto start = std::chrono::steady_clock::now();
    log_line(options, r.experiment + ": family " + r.family_id + ", output " + r.out.string());
    std::vector<std::string> artifacts;
    if (r.experiment == "ldp-curve" || r.experiment == "posterior-concentration") {
        artifacts = run_curve(r, options);
    } else if (r.experiment == "equivalence") {
        artifacts = run_equivalence(r, options);
    } else if (r.experiment == "bahadur-sweep") {
        artifacts = run_bahadur(r, options);
    } else if (r.experiment == "lan-check") {
        artifacts = run_lan(r, options);
    } else {
        artifacts = run_conditions(r, options);
    }

    json m;
    m["schema"] = kManifestSchema;
    m["version"] = kArtifactVersion;
    m["experiment"] = r.experiment;
    m["seed"] = r.budget.seed;
    m["config"] = json::object();
    for (const auto& [k, v] : config.resolved()) m["config"][k] = v;
    m["artifacts"] = artifacts;
    write_file(r.out / "manifest.json", m.dump(2) + "\n");

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char buf[64];
    std::snprintf(buf, sizeof buf, "done in %.1f s", secs);
    log_line(options, buf);

    RunResult res;
    res.output_dir = r.out.string();
    res.artifacts = artifacts;
    res.manifest_path = (r.out / "manifest.json").string();
    return res;
}

int run_config(const std::string& path, const RunOptions& options) {
    try {
        run_experiment(ExperimentConfig::load(path), options);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "modev: config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "modev: " << (options.experiment.empty() ? "experiment" : options.experiment)
                  << " failed: " << e.what() << '\n';
        return 1;
    }
}

std::string emit_report(const std::string& results_dir, const std::optional<std::string>& out_dir) {
    const fs::path root(results_dir);
    if (!fs::is_directory(root)) throw EmptyDirError("report: '" + results_dir + "' is not a directory");

    std::vector<fs::path> manifests, csvs;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().filename() == "manifest.json") manifests.push_back(entry.path());
        if (entry.path().extension() == ".csv") csvs.push_back(entry.path());
    }
    std::sort(manifests.begin(), manifests.end());
    std::sort(csvs.begin(), csvs.end());
    if (csvs.empty()) throw EmptyDirError("report: no results CSV under '" + results_dir + "'");

    json summary;
    summary["schema"] = kSummarySchema;
    summary["entries"] = json::array();
    std::vector<fs::path> claimed;
    std::size_t malformed = 0;

    for (const auto& mpath : manifests) {
        json e;
        e["manifest"] = fs::relative(mpath, root).generic_string();
        const fs::path dir = mpath.parent_path();
        json m;
        try {
            std::ifstream is(mpath);
            m = json::parse(is);
        } catch (const std::exception&) {
            e["malformed"] = true;
            ++malformed;
            summary["entries"].push_back(e);
            continue;
        }
        e["experiment"] = m.value("experiment", "");
        if (m.contains("config") && m["config"].is_object()) {
            for (const char* k : {"family", "target", "region", "method"}) {
                if (m["config"].contains(k)) e[k] = m["config"][k];
            }
        }
        e["results"] = json::array();
        e["malformed"] = false;
        for (const auto& a : m.value("artifacts", std::vector<std::string>{})) {
            const fs::path file = dir / a;
            if (!fs::exists(file)) {
                e["results"].push_back({{"file", fs::relative(file, root).generic_string()}, {"missing", true}});
                e["malformed"] = true;
                continue;
            }
            if (file.extension() == ".csv") {
                claimed.push_back(file);
                json c = curve_entry(root, file);
                if (c["malformed"].get<bool>()) e["malformed"] = true;
                e["results"].push_back(c);
            } else if (file.filename() == "conditions.json") {
                try {
                    std::ifstream is(file);
                    const json cj = json::parse(is);
                    json verdicts = json::object();
                    for (const auto& rep : cj.at("reports")) verdicts[rep.at("condition").get<std::string>()] = rep.at("verdict");
                    e["conditions"] = verdicts;
                } catch (const std::exception&) {
                    e["malformed"] = true;
                }
            }
        }
        if (e["malformed"].get<bool>()) ++malformed;
        summary["entries"].push_back(e);
    }
    // Results without a manifest still get an entry each.
    for (const auto& file : csvs) {
        if (std::find(claimed.begin(), claimed.end(), file) != claimed.end()) continue;
        json e;
        e["manifest"] = nullptr;
        json c = curve_entry(root, file);
        e["malformed"] = c["malformed"];
        if (c["malformed"].get<bool>()) ++malformed;
        e["results"] = json::array({c});
        summary["entries"].push_back(e);
    }
    summary["malformed_entries"] = malformed;

    const std::string text = summary.dump(2) + "\n";
    const fs::path out = out_dir ? fs::path(*out_dir) : root;
    fs::create_directories(out);
    write_file(out / "summary.json", text);
    return text;
}

}  // namespace modev
