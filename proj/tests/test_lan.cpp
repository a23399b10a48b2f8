#include "doctest.h"

#include "modev/errors.hpp"
#include "modev/lan.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace modev;

namespace {

const Vector& zero1() {
    static const Vector z = make_vector({0.0});
    return z;
}

}  // namespace

TEST_CASE("truncated score") {
    auto g = make_family("gaussian");
    const double x2 = 2.0;
    CHECK(truncated_score(*g, zero1(), {0.5, 1.0}, Obs(&x2, 1))[0] == 0.0);
    // |phi| exactly at the threshold is cut (strict inequality).
    CHECK(truncated_score(*g, zero1(), {1.0, 1.0}, Obs(&x2, 1))[0] == 0.0);
    CHECK(truncated_score(*g, zero1(), {1.0 + 1e-12, 1.0}, Obs(&x2, 1))[0] == 1.0);

    auto b = make_family("bernoulli");
    for (double x : {0.0, 1.0}) {
        const Vector p = score(*b, make_vector({0.3}), Obs(&x, 1));
        CHECK(truncated_score(*b, make_vector({0.3}), {0.5, 0.1}, Obs(&x, 1))[0] == p[0]);
    }

    // Enlarging eps never changes values already below the smaller threshold.
    std::mt19937_64 gen(3);
    std::normal_distribution<double> nd(0.0, 3.0);
    for (int i = 0; i < 500; ++i) {
        const double x = nd(gen);
        const Vector small = truncated_score(*g, zero1(), {0.4, 0.5}, Obs(&x, 1));
        const Vector large = truncated_score(*g, zero1(), {1.7, 0.5}, Obs(&x, 1));
        if (small[0] != 0.0) CHECK(large[0] == small[0]);
    }
    CHECK_THROWS_AS(truncated_score(*g, zero1(), {0.0, 1.0}, Obs(&x2, 1)), PreconditionError);
}

TEST_CASE("psi_n and zeta_n examples") {
    auto g = make_family("gaussian");
    const auto off = TruncationPolicy::inactive();
    CHECK(psi_n(*g, std::vector<double>{0.5, -0.5}, zero1(), off)[0] == doctest::Approx(0.0));
    CHECK(psi_n(*g, std::vector<double>{1, 1, 1, 1}, zero1(), off)[0] == doctest::Approx(1.0));
    CHECK(psi_n(*g, std::vector<double>{1, 1, 1, 1}, zero1(), {1e-12, 1.0})[0] == 0.0);

    const std::vector<double> ones{1, 1, 1, 1};
    CHECK(zeta_n(*g, zero1(), ones, zero1(), off) == 0.0);
    CHECK(zeta_n(*g, make_vector({0.1}), ones, zero1(), off) == doctest::Approx(0.38));
    CHECK(zeta_n(*g, make_vector({0.1}), ones, zero1(), {1e-12, 1.0}) == doctest::Approx(-0.02));

    // zeta(u) + zeta(-u) = -n u'Iu: the linear terms cancel.
    std::mt19937_64 gen(11);
    std::normal_distribution<double> nd;
    auto g2 = make_family("gaussian2");
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> obs(2 * 7);
        for (auto& v : obs) v = nd(gen);
        const Vector u = make_vector({0.1 * nd(gen), 0.1 * nd(gen)});
        const Vector t0 = Vector::Zero(2);
        const double s = zeta_n(*g2, u, obs, t0, off) + zeta_n(*g2, Vector(-u), obs, t0, off);
        CHECK(s == doctest::Approx(-7.0 * u.squaredNorm()).epsilon(1e-12));
    }
}

TEST_CASE("loglr_sum and lr_process examples") {
    auto g = make_family("gaussian");
    const std::vector<double> ones{1, 1, 1, 1};
    CHECK(loglr_sum(*g, ones, zero1(), zero1(), zero1(), 0.1) == 0.0);
    CHECK(loglr_sum(*g, ones, zero1(), zero1(), make_vector({0.1}), 0.1) == doctest::Approx(0.38));
    auto b = make_family("bernoulli");
    CHECK(loglr_sum(*b, std::vector<double>{1, 0}, make_vector({0.5}), make_vector({0.0}), make_vector({0.1}), 0.1) ==
          doctest::Approx(std::log(0.6 / 0.5) + std::log(0.4 / 0.5)).epsilon(1e-12));
    CHECK(lr_process(*g, ones, zero1(), zero1()) == 1.0);
    CHECK(lr_process(*g, ones, zero1(), make_vector({0.1})) == doctest::Approx(std::exp(0.38)).epsilon(1e-12));
    CHECK(lr_process(*g, ones, zero1(), make_vector({0.1})) == doctest::Approx(1.46228).epsilon(1e-5));
    CHECK_THROWS_AS(loglr_sum(*g, ones, zero1(), zero1(), make_vector({20.0}), 0.1), DomainError);

    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> ud(-1, 1);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> obs(5);
        for (auto& v : obs) v = 2 * ud(gen);
        const Vector u = make_vector({0.5 * ud(gen)});
        CHECK(lr_process(*g, obs, zero1(), u) ==
              doctest::Approx(std::exp(loglr_sum(*g, obs, zero1(), zero1(), u, 1.0))).epsilon(1e-12));
    }
}

TEST_CASE("Gaussian LAN residual is identically zero") {
    auto g = make_family("gaussian");
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const std::size_t n = 16 + seed % 200;
        const double u_n = std::pow(static_cast<double>(n), -1.0 / 3.0);
        const Vector b = make_vector({static_cast<double>(seed % 5) - 2.0});
        const Vector theta0 = make_vector({0.3});
        const auto batch = draw_sample(*g, Vector(theta0 + u_n * b), n, seed);
        Rng rng(seed, 99);
        const Vector u = make_vector({(2.0 * rng.uniform() - 1.0) * 2.0 * u_n});
        const auto dec = lan_residual(*g, batch.data(), theta0, b, u, TruncationPolicy::inactive(u_n));
        CHECK(std::abs(dec.residual) < 1e-10);
        CHECK(dec.n == n);
    }
    const auto batch = draw_sample(*g, zero1(), 300, 4);
    const double u_n = std::pow(300.0, -1.0 / 3.0);
    CHECK(sup_lan_residual(*g, batch.data(), zero1(), zero1(), 2.0, TruncationPolicy::inactive(u_n), u_n / 20) < 1e-10);
    CHECK(sup_lan_residual(*g, batch.data(), zero1(), zero1(), 0.0, TruncationPolicy::inactive(u_n), u_n / 20) == 0.0);
    CHECK_THROWS_AS(sup_lan_residual(*g, batch.data(), zero1(), zero1(), 2.0, TruncationPolicy::inactive(u_n), u_n / 10),
                    GridError);
}

TEST_CASE("Laplace LAN residual matches its exact moments") {
    // Per observation the residual is 2(x - u) 1(0 < x < u) + u^2/2 under theta0 = 0.
    auto lap = make_family("laplace");
    const std::size_t n = 1000;
    const double u = std::pow(static_cast<double>(n), -1.0 / 3.0);
    const double em = 1.0 - u - std::exp(-u);
    const double e2 = 2.0 * (u * u - 2.0 * u + 2.0 - 2.0 * std::exp(-u));
    const double mean = n * (em + u * u / 2.0);
    const double var = n * (e2 - em * em);

    const int reps = 1000;
    double s = 0, ss = 0;
    int over = 0;
    for (int r = 0; r < reps; ++r) {
        const auto batch = draw_sample(*lap, zero1(), n, 1000 + static_cast<std::uint64_t>(r));
        const double res =
            lan_residual(*lap, batch.data(), zero1(), zero1(), make_vector({u}), {0.5, u}).residual;
        s += res;
        ss += res * res;
        if (std::abs(res) > 0.05 * n * u * u) ++over;
    }
    const double m = s / reps;
    const double v = ss / reps - m * m;
    CHECK(std::abs(m - mean) < 4.0 * std::sqrt(var / reps));
    CHECK(v == doctest::Approx(var).epsilon(0.15));
    // The residual scale sqrt(2 n u^3 / 3) does not shrink when n u^3 = 1, so a
    // threshold of 0.05 n u^2 = 0.5 is exceeded by a large fraction of seeds.
    CHECK(over > reps / 4);
}

TEST_CASE("sup residual for Laplace is finite and grid-deterministic") {
    auto lap = make_family("laplace");
    const double u_n = std::pow(256.0, -1.0 / 3.0);
    const auto batch = draw_sample(*lap, zero1(), 256, 8);
    const TruncationPolicy pol{0.5, u_n};
    const double a = sup_lan_residual(*lap, batch.data(), zero1(), zero1(), 2.0, pol, u_n / 20);
    const double b = sup_lan_residual(*lap, batch.data(), zero1(), zero1(), 2.0, pol, u_n / 20);
    CHECK(std::isfinite(a));
    CHECK(a > 0.0);
    CHECK(a == b);
    const double pointwise =
        std::abs(lan_residual(*lap, batch.data(), zero1(), zero1(), make_vector({u_n}), pol).residual);
    CHECK(a >= pointwise - 1e-12);
}

TEST_CASE("csv rows") {
    auto g = make_family("gaussian");
    const auto dec = lan_residual(*g, std::vector<double>{1, 1, 1, 1}, zero1(), zero1(), make_vector({0.1}),
                                  TruncationPolicy::inactive(0.5));
    CHECK(lan_csv_header(1) == "n,u_n,eps,b,u,sum_xi,zeta,psi_1,residual");
    const auto row = lan_csv_row(dec);
    CHECK(row.rfind("4,0.5,inf,0,0.10000000000000001,", 0) == 0);
}
