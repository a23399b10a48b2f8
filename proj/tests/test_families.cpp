#include "doctest.h"

#include "modev/errors.hpp"
#include "modev/families.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace modev;

namespace {

Obs one(const double& x) { return {&x, 1}; }

// Closed-form Hellinger affinities, independent of the quadrature path.
double affinity_oracle(const std::string& id, const Vector& t0, const Vector& tau) {
    if (id == "gaussian" || id == "gaussian2") return std::exp(-tau.squaredNorm() / 8.0);
    const double a = t0[0];
    const double b = t0[0] + tau[0];
    if (id == "bernoulli") return std::sqrt(a * b) + std::sqrt((1 - a) * (1 - b));
    if (id == "exponential") return 2.0 * std::sqrt(a * b) / (a + b);
    if (id == "laplace") {
        const double t = std::abs(tau[0]);
        return std::exp(-t / 2.0) * (1.0 + t / 2.0);
    }
    throw std::logic_error("no oracle");
}

Vector random_theta(const ParametricFamily& fam, std::mt19937_64& gen, double pad) {
    Vector t(fam.dim());
    for (int j = 0; j < fam.dim(); ++j) {
        std::uniform_real_distribution<double> u(fam.theta_domain().lo[j] + pad, fam.theta_domain().hi[j] - pad);
        t[j] = u(gen);
    }
    return t;
}

}  // namespace

TEST_CASE("log_density examples") {
    const double zero = 0.0;
    const double onev = 1.0;
    CHECK(log_density(*make_family("gaussian"), one(zero), make_vector({0.0})) ==
          doctest::Approx(-0.9189385332046727).epsilon(1e-12));
    CHECK(log_density(*make_family("bernoulli"), one(onev), make_vector({0.5})) ==
          doctest::Approx(std::log(0.5)).epsilon(1e-15));
    CHECK(log_density(*make_family("exponential"), one(zero), make_vector({1.0})) == 0.0);
}

TEST_CASE("log_density rejects bad inputs") {
    const double x = 0.5;
    const double neg = -1.0;
    CHECK_THROWS_AS(log_density(*make_family("gaussian"), one(x), make_vector({10.0})), DomainError);
    CHECK_THROWS_AS(log_density(*make_family("bernoulli"), one(x), make_vector({0.5})), SupportError);
    CHECK_THROWS_AS(log_density(*make_family("exponential"), one(neg), make_vector({1.0})), SupportError);
    CHECK_THROWS_AS(make_family("cauchy"), ConfigError);
}

TEST_CASE("draw_sample") {
    auto fam = make_family("gaussian");
    const std::size_t n = 100000;
    auto batch = draw_sample(*fam, make_vector({0.0}), n, 42);
    double mean = 0.0;
    for (double v : batch.observations) mean += v;
    mean /= static_cast<double>(n);
    CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));

    auto again = draw_sample(*fam, make_vector({0.0}), n, 42);
    CHECK(batch.observations == again.observations);
    auto other = draw_sample(*fam, make_vector({0.0}), n, 43);
    CHECK(batch.observations != other.observations);

    CHECK_THROWS_AS(draw_sample(*make_family("bernoulli"), make_vector({1.0}), 10, 1), DomainError);

    for (const auto& id : builtin_family_ids()) {
        auto f = make_family(id);
        auto s = draw_sample(*f, f->theta_domain().center(), 500, 7);
        for (std::size_t i = 0; i < s.n; ++i) CHECK(f->support().contains(s.at(i)));
    }
}

TEST_CASE("hellinger_g examples") {
    auto g = make_family("gaussian");
    const double zero = 0.0;
    const double onev = 1.0;
    CHECK(hellinger_g(*g, make_vector({0.3}), make_vector({0.0}), one(onev)) == 0.0);
    CHECK(hellinger_g(*g, make_vector({0.0}), make_vector({0.2}), one(zero)) ==
          doctest::Approx(std::exp(-0.01) - 1.0).epsilon(1e-13));
    CHECK(hellinger_g(*make_family("bernoulli"), make_vector({0.5}), make_vector({0.3}), one(onev)) ==
          doctest::Approx(std::sqrt(0.8 / 0.5) - 1.0).epsilon(1e-13));
    CHECK_THROWS_AS(hellinger_g(*make_family("bernoulli"), make_vector({0.9}), make_vector({0.3}), one(onev)),
                    DomainError);
}

TEST_CASE("hellinger_affinity examples") {
    auto g = make_family("gaussian");
    CHECK(hellinger_affinity(*g, make_vector({1.0}), make_vector({0.0})) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(hellinger_affinity(*g, make_vector({0.0}), make_vector({1.0})) ==
          doctest::Approx(std::exp(-1.0 / 8.0)).epsilon(1e-10));
    CHECK(hellinger_affinity(*make_family("bernoulli"), make_vector({0.5}), make_vector({0.3})) ==
          doctest::Approx(std::sqrt(0.5 * 0.8) + std::sqrt(0.5 * 0.2)).epsilon(1e-14));
}

TEST_CASE("quadrature affinity matches closed forms on random pairs") {
    std::mt19937_64 gen(2024);
    for (const auto& id : builtin_family_ids()) {
        auto fam = make_family(id);
        const double pad = 0.31 * (id == "bernoulli" ? 1.0 : 1.0);
        for (int k = 0; k < 50; ++k) {
            const Vector t0 = random_theta(*fam, gen, id == "bernoulli" ? 0.31 : pad);
            Vector tau(fam->dim());
            std::uniform_real_distribution<double> u(-1.0, 1.0);
            for (int j = 0; j < fam->dim(); ++j) tau[j] = u(gen);
            tau *= 0.3 * std::abs(u(gen)) / std::max(1.0, tau.norm());
            if (id == "bernoulli") tau *= 0.9;
            const double got = hellinger_affinity(*fam, t0, tau);
            CHECK_MESSAGE(std::abs(got - affinity_oracle(id, t0, tau)) < 1e-8, id);
        }
    }
}

TEST_CASE("densities integrate to one") {
    for (const auto& id : builtin_family_ids()) {
        auto fam = make_family(id);
        const Vector theta = fam->theta_domain().center() + 0.1 * fam->theta_domain().width() / 7.0;
        const double total = expectation(*fam, theta, [](Obs) { return 1.0; }).value;
        CHECK_MESSAGE(std::abs(total - 1.0) < 1e-8, id);
    }
}

TEST_CASE("score examples and finite-difference agreement") {
    auto g = make_family("gaussian");
    const double two = 2.0;
    const double onev = 1.0;
    CHECK(score(*g, make_vector({0.0}), one(two))[0] == doctest::Approx(1.0));
    CHECK(score(*g, make_vector({2.0}), one(two))[0] == 0.0);
    CHECK(score(*make_family("exponential"), make_vector({1.0}), one(onev))[0] == doctest::Approx(0.0));

    std::mt19937_64 gen(99);
    for (const auto& id : builtin_family_ids()) {
        auto fam = make_family(id);
        const Vector t0 = random_theta(*fam, gen, 0.2 * fam->theta_domain().width()[0]);
        auto sample = draw_sample(*fam, t0, 100, 5);
        for (std::size_t i = 0; i < sample.n; ++i) {
            const Vector closed = score(*fam, t0, sample.at(i));
            const Vector fd = score_finite_difference(*fam, t0, sample.at(i));
            CHECK_MESSAGE((closed - fd).norm() < 1e-5, id);
        }
    }
}

TEST_CASE("fisher_information closed form and quadrature") {
    CHECK(fisher_information(*make_family("gaussian"), make_vector({3.0})).matrix(0, 0) == 1.0);
    CHECK(fisher_information(*make_family("bernoulli"), make_vector({0.5})).matrix(0, 0) == doctest::Approx(4.0));
    CHECK(fisher_information(*make_family("exponential"), make_vector({1.0}), FisherMethod::Quadrature).matrix(0, 0) ==
          doctest::Approx(1.0).epsilon(1e-8));

    std::mt19937_64 gen(7);
    for (const auto& id : builtin_family_ids()) {
        auto fam = make_family(id);
        for (int k = 0; k < 3; ++k) {
            const Vector t0 = random_theta(*fam, gen, 0.1 * fam->theta_domain().width()[0]);
            const auto closed = fisher_information(*fam, t0, FisherMethod::ClosedForm);
            const auto quad = fisher_information(*fam, t0, FisherMethod::Quadrature);
            CHECK_MESSAGE((closed.matrix - quad.matrix).cwiseAbs().maxCoeff() < 1e-6, id);
            CHECK(((closed.sqrt * closed.sqrt) - closed.matrix).cwiseAbs().maxCoeff() < 1e-10);
            CHECK(((closed.inv_sqrt * closed.sqrt) - Matrix::Identity(fam->dim(), fam->dim())).cwiseAbs().maxCoeff() <
                  1e-10);
        }
    }
}

TEST_CASE("make_fisher_info rejects singular matrices") {
    Matrix m(2, 2);
    m << 1.0, 1.0, 1.0, 1.0;
    CHECK_THROWS_AS(make_fisher_info(make_vector({0.0, 0.0}), m), RankError);
}

TEST_CASE("log-likelihood summary path agrees with direct sum") {
    for (const auto& id : builtin_family_ids()) {
        auto fam = make_family(id);
        const Vector t = fam->theta_domain().center();
        auto s = draw_sample(*fam, t, 64, 11);
        LogLikelihood ll(*fam, s.data());
        const Vector probe = t + 0.01 * fam->theta_domain().width();
        double direct = 0.0;
        for (std::size_t i = 0; i < s.n; ++i) direct += fam->log_density_raw(s.at(i), probe);
        CHECK_MESSAGE(ll(probe) == doctest::Approx(direct).epsilon(1e-12), id);
    }
}
