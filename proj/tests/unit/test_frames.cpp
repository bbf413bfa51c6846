#include "gfcsim/frames.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace gfc;

namespace {

constexpr double kPi = std::numbers::pi;

}  // namespace

TEST_CASE("clarke transform of reference sets") {
    const double r3 = std::sqrt(3.0) / 2.0;
    AlphaBeta0 x = abc_to_ab0({1.0, -0.5, -0.5});
    CHECK(x.alpha == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(x.beta) < 1e-15);
    CHECK(std::abs(x.zero) < 1e-15);

    x = abc_to_ab0({0.0, r3, -r3});
    CHECK(std::abs(x.alpha) < 1e-15);
    CHECK(x.beta == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(x.zero) < 1e-15);

    x = abc_to_ab0({1.0, 1.0, 1.0});
    CHECK(std::abs(x.alpha) < 1e-15);
    CHECK(std::abs(x.beta) < 1e-15);
    CHECK(x.zero == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("park rotation at fixed angles") {
    DQ0 y = ab0_to_dq0({1.0, 0.0, 0.0}, 0.0);
    CHECK(y.d == 1.0);
    CHECK(y.q == 0.0);

    y = ab0_to_dq0({1.0, 0.0, 0.0}, kPi / 2);
    CHECK(std::abs(y.d) < 1e-15);
    CHECK(y.q == doctest::Approx(-1.0).epsilon(1e-15));

    y = ab0_to_dq0({0.0, 1.0, 0.0}, kPi / 2);
    CHECK(y.d == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(y.q) < 1e-15);

    y = ab0_to_dq0({0.0, 0.0, 0.4}, 0.7);
    CHECK(y.zero == 0.4);
    CHECK(y.theta == 0.7);
}

TEST_CASE("inverse park") {
    AlphaBeta0 x = dq0_to_ab0({1.0, 0.0, 0.0, 0.0}, 0.0);
    CHECK(x.alpha == 1.0);
    CHECK(x.beta == 0.0);

    x = dq0_to_ab0({0.0, -1.0, 0.0, 0.0}, kPi / 2);
    CHECK(x.alpha == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(x.beta) < 1e-15);

    const DQ0 in{0.3, -0.7, 0.0, 0.0};
    const DQ0 back = ab0_to_dq0(dq0_to_ab0(in, 1.234), 1.234);
    CHECK(std::abs(back.d - in.d) < 1e-12);
    CHECK(std::abs(back.q - in.q) < 1e-12);
    CHECK(back.zero == in.zero);
}

TEST_CASE("instantaneous power") {
    PowerPQ pq = instantaneous_pq({1.0, 0.0, 0.0}, {1.0, 0.0, 0.0});
    CHECK(pq.p == 1.5);
    CHECK(pq.q == 0.0);

    pq = instantaneous_pq({1.0, 0.0, 0.0}, {0.0, -1.0, 0.0});
    CHECK(pq.p == 0.0);
    CHECK(pq.q == 1.5);

    pq = instantaneous_pq({0.0, 0.0, 0.0}, {5.0, 3.0, 0.0});
    CHECK(pq.p == 0.0);
    CHECK(pq.q == 0.0);
}

TEST_CASE("abc round trip on random vectors") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    for (int n = 0; n < 1000; ++n) {
        const ThreePhase x{u(rng), u(rng), u(rng)};
        const ThreePhase y = ab0_to_abc(abc_to_ab0(x));
        const double scale = std::max({std::abs(x.a), std::abs(x.b), std::abs(x.c)});
        REQUIRE(std::abs(y.a - x.a) <= 1e-12 * scale);
        REQUIRE(std::abs(y.b - x.b) <= 1e-12 * scale);
        REQUIRE(std::abs(y.c - x.c) <= 1e-12 * scale);
    }
}

TEST_CASE("alpha-beta round trip at random angles preserves magnitude") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> angle(-20.0, 20.0);
    for (int n = 0; n < 1000; ++n) {
        const AlphaBeta0 x{u(rng), u(rng), u(rng)};
        const double th = angle(rng);
        const DQ0 y = ab0_to_dq0(x, th);
        REQUIRE(std::abs(magnitude(y) - magnitude(x)) < 1e-9);
        const AlphaBeta0 z = dq0_to_ab0(y, th);
        REQUIRE(std::abs(z.alpha - x.alpha) < 1e-12);
        REQUIRE(std::abs(z.beta - x.beta) < 1e-12);
        REQUIRE(z.zero == x.zero);
    }
}

TEST_CASE("balanced sets have no zero sequence and constant power") {
    const double vpk = 816.5;
    const double ipk = 400.0;
    const double phi = 0.3;
    const double w = 2 * kPi * 50;
    double p0 = 0.0;
    double q0 = 0.0;
    for (int k = 0; k < 200; ++k) {
        const double t = k * 1e-4;
        auto set = [&](double amp, double ph) {
            return ThreePhase{amp * std::cos(w * t + ph), amp * std::cos(w * t + ph - 2 * kPi / 3),
                              amp * std::cos(w * t + ph + 2 * kPi / 3)};
        };
        const AlphaBeta0 v = abc_to_ab0(set(vpk, 0.0));
        const AlphaBeta0 i = abc_to_ab0(set(ipk, -phi));
        REQUIRE(std::abs(v.zero) < 1e-9 * vpk);
        const PowerPQ pq = instantaneous_pq(v, i);
        if (k == 0) {
            p0 = pq.p;
            q0 = pq.q;
            CHECK(p0 == doctest::Approx(1.5 * vpk * ipk * std::cos(phi)).epsilon(1e-12));
            CHECK(q0 == doctest::Approx(1.5 * vpk * ipk * std::sin(phi)).epsilon(1e-12));
        }
        REQUIRE(std::abs(pq.p - p0) < 1e-9 * std::abs(p0));
        REQUIRE(std::abs(pq.q - q0) < 1e-9 * std::abs(q0));
    }
}
