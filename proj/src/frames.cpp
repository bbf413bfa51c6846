#include "gfcsim/frames.hpp"

#include <cmath>

namespace gfc {

namespace {
constexpr double kSqrt3Over2 = 0.86602540378443864676;
}

AlphaBeta0 abc_to_ab0(const ThreePhase& x) {
    return AlphaBeta0{
        (2.0 / 3.0) * (x.a - 0.5 * x.b - 0.5 * x.c),
        (2.0 / 3.0) * kSqrt3Over2 * (x.b - x.c),
        (x.a + x.b + x.c) / 3.0,
    };
}

ThreePhase ab0_to_abc(const AlphaBeta0& x) {
    return ThreePhase{
        x.alpha + x.zero,
        -0.5 * x.alpha + kSqrt3Over2 * x.beta + x.zero,
        -0.5 * x.alpha - kSqrt3Over2 * x.beta + x.zero,
    };
}

DQ0 ab0_to_dq0(const AlphaBeta0& x, double theta) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    return DQ0{x.alpha * c + x.beta * s, -x.alpha * s + x.beta * c, x.zero, theta};
}

AlphaBeta0 dq0_to_ab0(const DQ0& x, double theta) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    return AlphaBeta0{x.d * c - x.q * s, x.d * s + x.q * c, x.zero};
}

PowerPQ instantaneous_pq(const AlphaBeta0& v, const AlphaBeta0& i) {
    return PowerPQ{
        1.5 * (v.alpha * i.alpha + v.beta * i.beta),
        1.5 * (v.beta * i.alpha - v.alpha * i.beta),
    };
}

}  // namespace gfc
