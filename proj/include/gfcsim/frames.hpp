#pragma once

// Reference-frame transforms shared by the simulator and the controllers.
// All stationary-frame quantities use the amplitude-invariant Clarke
// convention: a balanced set with phase peak X maps to |(alpha, beta)| = X,
// and three-phase power is 3/2 of the alpha-beta dot product.

#include <cmath>

namespace gfc {

struct ThreePhase {
    double a{};
    double b{};
    double c{};
};

struct AlphaBeta0 {
    double alpha{};
    double beta{};
    double zero{};

    AlphaBeta0& operator+=(const AlphaBeta0& o) {
        alpha += o.alpha;
        beta += o.beta;
        zero += o.zero;
        return *this;
    }
    AlphaBeta0& operator-=(const AlphaBeta0& o) {
        alpha -= o.alpha;
        beta -= o.beta;
        zero -= o.zero;
        return *this;
    }
    AlphaBeta0& operator*=(double s) {
        alpha *= s;
        beta *= s;
        zero *= s;
        return *this;
    }
    friend AlphaBeta0 operator+(AlphaBeta0 x, const AlphaBeta0& y) { return x += y; }
    friend AlphaBeta0 operator-(AlphaBeta0 x, const AlphaBeta0& y) { return x -= y; }
    friend AlphaBeta0 operator*(AlphaBeta0 x, double s) { return x *= s; }
    friend AlphaBeta0 operator*(double s, AlphaBeta0 x) { return x *= s; }
    friend bool operator==(const AlphaBeta0&, const AlphaBeta0&) = default;
};

// Rotating-frame quantity. theta is the angle the value was taken at.
struct DQ0 {
    double d{};
    double q{};
    double zero{};
    double theta{};

    friend DQ0 operator+(DQ0 x, const DQ0& y) {
        x.d += y.d;
        x.q += y.q;
        x.zero += y.zero;
        return x;
    }
    friend DQ0 operator-(DQ0 x, const DQ0& y) {
        x.d -= y.d;
        x.q -= y.q;
        x.zero -= y.zero;
        return x;
    }
    friend DQ0 operator*(double s, DQ0 x) {
        x.d *= s;
        x.q *= s;
        x.zero *= s;
        return x;
    }
};

struct PowerPQ {
    double p{};  // W
    double q{};  // var
};

AlphaBeta0 abc_to_ab0(const ThreePhase& x);
ThreePhase ab0_to_abc(const AlphaBeta0& x);

DQ0 ab0_to_dq0(const AlphaBeta0& x, double theta);
AlphaBeta0 dq0_to_ab0(const DQ0& x, double theta);

PowerPQ instantaneous_pq(const AlphaBeta0& v, const AlphaBeta0& i);

// 90 degree rotation T2 = [0 -1; 1 0] on the d-q pair; zero passes through.
inline DQ0 rotate90(const DQ0& x) { return DQ0{-x.q, x.d, x.zero, x.theta}; }

inline double magnitude(const AlphaBeta0& x) { return std::hypot(x.alpha, x.beta); }
inline double magnitude(const DQ0& x) { return std::hypot(x.d, x.q); }
inline double magnitude3(const DQ0& x) { return std::sqrt(x.d * x.d + x.q * x.q + x.zero * x.zero); }

inline bool is_finite(const AlphaBeta0& x) {
    return std::isfinite(x.alpha) && std::isfinite(x.beta) && std::isfinite(x.zero);
}

}  // namespace gfc
