#pragma once

// Closed-form reference for the canonical scalar scenario
//   mu = 0, sigma = 1, alpha = 1, H(x) = x, f1 = f2 = 1 on [-4, 4].
//
// Inside the continuation band the value solves V - V''/2 = x with
// V(b) = 1, V'(b) = 0 at the upper contact height b, giving
//   V(x) = x + 2 c sinh(sqrt(2) x),   c = -1 / (2 sqrt(2) cosh(sqrt(2) b)),
// where b is the root of  b - tanh(sqrt(2) b)/sqrt(2) = 1. By odd symmetry
// the lower contact is -b. With constant obstacles V == 1 above b and
// V == -1 below -b, so the truncated pinned problem is exact and this is
// an oracle independent of the grid solver.

#include <cmath>

namespace s1_oracle {

// frozen from a high-precision root solve; re-derived by bisection in tests
inline constexpr double kContact = 1.6955130804640139;      // b
inline constexpr double kW0 = -1.0275531267399689;          // W(0)
inline constexpr double kVHalf = 0.40212483309811963;       // V(0.5)
inline constexpr double kVppContact = 1.3910261609280278;   // V''(-b+)

inline double contact_by_bisection() {
    auto f = [](double b) {
        return b - std::tanh(std::sqrt(2.0) * b) / std::sqrt(2.0) - 1.0;
    };
    double lo = 1.0, hi = 3.0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        (f(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

inline double sinh_coef() {
    return -1.0 / (2.0 * std::sqrt(2.0) * std::cosh(std::sqrt(2.0) * kContact));
}

inline double value(double x) {
    if (x >= kContact) return 1.0;
    if (x <= -kContact) return -1.0;
    return x + 2.0 * sinh_coef() * std::sinh(std::sqrt(2.0) * x);
}

// W(x) = integral of V from -b to x (antiderivative of the band form)
inline double control_value(double x) {
    auto anti = [](double y) {
        return 0.5 * y * y +
               std::sqrt(2.0) * sinh_coef() * std::cosh(std::sqrt(2.0) * y);
    };
    const double b = kContact;
    if (x < -b) return -(x + b);  // V = -1 below the band
    if (x <= b) return anti(x) - anti(-b);
    return (anti(b) - anti(-b)) + (x - b);  // V = 1 above
}

}  // namespace s1_oracle
