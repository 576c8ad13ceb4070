#pragma once

#include <functional>
#include <span>

namespace dynlab {

/// Running payoff H and the two stopping/control cost functions f1, f2
/// (both strictly positive), with their first partial derivatives. The
/// gradients back the smooth-fit diagnostics; when costs come from parsed
/// expressions they default to central finite differences.
struct CostSpec {
    std::function<double(std::span<const double>)> source;  // H
    std::function<double(std::span<const double>)> f1;
    std::function<double(std::span<const double>)> f2;
    /// grad f1(x) -> out[0..n)
    std::function<void(std::span<const double>, std::span<double>)> grad_f1;
    std::function<void(std::span<const double>, std::span<double>)> grad_f2;
};

/// Wraps a scalar function with finite-difference first partials.
inline std::function<void(std::span<const double>, std::span<double>)>
fd_gradient(std::function<double(std::span<const double>)> f,
            double step = 1e-6) {
    return [f = std::move(f), step](std::span<const double> x,
                                    std::span<double> out) {
        std::vector<double> p(x.begin(), x.end());
        for (std::size_t i = 0; i < x.size(); ++i) {
            p[i] = x[i] + step;
            double up = f(p);
            p[i] = x[i] - step;
            double dn = f(p);
            p[i] = x[i];
            out[i] = (up - dn) / (2.0 * step);
        }
    };
}

}  // namespace dynlab
