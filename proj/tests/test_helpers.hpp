#pragma once

// Shared scenario builders for the unit suites.

#include <functional>
#include <vector>

#include "dynlab/cost.hpp"
#include "dynlab/diffusion.hpp"
#include "dynlab/grid.hpp"
#include "dynlab/obstacle.hpp"

namespace test_helpers {

inline dynlab::DiffusionSpec constant_diffusion(
    int dim, std::vector<double> mu, std::vector<double> sigma_rowmajor,
    int noise_dim, double alpha) {
    dynlab::DiffusionSpec spec;
    spec.dim = dim;
    spec.noise_dim = noise_dim;
    spec.alpha = alpha;
    spec.constant_coefficients = true;
    spec.drift = [mu](std::span<const double>, std::span<double> out) {
        for (std::size_t i = 0; i < mu.size(); ++i) out[i] = mu[i];
    };
    spec.sigma = [sigma_rowmajor](std::span<const double>,
                                  std::span<double> out) {
        for (std::size_t i = 0; i < sigma_rowmajor.size(); ++i) {
            out[i] = sigma_rowmajor[i];
        }
    };
    return spec;
}

inline dynlab::GridSpec grid_1d(double lo, double hi, int counts) {
    dynlab::GridSpec g;
    g.lower = {lo};
    g.upper = {hi};
    g.counts = {counts};
    return g;
}

inline dynlab::GridSpec grid_2d(double lo1, double hi1, int c1, double lo2,
                                double hi2, int c2,
                                dynlab::LateralBc bc = dynlab::LateralBc::kNeumann) {
    dynlab::GridSpec g;
    g.lower = {lo1, lo2};
    g.upper = {hi1, hi2};
    g.counts = {c1, c2};
    g.lateral_bc = {bc};
    return g;
}

// canonical scalar scenario: mu=0, sigma=1, alpha=1, H=x, f1=f2=1
struct S1 {
    dynlab::DiffusionSpec spec;
    dynlab::CostSpec cost;
    dynlab::GridSpec grid;
    dynlab::ObstacleProblem problem;

    explicit S1(int counts = 401) {
        spec = constant_diffusion(1, {0.0}, {1.0}, 1, 1.0);
        cost.source = [](std::span<const double> x) { return x[0]; };
        cost.f1 = [](std::span<const double>) { return 1.0; };
        cost.f2 = [](std::span<const double>) { return 1.0; };
        cost.grad_f1 = dynlab::fd_gradient(cost.f1);
        cost.grad_f2 = dynlab::fd_gradient(cost.f2);
        grid = grid_1d(-4.0, 4.0, counts);
        problem.spec = spec;
        problem.grid = grid;
        problem.source = dynlab::sample_field(grid, cost.source);
        problem.f1 = dynlab::sample_field(grid, cost.f1);
        problem.f2 = dynlab::sample_field(grid, cost.f2);
    }
};

// planar variant: H = x2 + 0.5 sin(x1), periodic first axis
struct S2 {
    dynlab::DiffusionSpec spec;
    dynlab::CostSpec cost;
    dynlab::GridSpec grid;
    dynlab::ObstacleProblem problem;

    explicit S2(int c1 = 65, int c2 = 129) {
        spec = constant_diffusion(2, {0.0, 0.0}, {1.0, 0.0, 0.0, 1.0}, 2, 1.0);
        cost.source = [](std::span<const double> x) {
            return x[1] + 0.5 * std::sin(x[0]);
        };
        cost.f1 = [](std::span<const double>) { return 1.0; };
        cost.f2 = [](std::span<const double>) { return 1.0; };
        cost.grad_f1 = dynlab::fd_gradient(cost.f1);
        cost.grad_f2 = dynlab::fd_gradient(cost.f2);
        grid = grid_2d(-3.14159265358979323846, 3.14159265358979323846, c1,
                       -4.0, 4.0, c2, dynlab::LateralBc::kPeriodic);
        problem.spec = spec;
        problem.grid = grid;
        problem.source = dynlab::sample_field(grid, cost.source);
        problem.f1 = dynlab::sample_field(grid, cost.f1);
        problem.f2 = dynlab::sample_field(grid, cost.f2);
    }
};

}  // namespace test_helpers
