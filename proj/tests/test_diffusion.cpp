#include <doctest.h>

#include <cmath>

#include "dynlab/diffusion.hpp"
#include "dynlab/errors.hpp"
#include "dynlab/rng.hpp"
#include "test_helpers.hpp"

using namespace dynlab;
using test_helpers::constant_diffusion;

TEST_CASE("generator annihilates constants") {
    auto spec = constant_diffusion(2, {0.7, -1.3}, {1.0, 0.2, 0.0, 0.9}, 2, 1.0);
    GridSpec g = test_helpers::grid_2d(-1.0, 1.0, 7, -1.0, 1.0, 7);
    GridField u = sample_field(g, [](std::span<const double>) { return 3.5; });
    int node[] = {3, 3};
    CHECK(apply_generator(spec, u, node) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("generator is exact on quadratics") {
    // scalar: mu = 0, sigma = 1, u = x^2 -> A u'' = 1
    auto spec = constant_diffusion(1, {0.0}, {1.0}, 1, 1.0);
    GridSpec g = test_helpers::grid_1d(-2.0, 2.0, 41);
    GridField u = sample_field(g, [](std::span<const double> x) {
        return x[0] * x[0];
    });
    for (int k : {1, 10, 20, 39}) {
        int node[] = {k};
        CHECK(apply_generator(spec, u, node) == doctest::Approx(1.0).epsilon(1e-10));
    }

    // planar with drift and a full diffusion matrix on a general quadratic
    auto spec2 = constant_diffusion(2, {0.4, -0.8}, {1.0, 0.5, 0.0, 1.0}, 2, 1.0);
    std::vector<double> a(4);
    double origin[] = {0.0, 0.0};
    spec2.diffusion_matrix(origin, a);
    GridSpec g2 = test_helpers::grid_2d(-1.0, 1.0, 9, -1.0, 1.0, 11);
    GridField q = sample_field(g2, [](std::span<const double> x) {
        return 3.0 * x[0] * x[0] + 2.0 * x[0] * x[1] - x[1] * x[1] + x[0] - 4.0;
    });
    GeneratorStencil st(spec2, g2);
    std::vector<int> idx(2);
    std::vector<double> p(2);
    for (std::size_t flat = 0; flat < q.values.size(); ++flat) {
        g2.unflatten(flat, idx);
        if (idx[1] == 0 || idx[1] == g2.counts[1] - 1) continue;
        g2.node_point(idx, p);
        const double expected = 0.4 * (6.0 * p[0] + 2.0 * p[1] + 1.0) +
                                (-0.8) * (2.0 * p[0] - 2.0 * p[1]) +
                                a[0] * 6.0 + 2.0 * a[1] * 2.0 + a[3] * (-2.0);
        CHECK(st.apply(q.values, idx) ==
              doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("generator drift term on a product field") {
    // mu = (1,0), sigma = I: L(x1 x2) = x2 (diagonal A kills the pure second
    // derivatives and A12 = 0); agrees on two grid refinements
    auto spec = constant_diffusion(2, {1.0, 0.0}, {1.0, 0.0, 0.0, 1.0}, 2, 1.0);
    for (int counts : {11, 21}) {
        GridSpec g = test_helpers::grid_2d(-1.0, 1.0, counts, -1.0, 1.0, counts);
        GridField u = sample_field(g, [](std::span<const double> x) {
            return x[0] * x[1];
        });
        int mid = counts / 2 + 1;
        int node[] = {mid, mid};
        double x2 = g.coord(1, mid);
        CHECK(apply_generator(spec, u, node) ==
              doctest::Approx(x2).epsilon(1e-10));
    }
}

TEST_CASE("generator is linear") {
    auto spec = constant_diffusion(2, {0.3, 0.1}, {1.0, 0.4, 0.0, 0.8}, 2, 1.0);
    GridSpec g = test_helpers::grid_2d(-1.0, 1.0, 9, -1.0, 1.0, 9);
    GridField u(g), v(g), w(g);
    RngStream rng(99, 0);
    const double ca = 1.7, cb = -0.6;
    for (std::size_t i = 0; i < u.values.size(); ++i) {
        u.values[i] = rng.next_normal();
        v.values[i] = rng.next_normal();
        w.values[i] = ca * u.values[i] + cb * v.values[i];
    }
    GeneratorStencil st(spec, g);
    std::vector<int> idx(2);
    for (std::size_t flat = 0; flat < u.values.size(); ++flat) {
        g.unflatten(flat, idx);
        if (idx[1] == 0 || idx[1] == g.counts[1] - 1) continue;
        double lhs = st.apply(w.values, idx);
        double rhs = ca * st.apply(u.values, idx) + cb * st.apply(v.values, idx);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
}

namespace {

double density_residual_norm(const DiffusionSpec& spec, const GridSpec& g,
                             const std::function<double(std::span<const double>)>& rho) {
    GridField r = sample_field(g, rho);
    double worst = 0.0;
    std::vector<int> idx(g.dim());
    for (std::size_t flat = 0; flat < r.values.size(); ++flat) {
        g.unflatten(flat, idx);
        bool interior = true;
        for (int ax = 0; ax < g.dim(); ++ax) {
            if (idx[ax] == 0 || idx[ax] == g.counts[ax] - 1) interior = false;
        }
        if (!interior) continue;
        for (double c : density_residual(spec, r, idx)) {
            worst = std::max(worst, std::abs(c));
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("reference density closed form for constant coefficients") {
    // rho = exp((A^{-1} mu) . x); A = I/2 so the exponent is 2 mu . x
    auto spec = constant_diffusion(2, {0.3, -0.2}, {1.0, 0.0, 0.0, 1.0}, 2, 1.0);
    auto rho = [](std::span<const double> x) {
        return std::exp(2.0 * (0.3 * x[0] - 0.2 * x[1]));
    };
    double coarse = density_residual_norm(
        spec, test_helpers::grid_2d(-1.0, 1.0, 9, -1.0, 1.0, 9), rho);
    double fine = density_residual_norm(
        spec, test_helpers::grid_2d(-1.0, 1.0, 17, -1.0, 1.0, 17), rho);
    CHECK(coarse < 2e-3);
    CHECK(fine < coarse / 3.0);  // second-order stencils
}

TEST_CASE("reference density trivial and scalar cases") {
    auto spec = constant_diffusion(2, {0.0, 0.0}, {1.0, 0.0, 0.0, 1.0}, 2, 1.0);
    GridSpec g = test_helpers::grid_2d(-1.0, 1.0, 7, -1.0, 1.0, 7);
    GridField rho = sample_field(g, [](std::span<const double>) { return 1.0; });
    int node[] = {3, 3};
    for (double c : density_residual(spec, rho, node)) CHECK(c == 0.0);

    // rho <= 0 is rejected
    rho.values[g.flatten(node)] = -1.0;
    CHECK_THROWS_AS(density_residual(spec, rho, node), NumericError);

    // scalar linear-drift model: rho = exp(x^2) satisfies the condition
    DiffusionSpec lin;
    lin.dim = 1;
    lin.noise_dim = 1;
    lin.alpha = 1.0;
    lin.drift = [](std::span<const double> x, std::span<double> out) {
        out[0] = x[0];
    };
    lin.sigma = [](std::span<const double>, std::span<double> out) {
        out[0] = 1.0;
    };
    auto rho_exp = [](std::span<const double> x) {
        return std::exp(x[0] * x[0]);
    };
    double coarse = density_residual_norm(
        lin, test_helpers::grid_1d(-1.0, 1.0, 41), rho_exp);
    double fine = density_residual_norm(
        lin, test_helpers::grid_1d(-1.0, 1.0, 81), rho_exp);
    CHECK(coarse < 2e-3);
    CHECK(fine < coarse / 3.0);
}

TEST_CASE("ellipticity scan") {
    auto id2 = constant_diffusion(2, {0.0, 0.0}, {1.0, 0.0, 0.0, 1.0}, 2, 1.0);
    GridSpec g = test_helpers::grid_2d(-1.0, 1.0, 5, -1.0, 1.0, 5);
    EllipticityReport r = check_nondegenerate(id2, g);
    CHECK(r.min_eigenvalue == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(r.pass);

    auto degen = constant_diffusion(2, {0.0, 0.0}, {1.0, 0.0, 0.0, 0.0}, 2, 1.0);
    EllipticityReport rd = check_nondegenerate(degen, g);
    CHECK(rd.min_eigenvalue == doctest::Approx(0.0));
    CHECK_FALSE(rd.pass);

    // state-dependent diagonal: min over [-pi, pi] of (1 + 0.5 sin x1)^2 / 2
    DiffusionSpec vs;
    vs.dim = 2;
    vs.noise_dim = 2;
    vs.alpha = 1.0;
    vs.drift = [](std::span<const double>, std::span<double> out) {
        out[0] = out[1] = 0.0;
    };
    vs.sigma = [](std::span<const double> x, std::span<double> out) {
        out[0] = 1.0;
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = 1.0 + 0.5 * std::sin(x[0]);
    };
    GridSpec gv = test_helpers::grid_2d(-3.14159265358979323846,
                                        3.14159265358979323846, 129, -1.0, 1.0, 5);
    EllipticityReport rv = check_nondegenerate(vs, gv);
    CHECK(rv.min_eigenvalue == doctest::Approx(0.125).epsilon(1e-12));
    CHECK(rv.pass);
}

TEST_CASE("generator rejects edge nodes without ghost rules") {
    auto spec = constant_diffusion(1, {0.0}, {1.0}, 1, 1.0);
    GridSpec g = test_helpers::grid_1d(-1.0, 1.0, 9);
    GridField u = sample_field(g, [](std::span<const double> x) { return x[0]; });
    int edge[] = {0};
    CHECK_THROWS_AS(apply_generator(spec, u, edge), Error);
}
