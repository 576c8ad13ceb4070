#include <doctest.h>

#include <cmath>

#include "dynlab/errors.hpp"
#include "dynlab/obstacle.hpp"
#include "s1_oracle.hpp"
#include "test_helpers.hpp"

using namespace dynlab;
using test_helpers::S1;

TEST_CASE("frozen oracle constants match a fresh root solve") {
    CHECK(s1_oracle::contact_by_bisection() ==
          doctest::Approx(s1_oracle::kContact).epsilon(1e-13));
    CHECK(s1_oracle::value(0.5) ==
          doctest::Approx(s1_oracle::kVHalf).epsilon(1e-13));
    CHECK(s1_oracle::control_value(0.0) ==
          doctest::Approx(s1_oracle::kW0).epsilon(1e-12));
    // value is odd, flat outside the contacts
    CHECK(s1_oracle::value(-0.5) == doctest::Approx(-s1_oracle::kVHalf));
    CHECK(s1_oracle::value(3.0) == 1.0);
}

TEST_CASE("zero data gives the zero solution under reflecting edges") {
    S1 s1(101);
    ObstacleProblem problem = s1.problem;
    problem.source = sample_field(problem.grid,
                                  [](std::span<const double>) { return 0.0; });
    PsorParams params;
    params.bottom_bc = EdgeBc::kReflect;
    params.top_bc = EdgeBc::kReflect;
    ObstacleSolution sol = solve_two_obstacle(problem, params);
    for (double v : sol.value.values) CHECK(std::abs(v) <= 1e-10);
    for (RegionLabel lab : sol.labels) CHECK(lab == RegionLabel::kE);
}

TEST_CASE("canonical scalar solve matches the closed form") {
    PsorParams params;
    S1 coarse(201), fine(401);
    ObstacleSolution sc = solve_two_obstacle(coarse.problem, params);
    ObstacleSolution sf = solve_two_obstacle(fine.problem, params);
    CHECK(sc.residual <= params.tol);
    CHECK(sf.residual <= params.tol);

    // odd symmetry of the data forces an odd solution
    const auto& g = fine.grid;
    double worst_sym = 0.0;
    for (int k = 0; k < g.counts[0]; ++k) {
        worst_sym = std::max(worst_sym,
                             std::abs(sf.value.values[k] +
                                      sf.value.values[g.counts[0] - 1 - k]));
    }
    CHECK(worst_sym <= 10.0 * params.tol);

    // probe against the closed form away from the symmetry axis;
    // halving h should cut the error by about four
    auto probe_error = [](const ObstacleSolution& sol) {
        double p[] = {0.5};
        return std::abs(interpolate(sol.value, p) - s1_oracle::kVHalf);
    };
    double ec = probe_error(sc);
    double ef = probe_error(sf);
    CHECK(ec < 1e-3);
    CHECK(ef < ec / 3.0);

    double z[] = {0.0};
    CHECK(std::abs(interpolate(sf.value, z)) <= 10.0 * params.tol);

    // contact set edges sit near the oracle contact height
    double p_in[] = {s1_oracle::kContact - 0.2};
    double p_out[] = {s1_oracle::kContact + 0.2};
    CHECK(interpolate(sf.value, p_in) < 1.0 - 1e-4);
    CHECK(interpolate(sf.value, p_out) == doctest::Approx(1.0));
}

TEST_CASE("complementarity residual") {
    S1 s1(201);
    PsorParams params;
    ObstacleSolution sol = solve_two_obstacle(s1.problem, params);
    CHECK(complementarity_residual(sol, s1.problem, params) <= params.tol);

    // a slack-region perturbation must register loudly
    std::size_t mid = s1.grid.num_nodes() / 2;
    sol.value.values[mid] += 0.1;
    CHECK(complementarity_residual(sol, s1.problem, params) > 0.05);
}

TEST_CASE("complementarity residual vanishes for the trivial solution") {
    S1 s1(51);
    ObstacleProblem problem = s1.problem;
    problem.source = sample_field(problem.grid,
                                  [](std::span<const double>) { return 0.0; });
    ObstacleSolution sol;
    sol.value = GridField(problem.grid);
    sol.labels.assign(problem.grid.num_nodes(), RegionLabel::kE);
    PsorParams params;
    params.bottom_bc = EdgeBc::kReflect;
    params.top_bc = EdgeBc::kReflect;
    CHECK(complementarity_residual(sol, problem, params) == 0.0);
}

TEST_CASE("labels: bands, sign pattern, and margin guard") {
    S1 s1(401);
    PsorParams params;
    ObstacleSolution sol = solve_two_obstacle(s1.problem, params);

    // three contiguous runs bottom-to-top
    int transitions = 0;
    for (std::size_t i = 1; i < sol.labels.size(); ++i) {
        if (sol.labels[i] != sol.labels[i - 1]) ++transitions;
    }
    CHECK(transitions == 2);
    CHECK(sol.labels.front() == RegionLabel::kE1);
    CHECK(sol.labels.back() == RegionLabel::kE2);

    // nothing at x <= -1 may be an upper contact
    const auto& g = s1.grid;
    for (int k = 0; k < g.counts[0]; ++k) {
        if (g.coord(0, k) <= -1.0) CHECK(sol.labels[k] != RegionLabel::kE2);
    }

    // one-sided equation signs on the contact sets
    GeneratorStencil st(s1.spec, g);
    for (int k = 1; k + 1 < g.counts[0]; ++k) {
        int node[] = {k};
        double r = s1.spec.alpha * sol.value.values[k] -
                   st.apply(sol.value.values, node) - s1.problem.source.values[k];
        if (sol.labels[k] == RegionLabel::kE1) CHECK(r > -1e-6);
        if (sol.labels[k] == RegionLabel::kE2) CHECK(r < 1e-6);
    }

    // obstacles closer than the label tolerance are a configuration error
    GridField v(GridField(s1.grid));
    GridField tiny1 = sample_field(
        s1.grid, [](std::span<const double>) { return 4e-7; });
    CHECK_THROWS_AS(classify_regions(v, tiny1, tiny1, 1e-6), ConfigError);
}

TEST_CASE("raising the upper obstacle never lowers the value") {
    S1 s1(201);
    PsorParams params;
    ObstacleSolution base = solve_two_obstacle(s1.problem, params);

    ObstacleProblem lifted = s1.problem;
    lifted.f2 = sample_field(s1.grid,
                             [](std::span<const double>) { return 1.5; });
    ObstacleSolution high = solve_two_obstacle(lifted, params);
    for (std::size_t i = 0; i < base.value.values.size(); ++i) {
        CHECK(high.value.values[i] >= base.value.values[i] - 1e-7);
    }
}

TEST_CASE("solver rejects bad parameters and reports non-convergence") {
    S1 s1(101);
    PsorParams bad;
    bad.omega = 2.5;
    CHECK_THROWS_AS(solve_two_obstacle(s1.problem, bad), ConfigError);

    PsorParams strict;
    strict.max_iter = 3;
    CHECK_THROWS_AS(solve_two_obstacle(s1.problem, strict), NumericError);
}

TEST_CASE("planar solve keeps the aliased periodic column consistent") {
    test_helpers::S2 s2(33, 65);
    PsorParams params;
    ObstacleSolution sol = solve_two_obstacle(s2.problem, params);
    const auto& g = s2.grid;
    const std::size_t last_col = g.num_columns() - 1;
    for (int k = 0; k < g.column_size(); ++k) {
        double v0 = sol.value.values[g.column_node(0, k)];
        double vl = sol.value.values[g.column_node(last_col, k)];
        CHECK(std::abs(v0 - vl) <= 1e-6);
    }
}
