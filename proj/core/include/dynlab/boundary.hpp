#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dynlab/cost.hpp"
#include "dynlab/obstacle.hpp"

namespace dynlab {

/// Free boundaries extracted from a labeled solution: per lateral column,
/// the top of the lower stopping region (a_tilde) and the bottom of the
/// upper one (b_tilde).
struct FreeBoundary {
    GridSpec grid;                 // the solution grid (columns + spacing)
    std::vector<double> a_tilde;   // one height per column
    std::vector<double> b_tilde;

    /// Piecewise-multilinear height at lateral point `xbar` (constant for
    /// one-dimensional problems). Periodic axes wrap, Neumann axes clamp.
    double a_at(std::span<const double> xbar) const;
    double b_at(std::span<const double> xbar) const;
};

/// Comparison curves: the heights a, b where the one-sided stopping
/// inequalities switch sign, plus the configured outer bands A < a, B > b.
struct ComparisonCurves {
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> a_band;  // A
    std::vector<double> b_band;  // B
};

/// Sub-grid boundary extraction: per column, a_tilde interpolates the zero
/// crossing of V + f1 between the last E1 node and the first E node;
/// b_tilde mirrors with f2 - V. Columns whose labels are not a contiguous
/// E1..E..E2 pattern raise TopologyError naming the column.
FreeBoundary extract_boundaries(const ObstacleSolution& solution,
                                const ObstacleProblem& problem);

struct RootParams {
    double tol_root = 1e-12;
    double fd_step = 1e-5;  // finite-difference step for L f1, L f2
};

/// Per-column roots of g1(y) = (alpha - L) f1 + H (for a) and
/// g2(y) = (alpha - L) f2 - H (for b) by bisection over the column range.
/// Requires g1 increasing / g2 decreasing with a sign change; otherwise
/// throws NumericError. a_band/b_band are filled from the given functions.
ComparisonCurves analytic_ab(
    const DiffusionSpec& spec, const CostSpec& cost, const GridSpec& grid,
    const std::function<double(std::span<const double>)>& a_band,
    const std::function<double(std::span<const double>)>& b_band,
    const RootParams& params = {});

struct OrderingReport {
    bool pass = true;
    std::string detail;                 // first violation, if any
    std::optional<std::size_t> column;  // offending column
};

/// Columnwise check A <= a_tilde <= a < b <= b_tilde <= B, each comparison
/// slackened by `slack` (typically two grid spacings).
OrderingReport ordering_check(const FreeBoundary& fb,
                              const ComparisonCurves& cc, double slack);

/// Max |height difference| / |lateral step| over lateral-adjacent columns
/// (wrapping on periodic axes). Single-column grids return 0 and set
/// `single_column`.
struct LipschitzEstimate {
    double value = 0.0;
    bool single_column = false;
};
LipschitzEstimate lipschitz_estimate(const GridSpec& grid,
                                     std::span<const double> heights);

struct ConnectivityReport {
    bool pass = true;
    bool e_connected = true;
    bool e1_connected = true;
    bool e2_connected = true;
    bool columns_banded = true;  // per column: E1 prefix, E2 suffix, E between
    std::string detail;
};

/// Flood fill over the grid graph (lateral adjacency wraps on periodic
/// axes): E must be one component, E1 and E2 each connected, and every
/// column must split into a bottom E1 run, a middle E run and a top E2 run.
ConnectivityReport connectivity_check(const GridSpec& grid,
                                      std::span<const RegionLabel> labels);

}  // namespace dynlab
