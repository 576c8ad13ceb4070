#pragma once

#include <cstdint>
#include <vector>

#include "dynlab/diffusion.hpp"
#include "dynlab/grid.hpp"

namespace dynlab {

enum class RegionLabel : std::uint8_t { kE1, kE, kE2 };

/// Discretized two-obstacle problem: find V with -f1 <= V <= f2,
/// alpha V - L V = H where neither obstacle binds, and the one-sided
/// inequalities where they do.
struct ObstacleProblem {
    DiffusionSpec spec;
    GridSpec grid;
    GridField source;  // H
    GridField f1;
    GridField f2;

    /// Checks -f1 < 0 < f2 with finite bound and finite H at every node.
    void validate() const;

    /// Obstacle bound M = max over nodes of max(f1, f2).
    double obstacle_bound() const;
};

/// Edge condition along the last axis. kPinObstacle fixes the bottom row to
/// -f1 and the top row to f2 (exact when the domain contains the bands where
/// the value provably sticks to the obstacles); kReflect uses a mirror ghost.
enum class EdgeBc { kPinObstacle, kReflect };

struct PsorParams {
    double omega = 1.5;       // relaxation factor, in (0, 2)
    double tol = 1e-8;        // on the projected complementarity residual
    long max_iter = 100000;   // sweeps
    EdgeBc bottom_bc = EdgeBc::kPinObstacle;
    EdgeBc top_bc = EdgeBc::kPinObstacle;
    double tol_label = 1e-6;  // obstacle-contact classification margin
};

struct ObstacleSolution {
    GridField value;  // V
    std::vector<RegionLabel> labels;
    long iterations = 0;
    double residual = 0.0;
};

/// Projected SOR: Gauss-Seidel relaxation of (alpha - L_h) V = H followed by
/// a componentwise clamp to [-f1, f2]. Sweeps alternate lexicographic
/// direction. Throws NumericError (with the last residual) when max_iter is
/// reached before `tol`.
ObstacleSolution solve_two_obstacle(const ObstacleProblem& problem,
                                    const PsorParams& params);

/// Max over swept nodes of the projected complementarity residual
/// |max(min(r, V + f1), V - f2)| with r = alpha V - L_h V - H. Zero exactly
/// when at every node either the equation holds or an obstacle binds with
/// the matching sign of r.
double complementarity_residual(const ObstacleSolution& solution,
                                const ObstacleProblem& problem,
                                const PsorParams& params = {});

/// Per-node labels: E1 where V <= -f1 + tol_label, E2 where V >= f2 -
/// tol_label, E otherwise. Requires margin f1 + f2 > 2 tol_label everywhere.
std::vector<RegionLabel> classify_regions(const GridField& value,
                                          const GridField& f1,
                                          const GridField& f2,
                                          double tol_label);

}  // namespace dynlab
