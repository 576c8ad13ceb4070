#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dynlab/boundary.hpp"
#include "dynlab/cost.hpp"
#include "dynlab/game.hpp"

namespace dynlab {

/// Control value function W and its holding cost h, built from the game
/// value V by columnwise integration from the lower free boundary:
///   W(xbar, y) = integral of V from a_tilde(xbar) to y,
///   h(xbar, y) = integral of H from a_tilde(xbar) to y + C(xbar),
/// with C fixed by the interior equation alpha W - L W = h at the first
/// full-stencil layer above a_tilde.
struct ValueW {
    GridField w;
    GridField h;
    std::vector<double> c_per_column;
};

/// Columnwise cumulative trapezoid of V anchored at a_tilde; W is 0 on the
/// boundary and the signed integral below it.
GridField build_w(const GridField& v, const FreeBoundary& fb);

/// Holding cost h with per-column constant from the interior relation.
/// `w` must come from build_w on the same grid.
ValueW build_h(const GridField& v, const GridField& w,
               const GridField& source, const FreeBoundary& fb,
               const DiffusionSpec& spec);

/// Central-difference d/dx_n of a field along each column (one-sided at the
/// column ends).
GridField xn_derivative(const GridField& field);

struct HjbReport {
    double max_in_band_abs = 0.0;       // |alpha W - L W - h| strictly inside
    double max_out_of_band = -1e300;    // most positive residual outside
    long in_band_nodes = 0;
    long out_band_nodes = 0;
    double max_dw_minus_v = 0.0;        // |dW/dx_n - V| over interior nodes
    double sandwich_violation = 0.0;    // max(-f1 - dW, dW - f2), <= 0 ok
    double max_mixed_fit_error = 0.0;   // cross-derivative match on the curves
    bool pass = false;
};

/// Region diagnostics for W: the interior equation must hold strictly
/// inside the band (farther than `margin` from both curves), the residual
/// must be negative outside, dW/dx_n must reproduce V and stay within
/// [-f1, f2], and for n >= 2 the mixed derivative on each curve must match
/// the obstacle gradient to O(h).
HjbReport hjb_region_check(const ValueW& vw, const GridField& v,
                           const FreeBoundary& fb, const DiffusionSpec& spec,
                           const CostSpec& cost, double margin,
                           double tol_in_band, double tol_mixed);

/// Reflection band: two lateral curves beta < gamma bounding x_n.
struct Band {
    std::function<double(std::span<const double>)> lower;  // beta(xbar)
    std::function<double(std::span<const double>)> upper;  // gamma(xbar)
    std::string name;
};

/// Band built from extracted free boundaries shifted by fixed offsets.
Band band_from_boundary(const FreeBoundary& fb, double shift_lower,
                        double shift_upper, std::string name);

struct ControlledPathStats {
    double holding_cost = 0.0;      // discounted trapezoid of h along the path
    double control_cost_cont = 0.0; // discounted f1 dA1 + f2 dA2, continuous part
    double jump_cost = 0.0;         // initial-jump integrals
    double a1_total = 0.0;
    double a2_total = 0.0;
    bool minimal_decomposition = true;  // no step pushed both ways
    long steps = 0;
};

struct ReflectedPath {
    Path path;
    std::vector<double> a1_increments;  // per step, projection onto the band
    std::vector<double> a2_increments;
    double a1_jump = 0.0;  // time-zero jump, if the start lies outside
    double a2_jump = 0.0;
};

/// Euler scheme with post-step projection of x_n onto [beta, gamma]
/// (discrete Skorokhod map); a start outside the band jumps onto it at
/// time zero. Throws NumericError if beta >= gamma at a visited column.
ReflectedPath simulate_reflected(const DiffusionSpec& spec, const Band& band,
                                 std::span<const double> x0, double dt,
                                 double t_max, std::uint64_t seed);

/// Replays the cost accounting of a stored reflected path.
ControlledPathStats path_stats(const ReflectedPath& rp, const CostSpec& cost,
                               const GridField& h_field, double alpha);

/// Estimate of the discounted control cost k_S for the reflecting policy on
/// `band`: holding cost from the interpolated h field, continuous control
/// charges f1 dA1 + f2 dA2, and time-zero jump integrals of f1 / f2.
struct CostEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    long paths = 0;
    double truncation_bias_bound = 0.0;
    double mean_holding = 0.0;
    double mean_control = 0.0;
    double mean_jump = 0.0;
    double mean_a1 = 0.0;
    double mean_a2 = 0.0;
};
CostEstimate evaluate_cost(const DiffusionSpec& spec, const CostSpec& cost,
                           const GridField& h_field, const Band& band,
                           std::span<const double> x0, const McParams& mc);

/// W at an arbitrary point: interpolation inside the grid box, obstacle-
/// slope extension beyond the x_n edges (dW/dx_n = -f1 below, f2 above).
double w_extended(const GridField& w, const CostSpec& cost,
                  std::span<const double> point);

struct VerificationRow {
    std::string policy;
    double k_hat = 0.0;
    double std_error = 0.0;
    double excess = 0.0;  // k_hat - W(x0)
    bool pass_inequality = false;  // excess >= -3 SE
    bool matches_value = false;    // |excess| <= 3 SE
};

struct VerificationReport {
    double w_at_x0 = 0.0;
    std::vector<VerificationRow> rows;
    bool optimal_matches = false;  // first row must satisfy matches_value
    bool all_pass = true;
};

/// Runs evaluate_cost for every band (the first entry is the candidate
/// optimal policy) and compares against W(x0).
VerificationReport verification_report(const DiffusionSpec& spec,
                                       const CostSpec& cost,
                                       const ValueW& vw,
                                       const std::vector<Band>& bands,
                                       std::span<const double> x0,
                                       const McParams& mc);

}  // namespace dynlab
