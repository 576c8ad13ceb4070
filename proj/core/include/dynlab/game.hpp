#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dynlab/cost.hpp"
#include "dynlab/diffusion.hpp"
#include "dynlab/rng.hpp"

namespace dynlab {

struct McParams {
    long paths = 100000;
    double dt = 1e-3;
    double t_max = 20.0;
    std::uint64_t seed = 1;

    void validate() const;
};

/// One Euler-Maruyama step x += mu dt + sigma sqrt(dt) xi with m
/// independent standard normals per step. Not thread-safe; use one
/// instance per worker.
class PathStepper {
public:
    PathStepper(const DiffusionSpec& spec, double dt);

    void step(std::span<double> x, RngStream& rng);

private:
    const DiffusionSpec& spec_;
    double dt_;
    double sqrt_dt_;
    bool cached_;
    std::vector<double> mu_;
    std::vector<double> sig_;
    std::vector<double> noise_;
};

struct Path {
    std::vector<double> times;
    std::vector<double> states;  // row-major, one row of dim() per time
    int dim = 0;

    std::span<const double> at(std::size_t k) const {
        return {states.data() + k * dim, static_cast<std::size_t>(dim)};
    }
};

/// Simulates and stores one trajectory; deterministic given the seed.
/// Throws NumericError with the step index if the state blows up.
Path simulate_path(const DiffusionSpec& spec, std::span<const double> x0,
                   double dt, double t_max, std::uint64_t seed);

/// Region-hitting stopping rule. kMax stops for the maximizer (collects
/// -f1), kMin for the minimizer (pays f2). Ties at the same step go to the
/// maximizer's rule.
struct StoppingStrategy {
    enum class Kind { kStopMin, kStopMax };  // tau resp. sigma
    std::function<bool(std::span<const double>)> in_region;
    Kind kind = Kind::kStopMin;
    std::string name;
};

struct GameEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    long paths = 0;
    /// Bound M e^{-alpha t_max} on the missing terminal payoff of paths cut
    /// at the horizon, with M the obstacle bound.
    double truncation_bias_bound = 0.0;
    /// sup|H| e^{-alpha t_max} / alpha over the visited states: bound on the
    /// discarded running-cost tail.
    double source_tail_bound = 0.0;
    long truncated_paths = 0;
};

/// Discounted game cost for one (tau, sigma) pair started at x0: running
/// payoff integrated by the trapezoid rule until the first step that enters
/// either stopping region, plus the discounted terminal payment.
GameEstimate evaluate_game(const DiffusionSpec& spec, const CostSpec& cost,
                           std::span<const double> x0,
                           const StoppingStrategy& tau,
                           const StoppingStrategy& sigma, const McParams& mc,
                           double obstacle_bound);

/// Evaluates several (tau, sigma) pairs on common random numbers: every
/// pair sees the same Brownian increments, and per-path differences against
/// pair 0 are accumulated for paired standard errors.
struct MultiGameResult {
    std::vector<GameEstimate> estimates;
    std::vector<double> diff_mean;  // estimate[i] - estimate[0], paired
    std::vector<double> diff_se;
};
MultiGameResult evaluate_game_multi(
    const DiffusionSpec& spec, const CostSpec& cost,
    std::span<const double> x0,
    const std::vector<std::pair<StoppingStrategy, StoppingStrategy>>& pairs,
    const McParams& mc, double obstacle_bound);

struct SaddleAlternative {
    std::string name;
    StoppingStrategy::Kind kind;
    double estimate = 0.0;
    double std_error = 0.0;
    double diff = 0.0;     // J(alternative) - J(hat pair)
    double diff_se = 0.0;  // paired standard error under common randomness
    bool pass = false;
};

struct SaddleReport {
    GameEstimate hat;       // J(tau_hat, sigma_hat)
    double v_reference;     // PDE value at x0
    bool value_match;       // |hat.mean - v_reference| <= 3 SE
    std::vector<SaddleAlternative> alternatives;
    bool all_pass;
};

/// Saddle-point verification: deviating the maximizer's rule must not gain
/// (J <= J_hat + 3 SE), deviating the minimizer's must not save
/// (J >= J_hat - 3 SE), on common random numbers.
SaddleReport saddle_check(const DiffusionSpec& spec, const CostSpec& cost,
                          std::span<const double> x0,
                          const StoppingStrategy& tau_hat,
                          const StoppingStrategy& sigma_hat,
                          const std::vector<StoppingStrategy>& alternatives,
                          const McParams& mc, double obstacle_bound,
                          double v_reference);

}  // namespace dynlab
