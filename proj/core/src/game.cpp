#include "dynlab/game.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "dynlab/errors.hpp"
#include "dynlab/stats.hpp"

namespace dynlab {

void McParams::validate() const {
    if (paths <= 0) throw ConfigError("mc: paths must be positive");
    if (!(dt > 0.0)) throw ConfigError("mc: dt must be positive");
    if (!(t_max >= dt)) throw ConfigError("mc: t_max must be >= dt");
}

PathStepper::PathStepper(const DiffusionSpec& spec, double dt)
    : spec_(spec),
      dt_(dt),
      sqrt_dt_(std::sqrt(dt)),
      cached_(spec.constant_coefficients),
      mu_(spec.dim),
      sig_(static_cast<std::size_t>(spec.dim) * spec.noise_dim),
      noise_(spec.noise_dim) {
    if (cached_) {
        std::vector<double> origin(spec.dim, 0.0);
        spec_.drift(origin, mu_);
        spec_.sigma(origin, sig_);
    }
}

void PathStepper::step(std::span<double> x, RngStream& rng) {
    const int n = spec_.dim;
    const int m = spec_.noise_dim;
    if (!cached_) {
        spec_.drift(x, mu_);
        spec_.sigma(x, sig_);
    }
    for (int j = 0; j < m; ++j) noise_[j] = rng.next_normal();
    for (int i = 0; i < n; ++i) {
        double dx = mu_[i] * dt_;
        const double* row = sig_.data() + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) dx += row[j] * sqrt_dt_ * noise_[j];
        x[i] += dx;
    }
}

Path simulate_path(const DiffusionSpec& spec, std::span<const double> x0,
                   double dt, double t_max, std::uint64_t seed) {
    if (!(dt > 0.0) || !(t_max >= dt)) {
        throw ConfigError("simulate_path: need dt > 0 and t_max >= dt");
    }
    const int n = spec.dim;
    const long steps = static_cast<long>(std::floor(t_max / dt + 0.5));
    Path path;
    path.dim = n;
    path.times.reserve(steps + 1);
    path.states.reserve(static_cast<std::size_t>(steps + 1) * n);

    std::vector<double> x(x0.begin(), x0.end());
    PathStepper stepper(spec, dt);
    RngStream rng(seed, 0);

    path.times.push_back(0.0);
    path.states.insert(path.states.end(), x.begin(), x.end());
    for (long k = 0; k < steps; ++k) {
        stepper.step(x, rng);
        for (double c : x) {
            if (!std::isfinite(c)) {
                throw NumericError("simulate_path: state blew up at step " +
                                   std::to_string(k + 1));
            }
        }
        path.times.push_back((k + 1) * dt);
        path.states.insert(path.states.end(), x.begin(), x.end());
    }
    return path;
}

namespace {

struct PairState {
    bool active = true;
    double value = 0.0;
};

struct ChunkAccum {
    std::vector<MeanAccumulator> value;  // per pair
    std::vector<MeanAccumulator> diff;   // per pair, paired vs pair 0
    std::vector<long> truncated;
    double max_abs_source = 0.0;
};

// Runs paths [begin, end) for all pairs on common increments.
ChunkAccum run_chunk(
    const DiffusionSpec& spec, const CostSpec& cost,
    std::span<const double> x0,
    const std::vector<std::pair<StoppingStrategy, StoppingStrategy>>& pairs,
    const McParams& mc, long begin, long end) {
    const std::size_t np = pairs.size();
    ChunkAccum acc;
    acc.value.resize(np);
    acc.diff.resize(np);
    acc.truncated.assign(np, 0);

    const double alpha = spec.alpha;
    const long steps = static_cast<long>(std::floor(mc.t_max / mc.dt + 0.5));
    PathStepper stepper(spec, mc.dt);
    std::vector<double> x(spec.dim);
    std::vector<PairState> st(np);
    std::vector<double> path_values(np);

    for (long p = begin; p < end; ++p) {
        RngStream rng(mc.seed, static_cast<std::uint64_t>(p));
        std::copy(x0.begin(), x0.end(), x.begin());
        for (auto& s : st) s = PairState{};

        double t = 0.0;
        double disc = 1.0;
        double hval = cost.source(x);
        acc.max_abs_source = std::max(acc.max_abs_source, std::abs(hval));
        double integrand = hval;  // e^{-alpha t} H(x), t = 0
        double running = 0.0;     // trapezoid of the integrand so far
        std::size_t active = np;

        // stop immediately where a region already contains x0
        for (std::size_t i = 0; i < np; ++i) {
            const auto& [tau, sigma] = pairs[i];
            if (sigma.in_region(x)) {
                st[i].active = false;
                st[i].value = -cost.f1(x);
                --active;
            } else if (tau.in_region(x)) {
                st[i].active = false;
                st[i].value = cost.f2(x);
                --active;
            }
        }

        long k = 0;
        for (; k < steps && active > 0; ++k) {
            stepper.step(x, rng);
            for (double c : x) {
                if (!std::isfinite(c)) {
                    throw NumericError("evaluate_game: state blew up at step " +
                                       std::to_string(k + 1) + " of path " +
                                       std::to_string(p));
                }
            }
            t = (k + 1) * mc.dt;
            disc = std::exp(-alpha * t);
            hval = cost.source(x);
            acc.max_abs_source = std::max(acc.max_abs_source, std::abs(hval));
            const double next_integrand = disc * hval;
            running += 0.5 * mc.dt * (integrand + next_integrand);
            integrand = next_integrand;

            for (std::size_t i = 0; i < np; ++i) {
                if (!st[i].active) continue;
                const auto& [tau, sigma] = pairs[i];
                if (sigma.in_region(x)) {
                    st[i].active = false;
                    st[i].value = running + disc * (-cost.f1(x));
                    --active;
                } else if (tau.in_region(x)) {
                    st[i].active = false;
                    st[i].value = running + disc * cost.f2(x);
                    --active;
                }
            }
        }
        for (std::size_t i = 0; i < np; ++i) {
            if (st[i].active) {
                st[i].value = running;  // horizon hit: drop the terminal leg
                ++acc.truncated[i];
            }
            path_values[i] = st[i].value;
            acc.value[i].add(st[i].value);
        }
        for (std::size_t i = 0; i < np; ++i) {
            acc.diff[i].add(path_values[i] - path_values[0]);
        }
    }
    return acc;
}

}  // namespace

MultiGameResult evaluate_game_multi(
    const DiffusionSpec& spec, const CostSpec& cost,
    std::span<const double> x0,
    const std::vector<std::pair<StoppingStrategy, StoppingStrategy>>& pairs,
    const McParams& mc, double obstacle_bound) {
    mc.validate();
    if (pairs.empty()) throw ConfigError("evaluate_game_multi: no pairs");

    // fixed chunk layout keeps the reduction order independent of scheduling
    const long nchunks = std::min<long>(64, mc.paths);
    std::vector<ChunkAccum> chunks(nchunks);
    std::atomic<long> next_chunk{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&]() {
        for (;;) {
            long c = next_chunk.fetch_add(1);
            if (c >= nchunks) return;
            long begin = mc.paths * c / nchunks;
            long end = mc.paths * (c + 1) / nchunks;
            try {
                chunks[c] = run_chunk(spec, cost, x0, pairs, mc, begin, end);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    unsigned hw = std::thread::hardware_concurrency();
    unsigned nthreads = std::clamp(hw, 1u, 8u);
    if (nthreads > 1 && mc.paths >= 256) {
        std::vector<std::thread> pool;
        pool.reserve(nthreads);
        for (unsigned i = 0; i < nthreads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    } else {
        worker();
    }
    if (failure) std::rethrow_exception(failure);

    const std::size_t np = pairs.size();
    MultiGameResult result;
    result.estimates.resize(np);
    result.diff_mean.assign(np, 0.0);
    result.diff_se.assign(np, 0.0);

    const double tail = std::exp(-spec.alpha * mc.t_max);
    double max_source = 0.0;
    for (const auto& c : chunks) max_source = std::max(max_source, c.max_abs_source);

    for (std::size_t i = 0; i < np; ++i) {
        MeanAccumulator value;
        MeanAccumulator diff;
        long truncated = 0;
        for (const auto& c : chunks) {
            value.merge(c.value[i]);
            diff.merge(c.diff[i]);
            truncated += c.truncated[i];
        }
        GameEstimate& est = result.estimates[i];
        est.mean = value.mean();
        est.std_error = value.std_error();
        est.paths = value.count();
        est.truncation_bias_bound = obstacle_bound * tail;
        est.source_tail_bound = max_source * tail / spec.alpha;
        est.truncated_paths = truncated;
        result.diff_mean[i] = diff.mean();
        result.diff_se[i] = diff.std_error();
    }
    return result;
}

GameEstimate evaluate_game(const DiffusionSpec& spec, const CostSpec& cost,
                           std::span<const double> x0,
                           const StoppingStrategy& tau,
                           const StoppingStrategy& sigma, const McParams& mc,
                           double obstacle_bound) {
    std::vector<std::pair<StoppingStrategy, StoppingStrategy>> pairs{
        {tau, sigma}};
    return evaluate_game_multi(spec, cost, x0, pairs, mc, obstacle_bound)
        .estimates[0];
}

SaddleReport saddle_check(const DiffusionSpec& spec, const CostSpec& cost,
                          std::span<const double> x0,
                          const StoppingStrategy& tau_hat,
                          const StoppingStrategy& sigma_hat,
                          const std::vector<StoppingStrategy>& alternatives,
                          const McParams& mc, double obstacle_bound,
                          double v_reference) {
    std::vector<std::pair<StoppingStrategy, StoppingStrategy>> pairs;
    pairs.emplace_back(tau_hat, sigma_hat);
    for (const auto& alt : alternatives) {
        if (alt.kind == StoppingStrategy::Kind::kStopMax) {
            pairs.emplace_back(tau_hat, alt);  // deviate the maximizer
        } else {
            pairs.emplace_back(alt, sigma_hat);  // deviate the minimizer
        }
    }

    MultiGameResult mg =
        evaluate_game_multi(spec, cost, x0, pairs, mc, obstacle_bound);

    SaddleReport report;
    report.hat = mg.estimates[0];
    report.v_reference = v_reference;
    report.value_match = std::abs(report.hat.mean - v_reference) <=
                         3.0 * report.hat.std_error;
    report.all_pass = report.value_match;
    for (std::size_t i = 0; i < alternatives.size(); ++i) {
        SaddleAlternative row;
        row.name = alternatives[i].name;
        row.kind = alternatives[i].kind;
        row.estimate = mg.estimates[i + 1].mean;
        row.std_error = mg.estimates[i + 1].std_error;
        row.diff = mg.diff_mean[i + 1];
        row.diff_se = mg.diff_se[i + 1];
        if (row.kind == StoppingStrategy::Kind::kStopMax) {
            row.pass = row.diff <= 3.0 * row.diff_se;  // no gain for maximizer
        } else {
            row.pass = row.diff >= -3.0 * row.diff_se;  // no saving for minimizer
        }
        report.all_pass = report.all_pass && row.pass;
        report.alternatives.push_back(std::move(row));
    }
    return report;
}

}  // namespace dynlab
