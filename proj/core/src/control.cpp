#include "dynlab/control.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "dynlab/errors.hpp"
#include "dynlab/stats.hpp"

namespace dynlab {

GridField build_w(const GridField& v, const FreeBoundary& fb) {
    const GridSpec& g = v.grid;
    const int last = g.dim() - 1;
    const int nz = g.column_size();
    const double h = g.spacing(last);
    const double y0 = g.lower[last];

    GridField w(g);
    std::vector<double> colw(nz);
    for (std::size_t col = 0; col < g.num_columns(); ++col) {
        const double* vc = v.values.data() + g.column_node(col, 0);
        cumulative_trapezoid({vc, static_cast<std::size_t>(nz)}, h, y0,
                             fb.a_tilde[col], colw);
        std::copy(colw.begin(), colw.end(),
                  w.values.begin() + g.column_node(col, 0));
    }
    return w;
}

namespace {

// first index k with coord(k) >= y, clamped to the interior
int first_layer_above(const GridSpec& g, double y) {
    const int last = g.dim() - 1;
    const double h = g.spacing(last);
    int k = static_cast<int>(std::ceil((y - g.lower[last]) / h - 1e-12));
    return std::clamp(k, 1, g.counts[last] - 2);
}

}  // namespace

ValueW build_h(const GridField& v, const GridField& w,
               const GridField& source, const FreeBoundary& fb,
               const DiffusionSpec& spec) {
    const GridSpec& g = v.grid;
    const int last = g.dim() - 1;
    const int nz = g.column_size();
    const double h = g.spacing(last);
    const double y0 = g.lower[last];

    GeneratorStencil stencil(spec, g);
    ValueW out;
    out.w = w;
    out.h = GridField(g);
    out.c_per_column.resize(g.num_columns());

    std::vector<double> colh(nz);
    std::vector<int> idx(g.dim());
    for (std::size_t col = 0; col < g.num_columns(); ++col) {
        const double at = fb.a_tilde[col];
        if (at < g.lower[last] - 1e-12 || at > g.upper[last] + 1e-12) {
            throw NumericError("build_h: boundary leaves the grid at column " +
                               std::to_string(col));
        }
        const double* hc = source.values.data() + g.column_node(col, 0);
        cumulative_trapezoid({hc, static_cast<std::size_t>(nz)}, h, y0, at,
                             colh);

        // the stencil at the anchor layer must not touch the kink at a_tilde,
        // so use the first node at least one full spacing above it
        int k1 = first_layer_above(g, at + h);
        std::size_t flat = g.column_node(col, k1);
        g.unflatten(flat, idx);
        const double interior =
            spec.alpha * w.values[flat] - stencil.apply(w.values, idx);
        const double c = interior - colh[k1];
        out.c_per_column[col] = c;
        double* dst = out.h.values.data() + g.column_node(col, 0);
        for (int k = 0; k < nz; ++k) dst[k] = colh[k] + c;
    }
    return out;
}

GridField xn_derivative(const GridField& field) {
    const GridSpec& g = field.grid;
    const int last = g.dim() - 1;
    const int nz = g.column_size();
    const double h = g.spacing(last);
    GridField out(g);
    for (std::size_t col = 0; col < g.num_columns(); ++col) {
        const double* f = field.values.data() + g.column_node(col, 0);
        double* d = out.values.data() + g.column_node(col, 0);
        d[0] = (f[1] - f[0]) / h;
        for (int k = 1; k < nz - 1; ++k) d[k] = (f[k + 1] - f[k - 1]) / (2.0 * h);
        d[nz - 1] = (f[nz - 1] - f[nz - 2]) / h;
    }
    return out;
}

HjbReport hjb_region_check(const ValueW& vw, const GridField& v,
                           const FreeBoundary& fb, const DiffusionSpec& spec,
                           const CostSpec& cost, double margin,
                           double tol_in_band, double tol_mixed) {
    const GridSpec& g = vw.w.grid;
    const int n = g.dim();
    const int last = n - 1;
    const int nz = g.column_size();
    const double h = g.spacing(last);

    GeneratorStencil stencil(spec, g);
    HjbReport report;

    std::vector<int> idx(n);
    for (std::size_t col = 0; col < g.num_columns(); ++col) {
        const double at = fb.a_tilde[col];
        const double bt = fb.b_tilde[col];
        for (int k = 1; k < nz - 1; ++k) {
            const double y = g.lower[last] + k * h;
            std::size_t flat = g.column_node(col, k);
            g.unflatten(flat, idx);
            const double res = spec.alpha * vw.w.values[flat] -
                               stencil.apply(vw.w.values, idx) -
                               vw.h.values[flat];
            if (y > at + margin && y < bt - margin) {
                report.max_in_band_abs =
                    std::max(report.max_in_band_abs, std::abs(res));
                ++report.in_band_nodes;
            } else if (y < at - margin || y > bt + margin) {
                report.max_out_of_band = std::max(report.max_out_of_band, res);
                ++report.out_band_nodes;
            }
        }
    }

    // dW/dx_n must reproduce V and stay within the obstacle sandwich
    GridField dw = xn_derivative(vw.w);
    std::vector<double> point(n);
    for (std::size_t col = 0; col < g.num_columns(); ++col) {
        for (int k = 1; k < nz - 1; ++k) {
            std::size_t flat = g.column_node(col, k);
            report.max_dw_minus_v = std::max(
                report.max_dw_minus_v, std::abs(dw.values[flat] - v.values[flat]));
        }
        for (int k = 0; k < nz; ++k) {
            std::size_t flat = g.column_node(col, k);
            g.unflatten(flat, idx);
            g.node_point(idx, point);
            const double f1 = cost.f1(point);
            const double f2 = cost.f2(point);
            report.sandwich_violation =
                std::max({report.sandwich_violation,
                          -f1 - dw.values[flat], dw.values[flat] - f2});
        }
    }

    // mixed smooth fit on the curves (lateral axes only)
    if (n >= 2) {
        std::vector<double> grad(n);
        for (std::size_t col = 0; col < g.num_columns(); ++col) {
            std::size_t rem = col;
            std::vector<int> cidx(n - 1);
            for (int ax = n - 2; ax >= 0; --ax) {
                cidx[ax] = static_cast<int>(rem % g.counts[ax]);
                rem /= g.counts[ax];
            }
            for (int side = 0; side < 2; ++side) {
                const double yc = side == 0 ? fb.a_tilde[col] : fb.b_tilde[col];
                int k = std::clamp(
                    static_cast<int>(std::floor((yc - g.lower[last]) / h)), 1,
                    nz - 2);
                std::copy(cidx.begin(), cidx.end(), idx.begin());
                idx[last] = k;
                g.node_point(idx, point);
                point[last] = yc;
                if (side == 0) {
                    cost.grad_f1(point, grad);
                } else {
                    cost.grad_f2(point, grad);
                }
                for (int ax = 0; ax < n - 1; ++ax) {
                    // d2 W / dx_n dx_ax by the 4-point cross at the node
                    int ip = g.lateral_neighbor(ax, idx[ax], +1);
                    int im = g.lateral_neighbor(ax, idx[ax], -1);
                    auto val = [&](int lat, int kk) {
                        std::vector<int> t(idx);
                        t[ax] = lat;
                        t[last] = kk;
                        return vw.w.values[g.flatten(t)];
                    };
                    double cross = (val(ip, k + 1) - val(ip, k - 1) -
                                    val(im, k + 1) + val(im, k - 1)) /
                                   (4.0 * h * g.spacing(ax));
                    double target = side == 0 ? -grad[ax] : grad[ax];
                    report.max_mixed_fit_error = std::max(
                        report.max_mixed_fit_error, std::abs(cross - target));
                }
            }
        }
    }

    report.pass = report.max_in_band_abs <= tol_in_band &&
                  report.max_out_of_band < 0.0 &&
                  report.max_mixed_fit_error <= tol_mixed;
    return report;
}

Band band_from_boundary(const FreeBoundary& fb, double shift_lower,
                        double shift_upper, std::string name) {
    Band band;
    band.name = std::move(name);
    band.lower = [fb, shift_lower](std::span<const double> xbar) {
        return fb.a_at(xbar) + shift_lower;
    };
    band.upper = [fb, shift_upper](std::span<const double> xbar) {
        return fb.b_at(xbar) + shift_upper;
    };
    return band;
}

namespace {

// adaptive Simpson for the jump-cost integrals of f1 / f2 along x_n
double simpson_rec(const std::function<double(double)>& f, double a, double b,
                   double fa, double fm, double fb_, double whole, double tol,
                   int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb_);
    if (depth <= 0) return left + right;
    if (std::abs(left + right - whole) <= 15.0 * tol) {
        return left + right + (left + right - whole) / 15.0;
    }
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb_, right, 0.5 * tol, depth - 1);
}

double integrate_1d(const std::function<double(double)>& f, double a, double b,
                    double tol) {
    if (a == b) return 0.0;
    const double fa = f(a);
    const double fb_ = f(b);
    const double fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb_);
    return simpson_rec(f, a, b, fa, fm, fb_, whole, tol, 24);
}

// cost-function integral over a jump segment [ylo, yhi] at fixed xbar
double jump_integral(const CostSpec& cost, bool lower_side,
                     std::span<const double> x, double ylo, double yhi) {
    std::vector<double> p(x.begin(), x.end());
    const std::size_t last = p.size() - 1;
    auto f = [&](double y) {
        p[last] = y;
        return lower_side ? cost.f1(p) : cost.f2(p);
    };
    return integrate_1d(f, ylo, yhi, 1e-10);
}

struct StepOutcome {
    double da1 = 0.0;
    double da2 = 0.0;
};

// shared Euler + projection step; returns the band increments
StepOutcome reflected_step(const DiffusionSpec& spec, PathStepper& stepper,
                           const Band& band, std::span<double> x,
                           RngStream& rng, long step_index) {
    stepper.step(x, rng);
    for (double c : x) {
        if (!std::isfinite(c)) {
            throw NumericError("simulate_reflected: state blew up at step " +
                               std::to_string(step_index));
        }
    }
    const std::size_t last = x.size() - 1;
    std::span<const double> xbar{x.data(), last};
    const double lo = band.lower(xbar);
    const double hi = band.upper(xbar);
    if (!(lo < hi)) {
        throw NumericError("simulate_reflected: beta >= gamma at a visited column");
    }
    StepOutcome out;
    if (x[last] < lo) {
        out.da1 = lo - x[last];
        x[last] = lo;
    } else if (x[last] > hi) {
        out.da2 = x[last] - hi;
        x[last] = hi;
    }
    return out;
}

}  // namespace

ReflectedPath simulate_reflected(const DiffusionSpec& spec, const Band& band,
                                 std::span<const double> x0, double dt,
                                 double t_max, std::uint64_t seed) {
    if (!(dt > 0.0) || !(t_max >= dt)) {
        throw ConfigError("simulate_reflected: need dt > 0 and t_max >= dt");
    }
    const int n = spec.dim;
    const long steps = static_cast<long>(std::floor(t_max / dt + 0.5));

    ReflectedPath rp;
    rp.path.dim = n;
    std::vector<double> x(x0.begin(), x0.end());

    // time-zero jump onto the band
    std::span<const double> xbar{x.data(), static_cast<std::size_t>(n - 1)};
    const double lo = band.lower(xbar);
    const double hi = band.upper(xbar);
    if (!(lo < hi)) {
        throw NumericError("simulate_reflected: beta >= gamma at the start");
    }
    if (x[n - 1] < lo) {
        rp.a1_jump = lo - x[n - 1];
        x[n - 1] = lo;
    } else if (x[n - 1] > hi) {
        rp.a2_jump = x[n - 1] - hi;
        x[n - 1] = hi;
    }

    rp.path.times.push_back(0.0);
    rp.path.states.insert(rp.path.states.end(), x.begin(), x.end());
    PathStepper stepper(spec, dt);
    RngStream rng(seed, 0);
    for (long k = 0; k < steps; ++k) {
        StepOutcome o = reflected_step(spec, stepper, band, x, rng, k + 1);
        rp.path.times.push_back((k + 1) * dt);
        rp.path.states.insert(rp.path.states.end(), x.begin(), x.end());
        rp.a1_increments.push_back(o.da1);
        rp.a2_increments.push_back(o.da2);
    }
    return rp;
}

ControlledPathStats path_stats(const ReflectedPath& rp, const CostSpec& cost,
                               const GridField& h_field, double alpha) {
    ControlledPathStats st;
    const int n = rp.path.dim;
    const std::size_t last = static_cast<std::size_t>(n) - 1;

    auto s0 = rp.path.at(0);
    if (rp.a1_jump > 0.0) {
        const double pre = s0[last] - rp.a1_jump;
        st.jump_cost += jump_integral(cost, true, s0, pre, s0[last]);
        st.a1_total += rp.a1_jump;
    }
    if (rp.a2_jump > 0.0) {
        const double pre = s0[last] + rp.a2_jump;
        st.jump_cost += jump_integral(cost, false, s0, s0[last], pre);
        st.a2_total += rp.a2_jump;
    }

    double integrand = interpolate(h_field, s0);
    for (std::size_t k = 0; k + 1 < rp.path.times.size(); ++k) {
        auto xk = rp.path.at(k + 1);
        const double t = rp.path.times[k + 1];
        const double dt = t - rp.path.times[k];
        const double disc = std::exp(-alpha * t);
        const double next_integrand = disc * interpolate(h_field, xk);
        st.holding_cost += 0.5 * dt * (integrand + next_integrand);
        integrand = next_integrand;
        const double da1 = rp.a1_increments[k];
        const double da2 = rp.a2_increments[k];
        if (da1 > 0.0 && da2 > 0.0) st.minimal_decomposition = false;
        if (da1 > 0.0) {
            st.control_cost_cont += disc * cost.f1(xk) * da1;
            st.a1_total += da1;
        }
        if (da2 > 0.0) {
            st.control_cost_cont += disc * cost.f2(xk) * da2;
            st.a2_total += da2;
        }
        ++st.steps;
    }
    return st;
}

namespace {

struct CostChunk {
    MeanAccumulator total;
    MeanAccumulator holding;
    MeanAccumulator control;
    MeanAccumulator jump;
    MeanAccumulator a1;
    MeanAccumulator a2;
    double max_abs_h = 0.0;
};

CostChunk run_cost_chunk(const DiffusionSpec& spec, const CostSpec& cost,
                         const GridField& h_field, const Band& band,
                         std::span<const double> x0, const McParams& mc,
                         long begin, long end) {
    CostChunk acc;
    const int n = spec.dim;
    const std::size_t last = static_cast<std::size_t>(n) - 1;
    const double alpha = spec.alpha;
    const long steps = static_cast<long>(std::floor(mc.t_max / mc.dt + 0.5));
    PathStepper stepper(spec, mc.dt);
    std::vector<double> x(n);

    for (long pth = begin; pth < end; ++pth) {
        RngStream rng(mc.seed, static_cast<std::uint64_t>(pth));
        std::copy(x0.begin(), x0.end(), x.begin());

        ControlledPathStats st;
        std::span<const double> xbar{x.data(), last};
        double lo = band.lower(xbar);
        double hi = band.upper(xbar);
        if (!(lo < hi)) {
            throw NumericError("evaluate_cost: beta >= gamma at the start");
        }
        if (x[last] < lo) {
            st.a1_total = lo - x[last];
            st.jump_cost = jump_integral(cost, true, x, x[last], lo);
            x[last] = lo;
        } else if (x[last] > hi) {
            st.a2_total = x[last] - hi;
            st.jump_cost = jump_integral(cost, false, x, hi, x[last]);
            x[last] = hi;
        }

        double integrand = interpolate(h_field, x);
        acc.max_abs_h = std::max(acc.max_abs_h, std::abs(integrand));
        for (long k = 0; k < steps; ++k) {
            StepOutcome o = reflected_step(spec, stepper, band, x, rng, k + 1);
            const double t = (k + 1) * mc.dt;
            const double disc = std::exp(-alpha * t);
            const double hval = interpolate(h_field, x);
            acc.max_abs_h = std::max(acc.max_abs_h, std::abs(hval));
            const double next_integrand = disc * hval;
            st.holding_cost += 0.5 * mc.dt * (integrand + next_integrand);
            integrand = next_integrand;
            if (o.da1 > 0.0) {
                st.control_cost_cont += disc * cost.f1(x) * o.da1;
                st.a1_total += o.da1;
            } else if (o.da2 > 0.0) {
                st.control_cost_cont += disc * cost.f2(x) * o.da2;
                st.a2_total += o.da2;
            }
        }
        const double total = st.holding_cost + st.control_cost_cont + st.jump_cost;
        acc.total.add(total);
        acc.holding.add(st.holding_cost);
        acc.control.add(st.control_cost_cont);
        acc.jump.add(st.jump_cost);
        acc.a1.add(st.a1_total);
        acc.a2.add(st.a2_total);
    }
    return acc;
}

}  // namespace

CostEstimate evaluate_cost(const DiffusionSpec& spec, const CostSpec& cost,
                           const GridField& h_field, const Band& band,
                           std::span<const double> x0, const McParams& mc) {
    mc.validate();
    const long nchunks = std::min<long>(64, mc.paths);
    std::vector<CostChunk> chunks(nchunks);
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
                chunks[c] = run_cost_chunk(spec, cost, h_field, band, x0, mc,
                                           begin, end);
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
        for (unsigned i = 0; i < nthreads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    } else {
        worker();
    }
    if (failure) std::rethrow_exception(failure);

    MeanAccumulator total, holding, control, jump, a1, a2;
    double max_h = 0.0;
    for (const auto& c : chunks) {
        total.merge(c.total);
        holding.merge(c.holding);
        control.merge(c.control);
        jump.merge(c.jump);
        a1.merge(c.a1);
        a2.merge(c.a2);
        max_h = std::max(max_h, c.max_abs_h);
    }
    CostEstimate est;
    est.mean = total.mean();
    est.std_error = total.std_error();
    est.paths = total.count();
    est.truncation_bias_bound =
        max_h * std::exp(-spec.alpha * mc.t_max) / spec.alpha;
    est.mean_holding = holding.mean();
    est.mean_control = control.mean();
    est.mean_jump = jump.mean();
    est.mean_a1 = a1.mean();
    est.mean_a2 = a2.mean();
    return est;
}

double w_extended(const GridField& w, const CostSpec& cost,
                  std::span<const double> point) {
    const GridSpec& g = w.grid;
    const int last = g.dim() - 1;
    const double ylo = g.lower[last];
    const double yhi = g.upper[last];
    const double y = point[last];
    if (y >= ylo && y <= yhi) return interpolate(w, point);

    std::vector<double> edge(point.begin(), point.end());
    if (y < ylo) {
        edge[last] = ylo;
        // dW/dx_n = -f1 below the band: going down accumulates +f1
        return interpolate(w, edge) + jump_integral(cost, true, edge, y, ylo);
    }
    edge[last] = yhi;
    return interpolate(w, edge) + jump_integral(cost, false, edge, yhi, y);
}

VerificationReport verification_report(const DiffusionSpec& spec,
                                       const CostSpec& cost,
                                       const ValueW& vw,
                                       const std::vector<Band>& bands,
                                       std::span<const double> x0,
                                       const McParams& mc) {
    VerificationReport report;
    report.w_at_x0 = w_extended(vw.w, cost, x0);
    for (std::size_t i = 0; i < bands.size(); ++i) {
        CostEstimate est = evaluate_cost(spec, cost, vw.h, bands[i], x0, mc);
        VerificationRow row;
        row.policy = bands[i].name;
        row.k_hat = est.mean;
        row.std_error = est.std_error;
        row.excess = est.mean - report.w_at_x0;
        row.pass_inequality = row.excess >= -3.0 * est.std_error;
        row.matches_value = std::abs(row.excess) <= 3.0 * est.std_error;
        report.all_pass = report.all_pass && row.pass_inequality;
        report.rows.push_back(std::move(row));
    }
    report.optimal_matches = !report.rows.empty() && report.rows[0].matches_value;
    report.all_pass = report.all_pass && report.optimal_matches;
    return report;
}

}  // namespace dynlab
