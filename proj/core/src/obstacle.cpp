#include "dynlab/obstacle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dynlab/errors.hpp"

namespace dynlab {

void ObstacleProblem::validate() const {
    grid.validate();
    if (source.grid != grid || f1.grid != grid || f2.grid != grid) {
        throw ConfigError("obstacle problem: field grids do not match");
    }
    source.check_finite("obstacle problem H");
    f1.check_finite("obstacle problem f1");
    f2.check_finite("obstacle problem f2");
    for (std::size_t i = 0; i < f1.values.size(); ++i) {
        if (!(f1.values[i] > 0.0) || !(f2.values[i] > 0.0)) {
            throw ConfigError(
                "obstacle problem: requires -f1 < 0 < f2 at every node");
        }
    }
}

double ObstacleProblem::obstacle_bound() const {
    double m = 0.0;
    for (std::size_t i = 0; i < f1.values.size(); ++i) {
        m = std::max(m, std::max(f1.values[i], f2.values[i]));
    }
    return m;
}

namespace {

// Sparse Gauss-Seidel system for (alpha - L_h) V = H with resolved ghost
// rules: one CSR row per swept node. Pinned rows are not swept.
struct DiscreteSystem {
    std::vector<std::size_t> swept;     // flat node indices, lexicographic
    std::vector<double> diag;           // per swept node
    std::vector<std::size_t> row_ptr;   // into cols/coefs
    std::vector<std::size_t> cols;      // neighbor flat indices
    std::vector<double> coefs;          // neighbor coefficients
};

DiscreteSystem build_system(const GeneratorStencil& st, const PsorParams& p) {
    const GridSpec& g = st.grid();
    const int n = g.dim();
    const int last = n - 1;
    const int nz = g.counts[last];
    const double alpha = st.alpha();

    DiscreteSystem sys;
    const std::size_t nn = g.num_nodes();
    sys.swept.reserve(nn);
    sys.row_ptr.push_back(0);

    std::vector<int> idx(n);
    // scratch: accumulate coefficients keyed by resolved flat index
    std::vector<std::pair<std::size_t, double>> entries;

    for (std::size_t flat = 0; flat < nn; ++flat) {
        g.unflatten(flat, idx);
        const int k = idx[last];
        const bool bottom = (k == 0);
        const bool top = (k == nz - 1);
        if (bottom && p.bottom_bc == EdgeBc::kPinObstacle) continue;
        if (top && p.top_bc == EdgeBc::kPinObstacle) continue;

        entries.clear();
        double diag = alpha;

        // resolved +/-1 indices per axis; the last axis mirrors only under
        // a reflecting edge condition
        int plus[8], minus[8];
        for (int ax = 0; ax < n; ++ax) {
            if (ax == last) {
                plus[ax] = top ? k - 1 : k + 1;    // mirror at a reflect edge
                minus[ax] = bottom ? k + 1 : k - 1;
            } else {
                plus[ax] = g.lateral_neighbor(ax, idx[ax], +1);
                minus[ax] = g.lateral_neighbor(ax, idx[ax], -1);
            }
        }

        auto add = [&](int ax1, int i1, double c, int ax2 = -1, int i2 = 0) {
            std::vector<int> tmp(idx);
            tmp[ax1] = i1;
            if (ax2 >= 0) tmp[ax2] = i2;
            std::size_t f = g.flatten(tmp);
            if (f == flat) {
                diag -= c;  // ghost resolved onto the center node
                return;
            }
            for (auto& e : entries) {
                if (e.first == f) {
                    e.second += c;
                    return;
                }
            }
            entries.emplace_back(f, c);
        };

        for (int ax = 0; ax < n; ++ax) {
            const double h = g.spacing(ax);
            const double aii = st.a_coef(flat, ax, ax);
            const double mu = st.mu(flat, ax);
            diag += 2.0 * aii / (h * h);
            // at a mirrored edge the +/- entries land on the same node and
            // the drift contribution cancels
            add(ax, plus[ax], aii / (h * h) + mu / (2.0 * h));
            add(ax, minus[ax], aii / (h * h) - mu / (2.0 * h));
        }
        for (int ax = 0; ax < n; ++ax) {
            for (int bx = ax + 1; bx < n; ++bx) {
                const double aij = st.a_coef(flat, ax, bx);
                if (aij == 0.0) continue;
                const double q =
                    aij / (2.0 * g.spacing(ax) * g.spacing(bx));
                add(ax, plus[ax], q, bx, plus[bx]);
                add(ax, minus[ax], q, bx, minus[bx]);
                add(ax, plus[ax], -q, bx, minus[bx]);
                add(ax, minus[ax], -q, bx, plus[bx]);
            }
        }

        sys.swept.push_back(flat);
        sys.diag.push_back(diag);
        for (auto& e : entries) {
            sys.cols.push_back(e.first);
            sys.coefs.push_back(e.second);
        }
        sys.row_ptr.push_back(sys.cols.size());
    }
    return sys;
}

double projected_residual(const DiscreteSystem& sys,
                          const std::vector<double>& v,
                          const std::vector<double>& h,
                          const std::vector<double>& f1,
                          const std::vector<double>& f2) {
    double worst = 0.0;
    for (std::size_t row = 0; row < sys.swept.size(); ++row) {
        const std::size_t p = sys.swept[row];
        double acc = 0.0;
        for (std::size_t e = sys.row_ptr[row]; e < sys.row_ptr[row + 1]; ++e) {
            acc += sys.coefs[e] * v[sys.cols[e]];
        }
        const double r = sys.diag[row] * v[p] - acc - h[p];
        const double phi = std::max(std::min(r, v[p] + f1[p]), v[p] - f2[p]);
        worst = std::max(worst, std::abs(phi));
    }
    return worst;
}

}  // namespace

ObstacleSolution solve_two_obstacle(const ObstacleProblem& problem,
                                    const PsorParams& params) {
    if (!(params.omega > 0.0 && params.omega < 2.0)) {
        throw ConfigError("solve_two_obstacle: omega must lie in (0, 2)");
    }
    problem.validate();

    const GridSpec& g = problem.grid;
    const int last = g.dim() - 1;
    const int nz = g.counts[last];

    GeneratorStencil stencil(problem.spec, g);
    DiscreteSystem sys = build_system(stencil, params);

    ObstacleSolution sol;
    sol.value = GridField(g);
    std::vector<double>& v = sol.value.values;
    const std::vector<double>& hsrc = problem.source.values;
    const std::vector<double>& f1 = problem.f1.values;
    const std::vector<double>& f2 = problem.f2.values;

    // pinned edge rows hold the obstacle values throughout
    std::vector<int> idx(g.dim());
    for (std::size_t flat = 0; flat < v.size(); ++flat) {
        g.unflatten(flat, idx);
        if (idx[last] == 0 && params.bottom_bc == EdgeBc::kPinObstacle) {
            v[flat] = -f1[flat];
        } else if (idx[last] == nz - 1 && params.top_bc == EdgeBc::kPinObstacle) {
            v[flat] = f2[flat];
        } else {
            v[flat] = 0.0;
        }
    }

    const std::size_t rows = sys.swept.size();
    const double omega = params.omega;
    double residual = std::numeric_limits<double>::infinity();
    long iter = 0;
    for (; iter < params.max_iter; ++iter) {
        const bool forward = (iter % 2 == 0);
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t row = forward ? r : rows - 1 - r;
            const std::size_t p = sys.swept[row];
            double acc = 0.0;
            for (std::size_t e = sys.row_ptr[row]; e < sys.row_ptr[row + 1];
                 ++e) {
                acc += sys.coefs[e] * v[sys.cols[e]];
            }
            const double gs = (hsrc[p] + acc) / sys.diag[row];
            const double relaxed = v[p] + omega * (gs - v[p]);
            v[p] = std::clamp(relaxed, -f1[p], f2[p]);
        }
        residual = projected_residual(sys, v, hsrc, f1, f2);
        if (residual <= params.tol) {
            ++iter;
            break;
        }
    }
    if (residual > params.tol) {
        throw NumericError("solve_two_obstacle: no convergence after " +
                           std::to_string(params.max_iter) +
                           " sweeps (residual " + std::to_string(residual) +
                           ")");
    }

    sol.iterations = iter;
    sol.residual = residual;
    sol.labels =
        classify_regions(sol.value, problem.f1, problem.f2, params.tol_label);
    return sol;
}

double complementarity_residual(const ObstacleSolution& solution,
                                const ObstacleProblem& problem,
                                const PsorParams& params) {
    if (solution.value.grid != problem.grid) {
        throw ConfigError("complementarity_residual: grid mismatch");
    }
    GeneratorStencil stencil(problem.spec, problem.grid);
    DiscreteSystem sys = build_system(stencil, params);
    return projected_residual(sys, solution.value.values,
                              problem.source.values, problem.f1.values,
                              problem.f2.values);
}

std::vector<RegionLabel> classify_regions(const GridField& value,
                                          const GridField& f1,
                                          const GridField& f2,
                                          double tol_label) {
    const std::vector<double>& v = value.values;
    std::vector<RegionLabel> labels(v.size(), RegionLabel::kE);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(f1.values[i] + f2.values[i] > 2.0 * tol_label)) {
            throw ConfigError(
                "classify_regions: obstacle margin below 2*tol_label at node " +
                std::to_string(i));
        }
        if (v[i] <= -f1.values[i] + tol_label) {
            labels[i] = RegionLabel::kE1;
        } else if (v[i] >= f2.values[i] - tol_label) {
            labels[i] = RegionLabel::kE2;
        }
    }
    return labels;
}

}  // namespace dynlab
