#include "dynlab/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "dynlab/errors.hpp"

namespace dynlab {

namespace {

// Multilinear interpolation of per-column heights at a lateral point.
double curve_at(const GridSpec& g, std::span<const double> heights,
                std::span<const double> xbar) {
    const int nlat = g.dim() - 1;
    if (nlat == 0) return heights[0];

    std::vector<int> base(nlat);
    std::vector<double> frac(nlat);
    for (int ax = 0; ax < nlat; ++ax) {
        double lo = g.lower[ax];
        double hi = g.upper[ax];
        double x = xbar[ax];
        if (g.lateral_bc[ax] == LateralBc::kPeriodic) {
            double period = hi - lo;
            x = x - period * std::floor((x - lo) / period);
        } else {
            x = std::clamp(x, lo, hi);
        }
        double u = (x - lo) / g.spacing(ax);
        int i = std::clamp(static_cast<int>(u), 0, g.counts[ax] - 2);
        base[ax] = i;
        frac[ax] = u - i;
    }
    double acc = 0.0;
    for (unsigned corner = 0; corner < (1u << nlat); ++corner) {
        double w = 1.0;
        std::size_t col = 0;
        for (int ax = 0; ax < nlat; ++ax) {
            int i = base[ax];
            if (corner & (1u << ax)) {
                i += 1;
                w *= frac[ax];
            } else {
                w *= 1.0 - frac[ax];
            }
            col = col * static_cast<std::size_t>(g.counts[ax]) +
                  static_cast<std::size_t>(i);
        }
        if (w != 0.0) acc += w * heights[col];
    }
    return acc;
}

}  // namespace

double FreeBoundary::a_at(std::span<const double> xbar) const {
    return curve_at(grid, a_tilde, xbar);
}

double FreeBoundary::b_at(std::span<const double> xbar) const {
    return curve_at(grid, b_tilde, xbar);
}

FreeBoundary extract_boundaries(const ObstacleSolution& solution,
                                const ObstacleProblem& problem) {
    const GridSpec& g = solution.value.grid;
    const int nz = g.column_size();
    const double h = g.spacing(g.dim() - 1);
    const double y0 = g.lower[g.dim() - 1];
    const std::size_t ncols = g.num_columns();

    FreeBoundary fb;
    fb.grid = g;
    fb.a_tilde.resize(ncols);
    fb.b_tilde.resize(ncols);

    for (std::size_t col = 0; col < ncols; ++col) {
        // contiguity: labels must run E1* E* E2* bottom to top
        int last_e1 = -1;
        int first_e2 = nz;
        for (int k = 0; k < nz; ++k) {
            RegionLabel lab = solution.labels[g.column_node(col, k)];
            if (lab == RegionLabel::kE1) {
                if (k != last_e1 + 1) {
                    throw TopologyError(
                        "extract_boundaries: detached lower stopping run in "
                        "column " + std::to_string(col));
                }
                last_e1 = k;
            } else if (lab == RegionLabel::kE2 && first_e2 == nz) {
                first_e2 = k;
            } else if (lab != RegionLabel::kE2 && first_e2 < nz) {
                throw TopologyError(
                    "extract_boundaries: detached upper stopping run in "
                    "column " + std::to_string(col));
            }
        }
        if (last_e1 >= first_e2) {
            throw TopologyError(
                "extract_boundaries: stopping regions overlap in column " +
                std::to_string(col));
        }
        if (last_e1 + 1 == first_e2) {
            throw TopologyError(
                "extract_boundaries: empty continuation run in column " +
                std::to_string(col));
        }

        auto gap1 = [&](int k) {
            std::size_t f = g.column_node(col, k);
            return solution.value.values[f] + problem.f1.values[f];
        };
        auto gap2 = [&](int k) {
            std::size_t f = g.column_node(col, k);
            return problem.f2.values[f] - solution.value.values[f];
        };

        if (last_e1 < 0) {
            fb.a_tilde[col] = y0;  // no lower contact: pin to the bottom edge
        } else {
            double g0 = gap1(last_e1);
            double g1 = gap1(last_e1 + 1);
            double t = g1 > g0 ? std::clamp(g0 / (g1 - g0), 0.0, 1.0) : 0.0;
            fb.a_tilde[col] = y0 + (last_e1 + t) * h;
        }
        if (first_e2 >= nz) {
            fb.b_tilde[col] = y0 + (nz - 1) * h;
        } else {
            double g0 = gap2(first_e2);
            double g1 = gap2(first_e2 - 1);
            double t = g1 > g0 ? std::clamp(g0 / (g1 - g0), 0.0, 1.0) : 0.0;
            fb.b_tilde[col] = y0 + (first_e2 - t) * h;
        }
        if (!(fb.a_tilde[col] < fb.b_tilde[col])) {
            throw TopologyError(
                "extract_boundaries: a_tilde >= b_tilde in column " +
                std::to_string(col));
        }
    }
    return fb;
}

namespace {

double bisect_monotone(const std::function<double(double)>& f, double lo,
                       double hi, bool increasing, double tol) {
    double flo = f(lo);
    double fhi = f(hi);
    if (!increasing) {
        std::swap(lo, hi);
        std::swap(flo, fhi);
    }
    // after the swap the function increases from lo to hi along the sweep
    if (!(flo <= 0.0 && fhi >= 0.0)) {
        throw NumericError("bisection: no sign change over the column range");
    }
    for (int it = 0; it < 200 && std::abs(hi - lo) > tol; ++it) {
        double mid = 0.5 * (lo + hi);
        if (f(mid) <= 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

ComparisonCurves analytic_ab(
    const DiffusionSpec& spec, const CostSpec& cost, const GridSpec& grid,
    const std::function<double(std::span<const double>)>& a_band,
    const std::function<double(std::span<const double>)>& b_band,
    const RootParams& params) {
    const int n = grid.dim();
    const int last = n - 1;
    const double ylo = grid.lower[last];
    const double yhi = grid.upper[last];
    const std::size_t ncols = grid.num_columns();

    ComparisonCurves cc;
    cc.a.resize(ncols);
    cc.b.resize(ncols);
    cc.a_band.resize(ncols);
    cc.b_band.resize(ncols);

    for (std::size_t col = 0; col < ncols; ++col) {
        std::vector<double> point(n);
        auto xbar = grid.column_point(col);
        std::copy(xbar.begin(), xbar.end(), point.begin());

        auto g1 = [&](double y) {
            point[last] = y;
            return alpha_minus_generator_at_point(spec, cost.f1, point,
                                                  params.fd_step) +
                   cost.source(point);
        };
        auto g2 = [&](double y) {
            point[last] = y;
            return alpha_minus_generator_at_point(spec, cost.f2, point,
                                                  params.fd_step) -
                   cost.source(point);
        };

        // monotonicity probe over the column before committing to bisection
        const int probes = std::min(grid.counts[last], 65);
        double prev1 = 0.0, prev2 = 0.0;
        for (int k = 0; k < probes; ++k) {
            double y = ylo + (yhi - ylo) * k / (probes - 1);
            double v1 = g1(y);
            double v2 = g2(y);
            if (k > 0) {
                double scale = 1e-10 * (1.0 + std::abs(v1) + std::abs(prev1));
                if (v1 < prev1 - scale) {
                    throw NumericError(
                        "analytic_ab: g1 is not increasing along column " +
                        std::to_string(col));
                }
                scale = 1e-10 * (1.0 + std::abs(v2) + std::abs(prev2));
                if (v2 > prev2 + scale) {
                    throw NumericError(
                        "analytic_ab: g2 is not decreasing along column " +
                        std::to_string(col));
                }
            }
            prev1 = v1;
            prev2 = v2;
        }

        cc.a[col] = bisect_monotone(g1, ylo, yhi, true, params.tol_root);
        cc.b[col] = bisect_monotone(g2, ylo, yhi, false, params.tol_root);
        point[last] = 0.0;
        cc.a_band[col] = a_band(xbar);
        cc.b_band[col] = b_band(xbar);
    }
    return cc;
}

OrderingReport ordering_check(const FreeBoundary& fb,
                              const ComparisonCurves& cc, double slack) {
    OrderingReport report;
    auto fail = [&](std::size_t col, const std::string& what) {
        report.pass = false;
        report.column = col;
        report.detail = what + " at column " + std::to_string(col);
    };
    for (std::size_t col = 0; col < fb.a_tilde.size(); ++col) {
        const double at = fb.a_tilde[col];
        const double bt = fb.b_tilde[col];
        if (!(cc.a_band[col] <= at + slack)) {
            fail(col, "a_tilde below A");
        } else if (!(at <= cc.a[col] + slack)) {
            fail(col, "a_tilde above a");
        } else if (!(cc.a[col] < cc.b[col])) {
            fail(col, "a >= b");
        } else if (!(cc.b[col] <= bt + slack)) {
            fail(col, "b_tilde below b");
        } else if (!(bt <= cc.b_band[col] + slack)) {
            fail(col, "b_tilde above B");
        }
        if (!report.pass) return report;
    }
    return report;
}

LipschitzEstimate lipschitz_estimate(const GridSpec& grid,
                                     std::span<const double> heights) {
    LipschitzEstimate est;
    const int nlat = grid.dim() - 1;
    if (nlat == 0 || heights.size() < 2) {
        est.single_column = true;
        return est;
    }
    // per lateral axis, compare columns adjacent along that axis
    std::vector<int> cidx(nlat);
    for (std::size_t col = 0; col < heights.size(); ++col) {
        std::size_t rem = col;
        for (int ax = nlat - 1; ax >= 0; --ax) {
            cidx[ax] = static_cast<int>(rem % grid.counts[ax]);
            rem /= grid.counts[ax];
        }
        for (int ax = 0; ax < nlat; ++ax) {
            int next = cidx[ax] + 1;
            if (next >= grid.counts[ax]) continue;  // wrap pair equals col 0 pair
            std::size_t ncol = 0;
            for (int bx = 0; bx < nlat; ++bx) {
                ncol = ncol * static_cast<std::size_t>(grid.counts[bx]) +
                       static_cast<std::size_t>(bx == ax ? next : cidx[bx]);
            }
            double slope = std::abs(heights[ncol] - heights[col]) /
                           grid.spacing(ax);
            est.value = std::max(est.value, slope);
        }
    }
    return est;
}

namespace {

// connected-component count among nodes with a given label
bool single_component(const GridSpec& g, std::span<const RegionLabel> labels,
                      RegionLabel target) {
    const int n = g.dim();
    const int last = n - 1;
    std::size_t start = labels.size();
    std::size_t total = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == target) {
            ++total;
            if (start == labels.size()) start = i;
        }
    }
    if (total == 0) return true;

    std::vector<char> seen(labels.size(), 0);
    std::deque<std::size_t> queue;
    queue.push_back(start);
    seen[start] = 1;
    std::size_t visited = 0;
    std::vector<int> idx(n);
    while (!queue.empty()) {
        std::size_t cur = queue.front();
        queue.pop_front();
        ++visited;
        g.unflatten(cur, idx);
        for (int ax = 0; ax < n; ++ax) {
            for (int step : {-1, +1}) {
                int j = idx[ax] + step;
                if (ax == last) {
                    if (j < 0 || j >= g.counts[ax]) continue;
                } else if (j < 0 || j >= g.counts[ax]) {
                    if (g.lateral_bc[ax] == LateralBc::kPeriodic) {
                        j = g.lateral_neighbor(ax, idx[ax], step);
                    } else {
                        continue;
                    }
                }
                std::vector<int> nb(idx);
                nb[ax] = j;
                std::size_t f = g.flatten(nb);
                if (!seen[f] && labels[f] == target) {
                    seen[f] = 1;
                    queue.push_back(f);
                }
            }
        }
    }
    return visited == total;
}

}  // namespace

ConnectivityReport connectivity_check(const GridSpec& grid,
                                      std::span<const RegionLabel> labels) {
    ConnectivityReport report;
    const int nz = grid.column_size();
    for (std::size_t col = 0; col < grid.num_columns(); ++col) {
        // expect E1* E* E2* within the column
        int phase = 0;
        for (int k = 0; k < nz; ++k) {
            RegionLabel lab = labels[grid.column_node(col, k)];
            int want = lab == RegionLabel::kE1 ? 0 : lab == RegionLabel::kE ? 1 : 2;
            if (want < phase) {
                report.columns_banded = false;
                report.detail =
                    "column " + std::to_string(col) + " is not banded";
                break;
            }
            phase = want;
        }
        if (!report.columns_banded) break;
    }
    report.e_connected = single_component(grid, labels, RegionLabel::kE);
    report.e1_connected = single_component(grid, labels, RegionLabel::kE1);
    report.e2_connected = single_component(grid, labels, RegionLabel::kE2);
    report.pass = report.columns_banded && report.e_connected &&
                  report.e1_connected && report.e2_connected;
    if (!report.pass && report.detail.empty()) {
        report.detail = "disconnected region";
    }
    return report;
}

}  // namespace dynlab
