#include "dynlab/grid.hpp"

#include <algorithm>
#include <cmath>

#include "dynlab/errors.hpp"

namespace dynlab {

std::size_t GridSpec::num_nodes() const {
    std::size_t n = 1;
    for (int c : counts) n *= static_cast<std::size_t>(c);
    return n;
}

std::size_t GridSpec::num_columns() const {
    std::size_t n = 1;
    for (int axis = 0; axis + 1 < dim(); ++axis) {
        n *= static_cast<std::size_t>(counts[axis]);
    }
    return n;
}

std::size_t GridSpec::flatten(std::span<const int> idx) const {
    std::size_t flat = 0;
    for (int axis = 0; axis < dim(); ++axis) {
        flat = flat * static_cast<std::size_t>(counts[axis]) +
               static_cast<std::size_t>(idx[axis]);
    }
    return flat;
}

void GridSpec::unflatten(std::size_t flat, std::span<int> idx) const {
    for (int axis = dim() - 1; axis >= 0; --axis) {
        idx[axis] = static_cast<int>(flat % counts[axis]);
        flat /= counts[axis];
    }
}

void GridSpec::node_point(std::span<const int> idx,
                          std::span<double> point) const {
    for (int axis = 0; axis < dim(); ++axis) {
        point[axis] = coord(axis, idx[axis]);
    }
}

std::vector<double> GridSpec::column_point(std::size_t col) const {
    std::vector<double> xbar(dim() - 1);
    for (int axis = dim() - 2; axis >= 0; --axis) {
        xbar[axis] = coord(axis, static_cast<int>(col % counts[axis]));
        col /= counts[axis];
    }
    return xbar;
}

std::size_t GridSpec::column_node(std::size_t col, int k) const {
    return col * static_cast<std::size_t>(column_size()) +
           static_cast<std::size_t>(k);
}

int GridSpec::lateral_neighbor(int axis, int index, int step) const {
    int j = index + step;
    if (j >= 0 && j < counts[axis]) return j;
    if (axis == dim() - 1) {
        throw Error("lateral_neighbor: step leaves the grid on the last axis");
    }
    if (lateral_bc[axis] == LateralBc::kPeriodic) {
        // node counts-1 aliases node 0; wrap over the unique nodes
        int unique = counts[axis] - 1;
        j = ((j % unique) + unique) % unique;
        return j;
    }
    // mirror ghost: value at -1 equals value at +1
    if (j < 0) return -j;
    return 2 * (counts[axis] - 1) - j;
}

void GridSpec::validate() const {
    if (counts.empty()) throw ConfigError("grid: dimension must be >= 1");
    if (lower.size() != counts.size() || upper.size() != counts.size()) {
        throw ConfigError("grid: lower/upper/counts size mismatch");
    }
    if (lateral_bc.size() != counts.size() - 1) {
        throw ConfigError("grid: lateral_bc must have dim-1 entries");
    }
    for (int axis = 0; axis < dim(); ++axis) {
        if (!(lower[axis] < upper[axis])) {
            throw ConfigError("grid: lower must be < upper on axis " +
                              std::to_string(axis + 1));
        }
        if (counts[axis] < 3) {
            throw ConfigError("grid: need at least 3 nodes on axis " +
                              std::to_string(axis + 1));
        }
        if (!(spacing(axis) > 0.0) || !std::isfinite(spacing(axis))) {
            throw ConfigError("grid: bad spacing on axis " +
                              std::to_string(axis + 1));
        }
    }
}

void GridField::check_finite(const std::string& what) const {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw NumericError(what + ": non-finite value at node " +
                               std::to_string(i));
        }
    }
}

GridField sample_field(
    const GridSpec& grid,
    const std::function<double(std::span<const double>)>& f) {
    GridField out(grid);
    const int n = grid.dim();
    std::vector<int> idx(n, 0);
    std::vector<double> point(n);
    for (std::size_t flat = 0; flat < out.values.size(); ++flat) {
        grid.unflatten(flat, idx);
        grid.node_point(idx, point);
        out.values[flat] = f(point);
    }
    return out;
}

namespace {

// Locates `x` on a grid axis: cell index i and fraction t in [0,1], with
// lateral wrap/clamp applied first.
void locate(const GridSpec& g, int axis, double x, int& i, double& t) {
    double lo = g.lower[axis];
    double hi = g.upper[axis];
    if (axis < g.dim() - 1 && g.lateral_bc[axis] == LateralBc::kPeriodic) {
        double period = hi - lo;
        x = x - period * std::floor((x - lo) / period);
    } else {
        x = std::clamp(x, lo, hi);
    }
    double u = (x - lo) / g.spacing(axis);
    i = std::min(static_cast<int>(u), g.counts[axis] - 2);
    i = std::max(i, 0);
    t = u - i;
}

}  // namespace

double interpolate(const GridField& field, std::span<const double> point) {
    const GridSpec& g = field.grid;
    const int n = g.dim();
    std::vector<int> base(n);
    std::vector<double> frac(n);
    for (int axis = 0; axis < n; ++axis) {
        locate(g, axis, point[axis], base[axis], frac[axis]);
    }
    // accumulate over the 2^n cell corners
    double acc = 0.0;
    std::vector<int> idx(n);
    for (unsigned corner = 0; corner < (1u << n); ++corner) {
        double w = 1.0;
        for (int axis = 0; axis < n; ++axis) {
            if (corner & (1u << axis)) {
                idx[axis] = base[axis] + 1;
                w *= frac[axis];
            } else {
                idx[axis] = base[axis];
                w *= 1.0 - frac[axis];
            }
        }
        if (w != 0.0) acc += w * field.values[g.flatten(idx)];
    }
    return acc;
}

void cumulative_trapezoid(std::span<const double> col_values, double h,
                          double y0, double anchor, std::span<double> out) {
    const int m = static_cast<int>(col_values.size());
    // bracket the anchor; clamp to the node range
    double u = (anchor - y0) / h;
    int k = std::clamp(static_cast<int>(std::floor(u)), 0, m - 2);
    double t = std::clamp(u - k, 0.0, 1.0);
    double va = col_values[k] + t * (col_values[k + 1] - col_values[k]);
    double ya = y0 + (k + t) * h;

    double yk1 = y0 + (k + 1) * h;
    out[k + 1] = 0.5 * (yk1 - ya) * (va + col_values[k + 1]);
    for (int j = k + 1; j + 1 < m; ++j) {
        out[j + 1] = out[j] + 0.5 * h * (col_values[j] + col_values[j + 1]);
    }
    double yk = y0 + k * h;
    out[k] = -0.5 * (ya - yk) * (col_values[k] + va);
    for (int j = k; j > 0; --j) {
        out[j - 1] = out[j] - 0.5 * h * (col_values[j - 1] + col_values[j]);
    }
}

}  // namespace dynlab
