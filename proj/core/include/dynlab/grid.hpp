#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dynlab {

/// Boundary treatment on the first n-1 axes (the "lateral" axes). The last
/// axis carries the solver's own edge conditions and never uses these.
enum class LateralBc { kNeumann, kPeriodic };

/// Axis-aligned rectangular grid. Nodes on axis i sit at
/// lower[i] + k * spacing(i), k = 0..counts[i]-1, with both endpoints
/// included (on a periodic axis the last node aliases the first).
///
/// Flattened storage is row-major with the LAST axis fastest, so one
/// "column" (all nodes sharing the lateral coordinates) is contiguous.
struct GridSpec {
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<int> counts;
    std::vector<LateralBc> lateral_bc;  // size dim()-1, entry per lateral axis

    int dim() const { return static_cast<int>(counts.size()); }

    double spacing(int axis) const {
        return (upper[axis] - lower[axis]) / (counts[axis] - 1);
    }

    double coord(int axis, int index) const {
        return lower[axis] + spacing(axis) * index;
    }

    std::size_t num_nodes() const;

    /// Number of lateral columns (1 when dim() == 1).
    std::size_t num_columns() const;

    /// Nodes per column, i.e. counts along the last axis.
    int column_size() const { return counts[dim() - 1]; }

    std::size_t flatten(std::span<const int> idx) const;
    void unflatten(std::size_t flat, std::span<int> idx) const;

    /// Fills `point` with the coordinates of the node at `idx`.
    void node_point(std::span<const int> idx, std::span<double> point) const;

    /// Lateral coordinates of column `col` (empty when dim() == 1).
    std::vector<double> column_point(std::size_t col) const;

    /// Flat index of node `k` along the last axis within column `col`.
    std::size_t column_node(std::size_t col, int k) const;

    /// Resolves the index of the +/-1 neighbor along `axis`, applying the
    /// lateral ghost rule when the step leaves the grid. Periodic axes wrap
    /// over the aliased endpoint; Neumann axes mirror. Must not be called
    /// for out-of-range steps on the last axis.
    int lateral_neighbor(int axis, int index, int step) const;

    /// Throws ConfigError when bounds, counts or bc sizes are inconsistent.
    void validate() const;

    bool operator==(const GridSpec&) const = default;
};

/// One scalar value per grid node.
struct GridField {
    GridSpec grid;
    std::vector<double> values;

    GridField() = default;
    explicit GridField(GridSpec g)
        : grid(std::move(g)), values(grid.num_nodes(), 0.0) {}

    double& at(std::span<const int> idx) { return values[grid.flatten(idx)]; }
    double at(std::span<const int> idx) const {
        return values[grid.flatten(idx)];
    }

    /// Throws if any stored value is non-finite.
    void check_finite(const std::string& what) const;
};

/// Samples a callable f(point) -> double onto every node.
GridField sample_field(const GridSpec& grid,
                       const std::function<double(std::span<const double>)>& f);

/// Multilinear interpolation of a field at an arbitrary point. Lateral axes
/// wrap (periodic) or clamp (Neumann); the last axis clamps to the box.
double interpolate(const GridField& field, std::span<const double> point);

/// Cumulative trapezoid integral along the last axis of one column,
/// anchored at an off-node point `anchor`: out[k] = integral from anchor to
/// node k of the linear interpolant of `col_values`. Exact for the split
/// panel: integrating 0 -> anchor -> node equals the unsplit panel.
void cumulative_trapezoid(std::span<const double> col_values, double h,
                          double y0, double anchor, std::span<double> out);

}  // namespace dynlab
