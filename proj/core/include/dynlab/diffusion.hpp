#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dynlab/grid.hpp"

namespace dynlab {

/// Time-homogeneous diffusion dX = mu(X) dt + sigma(X) dB on R^n with an
/// m-dimensional driving Brownian motion (m >= n) and discount rate
/// alpha > 0. The generator is
///   L u = sum_i mu_i du/dx_i + sum_ij A_ij d2u/dx_i dx_j,  A = sigma sigma^T / 2.
struct DiffusionSpec {
    int dim = 1;        // n
    int noise_dim = 1;  // m
    double alpha = 1.0;
    /// mu(x) -> out[0..n)
    std::function<void(std::span<const double>, std::span<double>)> drift;
    /// sigma(x) -> out[0..n*m), row-major
    std::function<void(std::span<const double>, std::span<double>)> sigma;
    /// Set when drift/sigma do not depend on x; lets hot loops cache them.
    bool constant_coefficients = false;

    /// Fills `a` (row-major n x n) with sigma sigma^T / 2 at `x`.
    void diffusion_matrix(std::span<const double> x, std::span<double> a) const;

    /// Throws ConfigError / NumericError on inconsistent dimensions or
    /// non-finite coefficients at `x`.
    void validate_at(std::span<const double> x) const;
};

/// Second-order finite-difference application of the generator on grid
/// fields: central differences for first and pure second derivatives, the
/// 4-point cross stencil for mixed ones. Coefficients are evaluated once
/// per node at construction.
class GeneratorStencil {
public:
    GeneratorStencil(const DiffusionSpec& spec, const GridSpec& grid);

    /// L_h applied to `values` at the node with multi-index `idx`. The node
    /// must be interior along the last axis; lateral axes use ghost rules.
    double apply(std::span<const double> values, std::span<const int> idx) const;

    /// Same, by flat node index.
    double apply_flat(std::span<const double> values, std::size_t flat) const;

    const GridSpec& grid() const { return grid_; }
    double alpha() const { return alpha_; }

    /// mu_i at a node (flat index), precomputed.
    double mu(std::size_t flat, int i) const { return mu_[flat * dim_ + i]; }
    /// A_ij at a node (flat index), precomputed.
    double a_coef(std::size_t flat, int i, int j) const {
        return a_[(flat * dim_ + i) * dim_ + j];
    }

private:
    GridSpec grid_;
    int dim_;
    double alpha_;
    std::vector<double> mu_;  // num_nodes x n
    std::vector<double> a_;   // num_nodes x n x n
};

/// L applied at `node` of `field`. Convenience wrapper that builds no
/// persistent stencil; use GeneratorStencil for repeated application.
double apply_generator(const DiffusionSpec& spec, const GridField& field,
                       std::span<const int> node);

/// (alpha - L) f + sign * H evaluated at a point for callables, with the
/// derivatives of `f` taken by central finite differences of step `fd_step`.
/// Used for the obstacle comparison curves where f is given analytically.
double alpha_minus_generator_at_point(
    const DiffusionSpec& spec,
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double fd_step = 1e-5);

/// Residual vector of the reference-measure condition
///   A grad(rho) = rho (mu - b),   b_i = div A_i,
/// at an interior node, by central differences (divergence of A included).
/// Throws on rho <= 0 at the node.
std::vector<double> density_residual(const DiffusionSpec& spec,
                                     const GridField& rho,
                                     std::span<const int> node);

/// Ellipticity scan report for A over all grid nodes.
struct EllipticityReport {
    double min_eigenvalue;
    std::vector<double> argmin_point;
    double threshold;
    bool pass;
};

/// Minimum eigenvalue of A over every node of `grid`; passes iff it exceeds
/// `eps_ell`.
EllipticityReport check_nondegenerate(const DiffusionSpec& spec,
                                      const GridSpec& grid,
                                      double eps_ell = 1e-10);

}  // namespace dynlab
