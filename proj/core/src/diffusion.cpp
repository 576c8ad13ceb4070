#include "dynlab/diffusion.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "dynlab/errors.hpp"

namespace dynlab {

void DiffusionSpec::diffusion_matrix(std::span<const double> x,
                                     std::span<double> a) const {
    const int n = dim;
    const int m = noise_dim;
    std::vector<double> s(static_cast<std::size_t>(n) * m);
    sigma(x, s);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < m; ++k) {
                acc += s[i * m + k] * s[j * m + k];
            }
            a[i * n + j] = 0.5 * acc;
        }
    }
}

void DiffusionSpec::validate_at(std::span<const double> x) const {
    if (dim < 1) throw ConfigError("diffusion: dimension must be >= 1");
    if (noise_dim < dim) {
        throw ConfigError("diffusion: noise dimension must be >= state dimension");
    }
    if (!(alpha > 0.0)) throw ConfigError("diffusion: alpha must be > 0");
    std::vector<double> mu(dim);
    drift(x, mu);
    for (double v : mu) {
        if (!std::isfinite(v)) throw NumericError("diffusion: non-finite drift");
    }
    std::vector<double> s(static_cast<std::size_t>(dim) * noise_dim);
    sigma(x, s);
    for (double v : s) {
        if (!std::isfinite(v)) throw NumericError("diffusion: non-finite sigma");
    }
}

GeneratorStencil::GeneratorStencil(const DiffusionSpec& spec,
                                   const GridSpec& grid)
    : grid_(grid), dim_(grid.dim()), alpha_(spec.alpha) {
    if (spec.dim != dim_) {
        throw ConfigError("generator: diffusion dimension does not match grid");
    }
    if (dim_ > 8) throw ConfigError("generator: dimension > 8 not supported");
    const std::size_t nn = grid_.num_nodes();
    mu_.resize(nn * dim_);
    a_.resize(nn * dim_ * dim_);
    std::vector<int> idx(dim_);
    std::vector<double> point(dim_);
    for (std::size_t flat = 0; flat < nn; ++flat) {
        grid_.unflatten(flat, idx);
        grid_.node_point(idx, point);
        spec.drift(point, {mu_.data() + flat * dim_, static_cast<std::size_t>(dim_)});
        spec.diffusion_matrix(
            point, {a_.data() + flat * dim_ * dim_,
                    static_cast<std::size_t>(dim_) * dim_});
    }
    for (double v : mu_) {
        if (!std::isfinite(v)) throw NumericError("generator: non-finite drift");
    }
    for (double v : a_) {
        if (!std::isfinite(v)) {
            throw NumericError("generator: non-finite diffusion matrix");
        }
    }
}

double GeneratorStencil::apply(std::span<const double> values,
                               std::span<const int> idx) const {
    const int n = dim_;
    const int last = n - 1;
    if (idx[last] <= 0 || idx[last] >= grid_.counts[last] - 1) {
        throw Error("generator: node is not interior along the last axis");
    }
    const std::size_t flat = grid_.flatten(idx);
    const double* mu = mu_.data() + flat * n;
    const double* a = a_.data() + flat * n * n;

    // resolved +/-1 neighbor indices per axis
    int plus[8], minus[8];
    std::vector<int> tmp(idx.begin(), idx.end());
    for (int ax = 0; ax < n; ++ax) {
        if (ax == last) {
            plus[ax] = idx[ax] + 1;
            minus[ax] = idx[ax] - 1;
        } else {
            plus[ax] = grid_.lateral_neighbor(ax, idx[ax], +1);
            minus[ax] = grid_.lateral_neighbor(ax, idx[ax], -1);
        }
    }

    auto value_at = [&](int ax1, int i1, int ax2 = -1, int i2 = 0) {
        tmp.assign(idx.begin(), idx.end());
        tmp[ax1] = i1;
        if (ax2 >= 0) tmp[ax2] = i2;
        return values[grid_.flatten(tmp)];
    };

    const double center = values[flat];
    double acc = 0.0;
    for (int ax = 0; ax < n; ++ax) {
        const double h = grid_.spacing(ax);
        const double up = value_at(ax, plus[ax]);
        const double dn = value_at(ax, minus[ax]);
        acc += mu[ax] * (up - dn) / (2.0 * h);
        acc += a[ax * n + ax] * (up - 2.0 * center + dn) / (h * h);
    }
    for (int ax = 0; ax < n; ++ax) {
        for (int bx = ax + 1; bx < n; ++bx) {
            const double aij = a[ax * n + bx];
            if (aij == 0.0) continue;
            const double hihj = grid_.spacing(ax) * grid_.spacing(bx);
            const double pp = value_at(ax, plus[ax], bx, plus[bx]);
            const double mm = value_at(ax, minus[ax], bx, minus[bx]);
            const double pm = value_at(ax, plus[ax], bx, minus[bx]);
            const double mp = value_at(ax, minus[ax], bx, plus[bx]);
            // two symmetric mixed terms share one 4-point cross stencil
            acc += 2.0 * aij * (pp + mm - pm - mp) / (4.0 * hihj);
        }
    }
    return acc;
}

double GeneratorStencil::apply_flat(std::span<const double> values,
                                    std::size_t flat) const {
    std::vector<int> idx(dim_);
    grid_.unflatten(flat, idx);
    return apply(values, idx);
}

double apply_generator(const DiffusionSpec& spec, const GridField& field,
                       std::span<const int> node) {
    field.check_finite("apply_generator");
    GeneratorStencil st(spec, field.grid);
    return st.apply(field.values, node);
}

double alpha_minus_generator_at_point(
    const DiffusionSpec& spec,
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double fd_step) {
    const int n = spec.dim;
    std::vector<double> mu(n);
    spec.drift(x, mu);
    std::vector<double> a(static_cast<std::size_t>(n) * n);
    spec.diffusion_matrix(x, a);

    std::vector<double> p(x.begin(), x.end());
    const double fc = f(p);
    const double h = fd_step;
    double lf = 0.0;
    for (int i = 0; i < n; ++i) {
        p[i] = x[i] + h;
        double fp = f(p);
        p[i] = x[i] - h;
        double fm = f(p);
        p[i] = x[i];
        lf += mu[i] * (fp - fm) / (2.0 * h);
        lf += a[i * n + i] * (fp - 2.0 * fc + fm) / (h * h);
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (a[i * n + j] == 0.0) continue;
            p[i] = x[i] + h; p[j] = x[j] + h;
            double pp = f(p);
            p[j] = x[j] - h;
            double pm = f(p);
            p[i] = x[i] - h;
            double mm = f(p);
            p[j] = x[j] + h;
            double mp = f(p);
            p[i] = x[i]; p[j] = x[j];
            lf += 2.0 * a[i * n + j] * (pp + mm - pm - mp) / (4.0 * h * h);
        }
    }
    return spec.alpha * fc - lf;
}

std::vector<double> density_residual(const DiffusionSpec& spec,
                                     const GridField& rho,
                                     std::span<const int> node) {
    const GridSpec& g = rho.grid;
    const int n = g.dim();
    const std::size_t flat = g.flatten(node);
    const double rc = rho.values[flat];
    if (!(rc > 0.0)) {
        throw NumericError("density_residual: rho must be positive at the node");
    }

    std::vector<double> point(n);
    g.node_point(node, point);
    std::vector<double> mu(n);
    spec.drift(point, mu);
    std::vector<double> a(static_cast<std::size_t>(n) * n);
    spec.diffusion_matrix(point, a);

    // grad rho by central differences on the field
    std::vector<int> tmp(node.begin(), node.end());
    std::vector<double> grad(n);
    const int last = n - 1;
    if (node[last] <= 0 || node[last] >= g.counts[last] - 1) {
        throw Error("density_residual: node is not interior along the last axis");
    }
    for (int ax = 0; ax < n; ++ax) {
        int ip = ax == last ? node[ax] + 1 : g.lateral_neighbor(ax, node[ax], +1);
        int im = ax == last ? node[ax] - 1 : g.lateral_neighbor(ax, node[ax], -1);
        tmp[ax] = ip;
        double up = rho.values[g.flatten(tmp)];
        tmp[ax] = im;
        double dn = rho.values[g.flatten(tmp)];
        tmp[ax] = node[ax];
        grad[ax] = (up - dn) / (2.0 * g.spacing(ax));
    }

    // b_i = div A_i, central differences of A entries at shifted points
    std::vector<double> b(n, 0.0);
    std::vector<double> ap(static_cast<std::size_t>(n) * n);
    std::vector<double> am(static_cast<std::size_t>(n) * n);
    std::vector<double> shifted(point);
    for (int j = 0; j < n; ++j) {
        const double h = g.spacing(j);
        shifted[j] = point[j] + h;
        spec.diffusion_matrix(shifted, ap);
        shifted[j] = point[j] - h;
        spec.diffusion_matrix(shifted, am);
        shifted[j] = point[j];
        for (int i = 0; i < n; ++i) {
            b[i] += (ap[i * n + j] - am[i * n + j]) / (2.0 * h);
        }
    }

    std::vector<double> res(n);
    for (int i = 0; i < n; ++i) {
        double agrad = 0.0;
        for (int j = 0; j < n; ++j) agrad += a[i * n + j] * grad[j];
        res[i] = agrad - rc * (mu[i] - b[i]);
    }
    return res;
}

EllipticityReport check_nondegenerate(const DiffusionSpec& spec,
                                      const GridSpec& grid, double eps_ell) {
    const int n = grid.dim();
    EllipticityReport report;
    report.min_eigenvalue = std::numeric_limits<double>::infinity();
    report.argmin_point.assign(n, 0.0);
    report.threshold = eps_ell;

    std::vector<int> idx(n);
    std::vector<double> point(n);
    std::vector<double> a(static_cast<std::size_t>(n) * n);
    Eigen::MatrixXd mat(n, n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    for (std::size_t flat = 0; flat < grid.num_nodes(); ++flat) {
        grid.unflatten(flat, idx);
        grid.node_point(idx, point);
        spec.diffusion_matrix(point, a);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) mat(i, j) = a[i * n + j];
        }
        solver.compute(mat, Eigen::EigenvaluesOnly);
        double lam = solver.eigenvalues().minCoeff();
        if (lam < report.min_eigenvalue) {
            report.min_eigenvalue = lam;
            report.argmin_point = point;
        }
    }
    report.pass = report.min_eigenvalue > eps_ell;
    return report;
}

}  // namespace dynlab
