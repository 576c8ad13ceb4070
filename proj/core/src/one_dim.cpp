#include "dynlab/one_dim.hpp"

#include <cmath>

#include "dynlab/errors.hpp"

namespace dynlab {

void OneDimModel::validate() const {
    if (!(x_min < x_max)) throw ConfigError("one_dim: x_min must be < x_max");
    if (!(alpha > 0.0)) throw ConfigError("one_dim: alpha must be > 0");
}

namespace {

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
    if (depth <= 0) {
        throw NumericError("quadrature: adaptive Simpson did not converge");
    }
    if (std::abs(left + right - whole) <= 15.0 * tol) {
        return left + right + (left + right - whole) / 15.0;
    }
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb_, right, 0.5 * tol, depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double tol) {
    if (a == b) return 0.0;
    const double fa = f(a);
    const double fb_ = f(b);
    const double fm = f(0.5 * (a + b));
    if (!std::isfinite(fa) || !std::isfinite(fb_) || !std::isfinite(fm)) {
        throw NumericError("quadrature: non-finite integrand");
    }
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb_);
    return simpson_rec(f, a, b, fa, fm, fb_, whole, tol, 48);
}

double exponent_integral(const OneDimModel& model, double x, double tol_q) {
    auto f = [&](double y) {
        const double s = model.sigma(y);
        return 2.0 * model.mu(y) / (s * s);
    };
    return adaptive_simpson(f, model.origin, x, tol_q);
}

}  // namespace

ScaleSpeed scale_speed(const OneDimModel& model, double x, double tol_q) {
    const double s = model.sigma(x);
    if (!(s > 0.0)) {
        throw NumericError("scale_speed: sigma must be positive on the interval");
    }
    const double expo = exponent_integral(model, x, tol_q);
    return {std::exp(-expo), 2.0 / (s * s) * std::exp(expo)};
}

double compatibility_residual(const OneDimModel& model,
                              std::span<const double> points) {
    double worst = 0.0;
    for (double x : points) {
        worst = std::max(worst, std::abs(2.0 * model.mu(x) -
                                         model.sigma(x) * model.sigma_prime(x)));
    }
    return worst;
}

double corrected_drift(const OneDimModel& model, double x) {
    return model.sigma(x) * model.sigma_prime(x) - model.mu(x);
}

double dirichlet_pairing_residual(const OneDimModel& model, const GridField& u,
                                  const GridField& v, GeneratorChoice choice,
                                  double tol_bc) {
    if (u.grid != v.grid) {
        throw ConfigError("dirichlet_pairing_residual: grid mismatch");
    }
    const GridSpec& g = u.grid;
    if (g.dim() != 1) {
        throw ConfigError("dirichlet_pairing_residual: needs a 1-D grid");
    }
    const int m = g.counts[0];
    const double h = g.spacing(0);
    const std::vector<double>& uu = u.values;
    const std::vector<double>& vv = v.values;

    // reflecting condition at both edges, second-order one-sided estimate
    for (const std::vector<double>* f : {&uu, &vv}) {
        const double dl =
            (-3.0 * (*f)[0] + 4.0 * (*f)[1] - (*f)[2]) / (2.0 * h);
        const double dr = (3.0 * (*f)[m - 1] - 4.0 * (*f)[m - 2] +
                           (*f)[m - 3]) / (2.0 * h);
        if (std::abs(dl) > tol_bc || std::abs(dr) > tol_bc) {
            throw NumericError(
                "dirichlet_pairing_residual: reflecting condition u'(edge)=0 "
                "violated beyond tolerance");
        }
    }

    std::vector<double> s_dot(m), m_dot(m);
    for (int i = 0; i < m; ++i) {
        ScaleSpeed sm = scale_speed(model, g.coord(0, i));
        s_dot[i] = sm.s_dot;
        m_dot[i] = sm.m_dot;
    }

    // E(u,v) = trapezoid of u' v' / m', derivatives central (0 at the edges)
    auto deriv = [&](const std::vector<double>& f, int i) {
        if (i == 0 || i == m - 1) return 0.0;
        return (f[i + 1] - f[i - 1]) / (2.0 * h);
    };
    double energy = 0.0;
    for (int i = 0; i < m; ++i) {
        const double w = (i == 0 || i == m - 1) ? 0.5 * h : h;
        energy += w * deriv(uu, i) * deriv(vv, i) / m_dot[i];
    }

    // (-G u, v) over the scale measure s' dx; mirror ghost at the edges
    double pairing = 0.0;
    for (int i = 0; i < m; ++i) {
        const double x = g.coord(0, i);
        const double sig = model.sigma(x);
        const double drift = choice == GeneratorChoice::kL
                                 ? model.mu(x)
                                 : corrected_drift(model, x);
        double du, d2u;
        if (i == 0) {
            du = 0.0;
            d2u = 2.0 * (uu[1] - uu[0]) / (h * h);
        } else if (i == m - 1) {
            du = 0.0;
            d2u = 2.0 * (uu[m - 2] - uu[m - 1]) / (h * h);
        } else {
            du = (uu[i + 1] - uu[i - 1]) / (2.0 * h);
            d2u = (uu[i + 1] - 2.0 * uu[i] + uu[i - 1]) / (h * h);
        }
        const double gu = drift * du + 0.5 * sig * sig * d2u;
        const double w = (i == 0 || i == m - 1) ? 0.5 * h : h;
        pairing += w * (-gu) * vv[i] * s_dot[i];
    }
    return std::abs(energy - pairing);
}

std::pair<GridField, GridField> build_hw_1d(const OneDimModel& model,
                                            const GridField& v,
                                            const GridField& source, double a,
                                            double f1_prime_at_a, double c0) {
    if (v.grid != source.grid) throw ConfigError("build_hw_1d: grid mismatch");
    const GridSpec& g = v.grid;
    if (g.dim() != 1) throw ConfigError("build_hw_1d: needs a 1-D grid");
    if (a < g.lower[0] || a > g.upper[0]) {
        throw ConfigError("build_hw_1d: base point a outside the interval");
    }
    const int m = g.counts[0];
    const double h = g.spacing(0);
    const double y0 = g.lower[0];

    std::vector<double> s_dot(m);
    for (int i = 0; i < m; ++i) s_dot[i] = scale_speed(model, g.coord(0, i)).s_dot;

    // weighted integrands H s' and V s'
    std::vector<double> hw(m), vw(m);
    for (int i = 0; i < m; ++i) {
        hw[i] = source.values[i] * s_dot[i];
        vw[i] = v.values[i] * s_dot[i];
    }

    GridField hfield(g);
    cumulative_trapezoid(hw, h, y0, model.origin, hfield.values);
    for (int i = 0; i < m; ++i) hfield.values[i] += c0;

    // h and m' interpolated at the base point a
    double u = (a - y0) / h;
    int k = std::clamp(static_cast<int>(u), 0, m - 2);
    double t = std::clamp(u - k, 0.0, 1.0);
    const double h_at_a =
        hfield.values[k] + t * (hfield.values[k + 1] - hfield.values[k]);
    const double m_dot_a = scale_speed(model, a).m_dot;

    GridField wfield(g);
    cumulative_trapezoid(vw, h, y0, a, wfield.values);
    const double shift = (-f1_prime_at_a / m_dot_a + h_at_a) / model.alpha;
    for (int i = 0; i < m; ++i) wfield.values[i] += shift;

    return {std::move(hfield), std::move(wfield)};
}

}  // namespace dynlab
