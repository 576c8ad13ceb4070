#pragma once

#include <functional>
#include <utility>

#include "dynlab/grid.hpp"

namespace dynlab {

/// Scalar diffusion dX = mu(X) dt + sigma(X) dW on an interval, with the
/// scale/speed densities
///   s'(x) = exp(-I(x)),  m'(x) = (2/sigma^2) exp(I(x)),
///   I(x)  = integral from `origin` to x of 2 mu / sigma^2.
struct OneDimModel {
    std::function<double(double)> mu;
    std::function<double(double)> sigma;
    std::function<double(double)> sigma_prime;
    double alpha = 1.0;
    double x_min = -1.0;
    double x_max = 1.0;
    double origin = 0.0;  // base point of the density integrals

    void validate() const;
};

struct ScaleSpeed {
    double s_dot;
    double m_dot;
};

/// Scale and speed densities at x; the exponent integral is evaluated by
/// adaptive Simpson quadrature to `tol_q`.
ScaleSpeed scale_speed(const OneDimModel& model, double x,
                       double tol_q = 1e-10);

/// max over `points` of |2 mu(x) - sigma(x) sigma'(x)|: zero exactly when
/// the drift/volatility compatibility condition holds.
double compatibility_residual(const OneDimModel& model,
                              std::span<const double> points);

/// gamma(x) = sigma sigma' - mu, the drift of the process actually
/// associated with the energy form below.
double corrected_drift(const OneDimModel& model, double x);

enum class GeneratorChoice { kL, kLGamma };

/// |E(u,v) - (-G u, v)| with
///   E(u,v) = integral u' v' / m' dx          (trapezoid, central u', v')
///   (-G u, v) = integral (-G u) v s' dx      (the form's base measure),
/// G = mu u' + sigma^2/2 u'' or its gamma-drift correction. u and v must
/// satisfy the reflecting condition u'(edges) = 0; violation beyond
/// `tol_bc` (measured by a one-sided second-order estimate) throws.
double dirichlet_pairing_residual(const OneDimModel& model, const GridField& u,
                                  const GridField& v, GeneratorChoice choice,
                                  double tol_bc = 1e-2);

/// Scale-weighted integral transforms
///   h(x) = integral from origin of H s' dy + c0,
///   W(x) = integral from a of V s' dy + (-f1_prime_at_a / m'(a) + h(a)) / alpha.
std::pair<GridField, GridField> build_hw_1d(const OneDimModel& model,
                                            const GridField& v,
                                            const GridField& source, double a,
                                            double f1_prime_at_a = 0.0,
                                            double c0 = 0.0);

}  // namespace dynlab
