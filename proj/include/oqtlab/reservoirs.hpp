// reservoirs.hpp — thermal occupation, glued-axis form factors, Araki-Wyss
// coupling amplitudes, and principal-value quadrature on the energy grid.
#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "oqtlab/core.hpp"

namespace oqtlab::reservoirs {

// rho_{beta,nu}(u) = (1 + e^{beta(u-nu)})^-1, underflow-safe at both ends.
inline double fermi_dirac(double beta, double nu, double u) {
    require(beta > 0 && std::isfinite(beta), "fermi_dirac: beta must be positive and finite");
    require(std::isfinite(nu) && std::isfinite(u), "fermi_dirac: non-finite input");
    const double x = beta * (u - nu);
    if (x > 0) {
        const double e = std::exp(-x);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(x));
}

namespace detail {

// Analytic branches of sqrt(rho) and sqrt(1-rho) on the strip |Im beta(z-nu)| < pi.
inline cplx sqrt_occ(double beta, double nu, cplx z) {
    const cplx x = beta * (z - nu);
    if (x.real() > 0)
        return std::exp(-0.5 * x) / std::sqrt(1.0 + std::exp(-x));
    return 1.0 / std::sqrt(1.0 + std::exp(x));
}

inline cplx sqrt_one_minus_occ(double beta, double nu, cplx z) {
    return sqrt_occ(beta, nu, 2.0 * nu - z); // 1-rho(u) = rho(2nu-u)
}

} // namespace detail

// An analytic function given as a pair of branches: `pos` continues the
// physical form factor from Re u > 0, `neg` continues the reflected-conjugate
// branch from Re u < 0. Deformed evaluations continue each branch analytically;
// a complex argument is never conjugated pointwise.
struct BranchFn {
    std::function<cplx(cplx)> pos, neg;

    cplx operator()(cplx z) const { return z.real() >= 0 ? pos(z) : neg(z); }

    // Schwarz reflection z -> conj(f(conj z)) of each branch; this is the
    // analytic continuation of u -> conj(f(u)) and is what annihilators smear.
    BranchFn schwarz() const {
        auto p = pos, n = neg;
        return {[p](cplx z) { return std::conj(p(std::conj(z))); },
                [n](cplx z) { return std::conj(n(std::conj(z))); }};
    }
};

// Physical form factor: analytic profile on Re u >= 0 plus a user-declared
// analyticity half-width for the deformation contour (C_n.1/C_n.3 cannot be
// verified numerically; we only require finite evaluations on the contour).
struct FormFactor {
    std::string name;
    std::function<cplx(cplx)> profile;       // f(u) on the physical branch
    std::function<double(double)> envelope;  // scalar time dependence, default 1
    double delta_analyticity = 1.0;

    cplx eval(cplx u, double t = 0.0) const {
        double env = envelope ? envelope(t) : 1.0;
        return env * profile(u);
    }
};

// Named built-ins from the config surface.
//   gaussian-decay:  c * u * exp(-(u/sigma)^2)
//   paper-example:   c * u^{1/2} * exp(-u^2)   (|k|^{1/2} e^{-|k|^4} in glued variables)
//   poly-exp:        c * u^p * exp(-(u/sigma)^2)
inline FormFactor make_form_factor(const std::string& name, double c = 1.0, double sigma = 1.0,
                                   int p = 1, double delta = 1.0) {
    FormFactor ff;
    ff.name = name;
    ff.delta_analyticity = delta;
    if (name == "gaussian-decay") {
        ff.profile = [c, sigma](cplx u) { return c * u * std::exp(-(u / sigma) * (u / sigma)); };
    } else if (name == "paper-example") {
        ff.profile = [c](cplx u) { return c * std::sqrt(u) * std::exp(-u * u); };
    } else if (name == "poly-exp") {
        ff.profile = [c, sigma, p](cplx u) {
            cplx m = c * std::exp(-(u / sigma) * (u / sigma));
            for (int k = 0; k < p; ++k) m *= u;
            return m;
        };
    } else {
        throw lab_error("unknown form factor '" + name +
                        "' (expected gaussian-decay, paper-example, poly-exp)");
    }
    return ff;
}

// One heat bath: inverse temperature, chemical potential, analytic form factor.
struct ReservoirSpec {
    double beta = 1.0;
    double nu = 0.0;
    FormFactor form_factor;
    std::string label;

    void validate() const {
        require(beta > 0 && std::isfinite(beta), "ReservoirSpec '" + label + "': beta must be > 0 and finite");
        require(std::isfinite(nu), "ReservoirSpec '" + label + "': nu must be finite");
        require(static_cast<bool>(form_factor.profile), "ReservoirSpec '" + label + "': missing form factor");
        require(form_factor.delta_analyticity > 0, "ReservoirSpec '" + label + "': delta_analyticity must be > 0");
    }
};

// Signed-energy midpoint grid, symmetric about 0 with uniform weights.
// u = 0 is never a node, so the glued-space seam is never sampled and the
// pairing u <-> -u is exact (mirror index M-1-k).
struct EnergyGrid {
    std::vector<double> points;
    std::vector<double> weights;
    double half_range = 0.0;
    int count = 0;

    int mirror(int k) const { return count - 1 - k; }
    double spacing() const { return 2.0 * half_range / count; }

    void validate() const {
        require(count >= 2 && count % 2 == 0, "EnergyGrid: count must be even and >= 2");
        require(int(points.size()) == count && int(weights.size()) == count, "EnergyGrid: size mismatch");
        double sw = 0;
        for (int k = 0; k < count; ++k) {
            require(weights[k] > 0, "EnergyGrid: weights must be positive");
            require(points[k] != 0.0, "EnergyGrid: 0 must not be a grid point");
            if (k) require(points[k] > points[k - 1], "EnergyGrid: points must increase");
            require(std::abs(points[k] + points[mirror(k)]) < 1e-12 * half_range,
                    "EnergyGrid: grid not symmetric about 0");
            sw += weights[k];
        }
        require(std::abs(sw - 2.0 * half_range) < 1e-9 * half_range, "EnergyGrid: weights must sum to 2*U_max");
    }
};

inline EnergyGrid make_glued_grid(double u_max, int m) {
    require(u_max > 0, "make_glued_grid: U_max must be > 0");
    require(m >= 2 && m % 2 == 0, "make_glued_grid: M must be even and >= 2");
    EnergyGrid g;
    g.half_range = u_max;
    g.count = m;
    const double h = 2.0 * u_max / m;
    for (int k = 0; k < m; ++k) {
        g.points.push_back(-u_max + (k + 0.5) * h);
        g.weights.push_back(h);
    }
    g.validate();
    return g;
}

// Positive-axis midpoint grid for the Hamiltonian engine (physical energies).
inline EnergyGrid make_physical_grid(double u_max, int m) {
    require(u_max > 0 && m >= 1, "make_physical_grid: bad parameters");
    EnergyGrid g;
    g.half_range = u_max / 2.0; // sum of weights = u_max
    g.count = m;
    const double h = u_max / m;
    for (int k = 0; k < m; ++k) {
        g.points.push_back((k + 0.5) * h);
        g.weights.push_back(h);
    }
    return g; // not symmetric; validate() is for glued grids only
}

namespace detail {

inline void check_strip(const ReservoirSpec& spec, cplx theta) {
    require(std::abs(theta.imag()) < spec.form_factor.delta_analyticity,
            "deformation outside declared analyticity strip of form factor '" + spec.form_factor.name +
            "' (|Im theta| >= delta_analyticity, C_n.1)");
}

// Branch pair of the glued profile f~:  f on Re u >= 0, Schwarz(f)(-u) on Re u < 0.
inline BranchFn glued_profile(const ReservoirSpec& spec, double t) {
    const FormFactor ff = spec.form_factor;
    return {[ff, t](cplx z) { return ff.eval(z, t); },
            [ff, t](cplx z) { return std::conj(ff.eval(std::conj(-z), t)); }};
}

// f_beta: sqrt(1-rho) f on the positive branch, sqrt(rho(-u)) conj(f(-u)) on the negative.
inline BranchFn f_beta(const ReservoirSpec& spec, double t) {
    const double beta = spec.beta, nu = spec.nu;
    BranchFn ft = glued_profile(spec, t);
    auto pos = ft.pos, neg = ft.neg;
    return {[beta, nu, pos](cplx z) { return sqrt_one_minus_occ(beta, nu, z) * pos(z); },
            [beta, nu, neg](cplx z) { return sqrt_occ(beta, nu, -z) * neg(z); }};
}

// f_beta^#(u) = i * conj(f_beta(-u)) continued analytically.
inline BranchFn f_beta_sharp(const ReservoirSpec& spec, double t) {
    const double beta = spec.beta, nu = spec.nu;
    BranchFn ft = glued_profile(spec, t);
    auto pos = ft.pos, neg = ft.neg;
    return {[beta, nu, pos](cplx z) { return ii * sqrt_occ(beta, nu, z) * pos(z); },
            [beta, nu, neg](cplx z) { return ii * sqrt_one_minus_occ(beta, nu, -z) * neg(z); }};
}

} // namespace detail

// Glued extension of the physical form factor, per-branch analytic.
inline cplx glue_form_factor(const ReservoirSpec& spec, cplx u, double t = 0.0) {
    spec.validate();
    require(std::abs(u.imag()) < spec.form_factor.delta_analyticity,
            "glue_form_factor: |Im u| outside declared analyticity strip (C_n.1)");
    cplx v = detail::glued_profile(spec, t)(u);
    require(is_finite(v), "glue_form_factor: form factor evaluated to a non-finite value");
    return v;
}

// Per glued mode k: energy u_k, amp = f_beta(u_k + theta) sqrt(w_k),
// amp_sharp = f_beta^#(u_k + theta) sqrt(w_k). The quadrature weight is folded
// as sqrt(w) so that discrete mode couplings reproduce continuum inner
// products: ||f||^2 = sum |amp|^2 exactly on the grid.
struct GluedAmplitudes {
    std::vector<double> u;
    std::vector<cplx> amp, amp_sharp;
    int count() const { return int(u.size()); }
};

inline GluedAmplitudes araki_wyss_amplitudes(const ReservoirSpec& spec, const EnergyGrid& grid,
                                             double t = 0.0, cplx theta = 0.0) {
    spec.validate();
    grid.validate();
    detail::check_strip(spec, theta);
    BranchFn fb = detail::f_beta(spec, t);
    BranchFn fs = detail::f_beta_sharp(spec, t);
    GluedAmplitudes out;
    out.u = grid.points;
    out.amp.resize(grid.count);
    out.amp_sharp.resize(grid.count);
    for (int k = 0; k < grid.count; ++k) {
        const double sw = std::sqrt(grid.weights[k]);
        const cplx z = grid.points[k] + theta; // branch follows the node's sign
        out.amp[k] = (grid.points[k] >= 0 ? fb.pos(z) : fb.neg(z)) * sw;
        out.amp_sharp[k] = (grid.points[k] >= 0 ? fs.pos(z) : fs.neg(z)) * sw;
        require(is_finite(out.amp[k]) && is_finite(out.amp_sharp[k]),
                "araki_wyss_amplitudes: non-finite amplitude on the deformation contour");
    }
    return out;
}

// PV int f(u)/(pole - u) du over the grid's range.
//
// Singular-cell treatment: the odd part of the singularity is cancelled by
// subtracting f(pole) — the midpoint sum of (f(u) - f(pole))/(pole - u) is
// regular (it tends to -f'(pole) at the pole) — and the subtracted term is
// restored with the exact antiderivative f(pole) * ln((pole-a)/(b-pole)).
inline double principal_value_integral(const std::vector<double>& f, const EnergyGrid& grid,
                                       double pole) {
    require(int(f.size()) == grid.count, "principal_value_integral: sample count mismatch");
    const double a = grid.points.front() - 0.5 * grid.spacing();
    const double b = grid.points.back() + 0.5 * grid.spacing();
    require(pole > a + grid.spacing() && pole < b - grid.spacing(),
            "principal_value_integral: pole on or outside grid boundary");
    // f(pole) and f'(pole) by local cubic interpolation around the pole.
    int j = 0;
    while (j + 1 < grid.count && grid.points[j + 1] < pole) ++j;
    const int i0 = std::min(std::max(j - 1, 0), grid.count - 4);
    double fp = 0, dfp = 0;
    for (int i = i0; i < i0 + 4; ++i) {
        double lag = 1.0, dlag = 0.0;
        for (int k = i0; k < i0 + 4; ++k) {
            if (k == i) continue;
            const double r = (pole - grid.points[k]) / (grid.points[i] - grid.points[k]);
            dlag = dlag * r + lag / (grid.points[i] - grid.points[k]);
            lag *= r;
        }
        fp += f[i] * lag;
        dfp += f[i] * dlag;
    }
    double acc = 0;
    for (int k = 0; k < grid.count; ++k) {
        const double d = pole - grid.points[k];
        if (std::abs(d) < 1e-12 * grid.spacing())
            acc += grid.weights[k] * (-dfp); // limit of (f(u)-f(pole))/(pole-u)
        else
            acc += grid.weights[k] * (f[k] - fp) / d;
    }
    return acc + fp * std::log((pole - a) / (b - pole));
}

inline double principal_value_integral(const std::function<double(double)>& f, double a, double b,
                                       int n, double pole) {
    require(b > a && n >= 8, "principal_value_integral: bad range");
    EnergyGrid g;
    g.count = n;
    g.half_range = (b - a) / 2.0;
    const double h = (b - a) / n;
    std::vector<double> y(n);
    for (int k = 0; k < n; ++k) {
        g.points.push_back(a + (k + 0.5) * h);
        g.weights.push_back(h);
        y[k] = f(g.points[k]);
    }
    return principal_value_integral(y, g, pole);
}

} // namespace oqtlab::reservoirs
