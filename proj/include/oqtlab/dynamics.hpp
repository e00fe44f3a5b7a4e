// dynamics.hpp — time integration: fixed-step RK4 propagators for
// self-adjoint and contraction generators, adiabatic generators with
// finite-difference projection derivatives, tau-sweep deviation tables,
// Floquet monodromy and the Fourier-block Floquet matrix.
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseLU>

#include "oqtlab/spectra.hpp"

namespace oqtlab::dynamics {

using GeneratorFn = std::function<SpMat(double)>; // s -> generator matrix

struct Trajectory {
    std::vector<double> s;      // rescaled time grid
    double tau = 1.0;           // physical time scale (t = tau s)
    std::vector<Vec> states;
    std::vector<double> norms;
    double step = 0.0;
    double richardson_error = 0.0; // endpoint deviation of the half-step pass
};

namespace detail {

inline Vec rk4_step(const GeneratorFn& gen, double tau, double s, double h, const Vec& psi,
                    const SpMat* frozen = nullptr) {
    auto apply = [&](double ss, const Vec& v) -> Vec {
        if (frozen) return cplx(0, -tau) * (*frozen * v);
        return cplx(0, -tau) * (gen(ss) * v);
    };
    Vec k1 = apply(s, psi);
    Vec k2 = apply(s + h / 2, psi + (h / 2) * k1);
    Vec k3 = apply(s + h / 2, psi + (h / 2) * k2);
    Vec k4 = apply(s + h, psi + h * k3);
    return psi + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
}

} // namespace detail

// Solves i dpsi/ds = tau L(s) psi by classical fixed-step RK4 with the step
// chosen from the local error model C (h tau ||L||)^5 per step, plus a
// half-step Richardson verification pass on the endpoint.
inline Trajectory propagate(const GeneratorFn& gen, double tau, double s0, double s1,
                            const Vec& psi0, int steps = 0, double tol = 1e-8,
                            int sample_stride = 1, bool verify = true) {
    require(s1 > s0 && tau > 0, "propagate: bad time range");
    const SpMat l0 = gen(s0);
    // infinity-norm bound on the generator
    RVec rowsum = RVec::Zero(l0.rows());
    for (int k = 0; k < l0.outerSize(); ++k)
        for (SpMat::InnerIterator it(l0, k); it; ++it) rowsum(it.row()) += std::abs(it.value());
    const double lnorm = std::max(rowsum.maxCoeff(), 1e-12);
    if (steps <= 0) {
        // local error model C (h tau ||L||)^5 per step, C ~ 1/120:
        // global ~ X^5/(120 n^4) with X = tau ||L|| (s1 - s0)
        const double x = (s1 - s0) * tau * lnorm;
        steps = int(std::ceil(x * std::pow(std::max(x, 1e-6) / (120.0 * tol), 0.25))) + 16;
        const int cap = 40'000'000;
        require(steps < cap, "propagate: tolerance unreachable at the step cap (estimated " +
                                 std::to_string(steps) + " steps)");
    }
    const double h = (s1 - s0) / steps;

    Trajectory tr;
    tr.tau = tau;
    tr.step = h;
    Vec psi = psi0;
    tr.s.push_back(s0);
    tr.states.push_back(psi);
    tr.norms.push_back(psi.norm());
    for (int n = 0; n < steps; ++n) {
        const double s = s0 + n * h;
        psi = detail::rk4_step(gen, tau, s, h, psi);
        if ((n + 1) % sample_stride == 0 || n + 1 == steps) {
            tr.s.push_back(s + h);
            tr.states.push_back(psi);
            tr.norms.push_back(psi.norm());
        }
    }
    if (verify) {
        // one half-step pass over a short verification window at the end
        const int vsteps = std::min(steps, 64);
        const double vs0 = s1 - vsteps * h;
        Vec a = tr.states.back();
        // locate the state at vs0 (last stored sample at or before vs0)
        Vec start = psi0;
        double sstart = s0;
        for (std::size_t i = 0; i < tr.s.size(); ++i)
            if (tr.s[i] <= vs0 + 1e-12) {
                start = tr.states[i];
                sstart = tr.s[i];
            }
        Vec fine = start;
        const int half_steps = int(std::lround((s1 - sstart) / (h / 2)));
        for (int n = 0; n < half_steps; ++n)
            fine = detail::rk4_step(gen, tau, sstart + n * h / 2, h / 2, fine);
        tr.richardson_error = (fine - a).norm();
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Adiabatic machinery
// ---------------------------------------------------------------------------

struct ProjectionFamily {
    std::vector<double> s;
    std::vector<Mat> p;        // P(s) on the sample grid
    std::vector<Mat> commut;   // [Pdot, P](s) by central differences

    Mat interpolate(const std::vector<Mat>& tab, double ss) const {
        // cubic Lagrange on the uniform s-grid
        const int n = int(s.size());
        require(n >= 4, "ProjectionFamily: need >= 4 samples");
        const double h = s[1] - s[0];
        int j = int(std::floor((ss - s[0]) / h));
        j = std::min(std::max(j - 1, 0), n - 4);
        Mat out = Mat::Zero(tab[0].rows(), tab[0].cols());
        for (int i = j; i < j + 4; ++i) {
            double lag = 1.0;
            for (int k = j; k < j + 4; ++k)
                if (k != i) lag *= (ss - s[k]) / (s[i] - s[k]);
            out += lag * tab[i];
        }
        return out;
    }
    Mat p_at(double ss) const { return interpolate(p, ss); }
    Mat commut_at(double ss) const { return interpolate(commut, ss); }
};

// Track an isolated eigenvalue's Riesz projection over s in [s0, s1]. The
// contour follows the eigenvalue (recentered at each sample); a rank change
// raises an error naming the crossing point.
inline ProjectionFamily projection_family(const GeneratorFn& gen, double s0, double s1, int samples,
                                          cplx center0, double radius, int nodes = 64,
                                          double h_fd = 1e-3) {
    require(samples >= 8, "projection_family: need >= 8 samples");
    ProjectionFamily fam;
    cplx center = center0;
    std::vector<Mat> pmid;
    const double hs = (s1 - s0) / (samples - 1);
    int rank0 = -1;
    for (int i = 0; i < samples; ++i) {
        const double s = s0 + i * hs;
        auto track = [&](double ss, cplx c) {
            auto pr = spectra::contour_projection(Mat(gen(ss)), c, radius, nodes);
            return pr;
        };
        auto pr = track(s, center);
        if (rank0 < 0) rank0 = pr.enclosed;
        if (pr.enclosed != rank0)
            throw lab_error("projection_family: projection rank changed at s = " +
                            std::to_string(s) + " (eigenvalue crossing)");
        // recenter on the weighted eigenvalue mean: trace(A P)/trace(P)
        Mat ap = Mat(gen(s)) * pr.p;
        center = ap.trace() / cplx(double(pr.enclosed));
        fam.s.push_back(s);
        fam.p.push_back(pr.p);
        // Richardson-improved central difference of the projection at this s
        // (h and h/2 steps); one-sided fallback at the interval ends
        auto central = [&](double h) {
            auto prp = track(std::min(s + h, s1), center);
            auto prm = track(std::max(s - h, s0), center);
            const double denom = std::min(s + h, s1) - std::max(s - h, s0);
            return Mat((prp.p - prm.p) / denom);
        };
        Mat d1 = central(h_fd), d2 = central(h_fd / 2);
        Mat pdot = (4.0 * d2 - d1) / 3.0;
        fam.commut.push_back(pdot * pr.p - pr.p * pdot);
    }
    return fam;
}

// L_a(s) = L(s) + (i/tau)[Pdot(s), P(s)] as a dense-generator function.
inline GeneratorFn adiabatic_generator(const GeneratorFn& gen, const ProjectionFamily& fam,
                                       double tau) {
    return [gen, &fam, tau](double s) -> SpMat {
        Mat l = Mat(gen(s)) + (ii / tau) * fam.commut_at(s);
        return l.sparseView(1e-300, 1.0);
    };
}

struct DeviationRow {
    double tau;
    double sup_deviation;    // sup_s min-phase distance between true and adiabatic states
    double intertwine_defect;
};

struct DeviationTable {
    std::vector<DeviationRow> rows;
    double slope = 0; // log-log fitted slope of deviation vs tau
};

// sup_s || U_tau(s,0) psi0 - U_a(s,0) psi0 || over a tau sweep, with the
// phase-aligned distance (the theorems control rays, not phases).
inline DeviationTable adiabatic_deviation(const GeneratorFn& gen, const ProjectionFamily& fam,
                                          const Vec& psi0, const std::vector<double>& taus,
                                          int steps_per_unit_tau = 12, int checkpoints = 16) {
    DeviationTable out;
    for (double tau : taus) {
        const double s0 = fam.s.front(), s1 = fam.s.back();
        int steps = std::max(800, int(steps_per_unit_tau * tau * 8));
        GeneratorFn ga = adiabatic_generator(gen, fam, tau);
        const int stride = std::max(1, steps / checkpoints);
        auto tr = propagate(gen, tau, s0, s1, psi0, steps, 1e-8, stride, false);
        auto ta = propagate(ga, tau, s0, s1, psi0, steps, 1e-8, stride, false);
        double dev = 0;
        for (std::size_t i = 0; i < tr.states.size(); ++i) {
            const Vec &a = tr.states[i], &b = ta.states[i];
            const double na = a.norm(), nb = b.norm();
            // min over a global phase of ||a/|a| - e^{i phi} b/|b|||
            const double ov = std::abs(a.dot(b)) / (na * nb);
            dev = std::max(dev, std::sqrt(std::max(0.0, 2.0 - 2.0 * ov)));
        }
        // intertwining defect ||P(s) U_a - U_a P(0)|| on the checkpoints
        double idef = 0;
        for (std::size_t i = 0; i < ta.states.size(); ++i) {
            Mat ps = fam.p_at(ta.s[i]);
            Vec lhs = ps * ta.states[i];
            // U_a P(0) psi0 requires propagating P(0) psi0; with psi0 in Ran P(0)
            // this is U_a psi0 itself
            Vec rhs = ta.states[i];
            idef = std::max(idef, (lhs - rhs).norm() / std::max(1e-30, rhs.norm()));
        }
        out.rows.push_back({tau, dev, idef});
    }
    std::vector<double> lx, ly;
    for (auto& r : out.rows)
        if (r.sup_deviation > 1e-14) {
            lx.push_back(std::log(r.tau));
            ly.push_back(std::log(r.sup_deviation));
        }
    if (lx.size() >= 2) out.slope = fit_slope(lx, ly);
    return out;
}

// ---------------------------------------------------------------------------
// Floquet: monodromy and Fourier-block matrix
// ---------------------------------------------------------------------------

struct MonodromyResult {
    Mat period_map;            // U(tau*, 0)
    Vec multipliers;           // eigenvalues of the period map
    Vec exponents;             // (i/tau*) Log multipliers, principal branch
    double omega = 0;
};

inline MonodromyResult monodromy(const GeneratorFn& gen, double tau_star, int steps = 0,
                                 double period_tol = 1e-10) {
    require(tau_star > 0, "monodromy: period must be positive");
    // verify the declared period by sampling
    for (double t : {0.13 * tau_star, 0.61 * tau_star}) {
        SpMat d = gen(t) - gen(t + tau_star);
        double dn = 0;
        for (int k = 0; k < d.outerSize(); ++k)
            for (SpMat::InnerIterator it(d, k); it; ++it) dn = std::max(dn, std::abs(it.value()));
        require(dn < period_tol, "monodromy: generator period mismatch beyond tolerance");
    }
    const int n = int(gen(0.0).rows());
    if (steps <= 0) steps = std::max(2000, 200 * int(tau_star) + 400);
    const double h = tau_star / steps;
    Mat u = Mat::Identity(n, n);
    for (int k = 0; k < steps; ++k) {
        const double t = k * h;
        // RK4 on the matrix ODE dU/dt = -i L(t) U
        Mat k1 = -ii * (Mat(gen(t)) * u);
        Mat k2 = -ii * (Mat(gen(t + h / 2)) * (u + (h / 2) * k1));
        Mat k3 = -ii * (Mat(gen(t + h / 2)) * (u + (h / 2) * k2));
        Mat k4 = -ii * (Mat(gen(t + h)) * (u + h * k3));
        u += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    MonodromyResult out;
    out.period_map = u;
    out.omega = 2 * pi / tau_star;
    auto es = spectra::eigendecompose(u, false, 1e-6);
    out.multipliers = es.eigenvalues;
    out.exponents.resize(n);
    for (int j = 0; j < n; ++j) {
        // multiplier = e^{-i lambda tau*}; principal branch for lambda
        out.exponents(j) = ii * std::log(out.multipliers(j)) / tau_star;
    }
    return out;
}

struct FloquetMatrix {
    int n_fourier = 0;
    double omega = 0;
    Mat block;                  // ((2 N_F + 1) dim) square
    int dim = 0;
    double coeff_decay = 0;     // max generator Fourier coefficient norm beyond N_F
};

// K = -i d/dt + L(t) Fourier-discretized: block (m, n) = delta_{mn} (m omega)
// + L_{m-n}, with L_k the generator's Fourier coefficients.
inline FloquetMatrix build_floquet_matrix(const GeneratorFn& gen, double tau_star, int n_fourier,
                                          int time_samples = 0, double decay_tol = 1e-10) {
    require(n_fourier >= 1, "build_floquet_matrix: N_F >= 1 required");
    const double omega = 2 * pi / tau_star;
    const int n = int(gen(0.0).rows());
    if (time_samples <= 0) time_samples = std::max(8 * n_fourier + 40, 64);
    // Fourier coefficients by the composite trapezoid (exact for trig polynomials),
    // including a tail window beyond N_F for the decay validation
    const int kmax = n_fourier + 3;
    std::vector<Mat> coeff(2 * kmax + 1, Mat::Zero(n, n));
    for (int ts = 0; ts < time_samples; ++ts) {
        const double t = tau_star * ts / time_samples;
        Mat l = Mat(gen(t));
        for (int k = -kmax; k <= kmax; ++k)
            coeff[k + kmax] += l * std::exp(-ii * double(k) * omega * t) / double(time_samples);
    }
    double decay = 0;
    for (int k = n_fourier + 1; k <= kmax; ++k)
        decay = std::max({decay, sup_abs(coeff[k + kmax]), sup_abs(coeff[-k + kmax])});
    FloquetMatrix out;
    out.n_fourier = n_fourier;
    out.omega = omega;
    out.dim = n;
    out.coeff_decay = decay;
    require(decay < decay_tol * std::max(1.0, sup_abs(coeff[kmax])),
            "build_floquet_matrix: generator Fourier coefficients do not decay below tolerance "
            "by index N_F (insufficient N_F; max tail norm " + std::to_string(decay) + ")");
    const int nb = 2 * n_fourier + 1;
    out.block = Mat::Zero(nb * n, nb * n);
    for (int mb = -n_fourier; mb <= n_fourier; ++mb)
        for (int nb2 = -n_fourier; nb2 <= n_fourier; ++nb2) {
            const int k = mb - nb2;
            Mat blk = (std::abs(k) <= kmax) ? coeff[k + kmax] : Mat::Zero(n, n);
            if (mb == nb2) blk += (mb * omega) * Mat::Identity(n, n);
            out.block.block((mb + n_fourier) * n, (nb2 + n_fourier) * n, n, n) = blk;
        }
    return out;
}

// Reconstruct the time-periodic vector phi(t) = sum_n phi_n e^{i n omega t}
// from a Floquet-block eigenvector.
inline Vec floquet_state_at(const FloquetMatrix& fm, const Vec& block_vec, double t) {
    Vec out = Vec::Zero(fm.dim);
    for (int nb = -fm.n_fourier; nb <= fm.n_fourier; ++nb)
        out += block_vec.segment((nb + fm.n_fourier) * fm.dim, fm.dim) *
               std::exp(ii * double(nb) * fm.omega * t);
    return out;
}

// Eigenvalue of the Floquet block nearest `target`, by shifted inverse iteration.
inline std::pair<cplx, Vec> floquet_eigen_near(const FloquetMatrix& fm, cplx target,
                                               int iters = 80, double tol = 1e-11) {
    SpMat a = fm.block.sparseView(1e-14, 1.0);
    const cplx shift = target + cplx(1e-9, 1e-9);
    for (int i = 0; i < a.rows(); ++i) a.coeffRef(i, i) -= shift;
    a.makeCompressed();
    Eigen::SparseLU<SpMat> lu(a);
    require(lu.info() == Eigen::Success, "floquet_eigen_near: factorization failed");
    Vec v = Vec::Ones(a.rows()).normalized();
    cplx mu = target;
    for (int it = 0; it < iters; ++it) {
        Vec w = lu.solve(v);
        w.normalize();
        mu = w.dot(fm.block * w);
        if ((fm.block * w - mu * w).norm() < tol * (1 + std::abs(mu))) return {mu, w};
        v = w;
    }
    return {mu, v};
}

} // namespace oqtlab::dynamics
