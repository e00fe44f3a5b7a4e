#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "oqtlab/dynamics.hpp"

using namespace oqtlab;
using namespace oqtlab::dynamics;
using models::LiouVariant;
using models::Schedule;
using reservoirs::make_form_factor;
using reservoirs::make_glued_grid;

namespace {

models::CnSpec dyn_spec(int n_res, int modes, double beta1, double beta2, int n_max = 2) {
    models::CnSpec spec;
    spec.system = models::make_two_level();
    for (int r = 0; r < n_res; ++r) {
        reservoirs::ReservoirSpec rs;
        rs.beta = r == 0 ? beta1 : beta2;
        rs.nu = 0.0;
        const double raw = std::norm(2.0 * std::exp(-4.0 / 2.25));
        rs.form_factor = make_form_factor("gaussian-decay", std::sqrt(1.0 / raw), 1.5);
        rs.form_factor.delta_analyticity = 20.0;
        rs.label = "R" + std::to_string(r);
        spec.reservoirs.push_back(rs);
        spec.grids.push_back(make_glued_grid(4.0, modes));
    }
    spec.n_max = n_max;
    return spec;
}

} // namespace

TEST_CASE("propagate: constant Hermitian generator matches the exponential oracle") {
    Rng rng(3);
    const int n = 24;
    Mat h = rng.random_hermitian(n);
    SpMat hs = h.sparseView(1e-300, 1.0);
    GeneratorFn gen = [&](double) { return hs; };
    Vec psi0 = rng.random_vector(n).normalized();
    const double tau = 3.0;
    auto tr = propagate(gen, tau, 0.0, 1.0, psi0, 0, 1e-9);
    Vec oracle = expm(Mat(-ii * tau * h)) * psi0;
    CHECK((tr.states.back() - oracle).norm() < 1e-9);
    // unitarity defect < 10 * tol per unit s
    for (double nn : tr.norms) CHECK(std::abs(nn - 1.0) < 1e-8);
    CHECK(tr.richardson_error < 1e-8);

    // L = 0: identity evolution
    SpMat z(n, n);
    GeneratorFn zero = [&](double) { return z; };
    auto tz = propagate(zero, tau, 0.0, 1.0, psi0, 100);
    CHECK((tz.states.back() - psi0).norm() < 1e-14);
}

TEST_CASE("propagate: C-Liouvillean contraction keeps norms bounded") {
    auto spec = dyn_spec(2, 4, 0.8, 1.6);
    auto m = models::build_liouvillean_model(spec, 0.4, 0.0, LiouVariant::CAdjoint, 0);
    SpMat l = m.matrix(0.0);
    // evolve with the adjoint of the C-Liouvillean acting on vectors <psi|:
    // the C-Liouvillean generates a contraction on the A Omega Banach space;
    // numerically we check no norm blow-up of the semigroup on the sector
    GeneratorFn gen = [&](double) { return l; };
    Rng rng(9);
    Vec psi0 = rng.random_vector(l.rows()).normalized();
    auto tr = propagate(gen, 5.0, 0.0, 1.0, psi0, 4000, 1e-8, 200);
    // growth bounded by e^{mu tau s} with mu = max eig of the Hermitian part of -iL
    Mat a = -ii * Mat(l);
    Eigen::SelfAdjointEigenSolver<Mat> eh(0.5 * (a + Mat(a.adjoint())));
    const double mu = std::max(0.0, eh.eigenvalues().maxCoeff());
    for (std::size_t i = 0; i < tr.norms.size(); ++i)
        CHECK(tr.norms[i] <= 1.01 * std::exp(mu * 5.0 * tr.s[i]));
    // Omega itself is invariant under the adjoint dynamics: L* Omega-dual ...
    // the C-Liouvillean annihilates Omega, so e^{-i t L_C} Omega = Omega:
    GeneratorFn genc = [&](double) { return SpMat(l.adjoint()); };
    auto trc = propagate(genc, 5.0, 0.0, 1.0, m.omega, 2000);
    CHECK((trc.states.back() - m.omega).norm() < 1e-9);
}

TEST_CASE("adiabatic generator: s-independent family gives L_a = L and zero deviation") {
    auto spec = dyn_spec(1, 4, 1.2, 1.2);
    auto m = models::build_liouvillean_model(spec, 0.3, 0.0, LiouVariant::Standard, 0);
    SpMat l = m.matrix(0.0);
    GeneratorFn gen = [&](double) { return l; };
    auto fam = projection_family(gen, 0.0, 1.0, 9, 0.0, 0.25, 48);
    for (auto& c : fam.commut) CHECK(sup_abs(c) < 1e-7);
    auto ga = adiabatic_generator(gen, fam, 7.0);
    CHECK(sup_abs(Mat(ga(0.4)) - Mat(l)) < 1e-7);

    Vec psi0 = models::instantaneous_kms_vector(m, 0.0);
    auto table = adiabatic_deviation(gen, fam, psi0, {4.0, 8.0});
    for (auto& row : table.rows) CHECK(row.sup_deviation < 1e-6);
}

TEST_CASE("adiabatic family: P Pdot P = 0 and intertwining") {
    auto spec = dyn_spec(1, 4, 1.0, 1.0);
    spec.envelopes = {Schedule{Schedule::Kind::Smoothstep, 1.0, 0.35, 0, 0}};
    const double g = 0.18;
    auto m = models::build_liouvillean_model(spec, g, 0.0, LiouVariant::Standard, 0);
    GeneratorFn gen = [&](double s) { return m.matrix(s); };
    auto fam = projection_family(gen, 0.0, 1.0, 17, 0.0, 0.2, 48);
    // P(s) Pdot(s) P(s) = 0 with the Richardson-improved derivative
    for (double s : {0.25, 0.5, 0.75}) {
        auto proj = [&](double ss) { return spectra::contour_projection(Mat(gen(ss)), 0.0, 0.2, 64).p; };
        auto central = [&](double h) { return Mat((proj(s + h) - proj(s - h)) / (2 * h)); };
        Mat pdot = (4.0 * central(5e-4) - central(1e-3)) / 3.0;
        Mat ps = proj(s);
        CHECK(sup_abs(ps * pdot * ps) < 1e-8);
    }
    // one-shot comparison of the finite-difference Pdot against the
    // resolvent-derivative contour formula Pdot = (1/2pi i) closed-int R Ldot R dz
    {
        const double s = 0.5, hs = 1e-4;
        Mat pdot_fd = (spectra::contour_projection(Mat(gen(s + hs)), 0.0, 0.2, 64).p -
                       spectra::contour_projection(Mat(gen(s - hs)), 0.0, 0.2, 64).p) /
                      (2 * hs);
        Mat ldot = (Mat(gen(s + hs)) - Mat(gen(s - hs))) / (2 * hs);
        Mat pdot_contour = Mat::Zero(pdot_fd.rows(), pdot_fd.cols());
        const int nodes = 64;
        Mat a = Mat(gen(s));
        for (int k = 0; k < nodes; ++k) {
            const double phi = 2 * pi * (k + 0.5) / nodes;
            const cplx z = 0.2 * std::exp(ii * phi);
            Mat r = (z * Mat::Identity(a.rows(), a.cols()) - a).partialPivLu().solve(
                Mat::Identity(a.rows(), a.cols()));
            pdot_contour += (0.2 * std::exp(ii * phi) / double(nodes)) * (r * ldot * r);
        }
        CHECK(sup_abs(pdot_fd - pdot_contour) < 1e-5 * (1 + sup_abs(pdot_contour)));
    }

    // intertwining: P(s) U_a(s,0) psi0 = U_a(s,0) P(0) psi0 for psi0 in Ran P(0)
    Vec psi0 = models::instantaneous_kms_vector(m, 0.0);
    auto table = adiabatic_deviation(gen, fam, psi0, {16.0});
    CHECK(table.rows[0].intertwine_defect < 1e-4);
}

TEST_CASE("adiabatic deviation: isothermal O(1/tau) rate on the self-adjoint family") {
    auto spec = dyn_spec(1, 6, 1.0, 1.0);
    spec.envelopes = {Schedule{Schedule::Kind::Smoothstep, 1.0, 0.5, 0, 0}};
    const double g = 0.4;
    auto m = models::build_liouvillean_model(spec, g, 0.0, LiouVariant::Standard, 0);
    GeneratorFn gen = [&](double s) { return m.matrix(s); };
    auto fam = projection_family(gen, 0.0, 1.0, 17, 0.0, 0.3, 48);
    Vec psi0 = models::instantaneous_kms_vector(m, 0.0);
    auto table = adiabatic_deviation(gen, fam, psi0, {8.0, 16.0, 32.0, 64.0, 128.0});
    INFO("slope " << table.slope);
    CHECK(std::abs(table.slope + 1.0) < 0.2);
    // deviation monotone nonincreasing in tau (5% noise allowance)
    for (std::size_t i = 1; i < table.rows.size(); ++i)
        CHECK(table.rows[i].sup_deviation < 1.05 * table.rows[i - 1].sup_deviation);
}

TEST_CASE("monodromy: time-independent generator gives exponents = eigenvalues mod omega") {
    Rng rng(21);
    const int n = 10;
    Mat h = rng.random_hermitian(n);
    SpMat hs = h.sparseView(1e-300, 1.0);
    GeneratorFn gen = [&](double) { return hs; };
    const double tau_star = 1.7;
    auto mr = monodromy(gen, tau_star, 3000);
    // all multipliers on the unit circle
    for (int j = 0; j < n; ++j) CHECK(std::abs(std::abs(mr.multipliers(j)) - 1.0) < 1e-8);
    Eigen::SelfAdjointEigenSolver<Mat> eh(h);
    for (int j = 0; j < n; ++j) {
        // some eigenvalue of h equals an exponent mod omega
        double best = 1e300;
        for (int k = 0; k < n; ++k) {
            double d = std::remainder(eh.eigenvalues()(k) - mr.exponents(j).real(), mr.omega);
            best = std::min(best, std::abs(d));
        }
        CHECK(best < 1e-7);
        CHECK(std::abs(mr.exponents(j).imag()) < 1e-8);
    }
    // period mismatch rejected
    GeneratorFn tdep = [&](double t) { return SpMat(std::cos(t) * hs); };
    CHECK_THROWS_AS(monodromy(tdep, 1.0), lab_error);
}

TEST_CASE("Floquet matrix: time-independent block ladder and monodromy agreement") {
    Rng rng(33);
    const int n = 6;
    Mat h = rng.random_hermitian(n);
    SpMat hs = h.sparseView(1e-300, 1.0);
    GeneratorFn gen = [&](double) { return hs; };
    const double tau_star = 2.2;
    auto fm = build_floquet_matrix(gen, tau_star, 3);
    auto es = spectra::eigendecompose(fm.block);
    Eigen::SelfAdjointEigenSolver<Mat> eh(h);
    // spectrum = sigma(h) + omega Z, ladder spacing verified
    for (int j = 0; j < es.eigenvalues.size(); ++j) {
        double best = 1e300;
        for (int k = 0; k < n; ++k)
            for (int nb = -3; nb <= 3; ++nb)
                best = std::min(best,
                                std::abs(es.eigenvalues(j) - (eh.eigenvalues()(k) + nb * fm.omega)));
        CHECK(best < 1e-8);
    }

    // periodically driven: exponents match Floquet eigenvalues mod omega
    Schedule drive{Schedule::Kind::Cosine, 1.0, 0.35, 2 * pi / tau_star, 0.3};
    Mat h2 = rng.random_hermitian(n);
    GeneratorFn gent = [&](double t) {
        Mat l = h + drive.value(t) * 0.4 * h2;
        return SpMat(l.sparseView(1e-300, 1.0));
    };
    auto fm2 = build_floquet_matrix(gent, tau_star, 6);
    auto mr = monodromy(gent, tau_star, 4000);
    auto es2 = spectra::eigendecompose(fm2.block);
    // every monodromy exponent appears in the Floquet spectrum mod omega
    for (int j = 0; j < n; ++j) {
        double best = 1e300;
        for (int k = 0; k < es2.eigenvalues.size(); ++k) {
            double d = std::remainder(es2.eigenvalues(k).real() - mr.exponents(j).real(), fm2.omega);
            best = std::min(best, std::hypot(d, es2.eigenvalues(k).imag() - mr.exponents(j).imag()));
        }
        CHECK(best < 1e-6);
    }

    // insufficient N_F rejected with a decay report (cubic drive has content at +-3)
    GeneratorFn gen3 = [&](double t) {
        double c = std::cos(2 * pi / tau_star * t);
        Mat l = h + c * c * c * 0.4 * h2;
        return SpMat(l.sparseView(1e-300, 1.0));
    };
    CHECK_THROWS_AS(build_floquet_matrix(gen3, tau_star, 1), lab_error);
    CHECK_NOTHROW(build_floquet_matrix(gen3, tau_star, 3));
}

TEST_CASE("Floquet zero mode of the C-adjoint generator reconstructs a periodic trajectory") {
    auto spec = dyn_spec(1, 4, 1.1, 1.1);
    const double tau_star = 2.7;
    spec.envelopes = {Schedule{Schedule::Kind::Cosine, 1.0, 0.4, 2 * pi / tau_star, 0.0}};
    const double g = 0.35;
    auto m = models::build_liouvillean_model(spec, g, 0.0, LiouVariant::CAdjoint, 0);
    GeneratorFn gen = [&](double t) { return m.matrix(t); };
    auto fm = build_floquet_matrix(gen, tau_star, 5);
    auto [mu, vecb] = floquet_eigen_near(fm, 0.0);
    CHECK(std::abs(mu) < 1e-8); // K_g^* keeps n omega, in particular 0, in its spectrum
    // the reconstructed phi(t) solves the periodic evolution: propagate phi(0)
    // over one period and compare with phi(tau*) = phi(0)
    Vec phi0 = floquet_state_at(fm, vecb, 0.0);
    phi0.normalize();
    auto tr = propagate(gen, 1.0, 0.0, tau_star, phi0, 6000);
    // e^{-i K t} structure: U(t,0) phi(0) = e^{-i mu t} phi(t); at t = tau* both phases cancel
    CHECK((tr.states.back() - phi0).norm() < 1e-6);
}
