#include <catch2/catch_amalgamated.hpp>

#include "oqtlab/reservoirs.hpp"

using namespace oqtlab;
using namespace oqtlab::reservoirs;

TEST_CASE("fermi_dirac closed values") {
    CHECK(fermi_dirac(3.7, 1.2, 1.2) == Catch::Approx(0.5).margin(1e-15));
    // zero-temperature step, underflow-safe
    CHECK(fermi_dirac(1e6, 0.0, 1.0) < 1e-300);
    CHECK(fermi_dirac(1e6, 0.0, 1.0) >= 0.0);
    // independent evaluation of the closed formula: 1/(1+e^{ln 3}) = 1/4
    CHECK(fermi_dirac(1.0, 0.0, std::log(3.0)) == Catch::Approx(0.25).epsilon(1e-14));
    CHECK_THROWS_AS(fermi_dirac(-1.0, 0, 0), lab_error);
    CHECK_THROWS_AS(fermi_dirac(1.0, 0, std::nan("")), lab_error);
}

TEST_CASE("fermi_dirac particle-hole symmetry and monotonicity") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        double beta = rng.uniform(0.1, 8.0), nu = rng.uniform(-2, 2), u = rng.uniform(-6, 6);
        CHECK(fermi_dirac(beta, nu, u) + fermi_dirac(beta, nu, 2 * nu - u) ==
              Catch::Approx(1.0).margin(1e-13));
        const double lo = fermi_dirac(beta, nu, u + 0.1), hi = fermi_dirac(beta, nu, u);
        CHECK(hi >= lo); // strictly decreasing until saturation in double precision
        if (hi < 1.0 - 1e-12 && lo > 1e-12) CHECK(hi > lo);
    }
}

TEST_CASE("glued grid shape") {
    auto g = make_glued_grid(6.0, 16);
    g.validate();
    CHECK(g.count == 16);
    double sw = 0;
    for (double w : g.weights) sw += w;
    CHECK(sw == Catch::Approx(12.0));
    for (int k = 0; k < g.count; ++k) {
        CHECK(g.points[k] != 0.0);
        CHECK(g.points[k] == Catch::Approx(-g.points[g.mirror(k)]));
    }
    CHECK_THROWS_AS(make_glued_grid(6.0, 7), lab_error);
}

TEST_CASE("glue_form_factor branches") {
    ReservoirSpec spec{1.0, 0.0, make_form_factor("gaussian-decay", 1.0, 1.0), "R"};
    // positive-axis identity: f~(u) = u e^{-u^2}
    double u = 0.7;
    CHECK(glue_form_factor(spec, u).real() == Catch::Approx(u * std::exp(-u * u)));
    CHECK(glue_form_factor(spec, u).imag() == Catch::Approx(0.0).margin(1e-16));
    // real u < 0 with real-valued f: f~(u) = f(|u|)
    CHECK(glue_form_factor(spec, -u).real() == Catch::Approx(u * std::exp(-u * u)));
    // strip violation rejected
    CHECK_THROWS_AS(glue_form_factor(spec, cplx(0.5, 2.0)), lab_error);
}

TEST_CASE("paper-example form factor matches hand-computed samples") {
    // f(k) = |k|^{1/2} e^{-|k|^4} in the glued variable u = k^2: u^{1/2} e^{-u^2}
    ReservoirSpec spec{1.0, 0.0, make_form_factor("paper-example", 1.0), "R"};
    for (double u : {0.3, 1.0, 2.0, 2.7}) {
        const double want = std::sqrt(u) * std::exp(-u * u);
        CHECK(std::abs(glue_form_factor(spec, u) - want) < 1e-14);
        CHECK(std::abs(glue_form_factor(spec, -u) - want) < 1e-14);
    }
    // analytic continuation of each branch, never pointwise conjugation:
    // at u + i eta with u > 0 the value is sqrt(z) e^{-z^2}, complex.
    cplx z(1.3, 0.2);
    CHECK(std::abs(glue_form_factor(spec, z) - std::sqrt(z) * std::exp(-z * z)) < 1e-14);
    cplx zm(-1.3, 0.2);
    cplx want = std::conj(std::sqrt(std::conj(-zm)) * std::exp(-std::conj(zm * zm)));
    CHECK(std::abs(glue_form_factor(spec, zm) - want) < 1e-14);
}

TEST_CASE("araki_wyss amplitudes: KMS pairing and weight sum at theta=0") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        ReservoirSpec spec{rng.uniform(0.3, 4.0), rng.uniform(-0.5, 1.0),
                           make_form_factor("poly-exp", rng.uniform(0.5, 2.0), rng.uniform(0.8, 2.0),
                                            1 + (trial % 2)),
                           "R"};
        auto grid = make_glued_grid(rng.uniform(4.0, 8.0), 8 + 4 * (trial % 3));
        auto aw = araki_wyss_amplitudes(spec, grid);
        for (int k = 0; k < grid.count; ++k) {
            const int km = grid.mirror(k);
            // amp_sharp(u) = i conj(amp(-u))
            CHECK(std::abs(aw.amp_sharp[k] - ii * std::conj(aw.amp[km])) < 1e-12);
            // |amp(u)|^2 + |amp(-u)|^2 = w |f~(u)|^2
            const double lhs = std::norm(aw.amp[k]) + std::norm(aw.amp[km]);
            const double rhs =
                grid.weights[k] * std::norm(glue_form_factor(spec, grid.points[k]));
            CHECK(lhs == Catch::Approx(rhs).margin(1e-12 * (1 + rhs)));
        }
    }
}

TEST_CASE("araki_wyss amplitudes: half occupation at the chemical potential") {
    ReservoirSpec spec{2.0, 0.8, make_form_factor("gaussian-decay", 1.0, 1.5), "R"};
    auto fb = reservoirs::detail::f_beta(spec, 0.0);
    const cplx v = fb.pos(spec.nu);
    const cplx f = glue_form_factor(spec, spec.nu);
    CHECK(std::abs(v) == Catch::Approx(std::abs(f) / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("araki_wyss amplitudes: continuity in theta") {
    ReservoirSpec spec{1.0, 0.0, make_form_factor("gaussian-decay", 1.0, 1.2), "R"};
    spec.form_factor.delta_analyticity = 2.0;
    auto grid = make_glued_grid(5.0, 12);
    cplx th1(0.0, -0.5);
    auto a1 = araki_wyss_amplitudes(spec, grid, 0.0, th1);
    double prev = 1e300;
    for (double eps : {1e-2, 1e-3, 1e-4}) {
        auto a2 = araki_wyss_amplitudes(spec, grid, 0.0, th1 + cplx(eps, 0));
        double diff = 0;
        for (int k = 0; k < grid.count; ++k) diff += std::norm(a1.amp[k] - a2.amp[k]);
        diff = std::sqrt(diff);
        CHECK(diff < prev);
        CHECK(diff < 10 * eps); // Lipschitz in theta at grid level
        prev = diff;
    }
    CHECK_THROWS_AS(araki_wyss_amplitudes(spec, grid, 0.0, cplx(0, -3.0)), lab_error);
}

TEST_CASE("principal value: odd integrand about the pole vanishes") {
    auto g = make_glued_grid(4.0, 400);
    std::vector<double> f(g.count);
    for (int k = 0; k < g.count; ++k) f[k] = std::exp(-g.points[k] * g.points[k]);
    // at pole 0 the full integrand is odd
    CHECK(std::abs(principal_value_integral(f, g, 0.0)) < 1e-10);
}

TEST_CASE("principal value: refined-grid oracle") {
    auto f = [](double u) { return std::exp(-u * u); };
    {
        double coarse = principal_value_integral(f, -4, 4, 200, 0.0);
        double fine = principal_value_integral(f, -4, 4, 20000, 0.0); // 100x finer oracle
        CHECK(std::abs(coarse - fine) < 1e-6);
    }
    {
        // off-center pole; midpoint rule is O(h^2) so the coarse grid is denser here
        double coarse = principal_value_integral(f, -4, 4, 400, 0.3);
        double fine = principal_value_integral(f, -4, 4, 40000, 0.3);
        CHECK(std::abs(coarse - fine) < 1e-6);
    }
}

TEST_CASE("principal value: constant integrand analytic antiderivative") {
    // PV int_a^b c/(e-u) du = c ln((e-a)/(b-e)); oracle computed from the
    // antiderivative -ln|e-u| independently of the implementation.
    const double a = -1.0, b = 3.0, e = 0.5, c = 1.7;
    auto f = [c](double) { return c; };
    const double oracle = c * (std::log(e - a) - std::log(b - e));
    CHECK(principal_value_integral(f, a, b, 500, e) == Catch::Approx(oracle).margin(1e-9));
}

TEST_CASE("principal value: pole outside grid rejected") {
    auto f = [](double u) { return u; };
    CHECK_THROWS_AS(principal_value_integral(f, -1, 1, 100, 1.0), lab_error);
    CHECK_THROWS_AS(principal_value_integral(f, -1, 1, 100, -3.0), lab_error);
}
