// models.hpp — the two engines built over the composite basis:
//   * Hamiltonian engine: small system + finite reservoirs on physical
//     (u >= 0) grids, density-matrix picture, Gibbs initial states.
//   * Liouvillean engine: doubled GNS space over glued signed-u grids with
//     the Araki-Wyss vacuum as reference; standard and C-adjoint variants,
//     complex deformation, KMS vectors, finite-dimensional modular pair.
#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "oqtlab/composite.hpp"
#include "oqtlab/core.hpp"
#include "oqtlab/reservoirs.hpp"

namespace oqtlab::models {

using composite::CompositeBasis;
using composite::ModeAction;
using composite::Register;
using reservoirs::BranchFn;
using reservoirs::EnergyGrid;
using reservoirs::ReservoirSpec;

// ---------------------------------------------------------------------------
// Scalar schedules: the time dependences the config surface can express.
// ---------------------------------------------------------------------------

struct Schedule {
    enum class Kind { Constant, Linear, Smoothstep, Cosine, SinePulse } kind = Kind::Constant;
    double a = 1.0, b = 0.0, omega = 0.0, phase = 0.0;
    double time_scale = 1.0; // the schedule is evaluated at t / time_scale

    // Constant: a.  Linear: a + b*t.  Smoothstep: a + b*s^2(3-2s), s clamped to [0,1].
    // Cosine: a*(1 + b*cos(omega*t + phase)).  SinePulse: a*(1 + b*sin(omega*t + phase)).
    double value(double t_in) const {
        const double t = t_in / time_scale;
        switch (kind) {
            case Kind::Constant: return a;
            case Kind::Linear: return a + b * t;
            case Kind::Smoothstep: {
                double s = std::min(std::max(t, 0.0), 1.0);
                return a + b * s * s * (3 - 2 * s);
            }
            case Kind::Cosine: return a * (1 + b * std::cos(omega * t + phase));
            case Kind::SinePulse: return a * (1 + b * std::sin(omega * t + phase));
        }
        return a;
    }
    double derivative(double t_in) const {
        const double t = t_in / time_scale;
        switch (kind) {
            case Kind::Constant: return 0.0;
            case Kind::Linear: return b / time_scale;
            case Kind::Smoothstep: {
                if (t <= 0 || t >= 1) return 0.0;
                return b * 6 * t * (1 - t) / time_scale;
            }
            case Kind::Cosine: return -a * b * omega * std::sin(omega * t + phase) / time_scale;
            case Kind::SinePulse: return a * b * omega * std::cos(omega * t + phase) / time_scale;
        }
        return 0.0;
    }
    Schedule rescaled(double scale) const {
        Schedule s = *this;
        s.time_scale = time_scale * scale;
        return s;
    }
    bool periodic() const { return kind == Kind::Cosine || kind == Kind::SinePulse; }

    // C_n.4/C_n.5 regularity at the config surface: twice differentiable,
    // checked by finite differences against the analytic derivative.
    void validate_smooth() const {
        for (double t : {0.21, 0.5, 0.83}) {
            double h = 1e-5;
            double fd = (value(t + h) - value(t - h)) / (2 * h);
            require(std::abs(fd - derivative(t)) < 1e-6 * (1 + std::abs(fd)),
                    "schedule is not differentiable (violates C_n.4/C_n.5 smoothness)");
        }
    }
};

// ---------------------------------------------------------------------------
// System specification
// ---------------------------------------------------------------------------

struct SystemSpec {
    int dim = 2;
    std::vector<double> energies;  // ascending; d=2 default is sigma_3 = diag(-1,+1)
    Mat c_minus;                   // lowering operator; c_plus = adjoint
    Schedule drive;                // scalar multiplier on H^S(t)

    Mat hamiltonian() const {
        Mat h = Mat::Zero(dim, dim);
        for (int i = 0; i < dim; ++i) h(i, i) = energies[i];
        return h;
    }
    Mat c_plus() const { return c_minus.adjoint(); }

    void validate() const {
        require(dim >= 2 && int(energies.size()) == dim, "SystemSpec: energies must cover dim");
        for (int i = 1; i < dim; ++i)
            require(energies[i] >= energies[i - 1], "SystemSpec: energies must be ascending");
        require(c_minus.rows() == dim && c_minus.cols() == dim, "SystemSpec: c_minus shape");
    }
};

// Two-level system with H^S = sigma_3 (basis: ground, excited) and normalized
// ladder operators c_- = |g><e|.
inline SystemSpec make_two_level() {
    SystemSpec s;
    s.dim = 2;
    s.energies = {-1.0, 1.0};
    s.c_minus = Mat::Zero(2, 2);
    s.c_minus(0, 1) = 1.0;
    return s;
}

// Ladder system for the quantum-dot model: d levels, c_- = sum |j><j+1|.
inline SystemSpec make_ladder(const std::vector<double>& energies) {
    SystemSpec s;
    s.dim = int(energies.size());
    s.energies = energies;
    s.c_minus = Mat::Zero(s.dim, s.dim);
    for (int j = 0; j + 1 < s.dim; ++j) s.c_minus(j, j + 1) = 1.0;
    return s;
}

// ---------------------------------------------------------------------------
// Hamiltonian engine
// ---------------------------------------------------------------------------

struct HamiltonianModel {
    std::shared_ptr<const CompositeBasis> basis;
    SystemSpec system;
    std::vector<ReservoirSpec> reservoirs;
    std::vector<Schedule> envelopes; // per-reservoir coupling envncelope
    double g = 0.0;

    SpMat h_sys;               // H^S ⊗ 1 (static part; drive multiplies it)
    std::vector<SpMat> h_res;  // dGamma(u_i) per reservoir
    SpMat h_res_total;
    std::vector<SpMat> v_res;  // Hermitian coupling piece per reservoir
    SpMat q_total;             // conserved charge q_S + sum N_i

    SpMat matrix(double t) const {
        SpMat h = h_res_total + system.drive.value(t) * h_sys;
        for (std::size_t r = 0; r < v_res.size(); ++r)
            h += cplx(g * envelopes[r].value(t)) * v_res[r];
        return h;
    }
    // dH/dt as a sparse matrix (work-rate observable).
    SpMat matrix_dot(double t) const {
        SpMat h = system.drive.derivative(t) * h_sys;
        for (std::size_t r = 0; r < v_res.size(); ++r)
            h += cplx(g * envelopes[r].derivative(t)) * v_res[r];
        return h;
    }
    // System part H^Sigma(t) = H^S(t) + g V(t) (everything but the bath terms).
    SpMat h_sigma(double t) const {
        SpMat h = system.drive.value(t) * h_sys;
        for (std::size_t r = 0; r < v_res.size(); ++r)
            h += cplx(g * envelopes[r].value(t)) * v_res[r];
        return h;
    }
    double recurrence_time() const {
        double dmin = 1e300;
        for (const auto& reg : basis->registers)
            for (std::size_t k = 1; k < reg.energies.size(); ++k)
                dmin = std::min(dmin, reg.energies[k] - reg.energies[k - 1]);
        return 2 * pi / dmin;
    }
};

inline HamiltonianModel build_hamiltonian_model(const SystemSpec& system,
                                                const std::vector<ReservoirSpec>& reservoirs,
                                                const std::vector<EnergyGrid>& grids, double g,
                                                std::vector<Schedule> envelopes = {},
                                                int n_max = -1,
                                                const std::string& coupling_form = "dipole") {
    system.validate();
    require(reservoirs.size() == grids.size(), "build_hamiltonian_model: one grid per reservoir");
    require(coupling_form == "dipole", "build_hamiltonian_model: only the dipole c_-⊗b* + c_+⊗b coupling is implemented");
    require(std::isfinite(g), "build_hamiltonian_model: coupling must be finite");
    if (envelopes.empty()) envelopes.assign(reservoirs.size(), Schedule{});
    require(envelopes.size() == reservoirs.size(), "build_hamiltonian_model: one envelope per reservoir");

    std::vector<Register> regs;
    for (std::size_t r = 0; r < reservoirs.size(); ++r) {
        reservoirs[r].validate();
        Register reg;
        reg.modes = grids[r].count;
        reg.energies = grids[r].points;
        reg.weights = grids[r].weights;
        for (double u : reg.energies)
            require(u >= 0, "build_hamiltonian_model: physical energies u >= 0 only in this engine");
        regs.push_back(reg);
    }

    HamiltonianModel m;
    m.basis = composite::make_composite_basis(system.dim, 1, regs, n_max);
    m.system = system;
    m.reservoirs = reservoirs;
    m.envelopes = std::move(envelopes);
    m.g = g;
    const auto& b = *m.basis;

    {
        std::vector<Eigen::Triplet<cplx>> t;
        composite::add_sys_term(t, b, 0, system.hamiltonian(), 1.0);
        m.h_sys = composite::assemble(b, t);
    }
    {
        std::vector<Eigen::Triplet<cplx>> tq;
        Mat qs = Mat::Zero(system.dim, system.dim);
        for (int i = 0; i < system.dim; ++i) qs(i, i) = i;
        composite::add_sys_term(tq, b, 0, qs, 1.0);
        for (int r = 0; r < int(regs.size()); ++r)
            composite::add_mode_diag(tq, b, r, std::vector<cplx>(regs[r].modes, 1.0), 1.0);
        m.q_total = composite::assemble(b, tq);
    }
    for (int r = 0; r < int(regs.size()); ++r) {
        std::vector<Eigen::Triplet<cplx>> th;
        std::vector<cplx> en(regs[r].energies.begin(), regs[r].energies.end());
        composite::add_mode_diag(th, b, r, en, 1.0);
        m.h_res.push_back(composite::assemble(b, th));

        // coupling amplitudes f_k = f~(u_k) sqrt(w_k) on the physical grid
        std::vector<cplx> amp(regs[r].modes), amp_conj(regs[r].modes);
        for (int k = 0; k < regs[r].modes; ++k) {
            cplx f = reservoirs[r].form_factor.eval(regs[r].energies[k], 0.0) *
                     std::sqrt(regs[r].weights[k]);
            amp[k] = f;
            amp_conj[k] = std::conj(f);
        }
        std::vector<Eigen::Triplet<cplx>> tv;
        composite::add_spin_mode_term(tv, b, 0, system.c_minus, r, amp, ModeAction::Create, false, 1.0);
        composite::add_spin_mode_term(tv, b, 0, system.c_plus(), r, amp_conj, ModeAction::Annihilate,
                                      false, 1.0);
        m.v_res.push_back(composite::assemble(b, tv));
    }
    m.h_res_total = SpMat(b.dim(), b.dim());
    for (auto& h : m.h_res) m.h_res_total += h;
    return m;
}

// Gibbs density matrix e^{-beta(H - nu Q)}/Z (overflow guarded by spectral shift).
inline Mat gibbs_state(const Mat& h, double beta, double nu = 0.0, const Mat* q = nullptr) {
    require(beta > 0, "gibbs_state: beta must be > 0");
    Mat a = h;
    if (q && nu != 0.0) a -= nu * (*q);
    Mat rho = herm_exp(a, -beta);
    const double z = rho.trace().real();
    require(z > 0 && std::isfinite(z), "gibbs_state: bad partition function");
    return rho / z;
}

// ---------------------------------------------------------------------------
// Liouvillean engine
// ---------------------------------------------------------------------------

enum class LiouVariant { Standard, CAdjoint };

struct CnSpec {
    SystemSpec system;                      // H^S static in this engine (drive optional)
    std::vector<ReservoirSpec> reservoirs;
    std::vector<EnergyGrid> grids;          // glued signed-u grids, one per reservoir
    std::vector<Schedule> envelopes;        // f_i(t) = envelope_i(t) * f_i
    int n_max = 3;

    void validate() const {
        system.validate();
        require(!reservoirs.empty(), "CnSpec: need at least one reservoir");
        require(reservoirs.size() == grids.size(), "CnSpec: one glued grid per reservoir");
        for (auto& r : reservoirs) {
            r.validate();
            require(std::abs(r.nu - 2.0) > 1e-9,
                    "CnSpec: nu = 2 rejected — the coupling resonance sits at the system gap and the "
                    "first nontrivial terms in perturbation theory are no longer second order (§4.4)");
        }
        for (auto& gr : grids) gr.validate();
    }
    std::vector<Schedule> effective_envelopes() const {
        if (!envelopes.empty()) return envelopes;
        return std::vector<Schedule>(reservoirs.size(), Schedule{});
    }
};

// Admissible deformation: |Im theta| < min_i(pi/beta_i, delta_i).
inline double theta_strip(const CnSpec& spec) {
    double k = 1e300;
    for (auto& r : spec.reservoirs)
        k = std::min({k, pi / r.beta, r.form_factor.delta_analyticity});
    return k;
}
inline cplx default_theta(const CnSpec& spec) { return cplx(0.0, -0.4 * theta_strip(spec)); }

namespace detail {

// Creator amplitudes G(u_k + theta) sqrt(w_k) and annihilator smears
// G-bar(u_k + theta) sqrt(w_k), each branch continued analytically.
struct AmpPair {
    std::vector<cplx> create, annih;
};

inline AmpPair deformed_amps(const BranchFn& fn, const EnergyGrid& grid, cplx theta,
                             bool positive_part) {
    BranchFn bar = fn.schwarz();
    AmpPair out;
    out.create.assign(grid.count, 0.0);
    out.annih.assign(grid.count, 0.0);
    for (int k = 0; k < grid.count; ++k) {
        const double u = grid.points[k];
        if ((u > 0) != positive_part) continue;
        const double sw = std::sqrt(grid.weights[k]);
        const cplx z = u + theta;
        out.create[k] = (u >= 0 ? fn.pos(z) : fn.neg(z)) * sw;
        out.annih[k] = (u >= 0 ? bar.pos(z) : bar.neg(z)) * sw;
        require(is_finite(out.create[k]) && is_finite(out.annih[k]),
                "deformed amplitude evaluated to a non-finite value on the contour");
    }
    return out;
}

// Pointwise dressing e^{s * beta q(u)/2} with q(u) = u - nu*sgn(u), applied to
// a branch pair in the glued variable (the C-Liouvillean dressing).
inline BranchFn dress(const BranchFn& fn, double beta, double nu, double s) {
    auto p = fn.pos, n = fn.neg;
    return {[p, beta, nu, s](cplx z) { return std::exp(0.5 * s * beta * (z - nu)) * p(z); },
            [n, beta, nu, s](cplx z) { return std::exp(0.5 * s * beta * (z + nu)) * n(z); }};
}

} // namespace detail

struct LiouvilleanModel {
    std::shared_ptr<const CompositeBasis> basis;
    CnSpec spec;
    double g = 0.0;
    cplx theta = 0.0;
    LiouVariant variant = LiouVariant::Standard;

    SpMat l_free;               // L^S + sum dGamma(u_i + theta) (diagonal in theta-deformed form)
    SpMat l_sys;                // L^S alone (for driven H^S)
    std::vector<SpMat> i_res;   // interaction piece per reservoir (multiplied by envelope(t))
    std::vector<SpMat> i_left;  // left-representation part pi(V_i) alone (for KMS vectors)
    SpMat dgamma_q;             // sum_i dGamma(q_i), q = u - nu sgn(u) (modular generator)
    SpMat pi_h_sys;             // pi(H^S) = H^S ⊗ 1
    SpMat pi_q_sys;             // pi(q_S) = q_S ⊗ 1 (system charge, left)
    SpMat n_op;                 // total glued number operator
    Vec omega;                  // reference vector Omega (trace state ⊗ vacuum)

    // Full generator at time t: L_g(t,theta) or the adjoint C-Liouvillean.
    SpMat matrix(double t) const {
        SpMat l = l_free;
        if (spec.system.drive.kind != Schedule::Kind::Constant || spec.system.drive.a != 1.0)
            l = l_free + cplx(spec.system.drive.value(t) - 1.0) * l_sys;
        auto env = spec.effective_envelopes();
        for (std::size_t r = 0; r < i_res.size(); ++r)
            l += cplx(g * env[r].value(t)) * i_res[r];
        return l;
    }
    // Interaction normalized to unit coupling (the g-linear part at time t).
    SpMat interaction(double t) const {
        SpMat w(basis->dim(), basis->dim());
        auto env = spec.effective_envelopes();
        for (std::size_t r = 0; r < i_res.size(); ++r) w += cplx(env[r].value(t)) * i_res[r];
        return w;
    }
};

// Assemble the (deformed) generator on the doubled glued space.
//
// Standard variant (theta-deformed standard Liouvillean):
//   L = L^S + sum_i [dGamma(u_i) + theta N_i]
//     + g sum_i { c_-^l B†(f_{i,beta}) + c_+^l B(f_{i,beta})
//                 - i c_-^r (-1)^{N_i} B(f^#_{i,beta}) - i c_+^r (-1)^{N_i} B†(f^#_{i,beta}) }
// with B†(F) = b*(F·1_{u>0}) + b(F·1_{u<0}) and B(F) its adjoint pattern —
// the glued form of the Araki-Wyss representation.
//
// CAdjoint variant (adjoint of the C-Liouvillean): the right-representation
// amplitudes are dressed by e^{± beta q(u)/2}, q(u) = u - nu sgn(u); the
// undeformed adjoint then annihilates Omega exactly.
inline LiouvilleanModel build_liouvillean_model(const CnSpec& spec, double g, cplx theta,
                                                LiouVariant variant,
                                                std::optional<int> signed_sector = std::nullopt,
                                                bool system_gibbs_reference = false,
                                                double system_reference_beta = 1.0) {
    spec.validate();
    require(std::abs(theta.imag()) < theta_strip(spec) + 1e-12,
            "build_liouvillean_model: theta outside the admissible strip min_i(pi/beta_i, delta_i)");
    require(spec.n_max >= 1 || spec.n_max == -1, "build_liouvillean_model: N_max < 1");

    std::vector<Register> regs;
    for (std::size_t r = 0; r < spec.reservoirs.size(); ++r) {
        Register reg;
        reg.modes = spec.grids[r].count;
        reg.energies = spec.grids[r].points;
        reg.weights = spec.grids[r].weights;
        regs.push_back(reg);
    }

    LiouvilleanModel m;
    m.basis = composite::make_composite_basis(spec.system.dim, 2, regs, spec.n_max, signed_sector);
    m.spec = spec;
    m.g = g;
    m.theta = theta;
    m.variant = variant;
    const auto& b = *m.basis;
    const Mat hs = spec.system.hamiltonian();
    const Mat cm = spec.system.c_minus, cp = spec.system.c_plus();

    {
        std::vector<Eigen::Triplet<cplx>> t;
        composite::add_sys_term(t, b, 0, hs, 1.0);
        composite::add_sys_term(t, b, 1, hs, -1.0); // L^S = H ⊗ 1 - 1 ⊗ H (H real diagonal)
        m.l_sys = composite::assemble(b, t);
    }
    {
        std::vector<Eigen::Triplet<cplx>> t, tq, tn, tl, tqs;
        composite::add_sys_term(tl, b, 0, hs, 1.0);
        Mat qs = Mat::Zero(spec.system.dim, spec.system.dim);
        for (int i = 0; i < spec.system.dim; ++i) qs(i, i) = i;
        composite::add_sys_term(tqs, b, 0, qs, 1.0);
        for (int r = 0; r < int(regs.size()); ++r) {
            std::vector<cplx> en(regs[r].modes), qn(regs[r].modes), on(regs[r].modes, 1.0);
            for (int k = 0; k < regs[r].modes; ++k) {
                const double u = regs[r].energies[k];
                en[k] = u + theta;
                qn[k] = u - spec.reservoirs[r].nu * (u > 0 ? 1.0 : -1.0);
            }
            composite::add_mode_diag(t, b, r, en, 1.0);
            composite::add_mode_diag(tq, b, r, qn, 1.0);
            composite::add_mode_diag(tn, b, r, on, 1.0);
        }
        m.l_free = m.l_sys + composite::assemble(b, t);
        m.dgamma_q = composite::assemble(b, tq);
        m.n_op = composite::assemble(b, tn);
        m.pi_h_sys = composite::assemble(b, tl);
        m.pi_q_sys = composite::assemble(b, tqs);
    }

    for (int r = 0; r < int(regs.size()); ++r) {
        const auto& rs = spec.reservoirs[r];
        BranchFn fb = reservoirs::detail::f_beta(rs, 0.0);
        BranchFn fs = reservoirs::detail::f_beta_sharp(rs, 0.0);
        // C-Liouvillean dressing, by action: every right-representation creator
        // part carries e^{-beta q(u)/2} f^#, every annihilator part
        // e^{+beta q(u)/2} f^#, with q(u) = u - nu sgn(u). On the positive axis
        // this reproduces the e^{-+beta(u-nu)/2} factors of the adjoint
        // C-Liouvillean; the negative-axis folding follows from
        // J Delta^{-1/2} pi(V) Delta^{1/2} J and makes L_g(t) Omega = 0 exact.
        BranchFn fs_cre = fs, fs_ann = fs;
        if (variant == LiouVariant::CAdjoint) {
            fs_cre = detail::dress(fs, rs.beta, rs.nu, -1.0);
            fs_ann = detail::dress(fs, rs.beta, rs.nu, +1.0);
        }
        auto fb_pos = detail::deformed_amps(fb, spec.grids[r], theta, true);
        auto fb_neg = detail::deformed_amps(fb, spec.grids[r], theta, false);
        auto fsc_pos = detail::deformed_amps(fs_cre, spec.grids[r], theta, true);
        auto fsc_neg = detail::deformed_amps(fs_cre, spec.grids[r], theta, false);
        auto fsa_pos = detail::deformed_amps(fs_ann, spec.grids[r], theta, true);
        auto fsa_neg = detail::deformed_amps(fs_ann, spec.grids[r], theta, false);

        std::vector<Eigen::Triplet<cplx>> tl, tr;
        // left representation: c_-^l B†(f_beta) + c_+^l B(f_beta)
        composite::add_spin_mode_term(tl, b, 0, cm, r, fb_pos.create, ModeAction::Create, false, 1.0);
        composite::add_spin_mode_term(tl, b, 0, cm, r, fb_neg.annih, ModeAction::Annihilate, false, 1.0);
        composite::add_spin_mode_term(tl, b, 0, cp, r, fb_pos.annih, ModeAction::Annihilate, false, 1.0);
        composite::add_spin_mode_term(tl, b, 0, cp, r, fb_neg.create, ModeAction::Create, false, 1.0);
        // right representation: -i c_-^r (-1)^N B(f^#)  - i c_+^r (-1)^N B†(f^#)
        composite::add_spin_mode_term(tr, b, 1, cm, r, fsa_pos.annih, ModeAction::Annihilate, true, -ii);
        composite::add_spin_mode_term(tr, b, 1, cm, r, fsc_neg.create, ModeAction::Create, true, -ii);
        composite::add_spin_mode_term(tr, b, 1, cp, r, fsc_pos.create, ModeAction::Create, true, -ii);
        composite::add_spin_mode_term(tr, b, 1, cp, r, fsa_neg.annih, ModeAction::Annihilate, true, -ii);

        m.i_left.push_back(composite::assemble(b, tl));
        std::vector<Eigen::Triplet<cplx>> tall = tl;
        tall.insert(tall.end(), tr.begin(), tr.end());
        m.i_res.push_back(composite::assemble(b, tall));
    }

    // Reference vector: trace state on H^S ⊗ H^S (or the system Gibbs vector)
    // tensored with the glued Fock vacuum.
    m.omega = Vec::Zero(b.dim());
    {
        std::vector<double> w(spec.system.dim, 1.0);
        if (system_gibbs_reference) {
            for (int i = 0; i < spec.system.dim; ++i)
                w[i] = std::exp(-0.5 * system_reference_beta * spec.system.energies[i]);
        }
        double nrm = 0;
        for (double x : w) nrm += x * x;
        nrm = std::sqrt(nrm);
        for (int i = 0; i < b.dim(); ++i) {
            const std::uint64_t key = b.states[i];
            if (b.total_n(key) != 0) continue;
            if (b.sys_of(key, 0) != b.sys_of(key, 1)) continue;
            m.omega(i) = w[b.sys_of(key, 0)] / nrm;
        }
    }
    return m;
}

// Spec-level convenience: the assembled generator matrix.
inline SpMat build_liouvillean(const SystemSpec& system, const std::vector<ReservoirSpec>& reservoirs,
                               const std::vector<EnergyGrid>& grids, double g, double t, cplx theta,
                               LiouVariant variant, int n_max = 3) {
    CnSpec spec{system, reservoirs, grids, {}, n_max};
    return build_liouvillean_model(spec, g, theta, variant).matrix(t);
}

// ---------------------------------------------------------------------------
// Finite-dimensional modular pair (generic, matrix picture)
// ---------------------------------------------------------------------------

// The doubled space is H ⊗ H with vec(X)_{(i,j)} = X_{ij}; Omega = vec(rho^{1/2});
// l(A) vec X = vec(AX); Delta^z vec X = vec(rho^z X rho^{-z}); J vec X = vec(X†).
struct ModularPair {
    Mat rho_ref;
    Eigen::SelfAdjointEigenSolver<Mat> eig;

    int d() const { return int(rho_ref.rows()); }
    Vec omega() const {
        Mat sq = sqrt_rho();
        return Eigen::Map<const Vec>(sq.data(), d() * d());
    }
    Mat sqrt_rho() const {
        RVec lam = eig.eigenvalues();
        return eig.eigenvectors() * lam.array().sqrt().matrix().asDiagonal() *
               eig.eigenvectors().adjoint();
    }
    Mat rho_pow(double z) const {
        RVec lam = eig.eigenvalues();
        RVec w(lam.size());
        for (int i = 0; i < lam.size(); ++i) w(i) = std::pow(lam(i), z);
        return eig.eigenvectors() * w.asDiagonal() * eig.eigenvectors().adjoint();
    }
    static Mat unvec(const Vec& v, int d) {
        return Eigen::Map<const Mat>(v.data(), d, d); // column-major: X_{ij} at i + j*d
    }
    static Vec tovec(const Mat& x) { return Eigen::Map<const Vec>(x.data(), x.size()); }

    Vec apply_delta_pow(double z, const Vec& v) const {
        Mat x = unvec(v, d());
        return tovec(rho_pow(z) * x * rho_pow(-z));
    }
    Vec apply_j(const Vec& v) const {
        Mat x = unvec(v, d());
        return tovec(x.adjoint());
    }
    Vec apply_s(const Vec& v) const { return apply_j(apply_delta_pow(0.5, v)); }
    Vec left_mult(const Mat& a, const Vec& v) const { return tovec(a * unvec(v, d())); }
    Vec right_mult(const Mat& a, const Vec& v) const { return tovec(unvec(v, d()) * a); }
};

inline ModularPair modular_pair(const Mat& rho_ref) {
    require(rho_ref.rows() == rho_ref.cols(), "modular_pair: square matrix required");
    require(sup_abs(rho_ref - rho_ref.adjoint()) < 1e-12, "modular_pair: reference not Hermitian");
    ModularPair mp;
    mp.rho_ref = rho_ref;
    mp.eig.compute(rho_ref);
    require(mp.eig.info() == Eigen::Success, "modular_pair: eigensolver failed");
    require(mp.eig.eigenvalues().minCoeff() > 1e-14 * mp.eig.eigenvalues().maxCoeff(),
            "modular_pair: rank-deficient reference state");
    return mp;
}

// ---------------------------------------------------------------------------
// Modular structure of the glued Liouvillean model (Araki-Wyss vacuum)
// ---------------------------------------------------------------------------

// Antiunitary J on the doubled glued space: swap the two system slots and
// mirror every glued mode u -> -u, composed with complex conjugation. No
// occupation-dependent sign appears: J b*_k J = b*_{mirror(k)} (-1)^N, and the
// parity twist cancels the fermionic reordering sign on every basis state.
struct GluedConjugation {
    SpMat perm;
    Vec apply(const Vec& v) const { return perm * v.conjugate(); }
};

inline GluedConjugation glued_modular_conjugation(const CompositeBasis& b) {
    std::vector<Eigen::Triplet<cplx>> t;
    for (int i = 0; i < b.dim(); ++i) {
        std::uint64_t key = b.states[i];
        std::uint64_t out = key;
        if (b.sys_slots == 2) {
            out = b.with_sys(out, 0, b.sys_of(key, 1));
            out = b.with_sys(out, 1, b.sys_of(key, 0));
        }
        for (int r = 0; r < int(b.registers.size()); ++r) {
            const auto& reg = b.registers[r];
            const std::uint64_t occ = b.occ_of(key, r);
            std::uint64_t mirrored = 0;
            for (int k = 0; k < reg.modes; ++k)
                if (occ >> k & 1) mirrored |= std::uint64_t(1) << (reg.modes - 1 - k);
            out = b.with_occ(out, r, mirrored);
        }
        const int j = b.index(out);
        require(j >= 0, "glued_modular_conjugation: basis not closed under J (sector filter?)");
        t.emplace_back(j, i, 1.0);
    }
    return {composite::assemble(b, t)};
}

// Diagonal Delta^z = Gamma(e^{-z beta q}) per reservoir, q(u) = u - nu sgn(u).
inline SpMat glued_modular_delta_pow(const CompositeBasis& b, const std::vector<ReservoirSpec>& rs,
                                     double z) {
    require(rs.size() == b.registers.size(), "glued_modular_delta_pow: reservoir count");
    std::vector<Eigen::Triplet<cplx>> t;
    for (int i = 0; i < b.dim(); ++i) {
        double expo = 0;
        for (int r = 0; r < int(b.registers.size()); ++r) {
            const auto& reg = b.registers[r];
            const std::uint64_t occ = b.occ_of(b.states[i], r);
            for (int k = 0; k < reg.modes; ++k)
                if (occ >> k & 1) {
                    const double u = reg.energies[k];
                    expo += -z * rs[r].beta * (u - rs[r].nu * (u > 0 ? 1.0 : -1.0));
                }
        }
        t.emplace_back(i, i, std::exp(expo));
    }
    return composite::assemble(b, t, 0.0);
}

// ---------------------------------------------------------------------------
// Perturbed and instantaneous KMS vectors
// ---------------------------------------------------------------------------

// Omega_V ∝ e^{-beta (K + V)/2} Omega for Hermitian K + V (dense route).
inline Vec perturbed_kms_vector(const Mat& k0, const Mat& v, double beta, const Vec& omega) {
    require(beta > 0, "perturbed_kms_vector: beta must be > 0");
    Mat k = k0 + v;
    require(sup_abs(k - k.adjoint()) < 1e-10 * (1 + sup_abs(k)),
            "perturbed_kms_vector: K + V must be Hermitian");
    return herm_exp_apply(0.5 * (k + Mat(k.adjoint())), -beta / 2.0, omega, true);
}

// Modular generator of the glued model at time t:
//   K(t) = sum_i dGamma(q_i) + pi(H^S - nu q_S) + g pi(V(t)).
// With a common reservoir (beta, nu), the finite-model standard Liouvillean
// annihilates e^{-beta K(t)/2} Omega: relative to the modular flow of Omega
// the perturbation is H^S - nu q_S + g V character (the system joins at its
// grand-canonical weight), and the leftover nu (N_+ - N_-) term vanishes on
// the Q' = 0 sector containing Omega.
inline Mat kms_generator(const LiouvilleanModel& m, double t) {
    const double nu = m.spec.reservoirs.front().nu;
    SpMat k = m.dgamma_q + m.pi_h_sys - cplx(nu) * m.pi_q_sys;
    auto env = m.spec.effective_envelopes();
    for (std::size_t r = 0; r < m.i_left.size(); ++r)
        k += cplx(m.g * env[r].value(t)) * m.i_left[r];
    return Mat(k);
}

inline Vec instantaneous_kms_vector(const LiouvilleanModel& m, double t) {
    require(std::abs(m.theta) == 0.0, "instantaneous_kms_vector: undeformed model required");
    double beta = m.spec.reservoirs.front().beta;
    double nu = m.spec.reservoirs.front().nu;
    for (auto& r : m.spec.reservoirs) {
        require(std::abs(r.beta - beta) < 1e-12,
                "instantaneous_kms_vector: all reservoirs must share one temperature");
        require(std::abs(r.nu - nu) < 1e-12,
                "instantaneous_kms_vector: all reservoirs must share one chemical potential");
    }
    Mat k = kms_generator(m, t);
    return herm_exp_apply(0.5 * (k + Mat(k.adjoint())), -beta / 2.0, m.omega, true);
}

// ---------------------------------------------------------------------------
// Model A2 closed forms (Prop A2.3 remark)
// ---------------------------------------------------------------------------

struct A2LevelShift {
    double lambda0 = 0.0;            // exactly zero
    double lambda1 = 0.0;            // 4 pi |G|^2 sqrt(2 j0M) (1+e^{2 beta j0M})/(e^{2 beta j0M}-1)
    double gamma_minus = 0.0;        // Gamma(-2 j0M) entry (∝ Bose occupation)
    double gamma_plus = 0.0;         // Gamma(+2 j0M) entry (∝ 1 + Bose occupation)
    Mat gamma0;                      // the 2x2 Gamma(0) matrix, trace = lambda1
};

inline A2LevelShift model_a2_level_shift(double j0m, double beta, double ghat) {
    require(j0m > 0, "model_a2_level_shift: j0M must be > 0");
    require(beta > 0, "model_a2_level_shift: beta must be > 0");
    A2LevelShift r;
    const double x = 2.0 * beta * j0m;
    const double root = std::sqrt(2.0 * j0m);
    const double g2 = ghat * ghat;
    const double a = 4.0 * pi * g2 * root / std::expm1(x);
    r.lambda0 = 0.0;
    r.lambda1 = 4.0 * pi * g2 * root / std::tanh(x / 2.0); // (1+e^x)/(e^x-1), overflow-safe
    const double n_bose = 1.0 / std::expm1(x);
    r.gamma_minus = 4.0 * pi * g2 * root * n_bose;
    r.gamma_plus = 4.0 * pi * g2 * root * (1.0 + n_bose);
    r.gamma0 = Mat::Zero(2, 2);
    r.gamma0(0, 0) = a;
    r.gamma0(0, 1) = a * std::exp(beta * j0m);
    r.gamma0(1, 0) = a * std::exp(beta * j0m);
    r.gamma0(1, 1) = a * std::exp(x);
    return r;
}

// Left representation of the heat-flux observable i [H^{R_r}, V_r]: since
// [dGamma(h), b*(f)] = b*(h f), this is the interaction template with the
// glued amplitudes multiplied pointwise by i u (both branches).
inline SpMat left_flux_observable(const LiouvilleanModel& m, int r) {
    const auto& rs = m.spec.reservoirs[r];
    BranchFn fb = reservoirs::detail::f_beta(rs, 0.0);
    auto ip = fb.pos, in = fb.neg;
    BranchFn flux{[ip](cplx z) { return ii * z * ip(z); }, [in](cplx z) { return ii * z * in(z); }};
    auto fp = detail::deformed_amps(flux, m.spec.grids[r], m.theta, true);
    auto fn = detail::deformed_amps(flux, m.spec.grids[r], m.theta, false);
    const auto& b = *m.basis;
    const Mat cm = m.spec.system.c_minus, cp = m.spec.system.c_plus();
    std::vector<Eigen::Triplet<cplx>> t;
    composite::add_spin_mode_term(t, b, 0, cm, r, fp.create, ModeAction::Create, false, 1.0);
    composite::add_spin_mode_term(t, b, 0, cm, r, fn.annih, ModeAction::Annihilate, false, 1.0);
    composite::add_spin_mode_term(t, b, 0, cp, r, fp.annih, ModeAction::Annihilate, false, 1.0);
    composite::add_spin_mode_term(t, b, 0, cp, r, fn.create, ModeAction::Create, false, 1.0);
    return composite::assemble(b, t);
}

// ---------------------------------------------------------------------------
// Reduced system state from doubled-space vectors
// ---------------------------------------------------------------------------

// rho_S with Tr(rho_S A) = <phi, pi(A) psi> / <phi, psi> (phi = psi for states).
inline Mat reduced_system_state(const CompositeBasis& b, const Vec& phi, const Vec& psi) {
    require(b.sys_slots == 2, "reduced_system_state: doubled basis required");
    Mat rho = Mat::Zero(b.sys_dim, b.sys_dim);
    cplx norm = 0;
    for (int i = 0; i < b.dim(); ++i) {
        const std::uint64_t key = b.states[i];
        const int si = b.sys_of(key, 0);
        for (int so = 0; so < b.sys_dim; ++so) {
            const int j = b.index(b.with_sys(key, 0, so));
            if (j < 0) continue;
            // pi(|so><si|) maps state i -> j; omega(|so><si|) = rho_S(si, so)
            rho(si, so) += std::conj(phi(j)) * psi(i);
        }
        norm += std::conj(phi(i)) * psi(i);
    }
    require(std::abs(norm) > 1e-300, "reduced_system_state: vectors are orthogonal");
    return rho / norm;
}

} // namespace oqtlab::models
