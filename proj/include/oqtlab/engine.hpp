// engine.hpp — Hamiltonian-engine trajectories: the truncated-Fock model is
// evolved as an ensemble of weighted basis states (the supported initial
// density matrices are diagonal in the occupation basis), which keeps the
// thermodynamic identities exact for the truncated model at vector cost.
#pragma once

#include <vector>

#include "oqtlab/models.hpp"
#include "oqtlab/thermo.hpp"

namespace oqtlab::engine {

using models::HamiltonianModel;

struct EngineRunSettings {
    double t0 = 0.0;
    double t1 = 1.0;
    double sample_dt = 0.01;
    int substeps = 4;            // RK4 steps per sample interval
    double weight_floor = 1e-13; // drop ensemble members below this weight
    bool enforce_recurrence_guard = true;
    std::vector<double> checkpoint_times; // assemble the full rho here
};

struct EngineRun {
    thermo::ThermoTrace trace;
    std::vector<Mat> system_states;   // reduced rho_S at the sample times
    std::vector<Mat> checkpoints;     // full rho at requested times
    std::vector<double> checkpoint_times;
    double recurrence_time = 0;
    double s_sigma_0 = 0;             // S^Sigma at t0
    double dropped_weight = 0;
};

// Initial state: rho_S (x) truncated reservoir Gibbs. rho_S is either a pure
// basis state of the system or the system Gibbs state at beta_sys — both
// diagonal, so rho_0 is diagonal in the composite occupation basis.
struct InitialState {
    enum class Kind { PureIndex, SystemGibbs } kind = Kind::PureIndex;
    int index = 0;
    double beta_sys = 1.0;
};

namespace detail {

inline double occupation_energy(const composite::CompositeBasis& b, std::uint64_t key, int reg) {
    const auto& rg = b.registers[reg];
    const std::uint64_t occ = b.occ_of(key, reg);
    double e = 0;
    for (int k = 0; k < rg.modes; ++k)
        if (occ >> k & 1) e += rg.energies[k];
    return e;
}

} // namespace detail

inline EngineRun run_hamiltonian_engine(const HamiltonianModel& m, const InitialState& init,
                                        const EngineRunSettings& set) {
    const auto& b = *m.basis;
    const int dim = b.dim();
    const int n_res = int(m.reservoirs.size());
    require(set.t1 > set.t0 && set.sample_dt > 0, "engine: bad time window");

    EngineRun out;
    out.recurrence_time = m.recurrence_time();
    if (set.enforce_recurrence_guard)
        require(set.t1 - set.t0 <= 0.5 * out.recurrence_time + 1e-12,
                "engine: window exceeds 0.5 * T_recur = " +
                    std::to_string(0.5 * out.recurrence_time) +
                    " (finite grids are quasi-periodic; refuse conclusions past the guard)");

    // ensemble weights: rho_S (x) truncated reservoir Gibbs, all diagonal
    std::vector<double> sys_weight(b.sys_dim, 0.0);
    if (init.kind == InitialState::Kind::PureIndex) {
        require(init.index >= 0 && init.index < b.sys_dim, "engine: bad system index");
        sys_weight[init.index] = 1.0;
    } else {
        double z = 0;
        for (int i = 0; i < b.sys_dim; ++i) {
            sys_weight[i] = std::exp(-init.beta_sys * m.system.energies[i]);
            z += sys_weight[i];
        }
        for (auto& w : sys_weight) w /= z;
    }
    std::vector<double> res_weight(dim, 0.0);
    double zres = 0;
    for (int i = 0; i < dim; ++i) {
        double e = 0;
        for (int r = 0; r < n_res; ++r)
            e += m.reservoirs[r].beta * detail::occupation_energy(b, b.states[i], r);
        res_weight[i] = std::exp(-e);
        if (b.sys_of(b.states[i], 0) == 0) zres += res_weight[i];
    }
    // reference ln rho_ref = -sum beta_r H^{R_r} - ln Z_trunc (identity on the system)
    std::vector<double> ln_ref(dim);
    for (int i = 0; i < dim; ++i) ln_ref[i] = std::log(res_weight[i] / zres);

    std::vector<int> members;
    std::vector<double> weights;
    double kept = 0;
    for (int i = 0; i < dim; ++i) {
        const double w = sys_weight[b.sys_of(b.states[i], 0)] * res_weight[i] / zres;
        if (w >= set.weight_floor) {
            members.push_back(i);
            weights.push_back(w);
            kept += w;
        }
    }
    out.dropped_weight = std::max(0.0, 1.0 - kept);

    // S^Sigma(0) exactly, and its constant part: along unitary evolution
    // Tr rho ln rho is conserved, so S(t) = S(0) - sum_r beta_r (E_r(t) - E_r(0)).
    double s0 = 0;
    for (std::size_t j = 0; j < members.size(); ++j)
        s0 += -weights[j] * (std::log(weights[j]) - ln_ref[members[j]]);
    out.s_sigma_0 = s0;

    // batch of ensemble columns
    const int kcols = int(members.size());
    Mat psi = Mat::Zero(dim, kcols);
    for (int j = 0; j < kcols; ++j) psi(members[j], j) = 1.0;

    // observables
    std::vector<SpMat> comm_q; // i [H^{R_r}, v_r]
    for (int r = 0; r < n_res; ++r) {
        SpMat c = ii * (m.h_res[r] * m.v_res[r] - m.v_res[r] * m.h_res[r]);
        comm_q.push_back(c);
    }

    auto expect = [&](const SpMat& op) {
        double acc = 0;
        Mat tmp = op * psi;
        for (int j = 0; j < kcols; ++j) acc += weights[j] * std::real(psi.col(j).dot(tmp.col(j)));
        return acc;
    };
    // reduced system state: pair indices across system values with equal occupations
    std::vector<std::vector<int>> partner(b.sys_dim, std::vector<int>(dim, -1));
    for (int i = 0; i < dim; ++i)
        for (int sv = 0; sv < b.sys_dim; ++sv)
            partner[sv][i] = b.index(b.with_sys(b.states[i], 0, sv));
    auto reduced = [&]() {
        Mat rho = Mat::Zero(b.sys_dim, b.sys_dim);
        for (int j = 0; j < kcols; ++j)
            for (int i = 0; i < dim; ++i) {
                const int si = b.sys_of(b.states[i], 0);
                for (int sv = 0; sv < b.sys_dim; ++sv) {
                    const int ip = partner[sv][i];
                    if (ip >= 0)
                        rho(si, sv) += weights[j] * psi(i, j) * std::conj(psi(ip, j));
                }
            }
        return rho;
    };
    auto full_rho = [&]() {
        Mat rho = Mat::Zero(dim, dim);
        for (int j = 0; j < kcols; ++j)
            rho.noalias() += weights[j] * (psi.col(j) * psi.col(j).adjoint());
        return rho;
    };

    const int n_samples = int(std::lround((set.t1 - set.t0) / set.sample_dt)) + 1;
    auto& tr = out.trace;
    tr.dq_dt.assign(n_res, {});
    tr.e_res.assign(n_res, {});
    std::vector<double> e_res0(n_res, 0.0);

    std::size_t next_checkpoint = 0;
    const double hstep = set.sample_dt / set.substeps;
    for (int sidx = 0; sidx < n_samples; ++sidx) {
        const double t = set.t0 + sidx * set.sample_dt;
        // sample
        tr.t.push_back(t);
        const double drv = m.system.drive.value(t);
        double usig = drv * expect(m.h_sys);
        for (int r = 0; r < n_res; ++r)
            usig += m.g * m.envelopes[r].value(t) * expect(m.v_res[r]);
        tr.u_sigma.push_back(usig);
        double s_now = s0;
        for (int r = 0; r < n_res; ++r) {
            const double er = expect(m.h_res[r]);
            tr.e_res[r].push_back(er);
            if (sidx == 0) e_res0[r] = er;
            s_now -= m.reservoirs[r].beta * (er - e_res0[r]);
            tr.dq_dt[r].push_back(m.g * m.envelopes[r].value(t) * expect(comm_q[r]));
        }
        tr.entropy.push_back(s_now);
        double darate = m.system.drive.derivative(t) * expect(m.h_sys);
        for (int r = 0; r < n_res; ++r)
            darate += m.g * m.envelopes[r].derivative(t) * expect(m.v_res[r]);
        tr.da_dt.push_back(darate);
        out.system_states.push_back(reduced());
        while (next_checkpoint < set.checkpoint_times.size() &&
               std::abs(set.checkpoint_times[next_checkpoint] - t) < 0.5 * set.sample_dt) {
            out.checkpoints.push_back(full_rho());
            out.checkpoint_times.push_back(t);
            ++next_checkpoint;
        }
        if (sidx + 1 == n_samples) break;
        // advance one sample interval (matrix-free RK4 stages)
        auto apply = [&](double tt, const Mat& x) -> Mat {
            Mat y = m.h_res_total * x;
            y.noalias() += cplx(m.system.drive.value(tt)) * (m.h_sys * x);
            for (int r = 0; r < n_res; ++r)
                y.noalias() += cplx(m.g * m.envelopes[r].value(tt)) * (m.v_res[r] * x);
            return cplx(0, -1) * y;
        };
        for (int ss = 0; ss < set.substeps; ++ss) {
            const double tt = t + ss * hstep;
            Mat k1 = apply(tt, psi);
            Mat k2 = apply(tt + hstep / 2, psi + (hstep / 2) * k1);
            Mat k3 = apply(tt + hstep / 2, psi + (hstep / 2) * k2);
            Mat k4 = apply(tt + hstep, psi + hstep * k3);
            psi += (hstep / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
        }
    }
    return out;
}

// Frobenius periodicity defect ||rho(t + tau*) - rho(t)||_F / ||rho||_F from
// two checkpoints.
inline double periodicity_defect(const Mat& rho_a, const Mat& rho_b) {
    return (rho_a - rho_b).norm() / std::max(1e-300, rho_b.norm());
}

} // namespace oqtlab::engine
