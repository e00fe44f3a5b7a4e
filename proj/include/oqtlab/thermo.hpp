// thermo.hpp — thermodynamic accounting: internal energy, heat fluxes, work
// rate, relative entropy against the reservoir Gibbs reference, entropy-rate
// identity, first-law residuals, and per-cycle reports.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "oqtlab/core.hpp"

namespace oqtlab::thermo {

// U^Sigma(t) = Tr(rho H^Sigma(t)).
inline double internal_energy(const Mat& rho, const Mat& h_sigma) {
    require(rho.rows() == h_sigma.rows(), "internal_energy: dimension mismatch");
    require(std::abs(rho.trace().real() - 1.0) < 1e-10 && std::abs(rho.trace().imag()) < 1e-10,
            "internal_energy: trace(rho) != 1");
    require(sup_abs(rho - rho.adjoint()) < 1e-8 * (1 + sup_abs(rho)),
            "internal_energy: rho not Hermitian");
    const cplx u = (rho * h_sigma).trace();
    require(std::abs(u.imag()) < 1e-10 * (1 + std::abs(u)), "internal_energy: non-real expectation");
    return u.real();
}

// delta Q^{R_i}/dt = i Tr(rho [H^{R_i}, g V(t)]).
inline double heat_flux(const Mat& rho, const Mat& h_res, const Mat& v_t, double g) {
    require(rho.rows() == h_res.rows() && rho.rows() == v_t.rows(), "heat_flux: basis mismatch");
    const cplx q = ii * (rho * (h_res * v_t - v_t * h_res)).trace() * g;
    require(std::abs(q.imag()) < 1e-10 * (1 + std::abs(q)), "heat_flux: non-real flux");
    return q.real();
}

// delta A/dt = Tr(rho dH^Sigma/dt).
inline double work_rate(const Mat& rho, const Mat& dh_sigma_dt) {
    require(rho.rows() == dh_sigma_dt.rows(), "work_rate: dimension mismatch");
    const cplx w = (rho * dh_sigma_dt).trace();
    require(std::abs(w.imag()) < 1e-10 * (1 + std::abs(w)), "work_rate: non-real rate");
    return w.real();
}

// Tr rho ln rho with an eigenvalue floor at 1e-30. The floor biases the
// entropy upward (|S| shrinks): floored zero eigenvalues contribute ~0 to
// rho ln rho but keep the logarithm finite.
inline double trace_rho_log_rho(const Mat& rho) {
    Eigen::SelfAdjointEigenSolver<Mat> es(rho);
    require(es.info() == Eigen::Success, "trace_rho_log_rho: eigensolver failed");
    double acc = 0;
    for (int i = 0; i < es.eigenvalues().size(); ++i) {
        const double lam = std::max(es.eigenvalues()(i), 1e-30);
        acc += lam * std::log(lam);
    }
    return acc;
}

inline double von_neumann_entropy(const Mat& rho) { return -trace_rho_log_rho(rho); }

// S^Sigma = -k Tr(rho [ln rho - ln rho_ref]) with k_B = 1 and rho_ref the
// initial reservoir Gibbs factor extended by the identity on the system.
// Pass ln_rho_ref directly (it is diagonal in every use here).
inline double relative_entropy_system(const Mat& rho_full, const Mat& ln_rho_ref) {
    require(rho_full.rows() == ln_rho_ref.rows(), "relative_entropy_system: dimension mismatch");
    Eigen::SelfAdjointEigenSolver<Mat> es(rho_full);
    require(es.info() == Eigen::Success, "relative_entropy_system: eigensolver failed");
    require(es.eigenvalues().minCoeff() > -1e-10, "relative_entropy_system: rho not positive");
    const double s1 = trace_rho_log_rho(rho_full);
    const cplx s2 = (rho_full * ln_rho_ref).trace();
    return -(s1 - s2.real());
}

// Partial trace over the second factor of H_A (x) H_B.
inline Mat partial_trace_b(const Mat& rho, int da, int db) {
    require(rho.rows() == da * db, "partial_trace_b: dimension mismatch");
    Mat out = Mat::Zero(da, da);
    for (int i = 0; i < da; ++i)
        for (int j = 0; j < da; ++j)
            for (int k = 0; k < db; ++k) out(i, j) += rho(i * db + k, j * db + k);
    return out;
}

inline Mat partial_trace_a(const Mat& rho, int da, int db) {
    require(rho.rows() == da * db, "partial_trace_a: dimension mismatch");
    Mat out = Mat::Zero(db, db);
    for (int i = 0; i < db; ++i)
        for (int j = 0; j < db; ++j)
            for (int k = 0; k < da; ++k) out(i, j) += rho(k * db + i, k * db + j);
    return out;
}

// Relative entropy S(rho || sigma) = Tr rho (ln rho - ln sigma) >= 0.
inline double relative_entropy(const Mat& rho, const Mat& sigma) {
    Eigen::SelfAdjointEigenSolver<Mat> es(sigma);
    require(es.info() == Eigen::Success, "relative_entropy: eigensolver failed");
    require(es.eigenvalues().minCoeff() > 0, "relative_entropy: reference not full rank");
    Mat lns = es.eigenvectors() * es.eigenvalues().array().log().matrix().asDiagonal() *
              es.eigenvectors().adjoint();
    return trace_rho_log_rho(rho) - (rho * lns).trace().real();
}

// ---------------------------------------------------------------------------
// Trajectory-level accounting
// ---------------------------------------------------------------------------

struct ThermoTrace {
    std::vector<double> t;
    std::vector<double> u_sigma;                 // internal energy
    std::vector<std::vector<double>> dq_dt;      // per reservoir heat flux (into Sigma)
    std::vector<std::vector<double>> e_res;      // per reservoir <H^{R_i}>
    std::vector<double> da_dt;                   // work rate
    std::vector<double> entropy;                 // S^Sigma(t)
    std::vector<double> first_law_residual;      // |dU/dt - sum dQ - dA| (5-pt differences)
    std::vector<double> entropy_rate_residual;   // |dS/dt - sum (1/T_i) dQ_i|
    int reservoirs() const { return int(dq_dt.size()); }

    double scale() const {
        double sc = 1e-300;
        for (double v : u_sigma) sc = std::max(sc, std::abs(v));
        for (auto& q : dq_dt)
            for (double v : q) sc = std::max(sc, std::abs(v));
        for (double v : da_dt) sc = std::max(sc, std::abs(v));
        return sc;
    }
};

// 5-point central first derivative on a uniform grid (matches the integrator order).
inline std::vector<double> derivative5(const std::vector<double>& y, double h) {
    const int n = int(y.size());
    require(n >= 5, "derivative5: need >= 5 samples");
    std::vector<double> d(n, 0.0);
    for (int i = 2; i + 2 < n; ++i)
        d[i] = (y[i - 2] - 8 * y[i - 1] + 8 * y[i + 1] - y[i + 2]) / (12 * h);
    // one-sided 4th order at the edges
    auto edge = [&](int i, int s) {
        return s *
               (-25 * y[i] + 48 * y[i + s] - 36 * y[i + 2 * s] + 16 * y[i + 3 * s] -
                3 * y[i + 4 * s]) /
               (12 * h);
    };
    d[0] = edge(0, 1);
    d[1] = (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]) / (12 * h);
    d[n - 1] = edge(n - 1, -1);
    d[n - 2] = -(-3 * y[n - 1] - 10 * y[n - 2] + 18 * y[n - 3] - 6 * y[n - 4] + y[n - 5]) / (12 * h);
    return d;
}

// Fill the residual columns of a trace whose raw columns are populated.
// first law: dU/dt = sum_i dQ_i/dt + dA/dt;
// entropy rate: dS/dt = sum_i (1/T_i) dQ_i/dt (Clausius form, k_B = 1).
inline void finalize_residuals(ThermoTrace& tr, const std::vector<double>& temperatures) {
    const int n = int(tr.t.size());
    require(n >= 5, "finalize_residuals: need >= 5 samples");
    require(int(temperatures.size()) == tr.reservoirs(), "finalize_residuals: one T per reservoir");
    const double h = tr.t[1] - tr.t[0];
    auto du = derivative5(tr.u_sigma, h);
    auto ds = derivative5(tr.entropy, h);
    tr.first_law_residual.assign(n, 0.0);
    tr.entropy_rate_residual.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double qsum = 0, qt = 0;
        for (int r = 0; r < tr.reservoirs(); ++r) {
            qsum += tr.dq_dt[r][i];
            qt += tr.dq_dt[r][i] / temperatures[r];
        }
        tr.first_law_residual[i] = std::abs(du[i] - qsum - tr.da_dt[i]);
        tr.entropy_rate_residual[i] = std::abs(ds[i] - qt);
    }
}

// Pointwise residual series of Sdot = sum (1/T_i) dQ_i/dt.
inline std::vector<double> entropy_rate_identity(const ThermoTrace& tr,
                                                 const std::vector<double>& temperatures) {
    ThermoTrace copy = tr;
    finalize_residuals(copy, temperatures);
    return copy.entropy_rate_residual;
}

struct CycleReport {
    double tau_star = 0;
    int cycles_measured = 0;
    std::vector<double> dq;      // per reservoir, integrated over the last full cycle
    double da = 0;
    double du = 0;
    double ds = 0;
    double clausius = 0;         // sum dQ_i / T_i
    double eta = 0;              // dA_out / dQ_hot when the engine does work
    double eta_rev = 0;          // 1 - T_cold / T_hot
    bool eta_defined = false;
    int hot_index = -1;          // reservoir releasing heat in the cycle
    bool hot_matches_temperature = true;
    double periodicity_defect = 0;
    bool converged = false;      // defect below threshold ("transient" otherwise)
};

// Integrate the last full cycle of a trace sampled on a uniform grid.
// "Hot" is identified per cycle by the sign of the integrated heat, with a
// consistency flag against the temperature labels.
inline CycleReport cycle_report(const ThermoTrace& tr, const std::vector<double>& temperatures,
                                double tau_star, double periodicity_defect,
                                double defect_threshold = 1e-3) {
    CycleReport rep;
    rep.tau_star = tau_star;
    rep.periodicity_defect = periodicity_defect;
    rep.converged = periodicity_defect < defect_threshold;
    const double h = tr.t[1] - tr.t[0];
    const int per_cycle = int(std::lround(tau_star / h));
    require(per_cycle >= 8, "cycle_report: sampling too coarse for the period");
    const int n = int(tr.t.size());
    require(n > per_cycle + 1, "cycle_report: trajectory shorter than one cycle");
    const int i1 = n - 1;
    const int i0 = i1 - per_cycle;
    rep.cycles_measured = (n - 1) / per_cycle;

    auto integral = [&](const std::vector<double>& y) {
        double acc = 0.5 * (y[i0] + y[i1]);
        for (int i = i0 + 1; i < i1; ++i) acc += y[i];
        return acc * h;
    };
    for (int r = 0; r < tr.reservoirs(); ++r) rep.dq.push_back(integral(tr.dq_dt[r]));
    rep.da = integral(tr.da_dt);
    rep.du = tr.u_sigma[i1] - tr.u_sigma[i0];
    rep.ds = tr.entropy[i1] - tr.entropy[i0];
    rep.clausius = 0;
    for (int r = 0; r < tr.reservoirs(); ++r) rep.clausius += rep.dq[r] / temperatures[r];

    // hot reservoir: the one with dQ_i > 0 (heat flowing out of it into Sigma)
    int hot = -1;
    double best = 0;
    for (int r = 0; r < tr.reservoirs(); ++r)
        if (rep.dq[r] > best) {
            best = rep.dq[r];
            hot = r;
        }
    rep.hot_index = hot;
    if (tr.reservoirs() >= 2) {
        int warmest = 0, coldest = 0;
        for (int r = 1; r < tr.reservoirs(); ++r) {
            if (temperatures[r] > temperatures[warmest]) warmest = r;
            if (temperatures[r] < temperatures[coldest]) coldest = r;
        }
        rep.eta_rev = 1.0 - temperatures[coldest] / temperatures[warmest];
        if (hot >= 0) {
            rep.hot_matches_temperature = (hot == warmest);
            const double da_by_sigma = -rep.da; // work done by the system
            if (da_by_sigma > 0 && rep.dq[hot] > 1e-12) {
                rep.eta = da_by_sigma / rep.dq[hot];
                rep.eta_defined = true;
            }
        }
    }
    return rep;
}

} // namespace oqtlab::thermo
