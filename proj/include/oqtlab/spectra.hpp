// spectra.hpp — non-Hermitian spectral toolkit: dense eigendecomposition with
// residuals, Riesz contour projections, Feshbach reduction, level-shift
// operators, quasi-generator reduction, and the second-order resonance
// machinery for the two-level model.
#pragma once

#include <algorithm>
#include <complex>
#include <optional>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SparseLU>

#include "oqtlab/models.hpp"

namespace oqtlab::spectra {

using models::CnSpec;
using models::LiouVariant;
using models::LiouvilleanModel;

// ---------------------------------------------------------------------------
// Eigendecomposition
// ---------------------------------------------------------------------------

struct Eigendecomposition {
    Vec eigenvalues;
    Mat right;           // columns are right eigenvectors (normalized)
    std::optional<Mat> left; // rows' adjoints: left(:,j) with left_j^H A = lambda_j left_j^H
    RVec residuals;      // ||A v - lambda v|| per pair
};

inline Eigendecomposition eigendecompose(const Mat& a, bool want_left = false,
                                         double tol_scale = 1e-9) {
    require(a.rows() == a.cols(), "eigendecompose: square matrix required");
    for (int j = 0; j < a.cols(); ++j)
        for (int i = 0; i < a.rows(); ++i)
            require(is_finite(a(i, j)), "eigendecompose: non-finite entry");
    Eigen::ComplexEigenSolver<Mat> es(a, true);
    if (es.info() != Eigen::Success)
        throw lab_error("eigendecompose: QR iteration failed to converge (index " +
                        std::to_string(int(es.info())) + ")");
    Eigendecomposition out;
    out.eigenvalues = es.eigenvalues();
    out.right = es.eigenvectors();
    const double anorm = std::max(1e-300, a.cwiseAbs().maxCoeff());
    out.residuals.resize(a.rows());
    for (int j = 0; j < a.cols(); ++j) {
        out.residuals(j) = (a * out.right.col(j) - out.eigenvalues(j) * out.right.col(j)).norm();
        require(out.residuals(j) <= tol_scale * anorm * a.rows(),
                "eigendecompose: residual above tolerance");
    }
    if (want_left) {
        Eigen::ComplexEigenSolver<Mat> esl(Mat(a.adjoint()), true);
        require(esl.info() == Eigen::Success, "eigendecompose: left eigenproblem failed");
        // pair left vectors with the conjugate eigenvalues of A^H
        Mat left(a.rows(), a.cols());
        std::vector<bool> used(a.cols(), false);
        for (int j = 0; j < a.cols(); ++j) {
            int best = -1;
            double bd = 1e300;
            for (int k = 0; k < a.cols(); ++k) {
                if (used[k]) continue;
                double d = std::abs(std::conj(esl.eigenvalues()(k)) - out.eigenvalues(j));
                if (d < bd) {
                    bd = d;
                    best = k;
                }
            }
            used[best] = true;
            left.col(j) = esl.eigenvectors().col(best);
        }
        out.left = left;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Riesz spectral projection by contour quadrature
// ---------------------------------------------------------------------------

struct SpectralProjection {
    cplx center;
    double radius = 0;
    int nodes = 0;
    Mat p;
    int enclosed = 0; // rank estimate = round(trace P)
};

// P = (1/2 pi i) \oint (z - A)^{-1} dz over the circle, trapezoidal rule.
// An eigenvalue within ~1e-6 * radius of the contour shows up as a resolvent
// norm spike and is rejected.
inline SpectralProjection contour_projection(const Mat& a, cplx center, double radius,
                                             int nodes = 64) {
    require(radius > 0 && nodes >= 8, "contour_projection: bad contour");
    const int n = int(a.rows());
    Mat p = Mat::Zero(n, n);
    const double spike = 1.0 / (1e-6 * radius);
    for (int k = 0; k < nodes; ++k) {
        const double phi = 2.0 * pi * (k + 0.5) / nodes;
        const cplx z = center + radius * std::exp(ii * phi);
        Eigen::PartialPivLU<Mat> lu(z * Mat::Identity(n, n) - a);
        Mat r = lu.solve(Mat::Identity(n, n));
        require(r.cwiseAbs().maxCoeff() < spike,
                "contour_projection: resolvent norm spike — eigenvalue on or near the contour");
        // dz = i radius e^{i phi} dphi; (1/2 pi i) sum r dz
        p += (radius * std::exp(ii * phi) / double(nodes)) * r;
    }
    SpectralProjection out;
    out.center = center;
    out.radius = radius;
    out.nodes = nodes;
    out.p = p;
    out.enclosed = int(std::lround(p.trace().real()));
    return out;
}

// ---------------------------------------------------------------------------
// Feshbach map
// ---------------------------------------------------------------------------

// F_{P,z}(A) = [P(A-z)P - P A Pbar (A_Pbar - z)^{-1} Pbar A P] restricted to Ran P.
// P may be oblique. The restriction uses an orthonormal frame of Ran P.
struct FeshbachResult {
    Mat f;        // the reduced matrix on Ran P (in the returned frame)
    Mat frame;    // columns: orthonormal basis of Ran P
};

inline Mat range_frame(const Mat& p, double rank_tol = 1e-10) {
    Eigen::JacobiSVD<Mat> svd(p, Eigen::ComputeThinU);
    int r = 0;
    while (r < svd.singularValues().size() &&
           svd.singularValues()(r) > rank_tol * svd.singularValues()(0))
        ++r;
    return svd.matrixU().leftCols(r);
}

inline FeshbachResult feshbach_map(const Mat& a, const Mat& p, cplx z) {
    const int n = int(a.rows());
    require(p.rows() == n && p.cols() == n, "feshbach_map: projection shape");
    require(sup_abs(p * p - p) < 1e-8 * (1 + sup_abs(p)), "feshbach_map: P is not a projection");
    const Mat pbar = Mat::Identity(n, n) - p;
    const Mat a_pbar = pbar * a * pbar;
    // (A_Pbar - z) restricted to Ran Pbar must be invertible (F1): solve on the full
    // space with the complement regularized away from Ran Pbar.
    Mat frame_bar = range_frame(pbar);
    Mat ab = frame_bar.adjoint() * a_pbar * frame_bar;
    Eigen::PartialPivLU<Mat> lu(ab - z * Mat::Identity(ab.rows(), ab.cols()));
    const double rcond_probe = (lu.matrixLU().diagonal().cwiseAbs().minCoeff());
    require(rcond_probe > 1e-13 * (1 + sup_abs(ab)),
            "feshbach_map: (A_Pbar - z) numerically singular (F1 violated)");
    Mat inv_bar = frame_bar * lu.solve(Mat(frame_bar.adjoint()));

    Mat full = p * (a - z * Mat::Identity(n, n)) * p - p * a * pbar * inv_bar * pbar * a * p;
    FeshbachResult out;
    out.frame = range_frame(p);
    out.f = out.frame.adjoint() * full * out.frame;
    return out;
}

// ---------------------------------------------------------------------------
// Level-shift operator with epsilon extrapolation
// ---------------------------------------------------------------------------

struct LevelShift {
    Mat gamma;        // extrapolated Gamma~(lambda -/+ i eps) on the frame of Ran P
    Mat re, im;       // Hermitian parts: PV-type and Golden-Rule-type
    Mat frame;
    double extrapolation_residual = 0;
};

// Gamma~(lambda) = P W (A_Pbar - lambda)^{-1} W P with the +-i eps limits
// Richardson-extrapolated over the given epsilon ladder (eps, eps/2, ...).
inline LevelShift level_shift_operator(const Mat& a0, const Mat& w, const Mat& p, cplx lambda,
                                       const std::vector<double>& eps_seq) {
    const int n = int(a0.rows());
    require(!eps_seq.empty(), "level_shift_operator: empty epsilon sequence");
    require(sup_abs(p * (w * p)) < 1e-12 * (1 + sup_abs(w)),
            "level_shift_operator: PWP must vanish (first-order shift present)");
    const Mat pbar = Mat::Identity(n, n) - p;
    const Mat a_pbar = pbar * a0 * pbar;
    Mat frame = range_frame(p);
    Mat frame_bar = range_frame(pbar);
    Mat ab = frame_bar.adjoint() * a_pbar * frame_bar;
    Mat wp = frame_bar.adjoint() * (w * frame); // Pbar W P in frames

    // Richardson table in eps^2 for the symmetrized/antisymmetrized resolvents.
    std::vector<Mat> re_tab, im_tab;
    for (double eps : eps_seq) {
        Eigen::PartialPivLU<Mat> lup(ab - (lambda + ii * eps) * Mat::Identity(ab.rows(), ab.cols()));
        Eigen::PartialPivLU<Mat> lum(ab - (lambda - ii * eps) * Mat::Identity(ab.rows(), ab.cols()));
        Mat gp = frame.adjoint() * w.adjoint() * frame_bar * lup.solve(wp);
        Mat gm = frame.adjoint() * w.adjoint() * frame_bar * lum.solve(wp);
        re_tab.push_back(0.5 * (gp + gm));
        im_tab.push_back((gp - gm) / (2.0 * ii));
    }
    auto richardson = [](std::vector<Mat> t) {
        const int m = int(t.size());
        for (int k = 1; k < m; ++k)
            for (int j = m - 1; j >= k; --j) {
                const double f = std::pow(4.0, k); // ratio-2 ladder, even powers
                t[j] = (f * t[j] - t[j - 1]) / (f - 1.0);
            }
        return t;
    };
    std::vector<Mat> re_r = richardson(re_tab), im_r = richardson(im_tab);
    LevelShift out;
    out.frame = frame;
    out.re = re_r.back();
    out.im = im_r.back();
    out.gamma = out.re + ii * out.im;
    if (re_tab.size() >= 2)
        out.extrapolation_residual =
            std::max(sup_abs(re_r.back() - re_r[re_r.size() - 2]),
                     sup_abs(im_r.back() - im_r[im_r.size() - 2]));
    return out;
}

// ---------------------------------------------------------------------------
// Quasi-generator reduction (Prop 6.5 structure)
// ---------------------------------------------------------------------------

// Quasi-generator on Ran P0: Sigma_g = T^{-1/2} M T^{-1/2} with
// T = P0 P_g P0 and M = P0 P_g A P_g P0 (restricted). This is
// S (P_g A P_g) S^{-1} for S = T^{-1/2} P0 P_g, so its eigenvalues are the
// eigenvalues of A enclosed by P_g. Requires ||P_g - P0|| < 1.
inline Mat reduce_to_quasi_generator(const Mat& a_deformed, const Mat& p0, const Mat& pg) {
    Mat frame = range_frame(p0);
    Mat t = frame.adjoint() * p0 * pg * p0 * frame;
    Mat mm = frame.adjoint() * p0 * pg * a_deformed * pg * p0 * frame;
    // ||P_g - P0|| < 1 (Prop 6.4 regime): validated via the operator 2-norm
    Eigen::JacobiSVD<Mat> svd(pg - p0);
    require(svd.singularValues()(0) < 1.0,
            "reduce_to_quasi_generator: ||P_g - P0|| >= 1, reduction undefined");
    // principal square root of T (near identity)
    Eigen::ComplexEigenSolver<Mat> es(t);
    require(es.info() == Eigen::Success, "reduce_to_quasi_generator: eigensolver failed");
    Vec sq = es.eigenvalues().array().sqrt();
    Mat v = es.eigenvectors();
    Eigen::PartialPivLU<Mat> lu(v);
    Mat id = Mat::Identity(t.rows(), t.cols());
    Mat tinvhalf = v * sq.cwiseInverse().asDiagonal() * lu.solve(id);
    return tinvhalf * mm * tinvhalf;
}

// ---------------------------------------------------------------------------
// Second-order resonances of the two-level glued model
// ---------------------------------------------------------------------------

struct ResonanceEntry {
    std::string label;       // "E0", "E1", "E2", "E3"
    cplx numeric;            // eigenvalue of the deformed matrix
    cplx grid_second_order;  // exact second-order coefficient prediction on the model grid
    cplx continuum_second_order; // closed-form PV + delta prediction (theta -> 0 reference)
    double delta_nmax = 0;   // |numeric(N_max) - numeric(N_max + 1)|
    bool spurious = false;   // Im(numeric) above tol_pos (growth artifact)
};

struct ResonanceReport {
    double g = 0;
    double t = 0;
    cplx theta;
    std::string variant;
    std::vector<ResonanceEntry> entries;
};

namespace detail {

// Exact degenerate second-order block of the deformed generator: with the free
// part diagonal, Gamma_jk = sum_m W_jm W_mk / (E - L0_mm) over the complement.
inline Mat grid_lso_block(const SpMat& l0_diag_sp, const Mat& w, const std::vector<int>& block,
                          cplx e_ref) {
    const int n = int(w.rows());
    Vec d = Vec::Zero(n);
    for (int k = 0; k < l0_diag_sp.outerSize(); ++k)
        for (SpMat::InnerIterator it(l0_diag_sp, k); it; ++it)
            if (it.row() == it.col()) d(it.row()) = it.value();
    std::vector<char> in_block(n, 0);
    for (int i : block) in_block[i] = 1;
    Mat gam = Mat::Zero(int(block.size()), int(block.size()));
    for (std::size_t aj = 0; aj < block.size(); ++aj)
        for (std::size_t ak = 0; ak < block.size(); ++ak) {
            cplx acc = 0;
            for (int mth = 0; mth < n; ++mth) {
                if (in_block[mth]) continue;
                const cplx den = e_ref - d(mth);
                if (w(block[aj], mth) == cplx(0) || w(mth, block[ak]) == cplx(0)) continue;
                acc += w(block[aj], mth) * w(mth, block[ak]) / den;
            }
            gam(int(aj), int(ak)) = acc;
        }
    return gam;
}

} // namespace detail

// Continuum closed forms for the degenerate e = 0 blocks (normalized so their
// eigenvalues are the exact second-order coefficients of this model; see the
// README discussion of the cosh normalization).
inline Mat continuum_degenerate_block(const CnSpec& spec, double t, LiouVariant variant) {
    Mat m2 = Mat::Zero(2, 2);
    auto env = spec.effective_envelopes();
    for (std::size_t r = 0; r < spec.reservoirs.size(); ++r) {
        const auto& rs = spec.reservoirs[r];
        const double k2 = std::norm(reservoirs::glue_form_factor(rs, 2.0, 0.0)) *
                          env[r].value(t) * env[r].value(t);
        const double a = rs.beta * (2.0 - rs.nu) / 2.0;
        const double c = k2 / std::cosh(a);
        if (variant == LiouVariant::Standard) {
            m2(0, 0) += c * std::exp(-a); // ground-ground component (basis: |gg>, |ee>)
            m2(0, 1) += -c;
            m2(1, 0) += -c;
            m2(1, 1) += c * std::exp(a);
        } else {
            // asymmetric block of the adjoint C-Liouvillean: columns sum to zero
            // (left kernel (1,1)), right kernel the Gibbs populations
            m2(0, 0) += c * std::exp(-a);
            m2(0, 1) += -c * std::exp(a);
            m2(1, 0) += -c * std::exp(-a);
            m2(1, 1) += c * std::exp(a);
        }
    }
    return cplx(0, -pi) * m2;
}

// E_{2,3}: Lamb shift PV int_0^inf sum_i ||f~_i(u,t)||^2/(2-u) du and width
// pi sum_i ||f~_i(2,t)||^2 (emission and absorption channels).
inline cplx continuum_coherence_shift(const CnSpec& spec, double t, int sign_e) {
    double pv = 0, width = 0;
    auto env = spec.effective_envelopes();
    for (std::size_t r = 0; r < spec.reservoirs.size(); ++r) {
        const auto& rs = spec.reservoirs[r];
        const double e2 = env[r].value(t) * env[r].value(t);
        auto f2 = [&](double u) {
            return e2 * std::norm(reservoirs::glue_form_factor(rs, u, 0.0));
        };
        const double ucut = spec.grids[r].half_range;
        pv += reservoirs::principal_value_integral(f2, 0.0, ucut, 40000, 2.0);
        width += e2 * std::norm(reservoirs::glue_form_factor(rs, 2.0, 0.0));
    }
    return cplx(double(sign_e) * pv, -pi * width);
}

// Numeric resonances of the deformed two-level model paired with second-order
// predictions. The grid-level prediction uses the exact LSO of the assembled
// matrix (same grid, same theta-shifted denominators), so the difference is a
// pure O(g^4) remainder; the continuum closed forms are reported alongside.
inline ResonanceReport second_order_resonances_cn(const CnSpec& spec, double g, double t,
                                                  LiouVariant variant,
                                                  std::optional<cplx> theta_opt = std::nullopt,
                                                  bool stabilization = true) {
    require(spec.system.dim == 2, "second_order_resonances_cn: d = 2 system required");
    require(std::abs(spec.system.energies[1] - spec.system.energies[0] - 2.0) < 1e-12,
            "second_order_resonances_cn: system gap must be 2 (H^S = sigma_3)");
    double f2sum = 0;
    for (auto& rs : spec.reservoirs)
        f2sum += std::norm(reservoirs::glue_form_factor(rs, 2.0, t));
    require(f2sum > 0, "Fermi Golden Rule violated: no reservoir couples at u = 2 (C_n.2)");

    const cplx theta = theta_opt ? *theta_opt : models::default_theta(spec);
    ResonanceReport rep;
    rep.g = g;
    rep.t = t;
    rep.theta = theta;
    rep.variant = variant == LiouVariant::Standard ? "standard" : "c_adjoint";

    struct Sector {
        int q;
        std::vector<std::string> labels;
        std::vector<cplx> e_free;
    };
    // E_{0,1} live in Q' = 0 (populations), E_3 = +2 in Q' = +1, E_2 = -2 in Q' = -1.
    std::vector<Sector> sectors = {{0, {"E0", "E1"}, {0.0, 0.0}},
                                   {+1, {"E3"}, {2.0}},
                                   {-1, {"E2"}, {-2.0}}};

    for (const auto& sec : sectors) {
        auto m = models::build_liouvillean_model(spec, g, theta, variant, sec.q);
        Mat l = Mat(m.matrix(t));
        Eigen::ComplexEigenSolver<Mat> es(l, false);
        require(es.info() == Eigen::Success, "second_order_resonances_cn: eigensolver failed");

        // second-order prediction from the exact grid LSO
        Mat w = Mat(m.interaction(t));
        std::vector<int> block;
        for (int i = 0; i < m.basis->dim(); ++i) {
            const auto key = m.basis->states[i];
            if (m.basis->total_n(key) != 0) continue;
            const double e = spec.system.energies[m.basis->sys_of(key, 0)] -
                             spec.system.energies[m.basis->sys_of(key, 1)];
            if (std::abs(e - sec.e_free[0].real()) < 1e-12) block.push_back(i);
        }
        require(int(block.size()) == int(sec.labels.size()),
                "second_order_resonances_cn: unexpected degenerate block");
        Mat gam = detail::grid_lso_block(m.l_free, w, block, sec.e_free[0]);
        Eigen::ComplexEigenSolver<Mat> esg(gam);
        std::vector<cplx> pred;
        for (int j = 0; j < gam.rows(); ++j)
            pred.push_back(sec.e_free[0] + g * g * esg.eigenvalues()(j));

        // continuum references
        std::vector<cplx> cont;
        if (sec.q == 0) {
            Mat cb = continuum_degenerate_block(spec, t, variant);
            Eigen::ComplexEigenSolver<Mat> esc(cb);
            std::vector<cplx> ev = {esc.eigenvalues()(0), esc.eigenvalues()(1)};
            std::sort(ev.begin(), ev.end(),
                      [](cplx x, cplx y) { return std::abs(x) < std::abs(y); });
            for (auto v : ev) cont.push_back(g * g * v);
        } else {
            cont.push_back(cplx(sec.e_free[0].real(), 0) +
                           g * g * continuum_coherence_shift(spec, t, sec.q));
        }
        // sort predictions consistently (|Im| ascending, matching E0 before E1)
        std::vector<int> order(pred.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[int(i)] = int(i);
        std::sort(order.begin(), order.end(), [&](int x, int y) {
            return std::abs(pred[x].imag()) < std::abs(pred[y].imag());
        });

        for (std::size_t jj = 0; jj < sec.labels.size(); ++jj) {
            const cplx pd = pred[order[jj]];
            // nearest numeric eigenvalue, tie-broken by smaller |Im|
            int best = -1;
            double bd = 1e300;
            for (int k = 0; k < es.eigenvalues().size(); ++k) {
                double dsc = std::abs(es.eigenvalues()(k) - pd);
                if (dsc < bd - 1e-15 ||
                    (dsc < bd + 1e-15 && best >= 0 &&
                     std::abs(es.eigenvalues()(k).imag()) < std::abs(es.eigenvalues()(best).imag()))) {
                    bd = dsc;
                    best = k;
                }
            }
            ResonanceEntry ent;
            ent.label = sec.labels[jj];
            ent.numeric = es.eigenvalues()(best);
            ent.grid_second_order = pd;
            ent.continuum_second_order = cont[std::min(jj, cont.size() - 1)];
            // no spurious growth beyond the finite-theta seam scale of the widths
            const double tol_pos = 1e-9 + 0.5 * g * g * pi * f2sum;
            ent.spurious = ent.numeric.imag() > tol_pos;
            rep.entries.push_back(ent);
        }
    }

    if (stabilization) {
        // N_max + 1 stabilization via targeted inverse iteration around each numeric value
        CnSpec spec2 = spec;
        spec2.n_max = spec.n_max < 0 ? -1 : spec.n_max + 1;
        if (spec.n_max >= 0) {
            for (auto& ent : rep.entries) {
                const int q = ent.label == "E3" ? 1 : (ent.label == "E2" ? -1 : 0);
                auto m2 = models::build_liouvillean_model(spec2, g, theta, variant, q);
                SpMat l2 = m2.matrix(t);
                // shifted inverse iteration
                const cplx shift = ent.numeric + cplx(1e-8, 1e-8);
                SpMat a = l2;
                for (int i = 0; i < a.rows(); ++i) a.coeffRef(i, i) -= shift;
                a.makeCompressed();
                Eigen::SparseLU<SpMat> lu(a);
                require(lu.info() == Eigen::Success, "stabilization: factorization failed");
                Vec v = Vec::Ones(a.rows()).normalized();
                cplx mu = 0;
                for (int it = 0; it < 60; ++it) {
                    Vec v2 = lu.solve(v);
                    v2.normalize();
                    mu = v2.dot(l2 * v2);
                    if ((l2 * v2 - mu * v2).norm() < 1e-11 * (1 + std::abs(mu))) {
                        v = v2;
                        break;
                    }
                    v = v2;
                }
                ent.delta_nmax = std::abs(mu - ent.numeric);
            }
        }
    }
    return rep;
}

} // namespace oqtlab::spectra
