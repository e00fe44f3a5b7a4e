// core.hpp — shared scalar types, tolerances, small numeric helpers
#pragma once

#include <complex>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace oqtlab {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<cplx>;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr cplx ii{0.0, 1.0};

// Thrown by every validation and numerical failure path in the library.
class lab_error : public std::runtime_error {
public:
    explicit lab_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw lab_error(msg);
}

inline bool is_finite(cplx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

inline double sup_abs(const Mat& a) { return a.cwiseAbs().maxCoeff(); }

// Seeded RNG used by all randomized tests and sweeps; default seed 0.
struct Rng {
    std::mt19937_64 gen;
    explicit Rng(std::uint64_t seed = 0) : gen(seed) {}
    double uniform(double a = 0.0, double b = 1.0) {
        return std::uniform_real_distribution<double>(a, b)(gen);
    }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen); }
    cplx cnormal() { return cplx(normal(), normal()) / std::sqrt(2.0); }
    Mat random_matrix(int n) {
        Mat a(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) a(i, j) = cnormal();
        return a;
    }
    Mat random_hermitian(int n) {
        Mat a = random_matrix(n);
        return 0.5 * (a + Mat(a.adjoint()));
    }
    Vec random_vector(int n) {
        Vec v(n);
        for (int i = 0; i < n; ++i) v(i) = cnormal();
        return v;
    }
};

// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size() && x.size() >= 2, "fit_slope: need >= 2 points");
    double n = double(x.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i]; sy += y[i]; sxx += x[i] * x[i]; sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Hermitian matrix function via spectral decomposition, with overflow guard
// (spectrum shifted so the largest exponent is 0 before exponentiating).
inline Mat herm_exp(const Mat& h, double scale) {
    Eigen::SelfAdjointEigenSolver<Mat> es(h);
    require(es.info() == Eigen::Success, "herm_exp: eigensolver failed");
    RVec lam = es.eigenvalues();
    double shift = (scale * lam.array()).maxCoeff();
    RVec w = ((scale * lam.array()) - shift).exp();
    return es.eigenvectors() * w.asDiagonal() * es.eigenvectors().adjoint() * std::exp(shift);
}

// exp(scale*h) applied to a vector, Hermitian h, normalized result optional.
inline Vec herm_exp_apply(const Mat& h, double scale, const Vec& v, bool normalize) {
    Eigen::SelfAdjointEigenSolver<Mat> es(h);
    require(es.info() == Eigen::Success, "herm_exp_apply: eigensolver failed");
    Vec c = es.eigenvectors().adjoint() * v;
    RVec lam = es.eigenvalues();
    double shift = (scale * lam.array()).maxCoeff();
    for (int i = 0; i < c.size(); ++i) c(i) *= std::exp(scale * lam(i) - shift);
    Vec out = es.eigenvectors() * c;
    if (normalize) {
        double n = out.norm();
        require(n > 0, "herm_exp_apply: zero result");
        out /= n;
    } else {
        out *= std::exp(shift);
    }
    return out;
}

// Scaling-and-squaring matrix exponential for general complex matrices.
// Diagonal Pade(6,6) core at tolerance ~1e-12 for scaled norm <= 0.5.
inline Mat expm(const Mat& a) {
    const int n = int(a.rows());
    double nrm = a.cwiseAbs().rowwise().sum().maxCoeff();
    int squarings = 0;
    Mat as = a;
    if (nrm > 0.5) {
        squarings = std::max(0, int(std::ceil(std::log2(nrm / 0.5))));
        as = a / std::pow(2.0, squarings);
    }
    static const double b[] = {17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.};
    Mat a2 = as * as, a4 = a2 * a2, a6 = a4 * a2;
    Mat u = as * (b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * Mat::Identity(n, n));
    Mat v = b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * Mat::Identity(n, n);
    Mat r = (v - u).partialPivLu().solve(v + u);
    for (int i = 0; i < squarings; ++i) r = r * r;
    return r;
}

} // namespace oqtlab
