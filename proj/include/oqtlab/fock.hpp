// fock.hpp — finite-mode fermionic Fock space: occupation bases with optional
// particle-number cap, Jordan-Wigner creation/annihilation, second
// quantization, and parity.
#pragma once

#include <bit>
#include <cstdint>
#include <limits>
#include <memory>
#include <unordered_map>
#include <vector>

#include "oqtlab/core.hpp"

namespace oqtlab::fock {

// Number shift tag for operators without a definite shift.
inline constexpr int mixed_shift = std::numeric_limits<int>::min();

struct ModeSet {
    std::vector<cplx> energies;          // real physical energies, or u+theta when deformed
    std::vector<int> reservoir_tag;      // partition of modes by reservoir
    int count() const { return int(energies.size()); }

    void validate() const {
        require(count() >= 1, "ModeSet: need at least one mode");
        require(reservoir_tag.empty() || int(reservoir_tag.size()) == count(),
                "ModeSet: reservoir tags must cover all modes");
    }
};

// Occupation bitstrings in canonical order: sorted by (popcount, numeric value).
// Sector blocks (fixed particle number) are therefore contiguous.
struct FockBasis {
    int modes = 0;
    int n_max = -1; // -1: no cap
    std::vector<std::uint64_t> states;
    std::unordered_map<std::uint64_t, int> index_of;
    std::vector<int> sector_offset; // sector n occupies [offset[n], offset[n+1])

    int dim() const { return int(states.size()); }
    int sector(int i) const { return std::popcount(states[i]); }
    int index(std::uint64_t s) const {
        auto it = index_of.find(s);
        return it == index_of.end() ? -1 : it->second;
    }
};

inline FockBasis make_fock_basis(int m, int n_max = -1) {
    require(m >= 1 && m <= 62, "make_fock_basis: mode count out of range");
    FockBasis b;
    b.modes = m;
    b.n_max = n_max;
    const int cap = (n_max < 0 || n_max > m) ? m : n_max;
    b.sector_offset.assign(cap + 2, 0);
    for (int n = 0; n <= cap; ++n) {
        b.sector_offset[n] = int(b.states.size());
        // enumerate n-bit subsets of m modes in increasing numeric order
        if (n == 0) {
            b.states.push_back(0);
        } else {
            std::uint64_t v = (std::uint64_t(1) << n) - 1;
            const std::uint64_t last = v << (m - n);
            while (true) {
                b.states.push_back(v);
                if (v == last) break;
                std::uint64_t t = v | (v - 1); // next bit-permutation (Gosper)
                v = (t + 1) | (((~t & -~t) - 1) >> (std::countr_zero(v) + 1));
            }
        }
    }
    b.sector_offset[cap + 1] = int(b.states.size());
    for (int i = 0; i < b.dim(); ++i) b.index_of.emplace(b.states[i], i);
    return b;
}

struct FockOperator {
    SpMat mat;
    std::shared_ptr<const FockBasis> basis;
    int number_shift = 0; // +1 creator, -1 annihilator, 0 diagonal, mixed_shift otherwise

    int dim() const { return int(mat.rows()); }
};

namespace detail {

inline int jw_sign(std::uint64_t state, int k) {
    const std::uint64_t below = state & ((std::uint64_t(1) << k) - 1);
    return (std::popcount(below) & 1) ? -1 : 1;
}

inline SpMat from_triplets(int rows, int cols, std::vector<Eigen::Triplet<cplx>>& trips,
                           double prune = 1e-15) {
    SpMat m(rows, cols);
    m.setFromTriplets(trips.begin(), trips.end());
    m.prune([prune](int, int, const cplx& v) { return std::abs(v) > prune; });
    m.makeCompressed();
    return m;
}

} // namespace detail

// b(f) = sum_k conj(f_k) b_k with the Jordan-Wigner sign (-1)^{#occupied below k};
// antilinear in f.
inline FockOperator annihilator(const std::shared_ptr<const FockBasis>& basis, const Vec& f) {
    require(int(f.size()) == basis->modes, "annihilator: amplitude count != mode count");
    std::vector<Eigen::Triplet<cplx>> trips;
    for (int i = 0; i < basis->dim(); ++i) {
        const std::uint64_t s = basis->states[i];
        for (int k = 0; k < basis->modes; ++k) {
            if (!(s >> k & 1) || f(k) == cplx(0)) continue;
            const int j = basis->index(s & ~(std::uint64_t(1) << k));
            if (j < 0) continue;
            trips.emplace_back(j, i, std::conj(f(k)) * double(detail::jw_sign(s, k)));
        }
    }
    return {detail::from_triplets(basis->dim(), basis->dim(), trips), basis, -1};
}

// b*(f): adjoint of annihilator, linear in f, number shift +1.
inline FockOperator creator(const std::shared_ptr<const FockBasis>& basis, const Vec& f) {
    require(int(f.size()) == basis->modes, "creator: amplitude count != mode count");
    std::vector<Eigen::Triplet<cplx>> trips;
    for (int i = 0; i < basis->dim(); ++i) {
        const std::uint64_t s = basis->states[i];
        for (int k = 0; k < basis->modes; ++k) {
            if ((s >> k & 1) || f(k) == cplx(0)) continue;
            const int j = basis->index(s | (std::uint64_t(1) << k));
            if (j < 0) continue; // truncated away by the particle-number cap
            trips.emplace_back(j, i, f(k) * double(detail::jw_sign(s, k)));
        }
    }
    return {detail::from_triplets(basis->dim(), basis->dim(), trips), basis, +1};
}

// dGamma(h): diagonal with eigenvalue sum_{k occupied} h_k.
inline FockOperator second_quantize(const std::shared_ptr<const FockBasis>& basis, const Vec& h) {
    require(int(h.size()) == basis->modes, "second_quantize: energy count != mode count");
    std::vector<Eigen::Triplet<cplx>> trips;
    for (int i = 0; i < basis->dim(); ++i) {
        cplx e = 0;
        const std::uint64_t s = basis->states[i];
        for (int k = 0; k < basis->modes; ++k)
            if (s >> k & 1) e += h(k);
        if (e != cplx(0)) trips.emplace_back(i, i, e);
    }
    return {detail::from_triplets(basis->dim(), basis->dim(), trips), basis, 0};
}

// theta = Gamma(-1) = (-1)^N.
inline FockOperator parity(const std::shared_ptr<const FockBasis>& basis) {
    std::vector<Eigen::Triplet<cplx>> trips;
    for (int i = 0; i < basis->dim(); ++i)
        trips.emplace_back(i, i, (basis->sector(i) & 1) ? -1.0 : 1.0);
    return {detail::from_triplets(basis->dim(), basis->dim(), trips), basis, 0};
}

inline FockOperator number_operator(const std::shared_ptr<const FockBasis>& basis) {
    return second_quantize(basis, Vec::Ones(basis->modes));
}

} // namespace oqtlab::fock
