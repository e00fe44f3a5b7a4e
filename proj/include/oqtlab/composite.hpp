// composite.hpp — product basis for (system slots) x (fermionic registers)
// with a total particle-number cap and optional charge-sector restriction,
// plus one-pass builders for the spin⊗fermion operator products every
// generator in the lab is assembled from.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "oqtlab/core.hpp"
#include "oqtlab/fock.hpp"

namespace oqtlab::composite {

// Layout of one register of fermionic glued/physical modes inside the packed key.
struct Register {
    int modes = 0;
    int bit_offset = 0;
    std::vector<double> energies;   // grid energies, one per mode
    std::vector<double> weights;    // quadrature weights
    int positive_count() const {
        int c = 0;
        for (double u : energies) c += (u > 0);
        return c;
    }
};

// Basis states are packed into 64 bits: system slot indices in the low bits
// (4 bits each), then one bit per fermionic mode.
struct CompositeBasis {
    int sys_dim = 1;
    int sys_slots = 0; // 1 for the Hamiltonian engine, 2 for the doubled space
    std::vector<Register> registers;
    int n_max = -1;

    // Charge filters. signed_charge: q_l - q_r + N_+ - N_- (doubled space).
    // total_charge: q + N (Hamiltonian engine). Values below are kept if set.
    std::optional<int> signed_charge_sector;
    std::optional<int> total_charge_sector;

    std::vector<std::uint64_t> states;
    std::unordered_map<std::uint64_t, int> index_of;

    int dim() const { return int(states.size()); }
    int index(std::uint64_t key) const {
        auto it = index_of.find(key);
        return it == index_of.end() ? -1 : it->second;
    }

    int sys_of(std::uint64_t key, int slot) const { return int(key >> (4 * slot)) & 0xf; }
    std::uint64_t occ_of(std::uint64_t key, int r) const {
        return (key >> registers[r].bit_offset) & ((std::uint64_t(1) << registers[r].modes) - 1);
    }
    std::uint64_t with_sys(std::uint64_t key, int slot, int v) const {
        return (key & ~(std::uint64_t(0xf) << (4 * slot))) | (std::uint64_t(v) << (4 * slot));
    }
    std::uint64_t with_occ(std::uint64_t key, int r, std::uint64_t occ) const {
        const std::uint64_t mask = ((std::uint64_t(1) << registers[r].modes) - 1)
                                   << registers[r].bit_offset;
        return (key & ~mask) | (occ << registers[r].bit_offset);
    }

    int total_n(std::uint64_t key) const {
        int n = 0;
        for (int r = 0; r < int(registers.size()); ++r) n += std::popcount(occ_of(key, r));
        return n;
    }
    int signed_mode_charge(std::uint64_t key) const {
        int q = 0;
        for (int r = 0; r < int(registers.size()); ++r) {
            const std::uint64_t occ = occ_of(key, r);
            for (int k = 0; k < registers[r].modes; ++k)
                if (occ >> k & 1) q += registers[r].energies[k] > 0 ? 1 : -1;
        }
        return q;
    }
    int signed_charge(std::uint64_t key) const {
        return sys_of(key, 0) - (sys_slots > 1 ? sys_of(key, 1) : 0) + signed_mode_charge(key);
    }
    int total_charge(std::uint64_t key) const { return sys_of(key, 0) + total_n(key); }
};

inline std::shared_ptr<const CompositeBasis>
make_composite_basis(int sys_dim, int sys_slots, const std::vector<Register>& regs_in, int n_max,
                     std::optional<int> signed_sector = std::nullopt,
                     std::optional<int> total_sector = std::nullopt) {
    require(sys_dim >= 1 && sys_dim <= 16, "composite basis: system dimension out of range");
    require(sys_slots == 1 || sys_slots == 2, "composite basis: need 1 or 2 system slots");
    auto b = std::make_shared<CompositeBasis>();
    b->sys_dim = sys_dim;
    b->sys_slots = sys_slots;
    b->registers = regs_in;
    b->n_max = n_max;
    b->signed_charge_sector = signed_sector;
    b->total_charge_sector = total_sector;
    int offset = 4 * sys_slots;
    for (auto& r : b->registers) {
        require(r.modes >= 0 && int(r.energies.size()) == r.modes, "composite basis: register shape");
        r.bit_offset = offset;
        offset += r.modes;
        require(offset <= 62, "composite basis: too many total modes for the packed key");
    }

    // Enumerate register occupations with total N <= n_max (per-register Fock
    // bases provide canonical sector-ordered bitstrings).
    std::vector<fock::FockBasis> per_reg;
    for (auto& r : b->registers)
        per_reg.push_back(fock::make_fock_basis(std::max(r.modes, 1),
                                                n_max < 0 ? -1 : std::min(n_max, r.modes)));

    std::function<void(std::size_t, std::uint64_t, int)> rec =
        [&](std::size_t r, std::uint64_t key, int used) {
            if (r == b->registers.size()) {
                for (int s0 = 0; s0 < sys_dim; ++s0) {
                    std::uint64_t k1 = b->with_sys(key, 0, s0);
                    if (sys_slots == 1) {
                        b->states.push_back(k1);
                    } else {
                        for (int s1 = 0; s1 < sys_dim; ++s1)
                            b->states.push_back(b->with_sys(k1, 1, s1));
                    }
                }
                return;
            }
            for (auto occ : per_reg[r].states) {
                if (b->registers[r].modes == 0 && occ != 0) continue;
                const int n = std::popcount(occ);
                if (n_max >= 0 && used + n > n_max) continue;
                rec(r + 1, b->with_occ(key, int(r), occ), used + n);
            }
        };
    rec(0, 0, 0);

    if (signed_sector || total_sector) {
        std::vector<std::uint64_t> kept;
        for (auto k : b->states) {
            if (signed_sector && b->signed_charge(k) != *signed_sector) continue;
            if (total_sector && b->total_charge(k) != *total_sector) continue;
            kept.push_back(k);
        }
        b->states = std::move(kept);
    }
    require(!b->states.empty(), "composite basis: sector restriction left no states");
    for (int i = 0; i < b->dim(); ++i) b->index_of.emplace(b->states[i], i);
    return b;
}

enum class ModeAction { Create, Annihilate };

namespace detail {

inline int jw_sign(std::uint64_t occ, int k) {
    return (std::popcount(occ & ((std::uint64_t(1) << k) - 1)) & 1) ? -1 : 1;
}

} // namespace detail

// Accumulates  prefactor * [sys matrix on `slot`] ⊗ (-1)^{N_r * parity} *
// sum_k amps[k] b^#_{r,k}  into `trips`. The amplitude vector is used
// literally: callers pass analytically continued (creator) or
// Schwarz-conjugated (annihilator) values themselves.
inline void add_spin_mode_term(std::vector<Eigen::Triplet<cplx>>& trips, const CompositeBasis& b,
                               int slot, const Mat& sys_op, int reg, const std::vector<cplx>& amps,
                               ModeAction action, bool with_parity, cplx prefactor) {
    require(int(amps.size()) == b.registers[reg].modes, "add_spin_mode_term: amplitude count");
    const int m = b.registers[reg].modes;
    for (int i = 0; i < b.dim(); ++i) {
        const std::uint64_t key = b.states[i];
        const std::uint64_t occ = b.occ_of(key, reg);
        const int s_in = b.sys_of(key, slot);
        for (int k = 0; k < m; ++k) {
            if (amps[k] == cplx(0)) continue;
            const bool occupied = occ >> k & 1;
            if (action == ModeAction::Create ? occupied : !occupied) continue;
            const std::uint64_t occ2 = occ ^ (std::uint64_t(1) << k);
            cplx coeff = prefactor * amps[k] * double(detail::jw_sign(occ, k));
            if (with_parity && (std::popcount(occ2) & 1)) coeff = -coeff; // (-1)^{N_r} after b^#
            const std::uint64_t key_occ = b.with_occ(key, reg, occ2);
            for (int s_out = 0; s_out < b.sys_dim; ++s_out) {
                const cplx sv = sys_op(s_out, s_in);
                if (sv == cplx(0)) continue;
                const int j = b.index(b.with_sys(key_occ, slot, s_out));
                if (j < 0) continue; // truncated by N cap or sector filter
                trips.emplace_back(j, i, coeff * sv);
            }
        }
    }
}

// prefactor * [sys matrix acting on `slot`], identity elsewhere.
inline void add_sys_term(std::vector<Eigen::Triplet<cplx>>& trips, const CompositeBasis& b, int slot,
                         const Mat& sys_op, cplx prefactor) {
    for (int i = 0; i < b.dim(); ++i) {
        const std::uint64_t key = b.states[i];
        const int s_in = b.sys_of(key, slot);
        for (int s_out = 0; s_out < b.sys_dim; ++s_out) {
            const cplx v = sys_op(s_out, s_in);
            if (v == cplx(0)) continue;
            const int j = b.index(b.with_sys(key, slot, s_out));
            if (j >= 0) trips.emplace_back(j, i, prefactor * v);
        }
    }
}

// Diagonal sum over occupied modes of `weights` (dGamma on one register).
inline void add_mode_diag(std::vector<Eigen::Triplet<cplx>>& trips, const CompositeBasis& b, int reg,
                          const std::vector<cplx>& weights, cplx prefactor) {
    require(int(weights.size()) == b.registers[reg].modes, "add_mode_diag: weight count");
    for (int i = 0; i < b.dim(); ++i) {
        const std::uint64_t occ = b.occ_of(b.states[i], reg);
        cplx e = 0;
        for (int k = 0; k < b.registers[reg].modes; ++k)
            if (occ >> k & 1) e += weights[k];
        if (e != cplx(0)) trips.emplace_back(i, i, prefactor * e);
    }
}

inline SpMat assemble(const CompositeBasis& b, std::vector<Eigen::Triplet<cplx>>& trips,
                      double prune = 1e-15) {
    SpMat m(b.dim(), b.dim());
    m.setFromTriplets(trips.begin(), trips.end());
    m.prune([prune](int, int, const cplx& v) { return std::abs(v) > prune; });
    m.makeCompressed();
    return m;
}

// Expectation of a sparse operator in a (not necessarily normalized) vector.
inline cplx expectation(const SpMat& op, const Vec& psi) {
    return psi.dot(op * psi) / psi.squaredNorm();
}

} // namespace oqtlab::composite
