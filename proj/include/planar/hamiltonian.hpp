#pragma once

// Ising-type Hamiltonians as sums of spin monomials. Nearest-neighbour Ising,
// the generalized Ising model with a quartic bond-bond kernel, and two coupled
// Ising fields with a quartic interaction (Ashkin-Teller, eight-vertex or a
// general kernel) all reduce to the same representation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "planar/errors.hpp"
#include "planar/lattice.hpp"

namespace planar {

struct CouplingParams {
    double J = 1.0;
    double J_prime = 1.0;
    double lambda = 0.0;
    double J4 = 0.0;
    double beta = 1.0;

    void validate() const {
        for (double v : {J, J_prime, lambda, J4, beta})
            if (!std::isfinite(v)) throw ConfigError("coupling parameters must be finite");
        if (!(beta > 0)) throw ConfigError("beta must be positive");
    }
};

enum class QuarticVariant { ashkin_teller, eight_vertex, kernel };

// v_dir(d) with d = x - y the displacement between the two bonds' origins.
struct KernelTerm {
    int dx = 0;
    int dy = 0;
    int dir = 0;
    double value = 0.0;
};

class SpinHamiltonian {
public:
    explicit SpinHamiltonian(int spin_count, double constant = 0.0)
        : spin_count_(spin_count), constant_(constant) {}

    int spin_count() const { return spin_count_; }
    double constant() const { return constant_; }
    std::size_t monomial_count() const { return coeff_.size(); }

    // Adds coeff * prod s_i. Repeated indices cancel (s^2 = 1); a fully
    // cancelled monomial becomes part of the constant.
    void add(double coeff, std::span<const int> spins) {
        std::array<int, 4> idx{};
        int n = 0;
        for (int s : spins) {
            if (s < 0 || s >= spin_count_) throw ConfigError("monomial spin index out of range");
            int* end = idx.data() + n;
            int* it = std::find(idx.data(), end, s);
            if (it != end) {
                std::copy(it + 1, end, it);
                --n;
            } else {
                if (n == 4) throw ConfigError("monomials are limited to four spins");
                idx[n++] = s;
            }
        }
        if (n == 0) {
            constant_ += coeff;
            return;
        }
        coeff_.push_back(coeff);
        order_.push_back(static_cast<std::uint8_t>(n));
        spins_.push_back(idx);
        finalized_ = false;
    }
    void add(double coeff, std::initializer_list<int> spins) {
        add(coeff, std::span<const int>(spins.begin(), spins.size()));
    }

    double energy(std::span<const std::int8_t> s) const {
        check_size(s);
        double e = constant_;
        for (std::size_t m = 0; m < coeff_.size(); ++m) e += coeff_[m] * product(m, s);
        return e;
    }

    // Energy change when spin i is flipped.
    double flip_delta(std::span<const std::int8_t> s, int i) const {
        if (!finalized_) throw NumericError("SpinHamiltonian::finalize() not called");
        double d = 0.0;
        for (int k = offsets_[i]; k < offsets_[i + 1]; ++k) {
            const int m = incidence_[k];
            d += coeff_[m] * product(m, s);
        }
        return -2.0 * d;
    }

    // Builds the spin -> monomial incidence lists used by flip_delta.
    void finalize() {
        offsets_.assign(spin_count_ + 1, 0);
        for (std::size_t m = 0; m < coeff_.size(); ++m)
            for (int k = 0; k < order_[m]; ++k) ++offsets_[spins_[m][k] + 1];
        for (int i = 0; i < spin_count_; ++i) offsets_[i + 1] += offsets_[i];
        incidence_.assign(offsets_.back(), 0);
        std::vector<int> fill(offsets_.begin(), offsets_.end() - 1);
        for (std::size_t m = 0; m < coeff_.size(); ++m)
            for (int k = 0; k < order_[m]; ++k) incidence_[fill[spins_[m][k]]++] = static_cast<int>(m);
        finalized_ = true;
    }

private:
    double product(std::size_t m, std::span<const std::int8_t> s) const {
        int p = 1;
        for (int k = 0; k < order_[m]; ++k) p *= s[spins_[m][k]];
        return p;
    }
    void check_size(std::span<const std::int8_t> s) const {
        if (static_cast<int>(s.size()) != spin_count_)
            throw ConfigError("spin vector has " + std::to_string(s.size()) + " entries, expected " +
                              std::to_string(spin_count_));
    }

    int spin_count_;
    double constant_;
    std::vector<double> coeff_;
    std::vector<std::uint8_t> order_;
    std::vector<std::array<int, 4>> spins_;
    std::vector<int> offsets_, incidence_;
    bool finalized_ = false;
};

namespace detail {
inline void check_kernel(const PeriodicSquare& g, std::span<const KernelTerm> kernel) {
    const int half = g.size() / 2;
    for (const auto& t : kernel) {
        if (t.dir != 0 && t.dir != 1) throw ConfigError("kernel direction must be 0 or 1");
        if (std::abs(t.dx) >= half || std::abs(t.dy) >= half)
            throw ConfigError("kernel range must stay below L/2 (L=" + std::to_string(g.size()) + ")");
        if (!std::isfinite(t.value)) throw ConfigError("kernel values must be finite");
    }
}

inline void add_nearest_neighbour(SpinHamiltonian& h, const PeriodicSquare& g, double J, int offset) {
    for (int x = 0; x < g.site_count(); ++x)
        for (int dir = 0; dir < 2; ++dir) h.add(-J, {offset + x, offset + g.neighbor(x, dir)});
}
}  // namespace detail

// H_J(sigma) = -J sum_x (s_x s_{x+e0} + s_x s_{x+e1}).
inline SpinHamiltonian ising_hamiltonian(const PeriodicSquare& g, double J) {
    SpinHamiltonian h(g.site_count());
    detail::add_nearest_neighbour(h, g, J, 0);
    h.finalize();
    return h;
}

// H = H_J + lambda * sum_j sum_{x,y} v_j(x-y) s_x s_{x+e_j} s_y s_{y+e_j}.
inline SpinHamiltonian generalized_ising_hamiltonian(const PeriodicSquare& g, double J, double lambda,
                                                     std::span<const KernelTerm> kernel) {
    detail::check_kernel(g, kernel);
    SpinHamiltonian h(g.site_count());
    detail::add_nearest_neighbour(h, g, J, 0);
    for (const auto& t : kernel)
        for (int x = 0; x < g.site_count(); ++x) {
            const int y = g.shift(x, -t.dx, -t.dy);
            h.add(lambda * t.value, {x, g.neighbor(x, t.dir), y, g.neighbor(y, t.dir)});
        }
    h.finalize();
    return h;
}

// H(s, s') = H_J(s) + H_J'(s') - lambda V(s, s') - J4 on the packed layout
// [sigma | sigma'].
//   ashkin_teller: V = sum_j sum_x s_x s_{x+ej} s'_x s'_{x+ej}
//   eight_vertex:  V = sum_x s_{x+e0} s_{x+e0+e1} s'_{x+e1} s'_{x+e0+e1}  (one term per face)
//   kernel:        V = sum_j sum_{x,y} v_j(x-y) s_x s_{x+ej} s'_y s'_{y+ej}
inline SpinHamiltonian coupled_ising_hamiltonian(const PeriodicSquare& g, const CouplingParams& p,
                                                 QuarticVariant variant,
                                                 std::span<const KernelTerm> kernel = {}) {
    p.validate();
    const int n = g.site_count();
    SpinHamiltonian h(2 * n, -p.J4);
    detail::add_nearest_neighbour(h, g, p.J, 0);
    detail::add_nearest_neighbour(h, g, p.J_prime, n);
    switch (variant) {
        case QuarticVariant::ashkin_teller:
            for (int x = 0; x < n; ++x)
                for (int dir = 0; dir < 2; ++dir) {
                    const int y = g.neighbor(x, dir);
                    h.add(-p.lambda, {x, y, n + x, n + y});
                }
            break;
        case QuarticVariant::eight_vertex:
            for (int x = 0; x < n; ++x)
                h.add(-p.lambda, {g.shift(x, 1, 0), g.shift(x, 1, 1), n + g.shift(x, 0, 1), n + g.shift(x, 1, 1)});
            break;
        case QuarticVariant::kernel:
            detail::check_kernel(g, kernel);
            for (const auto& t : kernel)
                for (int x = 0; x < n; ++x) {
                    const int y = g.shift(x, -t.dx, -t.dy);
                    h.add(-p.lambda * t.value, {x, g.neighbor(x, t.dir), n + y, n + g.neighbor(y, t.dir)});
                }
            break;
    }
    h.finalize();
    return h;
}

inline double hamiltonian_coupled(const PeriodicSquare& g, const SpinPairConfig& config,
                                  const CouplingParams& p, QuarticVariant variant,
                                  std::span<const KernelTerm> kernel = {}) {
    if (config.sigma.size() != g.site_count() || config.sigma_prime.size() != g.site_count())
        throw ConfigError("spin configuration does not match the lattice");
    const auto packed = config.packed();
    return coupled_ising_hamiltonian(g, p, variant, kernel).energy(packed);
}

}  // namespace planar
