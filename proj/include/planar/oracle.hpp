#pragma once

// Exact averages on enumerable systems and their comparison with chain
// estimates.

#include <cmath>
#include <string>
#include <vector>

#include "planar/errors.hpp"
#include "planar/montecarlo.hpp"
#include "planar/stats.hpp"

namespace planar {

struct OracleComparison {
    std::string observable;
    double exact = 0.0;
    double estimate = 0.0;
    double error = 0.0;
    double z = 0.0;  // |estimate - exact| / error
    bool pass = false;
};

struct OracleReport {
    std::vector<OracleComparison> rows;
    double sigmas = 3.0;
    bool all_pass() const {
        for (const auto& r : rows)
            if (!r.pass) return false;
        return !rows.empty();
    }
};

// ---------------------------------------------------------------------------
// Spin systems: total energy, m^2 of the first field and, for coupled
// models, the polarization density.

inline std::vector<std::string> spin_oracle_names(int fields) {
    std::vector<std::string> n{"energy", "magnetization_sq"};
    if (fields > 1) n.push_back("polarization");
    return n;
}

inline std::vector<double> spin_oracle_observables(std::span<const std::int8_t> s, double energy, int sites,
                                                   int fields) {
    double m = 0.0;
    for (int x = 0; x < sites; ++x) m += s[x];
    m /= sites;
    std::vector<double> o{energy, m * m};
    if (fields > 1) o.push_back(order_parameter(s, sites, OrderParameter::polarization));
    return o;
}

inline std::vector<double> spin_exact_averages(const McConfig& cfg) {
    cfg.validate();
    if (cfg.model == McModel::interacting_dimer) throw ConfigError("spin oracle needs a spin model");
    const auto h = build_hamiltonian(cfg);
    const int n = h.spin_count();
    if (n > 2 * max_enumerated_spins) throw ConfigError("spin oracle limited to " +
                                                        std::to_string(2 * max_enumerated_spins) + " spins");
    const int fields = field_count(cfg.model);
    const int sites = cfg.L * cfg.L;
    const auto w = spin_boltzmann_weights(h, cfg.params.beta);
    std::vector<std::int8_t> s(n);
    std::vector<double> sum;
    double z = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        for (int k = 0; k < n; ++k) s[k] = (i >> k & 1) ? -1 : 1;
        const auto o = spin_oracle_observables(s, h.energy(s), sites, fields);
        if (sum.empty()) sum.assign(o.size(), 0.0);
        for (std::size_t k = 0; k < o.size(); ++k) sum[k] += w[i] * o[k];
        z += w[i];
    }
    for (double& v : sum) v /= z;
    return sum;
}

inline JackknifeResult spin_chain_averages(const McConfig& cfg, int bins = min_jackknife_bins) {
    const int fields = field_count(cfg.model);
    const int sites = cfg.L * cfg.L;
    BinnedAccumulator acc(bins, spin_oracle_names(fields).size());
    run_spin_chain(cfg, [&](long i, const SpinRecord& r) {
        acc.add(bin_of(i, cfg.measurements, bins), spin_oracle_observables(r.spins, r.energy, sites, fields));
    });
    return jackknife(acc, [](const std::vector<double>& m) { return m; });
}

// ---------------------------------------------------------------------------
// Dimers in the zero-winding sector: density of faces with two parallel
// dimers, density of horizontal dimers, and the longitudinal pair
// <I_b I_b'> for horizontal bonds two sites apart, all translation averaged.

inline std::vector<std::string> dimer_oracle_names() {
    return {"parallel_faces", "horizontal_density", "pair_r2"};
}

inline std::vector<double> dimer_oracle_observables(const TorusLattice& lat, std::span<const std::uint8_t> m,
                                                    int parallel_faces) {
    const int n = lat.vertex_count();
    double hor = 0.0, pair = 0.0;
    for (int v = 0; v < n; ++v) {
        const int b = lat.bond(v, 0);
        hor += m[b];
        pair += m[b] * m[lat.bond(lat.shift(v, 2, 0), 0)];
    }
    return {static_cast<double>(parallel_faces) / lat.face_count(), hor / n, pair / n};
}

inline std::vector<double> dimer_exact_averages(const McConfig& cfg) {
    cfg.validate();
    if (cfg.model != McModel::interacting_dimer) throw ConfigError("dimer oracle needs the dimer model");
    const TorusLattice lat(cfg.L);
    const auto covers = columnar_sector_covers(lat);
    std::vector<double> sum(3, 0.0);
    double z = 0.0;
    for (const auto& c : covers) {
        const double w = dimer_boltzmann_weight(lat, cfg.weights, cfg.dimer_lambda, c);
        const auto o = dimer_oracle_observables(lat, c.matched, count_parallel_faces(lat, c));
        for (int k = 0; k < 3; ++k) sum[k] += w * o[k];
        z += w;
    }
    for (double& v : sum) v /= z;
    return sum;
}

inline JackknifeResult dimer_chain_averages(const McConfig& cfg, int bins = min_jackknife_bins) {
    const TorusLattice lat(cfg.L);
    BinnedAccumulator acc(bins, 3);
    run_interacting_dimer(cfg, [&](long i, const DimerRecord& r) {
        acc.add(bin_of(i, cfg.measurements, bins), dimer_oracle_observables(lat, r.matched, r.parallel_faces));
    });
    return jackknife(acc, [](const std::vector<double>& m) { return m; });
}

// ---------------------------------------------------------------------------

inline OracleReport compare_with_oracle(const std::vector<std::string>& names, const std::vector<double>& exact,
                                        const JackknifeResult& chain, double sigmas = 3.0) {
    OracleReport rep;
    rep.sigmas = sigmas;
    for (std::size_t k = 0; k < names.size(); ++k) {
        OracleComparison c;
        c.observable = names[k];
        c.exact = exact.at(k);
        c.estimate = chain.value.at(k);
        c.error = chain.error.at(k);
        const double d = std::abs(c.estimate - c.exact);
        c.z = c.error > 0 ? d / c.error : (d == 0 ? 0.0 : INFINITY);
        // A vanishing error only passes on exact agreement.
        c.pass = c.error > 0 ? d <= sigmas * c.error : d <= 1e-12;
        rep.rows.push_back(c);
    }
    return rep;
}

// Runs the chain and compares it with exact enumeration.
inline OracleReport oracle_check(const McConfig& cfg, double sigmas = 3.0) {
    if (cfg.model == McModel::interacting_dimer)
        return compare_with_oracle(dimer_oracle_names(), dimer_exact_averages(cfg), dimer_chain_averages(cfg), sigmas);
    return compare_with_oracle(spin_oracle_names(field_count(cfg.model)), spin_exact_averages(cfg),
                               spin_chain_averages(cfg), sigmas);
}

}  // namespace planar
