#pragma once

// Metropolis samplers for the coupled Ising, generalized Ising and
// interacting dimer models, and binned correlation estimators.
//
// Spin models update one site at a time in checkerboard order (even sites,
// then odd sites, field by field). The dimer sampler rotates pairs of
// parallel dimers on elementary faces, again in checkerboard order over
// faces. Plaquette rotations keep the height change around both torus cycles
// fixed, so a chain started from the columnar cover stays in its winding
// sector.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "planar/errors.hpp"
#include "planar/hamiltonian.hpp"
#include "planar/kasteleyn.hpp"
#include "planar/lattice.hpp"
#include "planar/series.hpp"
#include "planar/stats.hpp"

namespace planar {

// ---------------------------------------------------------------------------
// Random numbers

inline constexpr const char* rng_identity =
    "std::mt19937_64 seeded via std::seed_seq{seed_lo32, seed_hi32, stream_lo32, stream_hi32}; "
    "uniform = (x >> 11) * 2^-53";

class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
        gen_.seed(seq);
    }
    std::uint64_t next() { return gen_(); }
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
    int below(int n) { return static_cast<int>(uniform() * n); }

private:
    std::mt19937_64 gen_;
};

// ---------------------------------------------------------------------------
// Configuration

enum class McModel { coupled_ising_at, coupled_ising_8v, coupled_ising_kernel, generalized_ising, interacting_dimer };

inline std::string model_name(McModel m) {
    switch (m) {
        case McModel::coupled_ising_at: return "coupled-AT";
        case McModel::coupled_ising_8v: return "coupled-8V";
        case McModel::coupled_ising_kernel: return "coupled-kernel";
        case McModel::generalized_ising: return "generalized-ising";
        case McModel::interacting_dimer: return "dimer";
    }
    return "?";
}

inline McModel model_from_name(const std::string& s) {
    for (McModel m : {McModel::coupled_ising_at, McModel::coupled_ising_8v, McModel::coupled_ising_kernel,
                      McModel::generalized_ising, McModel::interacting_dimer})
        if (model_name(m) == s) return m;
    throw ConfigError("unknown model '" + s + "'");
}

inline bool is_coupled(McModel m) {
    return m == McModel::coupled_ising_at || m == McModel::coupled_ising_8v || m == McModel::coupled_ising_kernel;
}

struct McConfig {
    McModel model = McModel::coupled_ising_at;
    int L = 8;
    CouplingParams params;            // spin models
    std::vector<KernelTerm> kernel;   // generalized Ising, coupled-kernel
    DimerWeights weights;             // dimers
    double dimer_lambda = 0.0;        // dimers: weight e^{lambda * #faces with two parallel dimers}
    long thermalization = -1;         // sweeps; -1 selects max(10^4, 100 L)
    long measurements = 1000;         // records
    int stride = -1;                  // sweeps between records; -1 selects max(1, L/2)
    std::uint64_t seed = 1;
    std::uint64_t stream = 0;

    long thermalization_sweeps() const { return thermalization >= 0 ? thermalization : std::max(10000L, 100L * L); }
    int stride_sweeps() const { return stride > 0 ? stride : std::max(1, L / 2); }

    void validate() const {
        if (model == McModel::interacting_dimer) {
            if (L < 4 || L % 2 != 0) throw ConfigError("dimer chains need even L >= 4");
            weights.validate();
            if (!std::isfinite(dimer_lambda)) throw ConfigError("dimer lambda must be finite");
        } else {
            if (L < 2) throw ConfigError("spin chains need L >= 2");
            params.validate();
        }
        if (measurements <= 0) throw ConfigError("measurement count must be positive");
        if (thermalization < -1) throw ConfigError("thermalization must be >= 0");
        if (stride == 0 || stride < -1) throw ConfigError("stride must be >= 1");
    }
};

// ---------------------------------------------------------------------------
// Spin models

inline int field_count(McModel m) { return is_coupled(m) ? 2 : 1; }

inline SpinHamiltonian build_hamiltonian(const McConfig& cfg) {
    const PeriodicSquare g(cfg.L);
    switch (cfg.model) {
        case McModel::coupled_ising_at:
            return coupled_ising_hamiltonian(g, cfg.params, QuarticVariant::ashkin_teller);
        case McModel::coupled_ising_8v:
            return coupled_ising_hamiltonian(g, cfg.params, QuarticVariant::eight_vertex);
        case McModel::coupled_ising_kernel:
            return coupled_ising_hamiltonian(g, cfg.params, QuarticVariant::kernel, cfg.kernel);
        case McModel::generalized_ising:
            return generalized_ising_hamiltonian(g, cfg.params.J, cfg.params.lambda, cfg.kernel);
        case McModel::interacting_dimer: break;
    }
    throw ConfigError("not a spin model");
}

struct SpinRecord {
    std::vector<std::int8_t> spins;  // [sigma | sigma'] for coupled models
    double energy = 0.0;
};

class SpinSampler {
public:
    explicit SpinSampler(const McConfig& cfg)
        : grid_(cfg.L), fields_(field_count(cfg.model)), beta_(cfg.params.beta), h_(build_hamiltonian(cfg)),
          rng_(cfg.seed, cfg.stream), spins_(h_.spin_count(), 1) {
        cfg.validate();
        for (int f = 0; f < fields_; ++f)
            for (int p = 0; p < 2; ++p)
                for (int v = 0; v < grid_.site_count(); ++v)
                    if ((grid_.x_of(v) + grid_.y_of(v)) % 2 == p) order_.push_back(f * grid_.site_count() + v);
    }

    void attempt(int i) {
        const double d = h_.flip_delta(spins_, i);
        if (d <= 0.0 || rng_.uniform() < std::exp(-beta_ * d)) spins_[i] = static_cast<std::int8_t>(-spins_[i]);
    }

    // Checkerboard order for L >= 4. At L < 4 every neighbour pair is
    // counted twice and the fixed-order sweep is not ergodic, so the sweep
    // attempts N flips at uniformly drawn spins (the random-site kernel).
    void sweep() {
        if (grid_.size() >= 4) {
            for (int i : order_) attempt(i);
        } else {
            const int n = static_cast<int>(spins_.size());
            for (int k = 0; k < n; ++k) attempt(rng_.below(n));
        }
    }

    const std::vector<std::int8_t>& spins() const { return spins_; }
    double energy() const { return h_.energy(spins_); }
    const SpinHamiltonian& hamiltonian() const { return h_; }
    const PeriodicSquare& grid() const { return grid_; }
    int fields() const { return fields_; }

private:
    PeriodicSquare grid_;
    int fields_;
    double beta_;
    SpinHamiltonian h_;
    Rng rng_;
    std::vector<std::int8_t> spins_;
    std::vector<int> order_;
};

namespace detail {
template <typename Sampler, typename Emit>
void drive(Sampler& s, const McConfig& cfg, Emit&& emit) {
    for (long k = 0; k < cfg.thermalization_sweeps(); ++k) s.sweep();
    const int stride = cfg.stride_sweeps();
    for (long m = 0; m < cfg.measurements; ++m) {
        for (int k = 0; k < stride; ++k) s.sweep();
        emit(m);
    }
}
}  // namespace detail

using SpinSink = std::function<void(long index, const SpinRecord&)>;

inline void run_spin_chain(const McConfig& cfg, const SpinSink& sink) {
    cfg.validate();
    SpinSampler s(cfg);
    SpinRecord rec;
    detail::drive(s, cfg, [&](long m) {
        rec.spins = s.spins();
        rec.energy = s.energy();
        sink(m, rec);
    });
}

inline void run_coupled_ising(const McConfig& cfg, const SpinSink& sink) {
    if (!is_coupled(cfg.model)) throw ConfigError("run_coupled_ising needs a coupled model");
    run_spin_chain(cfg, sink);
}

inline std::vector<SpinRecord> run_coupled_ising(const McConfig& cfg) {
    std::vector<SpinRecord> out;
    out.reserve(cfg.measurements);
    run_coupled_ising(cfg, [&](long, const SpinRecord& r) { out.push_back(r); });
    return out;
}

inline void run_generalized_ising(const McConfig& cfg, const SpinSink& sink) {
    if (cfg.model != McModel::generalized_ising) throw ConfigError("run_generalized_ising needs generalized-ising");
    run_spin_chain(cfg, sink);
}

inline std::vector<SpinRecord> run_generalized_ising(const McConfig& cfg) {
    std::vector<SpinRecord> out;
    out.reserve(cfg.measurements);
    run_generalized_ising(cfg, [&](long, const SpinRecord& r) { out.push_back(r); });
    return out;
}

// ---------------------------------------------------------------------------
// Interacting dimers

struct DimerRecord {
    std::vector<std::uint8_t> matched;
    int parallel_faces = 0;
};

class DimerSampler {
public:
    DimerSampler(const TorusLattice& lat, const DimerWeights& w, double lambda, std::uint64_t seed,
                 std::uint64_t stream)
        : lat_(lat), lambda_(lambda), rng_(seed, stream), cover_(columnar_cover(lat)) {
        w.validate();
        bond_weight_.resize(lat.bond_count());
        for (int b = 0; b < lat.bond_count(); ++b) bond_weight_[b] = w.t[lat.weight_class(b)];
        for (int f = 0; f < lat.face_count(); ++f) parallel_ += parallel(f);
    }
    explicit DimerSampler(const McConfig& cfg)
        : DimerSampler(TorusLattice(cfg.L), cfg.weights, cfg.dimer_lambda, cfg.seed, cfg.stream) {
        cfg.validate();
    }

    // Face f carries two parallel dimers.
    bool parallel(int f) const {
        const auto b = lat_.face_bonds(f);  // bottom, right, top, left
        const auto& m = cover_.matched;
        return (m[b[0]] && m[b[2]]) || (m[b[1]] && m[b[3]]);
    }

    // Boltzmann-weight ratio new/old for rotating face f (0 if not flippable).
    double flip_ratio(int f) {
        if (!parallel(f)) return 0.0;
        const auto b = lat_.face_bonds(f);
        const bool horizontal = cover_.matched[b[0]] != 0;
        const double w = horizontal ? (bond_weight_[b[1]] * bond_weight_[b[3]]) / (bond_weight_[b[0]] * bond_weight_[b[2]])
                                    : (bond_weight_[b[0]] * bond_weight_[b[2]]) / (bond_weight_[b[1]] * bond_weight_[b[3]]);
        if (lambda_ == 0.0) return w;
        const int before = neighbourhood_parallel(f);
        rotate(f);
        const int after = neighbourhood_parallel(f);
        rotate(f);
        return w * std::exp(lambda_ * (after - before));
    }

    void rotate(int f) {
        const auto b = lat_.face_bonds(f);
        for (int k = 0; k < 4; ++k) cover_.matched[b[k]] ^= 1;
    }

    void attempt(int f) {
        if (!parallel(f)) return;
        const double r = flip_ratio(f);
        if (r >= 1.0 || rng_.uniform() < r) {
            const int before = neighbourhood_parallel(f);
            rotate(f);
            parallel_ += neighbourhood_parallel(f) - before;
        }
    }

    // F attempts at uniformly drawn faces. A fixed visiting order would make
    // the chain deterministic whenever every flip is accepted (lambda = 0,
    // uniform weights).
    void sweep() {
        const int F = lat_.face_count();
        for (int k = 0; k < F; ++k) attempt(rng_.below(F));
    }

    const DimerCover& cover() const { return cover_; }
    const TorusLattice& lattice() const { return lat_; }
    int parallel_faces() const { return parallel_; }

private:
    int neighbourhood_parallel(int f) const {
        int n = parallel(f);
        for (Step s : all_steps) n += parallel(lat_.face_neighbor(f, s));
        return n;
    }

    TorusLattice lat_;
    double lambda_;
    Rng rng_;
    DimerCover cover_;
    std::vector<double> bond_weight_;
    int parallel_ = 0;
};

inline int count_parallel_faces(const TorusLattice& lat, const DimerCover& c) {
    int n = 0;
    for (int f = 0; f < lat.face_count(); ++f) {
        const auto b = lat.face_bonds(f);
        n += (c.matched[b[0]] && c.matched[b[2]]) || (c.matched[b[1]] && c.matched[b[3]]);
    }
    return n;
}

// Unnormalized weight prod t_b * e^{lambda * #parallel faces}.
inline double dimer_boltzmann_weight(const TorusLattice& lat, const DimerWeights& w, double lambda,
                                     const DimerCover& c) {
    double x = std::exp(lambda * count_parallel_faces(lat, c));
    for (int b = 0; b < lat.bond_count(); ++b)
        if (c.matched[b]) x *= w.t[lat.weight_class(b)];
    return x;
}

using DimerSink = std::function<void(long index, const DimerRecord&)>;

inline void run_interacting_dimer(const McConfig& cfg, const DimerSink& sink) {
    if (cfg.model != McModel::interacting_dimer) throw ConfigError("run_interacting_dimer needs the dimer model");
    cfg.validate();
    DimerSampler s(cfg);
    DimerRecord rec;
    detail::drive(s, cfg, [&](long m) {
        rec.matched = s.cover().matched;
        rec.parallel_faces = s.parallel_faces();
        sink(m, rec);
    });
}

inline std::vector<DimerRecord> run_interacting_dimer(const McConfig& cfg) {
    std::vector<DimerRecord> out;
    out.reserve(cfg.measurements);
    run_interacting_dimer(cfg, [&](long, const DimerRecord& r) { out.push_back(r); });
    return out;
}

// ---------------------------------------------------------------------------
// Transition matrices for enumerable systems (random-site / random-face
// Metropolis kernels, whose sweeps the samplers above realize sequentially).

using DenseMatrix = std::vector<std::vector<double>>;

// States are all 2^n spin vectors (bit i set: spin i = -1).
inline DenseMatrix spin_transition_matrix(const SpinHamiltonian& h, double beta) {
    const int n = h.spin_count();
    if (n > 2 * max_enumerated_spins) throw ConfigError("too many spins for an explicit transition matrix");
    const std::size_t S = std::size_t{1} << n;
    DenseMatrix T(S, std::vector<double>(S, 0.0));
    std::vector<std::int8_t> s(n);
    for (std::size_t i = 0; i < S; ++i) {
        for (int k = 0; k < n; ++k) s[k] = (i >> k & 1) ? -1 : 1;
        double stay = 1.0;
        for (int k = 0; k < n; ++k) {
            const double p = std::min(1.0, std::exp(-beta * h.flip_delta(s, k))) / n;
            T[i][i ^ (std::size_t{1} << k)] += p;
            stay -= p;
        }
        T[i][i] += stay;
    }
    return T;
}

inline std::vector<double> spin_boltzmann_weights(const SpinHamiltonian& h, double beta) {
    const int n = h.spin_count();
    const std::size_t S = std::size_t{1} << n;
    std::vector<double> w(S);
    std::vector<std::int8_t> s(n);
    for (std::size_t i = 0; i < S; ++i) {
        for (int k = 0; k < n; ++k) s[k] = (i >> k & 1) ? -1 : 1;
        w[i] = std::exp(-beta * h.energy(s));
    }
    return w;
}

// Covers in the winding sector of the columnar state.
inline std::vector<DimerCover> columnar_sector_covers(const TorusLattice& lat) {
    const auto ref = winding(lat, columnar_cover(lat));
    std::vector<DimerCover> out;
    for (auto& c : enumerate_dimer_covers(lat))
        if (winding(lat, c) == ref) out.push_back(std::move(c));
    return out;
}

inline DenseMatrix dimer_transition_matrix(const TorusLattice& lat, const DimerWeights& w, double lambda,
                                           const std::vector<DimerCover>& covers) {
    std::map<std::vector<std::uint8_t>, std::size_t> index;
    for (std::size_t i = 0; i < covers.size(); ++i) index[covers[i].matched] = i;
    std::vector<double> pi(covers.size());
    for (std::size_t i = 0; i < covers.size(); ++i) pi[i] = dimer_boltzmann_weight(lat, w, lambda, covers[i]);
    const int F = lat.face_count();
    DenseMatrix T(covers.size(), std::vector<double>(covers.size(), 0.0));
    for (std::size_t i = 0; i < covers.size(); ++i) {
        double stay = 1.0;
        for (int f = 0; f < F; ++f) {
            const auto b = lat.face_bonds(f);
            const auto& m = covers[i].matched;
            if (!((m[b[0]] && m[b[2]]) || (m[b[1]] && m[b[3]]))) continue;
            auto flipped = m;
            for (int k = 0; k < 4; ++k) flipped[b[k]] ^= 1;
            auto it = index.find(flipped);
            if (it == index.end()) throw NumericError("plaquette move left the cover set");
            const double p = std::min(1.0, pi[it->second] / pi[i]) / F;
            T[i][it->second] += p;
            stay -= p;
        }
        T[i][i] += stay;
    }
    return T;
}

// ---------------------------------------------------------------------------
// Observables and correlation series

enum class ObservableKind { spin, energy_sum, energy_diff, polarization, dimer, height_pair, electric };

inline std::string observable_name(ObservableKind k) {
    switch (k) {
        case ObservableKind::spin: return "spin";
        case ObservableKind::energy_sum: return "energy_sum";
        case ObservableKind::energy_diff: return "energy_diff";
        case ObservableKind::polarization: return "polarization";
        case ObservableKind::dimer: return "dimer";
        case ObservableKind::height_pair: return "height_pair";
        case ObservableKind::electric: return "electric";
    }
    return "?";
}

inline ObservableKind observable_from_name(const std::string& s) {
    for (auto k : {ObservableKind::spin, ObservableKind::energy_sum, ObservableKind::energy_diff,
                   ObservableKind::polarization, ObservableKind::dimer, ObservableKind::height_pair,
                   ObservableKind::electric})
        if (observable_name(k) == s) return k;
    throw ConfigError("unknown observable '" + s + "'");
}

struct ObservableDef {
    ObservableKind kind = ObservableKind::spin;
    int field = 0;  // spin: which field
};

// rho_x = s_x s_{x+e0} + s_x s_{x+e1}
inline double local_energy(const PeriodicSquare& g, std::span<const std::int8_t> s, int x) {
    return s[x] * (s[g.neighbor(x, 0)] + s[g.neighbor(x, 1)]);
}

// Local values O_x of a spin observable on every site.
inline void evaluate_spin_observable(const PeriodicSquare& g, int fields, std::span<const std::int8_t> spins,
                                     const ObservableDef& obs, std::vector<double>& out) {
    const int n = g.site_count();
    if (static_cast<int>(spins.size()) != fields * n) throw ConfigError("spin record does not match the lattice");
    const bool needs_pair = obs.kind == ObservableKind::energy_diff || obs.kind == ObservableKind::polarization;
    if (needs_pair && fields < 2) throw ConfigError(observable_name(obs.kind) + " needs two spin fields");
    out.resize(n);
    auto a = spins.subspan(0, n);
    auto b = fields > 1 ? spins.subspan(n, n) : a;
    switch (obs.kind) {
        case ObservableKind::spin:
            if (obs.field < 0 || obs.field >= fields) throw ConfigError("spin field index out of range");
            for (int x = 0; x < n; ++x) out[x] = spins[obs.field * n + x];
            return;
        case ObservableKind::energy_sum:
            for (int x = 0; x < n; ++x) out[x] = local_energy(g, a, x) + (fields > 1 ? local_energy(g, b, x) : 0.0);
            return;
        case ObservableKind::energy_diff:
            for (int x = 0; x < n; ++x) out[x] = local_energy(g, a, x) - local_energy(g, b, x);
            return;
        case ObservableKind::polarization:
            for (int x = 0; x < n; ++x) out[x] = a[x] * b[x];
            return;
        default: throw ConfigError(observable_name(obs.kind) + " is not a spin observable");
    }
}

inline constexpr long min_correlation_records = 100;

// Streaming estimator of translation- and axis-averaged truncated two-point
// functions C(r) = <O_x O_{x+r}> - <O>^2, r = 0..L/2.
class SpinCorrelationAccumulator {
public:
    SpinCorrelationAccumulator(int L, int fields, ObservableDef obs, long total_records,
                               int bins = min_jackknife_bins)
        : g_(L), fields_(fields), obs_(obs), total_(total_records), rmax_(L / 2), acc_(bins, rmax_ + 2) {
        if (total_records < min_correlation_records)
            throw ConfigError("correlation estimates need at least " + std::to_string(min_correlation_records) +
                              " records");
        if (bins < min_jackknife_bins) throw ConfigError("need at least 20 jackknife bins");
    }

    void add(long index, std::span<const std::int8_t> spins) {
        evaluate_spin_observable(g_, fields_, spins, obs_, o_);
        const int n = g_.site_count();
        std::vector<double> row(rmax_ + 2, 0.0);
        double m = 0.0;
        for (int x = 0; x < n; ++x) m += o_[x];
        row[0] = m / n;
        for (int r = 0; r <= rmax_; ++r) {
            double s = 0.0;
            for (int x = 0; x < n; ++x) s += o_[x] * (o_[g_.shift(x, r, 0)] + o_[g_.shift(x, 0, r)]);
            row[r + 1] = s / (2.0 * n);
        }
        acc_.add(bin_of(index, total_, acc_.bins()), row);
    }

    // Combines an independent chain of the same shape; bin b pools bin b of both.
    void merge(const SpinCorrelationAccumulator& o) { acc_.merge(o.acc_); }

    CorrelationSeries result() const {
        if (acc_.total() < min_correlation_records) throw ConfigError("too few records accumulated");
        const int rmax = rmax_;
        auto jk = jackknife(acc_, [rmax](const std::vector<double>& m) {
            std::vector<double> c(rmax + 1);
            for (int r = 0; r <= rmax; ++r) c[r] = m[r + 1] - m[0] * m[0];
            return c;
        });
        CorrelationSeries s;
        s.observable = observable_name(obs_.kind);
        for (int r = 0; r <= rmax_; ++r) s.push(r, jk.value[r], jk.error[r], acc_.total());
        s.replicas = jk.samples;
        return s;
    }

private:
    PeriodicSquare g_;
    int fields_;
    ObservableDef obs_;
    long total_;
    int rmax_;
    BinnedAccumulator acc_;
    std::vector<double> o_;
};

inline CorrelationSeries measure_correlations(std::span<const SpinRecord> records, int L, int fields,
                                              const ObservableDef& obs, int bins = min_jackknife_bins) {
    SpinCorrelationAccumulator acc(L, fields, obs, static_cast<long>(records.size()), bins);
    for (std::size_t i = 0; i < records.size(); ++i) acc.add(static_cast<long>(i), records[i].spins);
    return acc.result();
}

// ---------------------------------------------------------------------------
// Dimer correlations
//
// For two bonds of equal orientation displaced by r along the bond direction
// ("longitudinal") or across it ("transverse"), the staggered term
// (-1)^{dx+dy} Re(1/z^2) enters with opposite signs at even r while the
// plain term is isotropic. Hence, at even r,
//   plain     = (C_long + C_trans) / 2
//   staggered = (C_long - C_trans) / 2.

struct DimerChannels {
    CorrelationSeries longitudinal;
    CorrelationSeries transverse;
    CorrelationSeries plain;
    CorrelationSeries staggered;
};

namespace detail {
// Index layout of a dimer correlation row: 4 class means (orientation o,
// origin parity p at 2o+p), then for r = 0..rmax and geometry g (0 long,
// 1 trans) and class k the mean of I_b I_{b'}.
inline int dimer_row_width(int rmax) { return 4 + (rmax + 1) * 2 * 4; }
inline int dimer_row_slot(int r, int geom, int cls) { return 4 + (r * 2 + geom) * 4 + cls; }

inline std::vector<double> dimer_truncated_from_row(const std::vector<double>& m, int rmax) {
    // out[2r + geom], averaged over the four classes.
    std::vector<double> out(2 * (rmax + 1));
    for (int r = 0; r <= rmax; ++r)
        for (int geom = 0; geom < 2; ++geom) {
            double c = 0.0;
            for (int o = 0; o < 2; ++o)
                for (int p = 0; p < 2; ++p) {
                    const int partner = 2 * o + ((p + r) & 1);
                    c += m[dimer_row_slot(r, geom, 2 * o + p)] - m[2 * o + p] * m[partner];
                }
            out[2 * r + geom] = c / 4.0;
        }
    return out;
}

inline void dimer_channels_from(const std::vector<double>& value, const std::vector<double>& err_long,
                                const std::vector<double>& err_trans, const std::vector<double>& err_plain,
                                const std::vector<double>& err_stag, const std::vector<double>& plain,
                                const std::vector<double>& stag, int rmax, long count, DimerChannels& out) {
    out.longitudinal.observable = out.transverse.observable = "dimer";
    out.plain.observable = out.staggered.observable = "dimer";
    out.plain.channel = Channel::plain;
    out.staggered.channel = Channel::staggered;
    for (int r = 0; r <= rmax; ++r) {
        out.longitudinal.push(r, value[2 * r], err_long[r], count);
        out.transverse.push(r, value[2 * r + 1], err_trans[r], count);
    }
    for (int r = 2, k = 0; r <= rmax; r += 2, ++k) {
        out.plain.push(r, plain[k], err_plain[k], count);
        out.staggered.push(r, stag[k], err_stag[k], count);
    }
}
}  // namespace detail

class DimerCorrelationAccumulator {
public:
    DimerCorrelationAccumulator(const TorusLattice& lat, long total_records, int bins = min_jackknife_bins)
        : lat_(lat), total_(total_records), rmax_(lat.size() / 2), acc_(bins, detail::dimer_row_width(rmax_)) {
        if (total_records < min_correlation_records)
            throw ConfigError("correlation estimates need at least " + std::to_string(min_correlation_records) +
                              " records");
        if (bins < min_jackknife_bins) throw ConfigError("need at least 20 jackknife bins");
    }

    void add(long index, std::span<const std::uint8_t> matched) {
        if (static_cast<int>(matched.size()) != lat_.bond_count()) throw ConfigError("dimer record size mismatch");
        const int n = lat_.vertex_count();
        std::vector<double> row(acc_.width(), 0.0);
        const double per_class = n / 2.0;
        for (int v = 0; v < n; ++v) {
            const int p = (lat_.x_of(v) + lat_.y_of(v)) & 1;
            for (int o = 0; o < 2; ++o) {
                const int b = lat_.bond(v, o);
                if (!matched[b]) continue;
                const int cls = 2 * o + p;
                row[cls] += 1.0;
                for (int r = 0; r <= rmax_; ++r) {
                    const int vl = o == 0 ? lat_.shift(v, r, 0) : lat_.shift(v, 0, r);
                    const int vt = o == 0 ? lat_.shift(v, 0, r) : lat_.shift(v, r, 0);
                    row[detail::dimer_row_slot(r, 0, cls)] += matched[lat_.bond(vl, o)];
                    row[detail::dimer_row_slot(r, 1, cls)] += matched[lat_.bond(vt, o)];
                }
            }
        }
        for (double& x : row) x /= per_class;
        acc_.add(bin_of(index, total_, acc_.bins()), row);
    }

    // Combines an independent chain of the same shape; bin b pools bin b of both.
    void merge(const DimerCorrelationAccumulator& o) { acc_.merge(o.acc_); }

    DimerChannels result() const {
        const int rmax = rmax_;
        auto f = [rmax](const std::vector<double>& m) {
            auto t = detail::dimer_truncated_from_row(m, rmax);
            std::vector<double> out = t;
            for (int r = 2; r <= rmax; r += 2) out.push_back((t[2 * r] + t[2 * r + 1]) / 2.0);
            for (int r = 2; r <= rmax; r += 2) out.push_back((t[2 * r] - t[2 * r + 1]) / 2.0);
            return out;
        };
        auto jk = jackknife(acc_, f);
        const int ne = rmax / 2;
        std::vector<double> el(rmax + 1), et(rmax + 1), ep(ne), es(ne), p(ne), s(ne);
        for (int r = 0; r <= rmax; ++r) {
            el[r] = jk.error[2 * r];
            et[r] = jk.error[2 * r + 1];
        }
        const int base = 2 * (rmax + 1);
        for (int k = 0; k < ne; ++k) {
            p[k] = jk.value[base + k];
            ep[k] = jk.error[base + k];
            s[k] = jk.value[base + ne + k];
            es[k] = jk.error[base + ne + k];
        }
        DimerChannels out;
        detail::dimer_channels_from(jk.value, el, et, ep, es, p, s, rmax, acc_.total(), out);
        for (const auto& loo : jk.samples) {
            std::vector<double> lr(rmax + 1), tr(rmax + 1);
            for (int r = 0; r <= rmax; ++r) {
                lr[r] = loo[2 * r];
                tr[r] = loo[2 * r + 1];
            }
            out.longitudinal.replicas.push_back(lr);
            out.transverse.replicas.push_back(tr);
            out.plain.replicas.emplace_back(loo.begin() + base, loo.begin() + base + ne);
            out.staggered.replicas.emplace_back(loo.begin() + base + ne, loo.begin() + base + 2 * ne);
        }
        return out;
    }

private:
    TorusLattice lat_;
    long total_;
    int rmax_;
    BinnedAccumulator acc_;
};

inline DimerChannels measure_dimer_correlations(const TorusLattice& lat, std::span<const DimerRecord> records,
                                                int bins = min_jackknife_bins) {
    DimerCorrelationAccumulator acc(lat, static_cast<long>(records.size()), bins);
    for (std::size_t i = 0; i < records.size(); ++i) acc.add(static_cast<long>(i), records[i].matched);
    return acc.result();
}

// Same channels from the exact solver (errors zero, n = 0).
inline DimerChannels exact_dimer_channels(const DimerCorrelator& c, int rmax = -1) {
    const TorusLattice& lat = c.system().lattice();
    if (rmax < 0) rmax = lat.size() / 2;
    if (rmax > lat.size() / 2) throw ConfigError("rmax must not exceed L/2");
    std::vector<double> t(2 * (rmax + 1), 0.0);
    for (int r = 0; r <= rmax; ++r)
        for (int geom = 0; geom < 2; ++geom) {
            double sum = 0.0;
            for (int o = 0; o < 2; ++o)
                for (int p = 0; p < 2; ++p) {
                    const int v = lat.site(p, 0);
                    const int b = lat.bond(v, o);
                    const bool along = (geom == 0) == (o == 0);
                    const int v2 = along ? lat.shift(v, r, 0) : lat.shift(v, 0, r);
                    const int b2 = lat.bond(v2, o);
                    sum += r == 0 ? c.occupation(b) * (1.0 - c.occupation(b)) : c.truncated(b, b2);
                }
            t[2 * r + geom] = sum / 4.0;
        }
    DimerChannels out;
    std::vector<double> zeros_r(rmax + 1, 0.0), p, s;
    for (int r = 2; r <= rmax; r += 2) {
        p.push_back((t[2 * r] + t[2 * r + 1]) / 2.0);
        s.push_back((t[2 * r] - t[2 * r + 1]) / 2.0);
    }
    std::vector<double> zeros_e(p.size(), 0.0);
    detail::dimer_channels_from(t, zeros_r, zeros_r, zeros_e, zeros_e, p, s, rmax, 0, out);
    return out;
}

// ---------------------------------------------------------------------------
// Height moments and the electric correlator

struct HeightSeries {
    CorrelationSeries variance;
    CorrelationSeries cumulant4;
    CorrelationSeries electric;       // <cos(pi (h_x - h_y))>
    CorrelationSeries electric_imag;  // <sin(pi (h_x - h_y))>, zero by symmetry
};

// Accumulates moments of D = h(f + r e) - h(f) over all faces and both axes,
// r = 0..rmax, for covers of zero winding.
class HeightAccumulator {
public:
    HeightAccumulator(const TorusLattice& lat, int rmax, long total_records, int bins = min_jackknife_bins)
        : lat_(lat), rmax_(rmax), total_(total_records), acc_(bins, 4 * (rmax + 1)) {
        if (rmax < 0 || rmax > lat.size() / 2) throw ConfigError("height separations must lie in [0, L/2]");
        if (total_records < min_correlation_records)
            throw ConfigError("height moments need at least " + std::to_string(min_correlation_records) + " records");
        if (bins < min_jackknife_bins) throw ConfigError("need at least 20 jackknife bins");
    }

    void add(long index, std::span<const std::uint8_t> matched) {
        DimerCover c{std::vector<std::uint8_t>(matched.begin(), matched.end())};
        const auto w = winding(lat_, c);
        if (w.first.q != 0 || w.second.q != 0) throw NumericError("height moments need zero-winding covers");
        face_heights(lat_, c, h_);
        const int F = lat_.face_count();
        std::vector<double> row(acc_.width(), 0.0);
        for (int r = 0; r <= rmax_; ++r) {
            double m2 = 0, m4 = 0, cs = 0, sn = 0;
            for (int f = 0; f < F; ++f)
                for (int axis = 0; axis < 2; ++axis) {
                    const int g = axis == 0 ? lat_.shift(f, r, 0) : lat_.shift(f, 0, r);
                    const std::int64_t dq = h_[g] - h_[f];
                    const double d = static_cast<double>(dq) / 4.0;
                    m2 += d * d;
                    m4 += d * d * d * d;
                    cs += cos_table(dq);
                    sn += sin_table(dq);
                }
            const double norm = 2.0 * F;
            row[4 * r + 0] = m2 / norm;
            row[4 * r + 1] = m4 / norm;
            row[4 * r + 2] = cs / norm;
            row[4 * r + 3] = sn / norm;
        }
        acc_.add(bin_of(index, total_, acc_.bins()), row);
    }

    // Combines an independent chain of the same shape; bin b pools bin b of both.
    void merge(const HeightAccumulator& o) { acc_.merge(o.acc_); }

    HeightSeries result() const {
        const int rmax = rmax_;
        auto jk = jackknife(acc_, [rmax](const std::vector<double>& m) {
            std::vector<double> out(4 * (rmax + 1));
            for (int r = 0; r <= rmax; ++r) {
                out[4 * r + 0] = m[4 * r];
                out[4 * r + 1] = m[4 * r + 1] - 3.0 * m[4 * r] * m[4 * r];
                out[4 * r + 2] = m[4 * r + 2];
                out[4 * r + 3] = m[4 * r + 3];
            }
            return out;
        });
        HeightSeries s;
        s.variance.observable = "height_pair";
        s.cumulant4.observable = "height_cumulant4";
        s.electric.observable = s.electric_imag.observable = "electric";
        const long n = acc_.total();
        for (int r = 0; r <= rmax; ++r) {
            s.variance.push(r, jk.value[4 * r], jk.error[4 * r], n);
            s.cumulant4.push(r, jk.value[4 * r + 1], jk.error[4 * r + 1], n);
            s.electric.push(r, jk.value[4 * r + 2], jk.error[4 * r + 2], n);
            s.electric_imag.push(r, jk.value[4 * r + 3], jk.error[4 * r + 3], n);
        }
        for (const auto& loo : jk.samples) {
            std::vector<double> v(rmax + 1), c4(rmax + 1), e(rmax + 1), ei(rmax + 1);
            for (int r = 0; r <= rmax; ++r) {
                v[r] = loo[4 * r];
                c4[r] = loo[4 * r + 1];
                e[r] = loo[4 * r + 2];
                ei[r] = loo[4 * r + 3];
            }
            s.variance.replicas.push_back(std::move(v));
            s.cumulant4.replicas.push_back(std::move(c4));
            s.electric.replicas.push_back(std::move(e));
            s.electric_imag.replicas.push_back(std::move(ei));
        }
        return s;
    }

private:
    // Height differences are multiples of 1/4, so cos and sin of pi*D take
    // eight values.
    static double cos_table(std::int64_t q) {
        static const double t[8] = {1, std::numbers::sqrt2 / 2, 0, -std::numbers::sqrt2 / 2,
                                    -1, -std::numbers::sqrt2 / 2, 0, std::numbers::sqrt2 / 2};
        return t[((q % 8) + 8) % 8];
    }
    static double sin_table(std::int64_t q) { return cos_table(q - 2); }

    TorusLattice lat_;
    int rmax_;
    long total_;
    BinnedAccumulator acc_;
    std::vector<std::int64_t> h_;
};

inline HeightSeries measure_height_series(const TorusLattice& lat, std::span<const DimerRecord> records, int rmax,
                                          int bins = min_jackknife_bins) {
    HeightAccumulator acc(lat, rmax, static_cast<long>(records.size()), bins);
    for (std::size_t i = 0; i < records.size(); ++i) acc.add(static_cast<long>(i), records[i].matched);
    return acc.result();
}

inline std::pair<CorrelationSeries, CorrelationSeries> measure_height_moments(const TorusLattice& lat,
                                                                              std::span<const DimerRecord> records,
                                                                              int rmax) {
    auto s = measure_height_series(lat, records, rmax);
    return {s.variance, s.cumulant4};
}

struct ElectricSeries {
    CorrelationSeries real;
    CorrelationSeries imag;
    bool imag_vanishes = true;  // |imag| < 3 sigma (or < 1e-12) at every r
};

inline ElectricSeries electric_from(const HeightSeries& s) {
    ElectricSeries e{s.electric, s.electric_imag, true};
    for (std::size_t k = 0; k < e.imag.size(); ++k)
        if (std::abs(e.imag.mean[k]) > std::max(3.0 * e.imag.error[k], 1e-12)) e.imag_vanishes = false;
    return e;
}

inline ElectricSeries measure_electric(const TorusLattice& lat, std::span<const DimerRecord> records, int rmax) {
    return electric_from(measure_height_series(lat, records, rmax));
}

// ---------------------------------------------------------------------------
// Order parameters and Binder cumulant

enum class OrderParameter { magnetization, polarization };

inline double order_parameter(std::span<const std::int8_t> spins, int sites, OrderParameter op) {
    double m = 0.0;
    if (op == OrderParameter::magnetization) {
        for (int x = 0; x < sites; ++x) m += spins[x];
    } else {
        if (static_cast<int>(spins.size()) < 2 * sites) throw ConfigError("polarization needs two spin fields");
        for (int x = 0; x < sites; ++x) m += spins[x] * spins[sites + x];
    }
    return m / sites;
}

// U = 1 - <m^4> / (3 <m^2>^2) with jackknife error.
inline BinderValue binder_from_moments(const BinnedAccumulator& acc) {
    auto jk = jackknife(acc, [](const std::vector<double>& m) {
        return std::vector<double>{1.0 - m[1] / (3.0 * m[0] * m[0])};
    });
    return {jk.value[0], jk.error[0]};
}

inline BinderValue measure_binder(const McConfig& cfg, OrderParameter op, int bins = min_jackknife_bins) {
    BinnedAccumulator acc(bins, 2);
    const int sites = cfg.L * cfg.L;
    run_spin_chain(cfg, [&](long i, const SpinRecord& r) {
        const double m = order_parameter(r.spins, sites, op);
        acc.add(bin_of(i, cfg.measurements, bins), {m * m, m * m * m * m});
    });
    return binder_from_moments(acc);
}

}  // namespace planar
