#pragma once

// Kasteleyn matrices of the L x L torus, the exact dimer partition function
// as a signed combination of four boundary-phase sectors, and exact
// dimer-dimer correlations and height moments from sector inverses.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "planar/errors.hpp"
#include "planar/lattice.hpp"
#include "planar/pfaffian.hpp"

namespace planar {

struct DimerWeights {
    std::array<double, 4> t{1.0, 1.0, 1.0, 1.0};  // t1..t4

    void validate() const {
        for (double v : t)
            if (!(v > 0) || !std::isfinite(v)) throw ConfigError("dimer weights must be positive and finite");
    }
};

// Boundary phase (theta0, theta1): theta0 flips bonds crossing the vertical
// seam (x = L-1 -> 0), theta1 flips bonds crossing the horizontal seam.
inline constexpr std::array<std::array<int, 2>, 4> torus_sectors{{{0, 0}, {0, 1}, {1, 0}, {1, 1}}};

// Z = (1/2) |sum_s signs[s] Pf(K_s)|. The negated sector depends on L mod 4
// for this orientation; both patterns are frozen from calibration against
// exhaustive enumeration (4x4 and 6x6 tori, see calibrate_sector_signs) and
// cross-checked against transfer-matrix counts on larger tori.
inline constexpr std::array<int, 4> sector_signs_mod4_zero{-1, +1, +1, +1};
inline constexpr std::array<int, 4> sector_signs_mod4_two{+1, +1, +1, -1};

inline const std::array<int, 4>& sector_signs(int L) {
    return L % 4 == 0 ? sector_signs_mod4_zero : sector_signs_mod4_two;
}

class KasteleynSystem {
public:
    KasteleynSystem(TorusLattice lattice, DimerWeights weights)
        : lat_(std::move(lattice)), w_(weights), black_index_(lat_.vertex_count()), white_index_(lat_.vertex_count()) {
        w_.validate();
        for (int v = 0; v < lat_.vertex_count(); ++v) {
            if (lat_.color(v) == Color::black) {
                black_index_[v] = static_cast<int>(blacks_.size());
                blacks_.push_back(v);
            } else {
                white_index_[v] = static_cast<int>(whites_.size());
                whites_.push_back(v);
            }
        }
        for (int s = 0; s < 4; ++s)
            if (!face_condition_holds(s))
                throw NumericError("Kasteleyn orientation fails the clockwise-odd face check in sector " +
                                   std::to_string(s));
    }

    const TorusLattice& lattice() const { return lat_; }
    const DimerWeights& weights() const { return w_; }
    int half() const { return static_cast<int>(blacks_.size()); }
    int black_index(int v) const { return black_index_[v]; }
    int white_index(int v) const { return white_index_[v]; }
    int black_vertex(int i) const { return blacks_[i]; }
    int white_vertex(int j) const { return whites_[j]; }

    double bond_weight(int b) const { return w_.t[lat_.weight_class(b)]; }

    // Sign of K(black, white) for bond b in sector s: horizontal bonds +1,
    // vertical bonds (-1)^x, times the boundary phase on seam-crossing bonds.
    int bond_sign(int s, int b) const {
        const int v = lat_.bond_origin(b);
        const int L = lat_.size();
        int sign = 1;
        if (lat_.bond_dir(b) == 0) {
            if (lat_.x_of(v) == L - 1 && torus_sectors[s][0]) sign = -sign;
        } else {
            if (lat_.x_of(v) % 2 != 0) sign = -sign;
            if (lat_.y_of(v) == L - 1 && torus_sectors[s][1]) sign = -sign;
        }
        return sign;
    }

    double entry(int s, int b) const { return bond_sign(s, b) * bond_weight(b); }

    // B(black, white) block: K = [[0, B], [-B^T, 0]] with blacks first.
    Eigen::MatrixXd bipartite_block(int s) const {
        Eigen::MatrixXd B = Eigen::MatrixXd::Zero(half(), half());
        for (int b = 0; b < lat_.bond_count(); ++b)
            B(black_index_[lat_.black_endpoint(b)], white_index_[lat_.white_endpoint(b)]) += entry(s, b);
        return B;
    }

    int skew_index(int v) const {
        return lat_.color(v) == Color::black ? black_index_[v] : half() + white_index_[v];
    }

    SkewMatrix<double> sector_matrix(int s) const {
        SkewMatrix<double> K(2 * half());
        for (int b = 0; b < lat_.bond_count(); ++b)
            K.add(skew_index(lat_.black_endpoint(b)), skew_index(lat_.white_endpoint(b)), entry(s, b));
        return K;
    }

    // Walking each face clockwise, the number of edges oriented along the walk is odd.
    bool face_condition_holds(int s) const {
        for (int f = 0; f < lat_.face_count(); ++f) {
            const auto c = lat_.face_corners_clockwise(f);
            int along = 0;
            for (int k = 0; k < 4; ++k) {
                const int u = c[k], v = c[(k + 1) % 4];
                const int b = bond_between(u, v);
                // Orientation black -> white when the entry is positive.
                const bool black_to_white = entry(s, b) > 0;
                const bool walking_black_to_white = lat_.color(u) == Color::black;
                if (black_to_white == walking_black_to_white) ++along;
            }
            if (along % 2 == 0) return false;
        }
        return true;
    }

    int bond_between(int u, int v) const {
        for (int dir = 0; dir < 2; ++dir) {
            if (lat_.neighbor(u, dir) == v) return lat_.bond(u, dir);
            if (lat_.neighbor(v, dir) == u) return lat_.bond(v, dir);
        }
        throw ConfigError("vertices are not adjacent");
    }

private:
    TorusLattice lat_;
    DimerWeights w_;
    std::vector<int> black_index_, white_index_, blacks_, whites_;
};

inline KasteleynSystem build_kasteleyn(const TorusLattice& lat, const DimerWeights& w) { return {lat, w}; }

// Pf([[0, B], [-B^T, 0]]) = (-1)^(n(n-1)/2) det(B) for n x n blocks.
inline int pfaffian_ordering_sign(int n) {
    return (static_cast<long long>(n) * (n - 1) / 2) % 2 == 0 ? 1 : -1;
}

struct PartitionResult {
    double log_z = -INFINITY;
    std::array<LogPfaffian<double>, 4> sector_pfaffians{};
    // The signed sector sum came out positive (calibrated signs consistent).
    bool sign_consistent = true;
};

namespace detail {
// log |sum_k c_k sign_k e^{l_k}| and the sign of the sum.
inline std::pair<double, int> signed_log_sum(const std::array<double, 4>& coeff,
                                             const std::array<double, 4>& logs) {
    double top = -INFINITY;
    for (int k = 0; k < 4; ++k)
        if (coeff[k] != 0) top = std::max(top, logs[k]);
    if (!std::isfinite(top)) return {-INFINITY, 0};
    double acc = 0.0;
    for (int k = 0; k < 4; ++k)
        if (coeff[k] != 0 && std::isfinite(logs[k])) acc += coeff[k] * std::exp(logs[k] - top);
    if (acc == 0) return {-INFINITY, 0};
    return {top + std::log(std::abs(acc)), acc > 0 ? 1 : -1};
}
}  // namespace detail

inline PartitionResult dimer_partition_detail(const KasteleynSystem& sys, const std::array<int, 4>& signs) {
    PartitionResult r;
    std::array<double, 4> coeff{}, logs{};
    for (int s = 0; s < 4; ++s) {
        r.sector_pfaffians[s] = log_pfaffian(sys.sector_matrix(s));
        coeff[s] = signs[s] * r.sector_pfaffians[s].sign;
        logs[s] = r.sector_pfaffians[s].log_abs;
    }
    const auto [lz, sign] = detail::signed_log_sum(coeff, logs);
    if (sign == 0) throw NumericError("all torus sector Pfaffians vanish");
    r.log_z = lz - std::log(2.0);
    r.sign_consistent = sign == pfaffian_ordering_sign(sys.half());
    return r;
}

inline PartitionResult dimer_partition_detail(const KasteleynSystem& sys) {
    return dimer_partition_detail(sys, sector_signs(sys.lattice().size()));
}

inline double log_dimer_partition(const KasteleynSystem& sys) { return dimer_partition_detail(sys).log_z; }
inline double dimer_partition(const KasteleynSystem& sys) { return std::exp(log_dimer_partition(sys)); }

// Tries the four one-sector-negated sign patterns against a reference
// partition function; returns the index of the unique match or -1.
inline int calibrate_sector_signs(const KasteleynSystem& sys, double reference_z, double rel_tol = 1e-10) {
    int found = -1;
    for (int neg = 0; neg < 4; ++neg) {
        std::array<int, 4> signs{1, 1, 1, 1};
        signs[neg] = -1;
        const double z = std::exp(dimer_partition_detail(sys, signs).log_z);
        if (std::abs(z - reference_z) <= rel_tol * reference_z) {
            if (found >= 0) return -1;
            found = neg;
        }
    }
    return found;
}

// Exact occupation probabilities from sector inverses.
//
// Each sector determinant D_s = det(B_s) is multilinear in the entries, so the
// signed weight of covers containing bond e is B_s[e] dD_s/dB_s[e], and of
// covers containing e and f is B_s[e] B_s[f] d2D_s/dB_s[e]dB_s[f]. These
// derivatives are evaluated through C_s = B_s + U V^T, invertible even when
// B_s itself is singular (rank m regulariser, m = 0 when B_s is well
// conditioned), via the matrix determinant lemma. Since Pf(K_s) equals
// det(B_s) up to one global sign, the sector signs of the partition function
// apply unchanged.
class DimerCorrelator {
public:
    explicit DimerCorrelator(const KasteleynSystem& sys, std::uint64_t regulariser_seed = 0x5eedULL)
        : sys_(sys) {
        std::array<double, 4> coeff{}, logs{};
        std::mt19937_64 rng(regulariser_seed);
        const auto& signs = sector_signs(sys.lattice().size());
        for (int s = 0; s < 4; ++s) {
            sectors_[s] = factor(sys.bipartite_block(s), rng);
            coeff[s] = signs[s] * sectors_[s].det_sign * sectors_[s].lemma;
            logs[s] = sectors_[s].log_det_c;
        }
        const auto [lz, sign] = detail::signed_log_sum(coeff, logs);
        if (sign == 0) throw NumericError("dimer partition function vanishes");
        log_s_ = lz;
        sign_s_ = sign;
        for (int s = 0; s < 4; ++s)
            scale_[s] = signs[s] * sectors_[s].det_sign * sign_s_ * std::exp(sectors_[s].log_det_c - log_s_);
    }

    const KasteleynSystem& system() const { return sys_; }
    double log_partition() const { return log_s_ - std::log(2.0); }
    int regulariser_rank(int s) const { return static_cast<int>(sectors_[s].U.cols()); }

    double occupation(int b) const {
        const int i = sys_.black_index(sys_.lattice().black_endpoint(b));
        const int j = sys_.white_index(sys_.lattice().white_endpoint(b));
        double acc = 0.0;
        for (int s = 0; s < 4; ++s) {
            const auto& d = sectors_[s];
            const int m = static_cast<int>(d.U.cols());
            double deriv;
            if (m == 0) {
                deriv = d.G(j, i);
            } else {
                Eigen::MatrixXd M(m + 1, m + 1);
                M.topLeftCorner(m, m) = d.core;
                M.block(0, m, m, 1) = d.VtG.col(i);
                M.block(m, 0, 1, m) = -d.GU.row(j);
                M(m, m) = d.G(j, i);
                deriv = M.determinant();
            }
            acc += scale_[s] * sys_.entry(s, b) * deriv;
        }
        return acc;
    }

    double joint_occupation(int b, int b2) const {
        if (b == b2) return occupation(b);
        const auto& lat = sys_.lattice();
        const int i = sys_.black_index(lat.black_endpoint(b)), j = sys_.white_index(lat.white_endpoint(b));
        const int k = sys_.black_index(lat.black_endpoint(b2)), l = sys_.white_index(lat.white_endpoint(b2));
        double acc = 0.0;
        for (int s = 0; s < 4; ++s) {
            const auto& d = sectors_[s];
            const int m = static_cast<int>(d.U.cols());
            double deriv;
            if (m == 0) {
                deriv = d.G(j, i) * d.G(l, k) - d.G(j, k) * d.G(l, i);
            } else {
                Eigen::MatrixXd M(m + 2, m + 2);
                M.topLeftCorner(m, m) = d.core;
                M.block(0, m, m, 1) = d.VtG.col(i);
                M.block(0, m + 1, m, 1) = d.VtG.col(k);
                M.block(m, 0, 1, m) = -d.GU.row(j);
                M.block(m + 1, 0, 1, m) = -d.GU.row(l);
                M(m, m) = d.G(j, i);
                M(m, m + 1) = d.G(j, k);
                M(m + 1, m) = d.G(l, i);
                M(m + 1, m + 1) = d.G(l, k);
                deriv = M.determinant();
            }
            acc += scale_[s] * sys_.entry(s, b) * sys_.entry(s, b2) * deriv;
        }
        return acc;
    }

    double truncated(int b, int b2) const { return joint_occupation(b, b2) - occupation(b) * occupation(b2); }

private:
    struct SectorData {
        Eigen::MatrixXd G;     // C^{-1}
        Eigen::MatrixXd U, V;  // B = C - U V^T
        Eigen::MatrixXd GU, VtG, core;  // core = I - V^T G U
        double log_det_c = 0.0;
        double det_sign = 1.0;
        double lemma = 1.0;  // det(core): det(B) = det(C) * det(core)
    };

    static std::pair<double, double> log_det(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu) {
        double sign = lu.permutationP().determinant();
        double log_abs = 0.0;
        const auto& m = lu.matrixLU();
        for (Eigen::Index k = 0; k < m.rows(); ++k) {
            const double u = m(k, k);
            if (u < 0) sign = -sign;
            log_abs += std::log(std::abs(u));
        }
        return {log_abs, sign};
    }

    static SectorData factor(const Eigen::MatrixXd& B, std::mt19937_64& rng) {
        const Eigen::Index n = B.rows();
        const double scale = B.cwiseAbs().maxCoeff();
        constexpr double singular_rcond = 1e-11;
        std::normal_distribution<double> normal;
        SectorData d;
        for (int m = 0; m <= 32; m = (m == 0 ? 2 : 2 * m)) {
            Eigen::MatrixXd U(n, m), V(n, m);
            for (Eigen::Index a = 0; a < n; ++a)
                for (int c = 0; c < m; ++c) {
                    U(a, c) = normal(rng) * scale / std::sqrt(static_cast<double>(n));
                    V(a, c) = normal(rng);
                }
            Eigen::MatrixXd C = B + U * V.transpose();
            Eigen::PartialPivLU<Eigen::MatrixXd> lu(C);
            // rcond() is an estimate and can miss exact singularity; the
            // pivot ratio catches it.
            const auto pivots = lu.matrixLU().diagonal().cwiseAbs();
            if (lu.rcond() < singular_rcond || !(pivots.minCoeff() > singular_rcond * pivots.maxCoeff())) continue;
            d.G = lu.inverse();
            std::tie(d.log_det_c, d.det_sign) = log_det(lu);
            d.U = std::move(U);
            d.V = std::move(V);
            d.GU = d.G * d.U;
            d.VtG = d.V.transpose() * d.G;
            d.core = Eigen::MatrixXd::Identity(m, m) - d.V.transpose() * d.GU;
            d.lemma = m == 0 ? 1.0 : d.core.determinant();
            return d;
        }
        throw NumericError("Kasteleyn sector matrix could not be regularised");
    }

    const KasteleynSystem& sys_;
    std::array<SectorData, 4> sectors_;
    std::array<double, 4> scale_{};
    double log_s_ = 0.0;
    int sign_s_ = 1;
};

inline double dimer_correlation_exact(const DimerCorrelator& c, int b, int b2) {
    if (b == b2) throw ConfigError("dimer correlation needs two distinct bonds");
    return c.joint_occupation(b, b2);
}

// Bonds crossed by a dual path, with their crossing signs.
struct Crossing {
    int bond;
    int sign;
};

inline std::vector<Crossing> path_crossings(const TorusLattice& lat, const DualPath& p) {
    std::vector<Crossing> out;
    int f = p.start_face;
    for (Step s : p.steps) {
        out.push_back({lat.crossed_bond(f, s), lat.crossing_sign(f, s)});
        f = lat.face_neighbor(f, s);
    }
    return out;
}

struct HeightMoments {
    double mean = 0.0;           // <h_xi - h_eta>
    double second_moment = 0.0;  // <(h_xi - h_eta)^2>
    double variance = 0.0;
};

// The two dual paths from face (0,0) to face (r,0) used for height moments:
// one detours north by `detour` rows, the other south. They share no bonds
// while 2*detour < L.
inline std::pair<DualPath, DualPath> detour_paths(const TorusLattice& lat, int r, int detour) {
    const int L = lat.size();
    auto build = [&](Step out, Step back) {
        DualPath p{L, 0, {}};
        p.steps.insert(p.steps.end(), detour, out);
        p.steps.insert(p.steps.end(), r, Step::east);
        p.steps.insert(p.steps.end(), detour, back);
        return p;
    };
    return {build(Step::north, Step::south), build(Step::south, Step::north)};
}

inline int default_detour(int r) { return std::max(1, (r + 1) / 2); }

// <(h_xi - h_eta)^2> for faces a distance r apart along e0, assembled from
// exact two-bond correlations along two disjoint dual paths.
inline HeightMoments height_variance_exact(const DimerCorrelator& c, int r, int detour = -1) {
    const auto& lat = c.system().lattice();
    const int L = lat.size();
    if (r < 0 || 2 * r >= L) throw ConfigError("height separation must satisfy 0 <= r < L/2");
    if (r == 0) return {};
    if (detour < 0) detour = default_detour(r);
    if (2 * detour >= L) throw ConfigError("detour too wide for the torus");
    const auto [p1, p2] = detour_paths(lat, r, detour);
    const auto c1 = path_crossings(lat, p1), c2 = path_crossings(lat, p2);

    std::vector<double> occ1(c1.size()), occ2(c2.size());
    HeightMoments m;
    for (std::size_t a = 0; a < c1.size(); ++a) {
        occ1[a] = c.occupation(c1[a].bond);
        m.mean += (occ1[a] - 0.25) * c1[a].sign;
    }
    for (std::size_t a = 0; a < c2.size(); ++a) occ2[a] = c.occupation(c2[a].bond);
    for (std::size_t a = 0; a < c1.size(); ++a)
        for (std::size_t b = 0; b < c2.size(); ++b) {
            const double joint = c.joint_occupation(c1[a].bond, c2[b].bond);
            m.second_moment +=
                c1[a].sign * c2[b].sign * (joint - 0.25 * occ1[a] - 0.25 * occ2[b] + 0.0625);
        }
    m.variance = m.second_moment - m.mean * m.mean;
    return m;
}

}  // namespace planar
