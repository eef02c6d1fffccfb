#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "planar/fitting.hpp"
#include "planar/kasteleyn.hpp"
#include "planar/montecarlo.hpp"

using namespace planar;

namespace {

// Weighted torus dimer partition function by column transfer matrices.
// State: bitmask of the rows in the current column already covered by a
// horizontal dimer coming from the left.
double transfer_matrix_partition(const TorusLattice& lat, const DimerWeights& w) {
    const int L = lat.size();
    const int S = 1 << L;
    auto bw = [&](int b) { return w.t[lat.weight_class(b)]; };
    std::vector<std::vector<std::vector<std::pair<int, double>>>> trans(
        L, std::vector<std::vector<std::pair<int, double>>>(S));
    for (int x = 0; x < L; ++x)
        for (int in = 0; in < S; ++in) {
            std::function<void(int, int, int, double)> fill = [&](int y, int covered, int out, double wt) {
                if (y == L) {
                    trans[x][in].push_back({out, wt});
                    return;
                }
                if (covered >> y & 1) {
                    fill(y + 1, covered, out, wt);
                    return;
                }
                fill(y + 1, covered | 1 << y, out | 1 << y, wt * bw(lat.bond(lat.site(x, y), 0)));
                if (y + 1 < L && !(covered >> (y + 1) & 1))
                    fill(y + 1, covered | 1 << y | 1 << (y + 1), out, wt * bw(lat.bond(lat.site(x, y), 1)));
            };
            fill(0, in, 0, 1.0);
            // Vertical dimer across the horizontal seam, rows L-1 and 0.
            if (!(in & 1) && !(in >> (L - 1) & 1))
                fill(0, in | 1 | 1 << (L - 1), 0, bw(lat.bond(lat.site(x, L - 1), 1)));
        }
    double Z = 0.0;
    for (int m0 = 0; m0 < S; ++m0) {
        std::vector<double> v(S, 0.0), nv(S);
        v[m0] = 1.0;
        for (int x = 0; x < L; ++x) {
            std::fill(nv.begin(), nv.end(), 0.0);
            for (int m = 0; m < S; ++m)
                if (v[m] != 0)
                    for (const auto& [o, wt] : trans[x][m]) nv[o] += v[m] * wt;
            v.swap(nv);
        }
        Z += v[m0];
    }
    return Z;
}

double cover_weight(const TorusLattice& lat, const DimerWeights& w, const DimerCover& c) {
    double x = 1.0;
    for (int b = 0; b < lat.bond_count(); ++b)
        if (c.matched[b]) x *= w.t[lat.weight_class(b)];
    return x;
}

DimerWeights random_weights(std::mt19937& rng) {
    std::uniform_real_distribution<double> U(0.4, 2.5);
    return {{U(rng), U(rng), U(rng), U(rng)}};
}

}  // namespace

TEST(Kasteleyn, FaceConditionInEverySector) {
    for (int L : {4, 6, 8, 10}) {
        KasteleynSystem sys(TorusLattice(L), DimerWeights{});
        for (int s = 0; s < 4; ++s) EXPECT_TRUE(sys.face_condition_holds(s)) << "L=" << L << " sector " << s;
    }
}

TEST(Kasteleyn, SectorMatricesAreSkew) {
    KasteleynSystem sys(TorusLattice(6), DimerWeights{{1.2, 0.7, 2.0, 1.1}});
    for (int s = 0; s < 4; ++s) EXPECT_EQ(sys.sector_matrix(s).skew_defect(), 0.0);
}

TEST(Kasteleyn, EntriesScaleLinearly) {
    TorusLattice lat(4);
    KasteleynSystem a(lat, DimerWeights{{1.0, 2.0, 0.5, 1.5}});
    KasteleynSystem b(lat, DimerWeights{{3.0, 6.0, 1.5, 4.5}});
    for (int s = 0; s < 4; ++s)
        for (int bond = 0; bond < lat.bond_count(); ++bond) EXPECT_DOUBLE_EQ(b.entry(s, bond), 3.0 * a.entry(s, bond));
}

TEST(Kasteleyn, TranslationSymmetricMagnitudes) {
    TorusLattice lat(6);
    KasteleynSystem sys(lat, DimerWeights{{1.3, 0.8, 1.3, 0.8}});
    for (int b = 0; b < lat.bond_count(); ++b) {
        const int v = lat.bond_origin(b);
        const int shifted = lat.bond(lat.shift(v, 1, 0), lat.bond_dir(b));
        EXPECT_DOUBLE_EQ(std::abs(sys.entry(0, b)), std::abs(sys.entry(0, shifted)));
    }
}

TEST(Kasteleyn, PartitionMatchesEnumerationUniform) {
    TorusLattice lat(4);
    KasteleynSystem sys(lat, DimerWeights{});
    EXPECT_NEAR(dimer_partition(sys), static_cast<double>(enumerate_dimer_covers(lat).size()), 1e-9);
    EXPECT_TRUE(dimer_partition_detail(sys).sign_consistent);
}

TEST(Kasteleyn, PartitionMatchesWeightedEnumeration) {
    std::mt19937 rng(17);
    for (int L : {4, 6}) {
        TorusLattice lat(L);
        const auto covers = enumerate_dimer_covers(lat);
        std::vector<DimerWeights> ws{DimerWeights{{2.0, 1.0, 1.0, 1.0}}};
        for (int k = 0; k < 5; ++k) ws.push_back(random_weights(rng));
        for (const auto& w : ws) {
            double z = 0.0;
            for (const auto& c : covers) z += cover_weight(lat, w, c);
            KasteleynSystem sys(lat, w);
            EXPECT_NEAR(dimer_partition(sys) / z, 1.0, 1e-10) << "L=" << L;
        }
    }
}

TEST(Kasteleyn, PartitionMatchesTransferMatrix) {
    std::mt19937 rng(23);
    for (int L : {8, 10, 12}) {
        TorusLattice lat(L);
        for (int k = 0; k < 2; ++k) {
            const auto w = random_weights(rng);
            KasteleynSystem sys(lat, w);
            const auto pr = dimer_partition_detail(sys);
            EXPECT_TRUE(pr.sign_consistent);
            EXPECT_NEAR(std::exp(pr.log_z) / transfer_matrix_partition(lat, w), 1.0, 1e-10) << "L=" << L;
        }
    }
}

TEST(Kasteleyn, PartitionScalesWithWeights) {
    TorusLattice lat(8);
    const DimerWeights w{{1.1, 0.9, 1.4, 0.6}};
    DimerWeights w2 = w;
    for (double& t : w2.t) t *= 1.7;
    const double dl = log_dimer_partition(KasteleynSystem(lat, w2)) - log_dimer_partition(KasteleynSystem(lat, w));
    EXPECT_NEAR(dl, 32 * std::log(1.7), 1e-10);
}

TEST(Kasteleyn, CalibrationSelectsFrozenSigns) {
    for (int L : {4, 6}) {
        TorusLattice lat(L);
        KasteleynSystem sys(lat, DimerWeights{});
        const double z = static_cast<double>(enumerate_dimer_covers(lat).size());
        const int neg = calibrate_sector_signs(sys, z);
        ASSERT_GE(neg, 0);
        EXPECT_EQ(sector_signs(L)[neg], -1);
    }
}

TEST(Kasteleyn, RejectsNonPositiveWeights) {
    EXPECT_THROW(KasteleynSystem(TorusLattice(4), DimerWeights{{1, 0, 1, 1}}), ConfigError);
}

TEST(DimerCorrelator, UniformOccupationIsQuarter) {
    KasteleynSystem sys(TorusLattice(8), DimerWeights{});
    DimerCorrelator c(sys);
    for (int b = 0; b < sys.lattice().bond_count(); b += 5) EXPECT_NEAR(c.occupation(b), 0.25, 1e-10);
}

TEST(DimerCorrelator, VertexSumIsOne) {
    std::mt19937 rng(31);
    for (int L : {4, 6, 10}) {
        KasteleynSystem sys(TorusLattice(L), random_weights(rng));
        DimerCorrelator c(sys);
        for (int v = 0; v < sys.lattice().vertex_count(); ++v) {
            double s = 0.0;
            for (int b : sys.lattice().incident_bonds(v)) s += c.occupation(b);
            EXPECT_NEAR(s, 1.0, 1e-10);
        }
    }
}

TEST(DimerCorrelator, MatchesEnumeration) {
    std::mt19937 rng(37);
    TorusLattice lat(4);
    const auto covers = enumerate_dimer_covers(lat);
    for (const auto& w : {DimerWeights{}, random_weights(rng), random_weights(rng)}) {
        KasteleynSystem sys(lat, w);
        DimerCorrelator c(sys);
        std::vector<double> occ(lat.bond_count(), 0.0);
        std::vector<std::vector<double>> joint(lat.bond_count(), std::vector<double>(lat.bond_count(), 0.0));
        double z = 0.0;
        for (const auto& cov : covers) {
            const double x = cover_weight(lat, w, cov);
            z += x;
            for (int b = 0; b < lat.bond_count(); ++b) {
                if (!cov.matched[b]) continue;
                occ[b] += x;
                for (int b2 = 0; b2 < lat.bond_count(); ++b2)
                    if (cov.matched[b2]) joint[b][b2] += x;
            }
        }
        for (int b = 0; b < lat.bond_count(); ++b) {
            EXPECT_NEAR(c.occupation(b), occ[b] / z, 1e-10);
            for (int b2 = 0; b2 < lat.bond_count(); ++b2) {
                if (b2 == b) continue;
                EXPECT_NEAR(dimer_correlation_exact(c, b, b2), joint[b][b2] / z, 1e-10);
            }
        }
    }
}

TEST(DimerCorrelator, SameBondRejected) {
    KasteleynSystem sys(TorusLattice(4), DimerWeights{});
    DimerCorrelator c(sys);
    EXPECT_THROW(dimer_correlation_exact(c, 3, 3), ConfigError);
}

TEST(DimerCorrelator, TranslationInvariant) {
    TorusLattice lat(10);
    KasteleynSystem sys(lat, DimerWeights{{1.4, 0.8, 1.1, 0.9}});
    DimerCorrelator c(sys);
    const int b = lat.bond(lat.site(1, 2), 0);
    const int b2 = lat.bond(lat.site(4, 3), 1);
    const double ref = c.truncated(b, b2);
    for (auto [dx, dy] : {std::pair{2, 0}, {0, 2}, {4, 6}, {-2, 2}}) {
        auto shift = [&](int bond) { return lat.bond(lat.shift(lat.bond_origin(bond), dx, dy), lat.bond_dir(bond)); };
        EXPECT_NEAR(c.truncated(shift(b), shift(b2)), ref, 1e-12);
    }
    // Uniform weights: odd translations are symmetries too.
    KasteleynSystem uni(lat, DimerWeights{});
    DimerCorrelator cu(uni);
    const double r0 = cu.truncated(b, b2);
    auto shift1 = [&](int bond) { return lat.bond(lat.shift(lat.bond_origin(bond), 1, 0), lat.bond_dir(bond)); };
    EXPECT_NEAR(cu.truncated(shift1(b), shift1(b2)), r0, 1e-12);
}

TEST(HeightVariance, MatchesEnumerationAtUnitSeparation) {
    std::mt19937 rng(41);
    TorusLattice lat(4);
    const auto covers = enumerate_dimer_covers(lat);
    for (const auto& w : {DimerWeights{}, random_weights(rng)}) {
        double z = 0.0, m1 = 0.0, m2 = 0.0;
        const auto path = straight_path(lat, 0, Step::east, 1);
        for (const auto& cov : covers) {
            const double x = cover_weight(lat, w, cov);
            const double d = height_difference(lat, cov, path).value();
            z += x;
            m1 += x * d;
            m2 += x * d * d;
        }
        m1 /= z;
        m2 /= z;
        KasteleynSystem sys(lat, w);
        DimerCorrelator c(sys);
        const auto h = height_variance_exact(c, 1, 1);
        EXPECT_NEAR(h.mean, m1, 1e-10);
        EXPECT_NEAR(h.second_moment, m2, 1e-10);
        EXPECT_NEAR(h.variance, m2 - m1 * m1, 1e-10);
    }
}

TEST(HeightVariance, DetourIndependent) {
    KasteleynSystem sys(TorusLattice(16), DimerWeights{{1.2, 1.0, 0.9, 1.0}});
    DimerCorrelator c(sys);
    for (int r : {1, 3, 5}) {
        const double ref = height_variance_exact(c, r, 1).variance;
        for (int d = 2; d <= 7; ++d) EXPECT_NEAR(height_variance_exact(c, r, d).variance, ref, 1e-10) << r << " " << d;
    }
}

TEST(HeightVariance, ZeroSeparationAndRange) {
    KasteleynSystem sys(TorusLattice(8), DimerWeights{});
    DimerCorrelator c(sys);
    EXPECT_EQ(height_variance_exact(c, 0).variance, 0.0);
    EXPECT_THROW(height_variance_exact(c, 4), ConfigError);
    EXPECT_THROW(height_variance_exact(c, 2, 4), ConfigError);
}

TEST(HeightVariance, GrowsMonotonically) {
    KasteleynSystem sys(TorusLattice(24), DimerWeights{});
    DimerCorrelator c(sys);
    double prev = 0.0;
    for (int r = 1; r < 12; ++r) {
        const double v = height_variance_exact(c, r).variance;
        EXPECT_GT(v, prev);
        prev = v;
    }
}

TEST(ExactChannels, FreeDimerExponentsApproachTwo) {
    std::vector<double> stag;
    for (int L : {16, 32}) {
        KasteleynSystem sys(TorusLattice(L), DimerWeights{});
        DimerCorrelator c(sys);
        const auto ch = exact_dimer_channels(c);
        const auto w = even_channel_window(L);
        stag.push_back(fit_power_law(ch.staggered, w).estimate);
        if (L == 32) EXPECT_NEAR(fit_power_law(ch.plain, w).estimate, 2.0, 0.1);
    }
    // The staggered channel carries a larger torus correction at this size.
    EXPECT_LT(std::abs(stag[1] - 2.0), std::abs(stag[0] - 2.0));
    EXPECT_NEAR(stag[1], 2.0, 0.2);
}

TEST(ExactChannels, OddAndEvenGeometryConsistent) {
    // Longitudinal and transverse series agree with the direct bond correlator.
    TorusLattice lat(12);
    KasteleynSystem sys(lat, DimerWeights{});
    DimerCorrelator c(sys);
    const auto ch = exact_dimer_channels(c);
    const int b = lat.bond(lat.site(0, 0), 0);
    for (int r = 1; r <= 6; ++r) {
        EXPECT_NEAR(ch.longitudinal.mean[r], c.truncated(b, lat.bond(lat.site(r, 0), 0)), 1e-12);
        EXPECT_NEAR(ch.transverse.mean[r], c.truncated(b, lat.bond(lat.site(0, r), 0)), 1e-12);
    }
}
