#include <gtest/gtest.h>

#include <random>
#include <set>

#include "planar/lattice.hpp"

using namespace planar;

TEST(PeriodicSquare, WrapsCoordinates) {
    PeriodicSquare g(5);
    EXPECT_EQ(g.site(-1, 0), 4);
    EXPECT_EQ(g.site(5, 5), 0);
    EXPECT_EQ(g.shift(g.site(4, 4), 1, 1), 0);
    EXPECT_EQ(g.neighbor(g.site(4, 2), 0), g.site(0, 2));
    EXPECT_THROW(PeriodicSquare(1), ConfigError);
}

TEST(TorusLattice, RejectsOddOrSmall) {
    EXPECT_THROW(TorusLattice(5), ConfigError);
    EXPECT_THROW(TorusLattice(2), ConfigError);
    EXPECT_NO_THROW(TorusLattice(4));
}

TEST(TorusLattice, CountsAndColouring) {
    TorusLattice lat(6);
    EXPECT_EQ(lat.vertex_count(), 36);
    EXPECT_EQ(lat.bond_count(), 72);
    EXPECT_EQ(lat.face_count(), 36);
    for (int b = 0; b < lat.bond_count(); ++b) {
        EXPECT_NE(lat.color(lat.bond_origin(b)), lat.color(lat.bond_target(b)));
        EXPECT_EQ(lat.color(lat.black_endpoint(b)), Color::black);
        EXPECT_EQ(lat.color(lat.white_endpoint(b)), Color::white);
    }
}

TEST(TorusLattice, WeightClassesFollowWhitePosition) {
    TorusLattice lat(4);
    const int black = lat.site(0, 0);
    ASSERT_EQ(lat.color(black), Color::black);
    EXPECT_EQ(lat.weight_class(lat.bond(black, 0)), 0);                 // white to the right
    EXPECT_EQ(lat.weight_class(lat.bond(black, 1)), 1);                 // white above
    EXPECT_EQ(lat.weight_class(lat.bond(lat.site(-1, 0), 0)), 2);       // white to the left
    EXPECT_EQ(lat.weight_class(lat.bond(lat.site(0, -1), 1)), 3);       // white below
    // Every vertex sees each class exactly once.
    for (int v = 0; v < lat.vertex_count(); ++v) {
        std::set<int> classes;
        for (int b : lat.incident_bonds(v)) classes.insert(lat.weight_class(b));
        EXPECT_EQ(classes.size(), 4u);
    }
}

TEST(TorusLattice, FaceBondsSurroundTheFace) {
    TorusLattice lat(4);
    for (int f = 0; f < lat.face_count(); ++f) {
        const auto corners = lat.face_corners_clockwise(f);
        std::set<int> cs(corners.begin(), corners.end());
        for (int b : lat.face_bonds(f)) {
            EXPECT_TRUE(cs.count(lat.bond_origin(b)));
            EXPECT_TRUE(cs.count(lat.bond_target(b)));
        }
        for (Step s : all_steps) {
            const int g = lat.face_neighbor(f, s);
            const int b = lat.crossed_bond(f, s);
            // The crossed bond is shared by both faces.
            const auto fb = lat.face_bonds(g);
            EXPECT_NE(std::find(fb.begin(), fb.end(), b), fb.end());
        }
    }
}

TEST(TorusLattice, CrossingSignIsReversedOnTheWayBack) {
    TorusLattice lat(6);
    const Step back[4] = {Step::west, Step::south, Step::east, Step::north};
    for (int f = 0; f < lat.face_count(); ++f)
        for (int k = 0; k < 4; ++k) {
            const Step s = all_steps[k];
            EXPECT_EQ(lat.crossing_sign(f, s), -lat.crossing_sign(lat.face_neighbor(f, s), back[k]));
        }
}

TEST(DimerCover, ColumnarIsPerfectMatchingWithZeroWinding) {
    for (int L : {4, 6, 8, 16}) {
        TorusLattice lat(L);
        const auto c = columnar_cover(lat);
        EXPECT_TRUE(is_perfect_matching(lat, c));
        EXPECT_EQ(c.matched_count(), L * L / 2);
        const auto w = winding(lat, c);
        EXPECT_EQ(w.first.q, 0);
        EXPECT_EQ(w.second.q, 0);
    }
}

// Open-boundary grids with known matching counts.
namespace {
std::vector<std::pair<int, int>> open_grid_edges(int w, int h) {
    std::vector<std::pair<int, int>> e;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (x + 1 < w) e.emplace_back(x + w * y, x + 1 + w * y);
            if (y + 1 < h) e.emplace_back(x + w * y, x + w * (y + 1));
        }
    return e;
}

long count_matchings(int n, const std::vector<std::pair<int, int>>& e) {
    long count = 0;
    for_each_perfect_matching(n, e, [&](const std::vector<std::uint8_t>&) { ++count; });
    return count;
}
}  // namespace

TEST(Enumeration, OpenGridCounts) {
    EXPECT_EQ(count_matchings(4, open_grid_edges(2, 2)), 2);
    EXPECT_EQ(count_matchings(6, open_grid_edges(2, 3)), 3);
    EXPECT_EQ(count_matchings(8, open_grid_edges(2, 4)), 5);
    EXPECT_EQ(count_matchings(16, open_grid_edges(4, 4)), 36);
    EXPECT_EQ(count_matchings(36, open_grid_edges(6, 6)), 6728);
    EXPECT_EQ(count_matchings(9, open_grid_edges(3, 3)), 0);
}

TEST(Enumeration, TorusCoversAreDistinctPerfectMatchings) {
    TorusLattice lat(4);
    const auto covers = enumerate_dimer_covers(lat);
    EXPECT_EQ(covers.size(), 272u);
    std::set<std::vector<std::uint8_t>> seen;
    for (const auto& c : covers) {
        EXPECT_TRUE(is_perfect_matching(lat, c));
        seen.insert(c.matched);
    }
    EXPECT_EQ(seen.size(), covers.size());
}

TEST(Enumeration, RefusesLargeGraphs) {
    TorusLattice lat(8);
    EXPECT_THROW(enumerate_dimer_covers(lat), ConfigError);
}

TEST(Height, ContractibleLoopsVanish) {
    TorusLattice lat(4);
    for (const auto& c : enumerate_dimer_covers(lat))
        for (int f = 0; f < lat.face_count(); ++f) {
            DualPath loop{4, f, {Step::east, Step::north, Step::west, Step::south}};
            EXPECT_EQ(height_difference(lat, c, loop).q, 0);
        }
}

TEST(Height, PathIndependentBetweenFaces) {
    TorusLattice lat(6);
    std::mt19937 rng(7);
    auto covers = std::vector<DimerCover>{columnar_cover(lat)};
    // A few covers from random plaquette rotations of the columnar state.
    DimerCover c = covers[0];
    for (int k = 0; k < 400; ++k) {
        const int f = static_cast<int>(rng() % lat.face_count());
        const auto b = lat.face_bonds(f);
        if ((c.matched[b[0]] && c.matched[b[2]]) || (c.matched[b[1]] && c.matched[b[3]])) {
            for (int i = 0; i < 4; ++i) c.matched[b[i]] ^= 1;
            if (k % 40 == 0) covers.push_back(c);
        }
    }
    for (const auto& cov : covers) {
        ASSERT_TRUE(is_perfect_matching(lat, cov));
        const int start = lat.site(1, 1);
        DualPath a{6, start, {Step::east, Step::east, Step::north, Step::north, Step::north}};
        DualPath b{6, start, {Step::north, Step::north, Step::north, Step::east, Step::east}};
        DualPath d{6, start, {Step::west, Step::north, Step::east, Step::east, Step::east, Step::north, Step::north}};
        ASSERT_EQ(a.end_face(lat), b.end_face(lat));
        ASSERT_EQ(a.end_face(lat), d.end_face(lat));
        EXPECT_EQ(height_difference(lat, cov, a), height_difference(lat, cov, b));
        EXPECT_EQ(height_difference(lat, cov, a), height_difference(lat, cov, d));
    }
}

TEST(Height, FaceHeightsMatchPathDifferences) {
    TorusLattice lat(4);
    std::vector<std::int64_t> h;
    for (const auto& c : enumerate_dimer_covers(lat)) {
        const auto w = winding(lat, c);
        if (w.first.q != 0 || w.second.q != 0) continue;
        face_heights(lat, c, h);
        for (int f = 0; f < lat.face_count(); ++f) {
            DualPath p{4, 0, {}};
            p.steps.insert(p.steps.end(), lat.x_of(f), Step::east);
            p.steps.insert(p.steps.end(), lat.y_of(f), Step::north);
            EXPECT_EQ(h[f], -height_difference(lat, c, p).q);
        }
    }
}

TEST(Height, QuartersAreExact) {
    Quarters a{5}, b{-3};
    EXPECT_EQ((a + b).q, 2);
    EXPECT_EQ((a - b).q, 8);
    EXPECT_DOUBLE_EQ(a.value(), 1.25);
}

TEST(Height, PathOnWrongLatticeRejected) {
    TorusLattice lat(4);
    DualPath p{6, 0, {Step::east}};
    EXPECT_THROW(height_difference(lat, columnar_cover(lat), p), ConfigError);
}

TEST(SpinEnumeration, SizesAndLayout) {
    PeriodicSquare g(2);
    EXPECT_EQ(enumerate_spin_configs(g).size(), 16u);
    const auto pairs = enumerate_spin_states(g);
    EXPECT_EQ(pairs.size(), 256u);
    EXPECT_EQ(pairs[1].sigma.values[0], -1);
    EXPECT_EQ(pairs[16].sigma_prime.values[0], -1);
    const auto packed = pairs[37].packed();
    EXPECT_EQ(SpinPairConfig::unpack(packed), pairs[37]);
    EXPECT_THROW(enumerate_spin_configs(PeriodicSquare(4)), ConfigError);
}
