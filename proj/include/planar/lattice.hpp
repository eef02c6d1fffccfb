#pragma once

// Periodic square lattices, spin and dimer configurations, the dimer height
// function, and exhaustive enumerators used as oracles on tiny systems.

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "planar/errors.hpp"

namespace planar {

enum class Color : std::uint8_t { black, white };

// Face-to-face moves on the dual lattice.
enum class Step : std::uint8_t { east, north, west, south };

inline constexpr std::array<Step, 4> all_steps{Step::east, Step::north, Step::west, Step::south};

inline int wrap(int a, int L) {
    const int r = a % L;
    return r < 0 ? r + L : r;
}

// Index arithmetic on an L x L torus. Site v = x + L*y, x along e0, y along e1.
// Spin models use this directly (L >= 2); dimer physics needs TorusLattice.
class PeriodicSquare {
public:
    explicit PeriodicSquare(int L) : L_(L) {
        if (L < 2) throw ConfigError("periodic square needs L >= 2, got " + std::to_string(L));
    }

    int size() const { return L_; }
    int site_count() const { return L_ * L_; }
    int site(int x, int y) const { return wrap(x, L_) + L_ * wrap(y, L_); }
    int x_of(int v) const { return v % L_; }
    int y_of(int v) const { return v / L_; }
    int shift(int v, int dx, int dy) const { return site(x_of(v) + dx, y_of(v) + dy); }
    // Neighbour at v + e_dir.
    int neighbor(int v, int dir) const { return dir == 0 ? shift(v, 1, 0) : shift(v, 0, 1); }

private:
    int L_;
};

// Even-L torus with bipartite colouring, bonds (vertex, direction) and faces.
// Face f = x + L*y is the square with lower-left corner at vertex (x, y).
class TorusLattice : public PeriodicSquare {
public:
    explicit TorusLattice(int L) : PeriodicSquare(check(L)) {}

    int vertex_count() const { return site_count(); }
    int bond_count() const { return 2 * site_count(); }
    int face_count() const { return site_count(); }

    int bond(int v, int dir) const { return 2 * v + dir; }
    int bond_origin(int b) const { return b / 2; }
    int bond_dir(int b) const { return b % 2; }
    int bond_target(int b) const { return neighbor(bond_origin(b), bond_dir(b)); }

    Color color(int v) const { return (x_of(v) + y_of(v)) % 2 == 0 ? Color::black : Color::white; }
    int black_endpoint(int b) const {
        return color(bond_origin(b)) == Color::black ? bond_origin(b) : bond_target(b);
    }
    int white_endpoint(int b) const {
        return color(bond_origin(b)) == Color::white ? bond_origin(b) : bond_target(b);
    }

    // Weight class 0..3 (t1..t4): white endpoint right of, above, left of, below the black one.
    int weight_class(int b) const {
        const bool origin_black = color(bond_origin(b)) == Color::black;
        if (bond_dir(b) == 0) return origin_black ? 0 : 2;
        return origin_black ? 1 : 3;
    }

    std::array<int, 4> incident_bonds(int v) const {
        return {bond(v, 0), bond(v, 1), bond(shift(v, -1, 0), 0), bond(shift(v, 0, -1), 1)};
    }

    int face_neighbor(int f, Step s) const {
        switch (s) {
            case Step::east: return shift(f, 1, 0);
            case Step::north: return shift(f, 0, 1);
            case Step::west: return shift(f, -1, 0);
            case Step::south: return shift(f, 0, -1);
        }
        return f;
    }

    // The bond separating face f from face_neighbor(f, s).
    int crossed_bond(int f, Step s) const {
        switch (s) {
            case Step::east: return bond(shift(f, 1, 0), 1);
            case Step::north: return bond(shift(f, 0, 1), 0);
            case Step::west: return bond(f, 1);
            case Step::south: return bond(f, 0);
        }
        return -1;
    }

    // bottom, right, top, left
    std::array<int, 4> face_bonds(int f) const {
        return {crossed_bond(f, Step::south), crossed_bond(f, Step::east),
                crossed_bond(f, Step::north), crossed_bond(f, Step::west)};
    }

    // Face corners in clockwise order starting at the upper-left corner.
    std::array<int, 4> face_corners_clockwise(int f) const {
        return {shift(f, 0, 1), shift(f, 1, 1), shift(f, 1, 0), f};
    }

    // +1 when the white endpoint of the crossed bond lies to the right of the
    // direction of travel. Right of d = (dx, dy) is (dy, -dx); positions are
    // doubled so face centres and vertices stay integral.
    int crossing_sign(int f, Step s) const {
        static constexpr int dxs[4] = {1, 0, -1, 0};
        static constexpr int dys[4] = {0, 1, 0, -1};
        const int k = static_cast<int>(s);
        const int dx = dxs[k], dy = dys[k];
        // Midpoint of the crossed bond relative to the face centre, doubled: (dx, dy).
        // The endpoint on the right sits at midpoint + right/2, i.e. offset (dx+dy, dy-dx)
        // from the centre in doubled units; the corner offsets are (+-1, +-1).
        const int ox = dx + dy, oy = dy - dx;
        const int cx = x_of(f), cy = y_of(f);
        const int vx = cx + (ox + 1) / 2, vy = cy + (oy + 1) / 2;
        return color(site(vx, vy)) == Color::white ? +1 : -1;
    }

private:
    static int check(int L) {
        if (L < 4 || L % 2 != 0)
            throw ConfigError("torus side must be even and >= 4, got " + std::to_string(L));
        return L;
    }
};

inline TorusLattice build_torus(int L) { return TorusLattice(L); }

struct SpinConfig {
    std::vector<std::int8_t> values;

    static SpinConfig all_up(int n) { return {std::vector<std::int8_t>(n, 1)}; }
    int size() const { return static_cast<int>(values.size()); }
    auto operator<=>(const SpinConfig&) const = default;
};

struct SpinPairConfig {
    SpinConfig sigma;
    SpinConfig sigma_prime;

    static SpinPairConfig all_up(int n) { return {SpinConfig::all_up(n), SpinConfig::all_up(n)}; }
    auto operator<=>(const SpinPairConfig&) const = default;

    // sigma followed by sigma_prime, the layout SpinHamiltonian works on.
    std::vector<std::int8_t> packed() const {
        std::vector<std::int8_t> out(sigma.values);
        out.insert(out.end(), sigma_prime.values.begin(), sigma_prime.values.end());
        return out;
    }
    static SpinPairConfig unpack(std::span<const std::int8_t> s) {
        const auto n = s.size() / 2;
        return {{{s.begin(), s.begin() + n}}, {{s.begin() + n, s.end()}}};
    }
};

struct DimerCover {
    std::vector<std::uint8_t> matched;  // indexed by bond id

    int matched_count() const {
        int n = 0;
        for (auto m : matched) n += m;
        return n;
    }
    bool occupied(int b) const { return matched[b] != 0; }
    auto operator<=>(const DimerCover&) const = default;
};

inline bool is_perfect_matching(const TorusLattice& lat, const DimerCover& c) {
    if (static_cast<int>(c.matched.size()) != lat.bond_count()) return false;
    for (int v = 0; v < lat.vertex_count(); ++v) {
        int n = 0;
        for (int b : lat.incident_bonds(v)) n += c.matched[b];
        if (n != 1) return false;
    }
    return true;
}

// Horizontal dimers on every bond (x, y)-(x+1, y) with x even. Zero winding.
inline DimerCover columnar_cover(const TorusLattice& lat) {
    DimerCover c{std::vector<std::uint8_t>(lat.bond_count(), 0)};
    for (int v = 0; v < lat.vertex_count(); ++v)
        if (lat.x_of(v) % 2 == 0) c.matched[lat.bond(v, 0)] = 1;
    return c;
}

// Exact height values in units of 1/4.
struct Quarters {
    std::int64_t q = 0;

    double value() const { return static_cast<double>(q) / 4.0; }
    Quarters operator+(Quarters o) const { return {q + o.q}; }
    Quarters operator-(Quarters o) const { return {q - o.q}; }
    Quarters operator-() const { return {-q}; }
    auto operator<=>(const Quarters&) const = default;
};

struct DualPath {
    int L = 0;
    int start_face = 0;
    std::vector<Step> steps;

    int end_face(const TorusLattice& lat) const {
        int f = start_face;
        for (Step s : steps) f = lat.face_neighbor(f, s);
        return f;
    }
};

// Straight path of n steps in direction s.
inline DualPath straight_path(const TorusLattice& lat, int start_face, Step s, int n) {
    return {lat.size(), start_face, std::vector<Step>(n, s)};
}

// h_start - h_end = sum over crossed bonds of (I_b - 1/4) sigma_b.
inline Quarters height_difference(const TorusLattice& lat, const DimerCover& cover,
                                  const DualPath& path) {
    if (path.L != lat.size())
        throw ConfigError("dual path built for L=" + std::to_string(path.L) +
                          " used on L=" + std::to_string(lat.size()));
    if (path.start_face < 0 || path.start_face >= lat.face_count())
        throw ConfigError("dual path starts outside the lattice");
    Quarters h;
    int f = path.start_face;
    for (Step s : path.steps) {
        const int b = lat.crossed_bond(f, s);
        h.q += static_cast<std::int64_t>(4 * cover.matched[b] - 1) * lat.crossing_sign(f, s);
        f = lat.face_neighbor(f, s);
    }
    return h;
}

// Height change accumulated along the two non-contractible straight loops
// through face 0 (east-going, north-going). Both vanish in the sector reached
// from the columnar state by plaquette moves.
inline std::pair<Quarters, Quarters> winding(const TorusLattice& lat, const DimerCover& c) {
    const int L = lat.size();
    return {height_difference(lat, c, straight_path(lat, 0, Step::east, L)),
            height_difference(lat, c, straight_path(lat, 0, Step::north, L))};
}

// Heights on all faces relative to face 0, -(h_0 - h_f), along the east-going
// row through face 0 and then north-going columns. Only single valued for
// zero winding.
inline void face_heights(const TorusLattice& lat, const DimerCover& c, std::vector<std::int64_t>& out) {
    const int L = lat.size();
    out.assign(lat.face_count(), 0);
    std::int64_t h = 0;
    for (int x = 0; x < L; ++x) {
        const int f = lat.site(x, 0);
        out[f] = h;
        const int b = lat.crossed_bond(f, Step::east);
        h -= (4 * c.matched[b] - 1) * lat.crossing_sign(f, Step::east);
    }
    for (int x = 0; x < L; ++x) {
        std::int64_t hc = out[lat.site(x, 0)];
        for (int y = 0; y + 1 < L; ++y) {
            const int f = lat.site(x, y);
            const int b = lat.crossed_bond(f, Step::north);
            hc -= (4 * c.matched[b] - 1) * lat.crossing_sign(f, Step::north);
            out[lat.site(x, y + 1)] = hc;
        }
    }
}

// ---------------------------------------------------------------------------
// Enumeration oracles

inline constexpr int max_enumerated_vertices = 36;

// Visits every perfect matching of the graph exactly once, in a fixed order:
// the lowest uncovered vertex is matched first, trying its edges in index order.
inline void for_each_perfect_matching(int n_vertices, std::span<const std::pair<int, int>> edges,
                                      const std::function<void(const std::vector<std::uint8_t>&)>& visit) {
    if (n_vertices > max_enumerated_vertices)
        throw ConfigError("matching enumeration limited to " + std::to_string(max_enumerated_vertices) +
                          " vertices, got " + std::to_string(n_vertices));
    std::vector<std::vector<int>> incident(n_vertices);
    for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
        const auto [u, v] = edges[e];
        if (u == v) continue;
        incident[u].push_back(e);
        incident[v].push_back(e);
    }
    std::vector<std::uint8_t> covered(n_vertices, 0), chosen(edges.size(), 0);
    if (n_vertices % 2 != 0) return;

    std::function<void(int)> recurse = [&](int from) {
        int v = from;
        while (v < n_vertices && covered[v]) ++v;
        if (v == n_vertices) {
            visit(chosen);
            return;
        }
        covered[v] = 1;
        for (int e : incident[v]) {
            const int w = edges[e].first == v ? edges[e].second : edges[e].first;
            if (covered[w]) continue;
            covered[w] = 1;
            chosen[e] = 1;
            recurse(v + 1);
            chosen[e] = 0;
            covered[w] = 0;
        }
        covered[v] = 0;
    };
    recurse(0);
}

inline std::vector<std::pair<int, int>> bond_edges(const TorusLattice& lat) {
    std::vector<std::pair<int, int>> edges;
    edges.reserve(lat.bond_count());
    for (int b = 0; b < lat.bond_count(); ++b) edges.emplace_back(lat.bond_origin(b), lat.bond_target(b));
    return edges;
}

inline std::vector<DimerCover> enumerate_dimer_covers(const TorusLattice& lat) {
    std::vector<DimerCover> out;
    const auto edges = bond_edges(lat);
    for_each_perfect_matching(lat.vertex_count(), edges,
                              [&](const std::vector<std::uint8_t>& m) { out.push_back({m}); });
    return out;
}

inline constexpr int max_enumerated_spins = 9;

namespace detail {
inline void check_spin_enumeration(const PeriodicSquare& g) {
    if (g.site_count() > max_enumerated_spins)
        throw ConfigError("spin enumeration limited to L^2 <= " + std::to_string(max_enumerated_spins) +
                          ", got L=" + std::to_string(g.size()));
}
inline SpinConfig decode_spins(std::uint64_t code, int n) {
    SpinConfig s{std::vector<std::int8_t>(n)};
    for (int i = 0; i < n; ++i) s.values[i] = (code >> i) & 1U ? -1 : 1;
    return s;
}
}  // namespace detail

// All 2^(L^2) single-field states; bit i of the state index set means spin i = -1.
inline std::vector<SpinConfig> enumerate_spin_configs(const PeriodicSquare& g) {
    detail::check_spin_enumeration(g);
    const int n = g.site_count();
    std::vector<SpinConfig> out;
    out.reserve(std::size_t{1} << n);
    for (std::uint64_t c = 0; c < (std::uint64_t{1} << n); ++c) out.push_back(detail::decode_spins(c, n));
    return out;
}

// All 2^(2 L^2) pair states; the low L^2 bits encode sigma.
inline std::vector<SpinPairConfig> enumerate_spin_states(const PeriodicSquare& g) {
    detail::check_spin_enumeration(g);
    const int n = g.site_count();
    const std::uint64_t mask = (std::uint64_t{1} << n) - 1;
    std::vector<SpinPairConfig> out;
    out.reserve(std::size_t{1} << (2 * n));
    for (std::uint64_t c = 0; c < (std::uint64_t{1} << (2 * n)); ++c)
        out.push_back({detail::decode_spins(c & mask, n), detail::decode_spins(c >> n, n)});
    return out;
}

}  // namespace planar
