#pragma once

// Exponent extraction by weighted least squares in log space: power laws,
// logarithmic growth of the height variance, exponential decay, nu from
// xi(t), and Binder-cumulant crossings.
//
// Exact data (all errors zero) are fitted with unit weights and parameter
// errors come from the residual scatter. Noisy data are weighted by 1/sigma^2;
// when the series carries jackknife replicas the parameter errors come from
// refitting every replica, which keeps the correlations between separations.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "planar/errors.hpp"
#include "planar/series.hpp"
#include "planar/stats.hpp"

namespace planar {

struct FitWindow {
    double r_min = 0.0;
    double r_max = 0.0;
};

inline FitWindow default_window(int L) { return {L / 8.0, L / 4.0}; }

// [L/8, L/4] widened on the right until it holds `min_points` separations
// of the given spacing (capped at L/2). The plain and staggered dimer
// channels exist at even r only (spacing 2).
inline FitWindow window_with_points(int L, int spacing = 1, int min_points = 4) {
    FitWindow w = default_window(L);
    auto count = [&] {
        int n = 0;
        for (int r = spacing; r <= L / 2; r += spacing) n += r >= w.r_min && r <= w.r_max;
        return n;
    };
    while (count() < min_points && w.r_max + spacing <= L / 2) w.r_max += spacing;
    return w;
}

inline FitWindow even_channel_window(int L) { return window_with_points(L, 2); }

struct LinearFit {
    double slope = 0.0, intercept = 0.0;
    double slope_error = 0.0, intercept_error = 0.0;
    double chi2 = 0.0;
    int points = 0;
};

// y = intercept + slope * x. Zero sigmas mean unit weights with errors from
// the residual variance.
inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y,
                            const std::vector<double>& sigma) {
    const std::size_t n = x.size();
    if (n < 3 || y.size() != n || sigma.size() != n) throw ConfigError("linear fit needs >= 3 matched points");
    bool weighted = false;
    for (double s : sigma) weighted = weighted || s > 0.0;
    if (weighted)
        for (double s : sigma)
            if (!(s > 0.0)) throw ConfigError("mixed zero and non-zero uncertainties");
    double S = 0, Sx = 0, Sy = 0, Sxx = 0, Sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weighted ? 1.0 / (sigma[i] * sigma[i]) : 1.0;
        S += w;
        Sx += w * x[i];
        Sy += w * y[i];
        Sxx += w * x[i] * x[i];
        Sxy += w * x[i] * y[i];
    }
    const double det = S * Sxx - Sx * Sx;
    if (!(std::abs(det) > 1e-300)) throw ConfigError("degenerate fit window");
    LinearFit f;
    f.points = static_cast<int>(n);
    f.slope = (S * Sxy - Sx * Sy) / det;
    f.intercept = (Sxx * Sy - Sx * Sxy) / det;
    for (std::size_t i = 0; i < n; ++i) {
        const double res = y[i] - f.intercept - f.slope * x[i];
        f.chi2 += weighted ? res * res / (sigma[i] * sigma[i]) : res * res;
    }
    const double scale = weighted ? 1.0 : f.chi2 / static_cast<double>(n - 2);
    f.slope_error = std::sqrt(scale * S / det);
    f.intercept_error = std::sqrt(scale * Sxx / det);
    return f;
}

struct FitResult {
    std::string model;
    double estimate = 0.0;  // exponent, A, xi or nu
    double error = 0.0;
    double prefactor = 0.0;
    double prefactor_error = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
    double chi2_reduced = 0.0;
    int points = 0;
    double r_min = 0.0;
    double r_max = 0.0;
    bool errors_from_replicas = false;
};

namespace detail {

struct Selected {
    std::vector<double> r, y, sigma;
    std::vector<std::size_t> index;
};

inline Selected select_window(const CorrelationSeries& s, const FitWindow& w, int min_points) {
    if (!(w.r_min < w.r_max)) throw ConfigError("fit window must satisfy r_min < r_max");
    Selected out;
    for (std::size_t k = 0; k < s.size(); ++k)
        if (s.r[k] > 0 && s.r[k] >= w.r_min && s.r[k] <= w.r_max) {
            out.r.push_back(s.r[k]);
            out.y.push_back(s.mean[k]);
            out.sigma.push_back(k < s.error.size() ? s.error[k] : 0.0);
            out.index.push_back(k);
        }
    if (static_cast<int>(out.r.size()) < min_points)
        throw ConfigError("fit window [" + std::to_string(w.r_min) + ", " + std::to_string(w.r_max) + "] holds " +
                          std::to_string(out.r.size()) + " points, need " + std::to_string(min_points));
    return out;
}

// ln|C| with a common sign required.
inline void to_log_magnitude(Selected& s, bool require_signal) {
    const double sign = s.y.front() > 0 ? 1.0 : -1.0;
    for (std::size_t k = 0; k < s.y.size(); ++k) {
        if (!(s.y[k] * sign > 0)) throw NumericError("correlation changes sign or vanishes inside the fit window");
        if (require_signal && s.sigma[k] > 0 && std::abs(s.y[k]) <= s.sigma[k])
            throw NumericError("correlation is not resolved above its error inside the fit window");
        s.sigma[k] = s.sigma[k] / std::abs(s.y[k]);
        s.y[k] = std::log(std::abs(s.y[k]));
    }
}

enum class XMap { log_r, r };

// Fits y(x) and, with replicas, refits every replica with the same weights.
inline std::pair<LinearFit, std::pair<double, double>> fit_with_replicas(
    const CorrelationSeries& s, const Selected& sel, XMap xmap, bool log_y) {
    std::vector<double> x(sel.r.size());
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = xmap == XMap::log_r ? std::log(sel.r[k]) : sel.r[k];
    LinearFit f = linear_fit(x, sel.y, sel.sigma);
    if (s.replicas.empty()) return {f, {f.slope_error, f.intercept_error}};
    std::vector<double> slopes, intercepts;
    for (const auto& rep : s.replicas) {
        std::vector<double> y(sel.index.size());
        for (std::size_t k = 0; k < y.size(); ++k) {
            const double v = rep.at(sel.index[k]);
            y[k] = log_y ? std::log(std::abs(v)) : v;
        }
        const LinearFit g = linear_fit(x, y, sel.sigma);
        slopes.push_back(g.slope);
        intercepts.push_back(g.intercept);
    }
    return {f, {jackknife_error(slopes), jackknife_error(intercepts)}};
}

inline FitResult finish(const std::string& model, const LinearFit& f, const Selected& sel, bool replicas) {
    FitResult r;
    r.model = model;
    r.slope = f.slope;
    r.intercept = f.intercept;
    r.points = f.points;
    r.chi2_reduced = f.chi2 / std::max(1, f.points - 2);
    r.r_min = *std::min_element(sel.r.begin(), sel.r.end());
    r.r_max = *std::max_element(sel.r.begin(), sel.r.end());
    r.errors_from_replicas = replicas;
    return r;
}

}  // namespace detail

// C(r) ~ B r^{-p}: returns p (estimate) and B (prefactor).
inline FitResult fit_power_law(const CorrelationSeries& s, const FitWindow& w) {
    auto sel = detail::select_window(s, w, 4);
    const double sign = sel.y.front() > 0 ? 1.0 : -1.0;
    detail::to_log_magnitude(sel, true);
    auto [f, err] = detail::fit_with_replicas(s, sel, detail::XMap::log_r, true);
    FitResult r = detail::finish("power_law", f, sel, !s.replicas.empty());
    r.estimate = -f.slope;
    r.error = err.first;
    r.prefactor = sign * std::exp(f.intercept);
    r.prefactor_error = std::abs(r.prefactor) * err.second;
    return r;
}

// V(r) = (A / pi^2) ln r + R: returns A (estimate) and R (prefactor).
inline FitResult fit_log_variance(const CorrelationSeries& s, const FitWindow& w) {
    auto sel = detail::select_window(s, w, 4);
    auto [f, err] = detail::fit_with_replicas(s, sel, detail::XMap::log_r, false);
    FitResult r = detail::finish("log_variance", f, sel, !s.replicas.empty());
    const double pi2 = std::numbers::pi * std::numbers::pi;
    r.estimate = pi2 * f.slope;
    r.error = pi2 * err.first;
    r.prefactor = f.intercept;
    r.prefactor_error = err.second;
    return r;
}

// A from two tori of sides L and s*L compared at equal r/L:
// V_{sL}(s r) - V_L(r) = (A / pi^2) ln s + o(1). Geometry-dependent torus
// terms cancel because they depend on r/L only. The window refers to the
// smaller torus.
inline FitResult fit_log_variance_scaled(const CorrelationSeries& small, const CorrelationSeries& large, int scale,
                                         const FitWindow& w) {
    if (scale < 2) throw ConfigError("scale factor must be >= 2");
    auto find = [](const CorrelationSeries& s, int r) -> long {
        for (std::size_t k = 0; k < s.size(); ++k)
            if (s.r[k] == r) return static_cast<long>(k);
        return -1;
    };
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<double> rs;
    for (std::size_t k = 0; k < small.size(); ++k) {
        const int r = small.r[k];
        if (r <= 0 || r < w.r_min || r > w.r_max) continue;
        const long j = find(large, scale * r);
        if (j < 0) continue;
        pairs.emplace_back(k, static_cast<std::size_t>(j));
        rs.push_back(r);
    }
    if (pairs.size() < 2) throw ConfigError("scaled variance fit needs >= 2 matched separations");
    const double pi2 = std::numbers::pi * std::numbers::pi;
    const double ls = std::log(static_cast<double>(scale));
    auto estimate = [&](const std::vector<double>& vs, const std::vector<double>& vl) {
        double a = 0.0;
        for (auto [k, j] : pairs) a += (vl[j] - vs[k]) / ls;
        return pi2 * a / pairs.size();
    };
    FitResult r;
    r.model = "log_variance_scaled";
    r.estimate = estimate(small.mean, large.mean);
    r.points = static_cast<int>(pairs.size());
    r.r_min = *std::min_element(rs.begin(), rs.end());
    r.r_max = *std::max_element(rs.begin(), rs.end());
    r.slope = r.estimate / pi2;
    double spread = 0.0;
    for (auto [k, j] : pairs) {
        const double d = pi2 * (large.mean[j] - small.mean[k]) / ls - r.estimate;
        spread += d * d;
    }
    r.chi2_reduced = spread / std::max<std::size_t>(1, pairs.size() - 1);
    const bool noisy = !small.replicas.empty() || !large.replicas.empty();
    if (noisy) {
        double var = 0.0;
        for (const auto* which : {&small, &large}) {
            std::vector<double> loo;
            for (const auto& rep : which->replicas)
                loo.push_back(which == &small ? estimate(rep, large.mean) : estimate(small.mean, rep));
            const double e = jackknife_error(loo);
            var += e * e;
        }
        r.error = std::sqrt(var);
        r.errors_from_replicas = true;
    } else {
        double var = 0.0;
        bool has_sigma = false;
        for (auto [k, j] : pairs) {
            const double sk = k < small.error.size() ? small.error[k] : 0.0;
            const double sj = j < large.error.size() ? large.error[j] : 0.0;
            has_sigma = has_sigma || sk > 0 || sj > 0;
            var += sk * sk + sj * sj;
        }
        r.error = has_sigma ? pi2 * std::sqrt(var) / (ls * pairs.size())
                            : std::sqrt(r.chi2_reduced / static_cast<double>(pairs.size()));
    }
    return r;
}

// C(r) ~ B e^{-r / xi}. Accepted only when the exponential model fits the
// window at least as well as a pure power law.
inline FitResult fit_correlation_length(const CorrelationSeries& s, const FitWindow& w) {
    auto sel = detail::select_window(s, w, 4);
    const double sign = sel.y.front() > 0 ? 1.0 : -1.0;
    detail::to_log_magnitude(sel, true);
    auto [f, err] = detail::fit_with_replicas(s, sel, detail::XMap::r, true);
    std::vector<double> lr(sel.r.size());
    for (std::size_t k = 0; k < lr.size(); ++k) lr[k] = std::log(sel.r[k]);
    const LinearFit pw = linear_fit(lr, sel.y, sel.sigma);
    if (!(f.chi2 <= pw.chi2)) throw NumericError("no exponential regime: a power law fits the window better");
    if (!(f.slope < 0)) throw NumericError("no exponential decay in the fit window");
    FitResult r = detail::finish("exponential", f, sel, !s.replicas.empty());
    r.estimate = -1.0 / f.slope;
    r.error = err.first / (f.slope * f.slope);
    r.prefactor = sign * std::exp(f.intercept);
    r.prefactor_error = std::abs(r.prefactor) * err.second;
    return r;
}

// xi(t) ~ t^{-nu} from a grid of reduced temperatures.
inline FitResult fit_nu(const std::vector<double>& t, const std::vector<double>& xi,
                        const std::vector<double>& xi_error) {
    if (t.size() != xi.size() || t.size() != xi_error.size() || t.size() < 3)
        throw ConfigError("nu fit needs >= 3 matched (t, xi) points");
    std::vector<double> x, y, s;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (!(t[k] > 0) || !(xi[k] > 0)) throw ConfigError("t and xi must be positive");
        x.push_back(std::log(t[k]));
        y.push_back(std::log(xi[k]));
        s.push_back(xi_error[k] / xi[k]);
    }
    const LinearFit f = linear_fit(x, y, s);
    FitResult r;
    r.model = "nu";
    r.estimate = -f.slope;
    r.error = f.slope_error;
    r.prefactor = std::exp(f.intercept);
    r.prefactor_error = r.prefactor * f.intercept_error;
    r.slope = f.slope;
    r.intercept = f.intercept;
    r.points = f.points;
    r.chi2_reduced = f.chi2 / std::max(1, f.points - 2);
    r.r_min = *std::min_element(t.begin(), t.end());
    r.r_max = *std::max_element(t.begin(), t.end());
    return r;
}

// ---------------------------------------------------------------------------
// Binder crossings

using BinderRunner = std::function<BinderValue(int L, double beta)>;

struct CrossingEstimate {
    double beta_c = 0.0;
    double error = 0.0;
    std::vector<double> pair_crossings;       // one per consecutive size pair
    std::vector<double> pair_errors;
    std::vector<std::vector<BinderValue>> U;  // [size][beta]
};

// Crossing of U_L(beta) and U_L'(beta) for consecutive sizes, located by
// linear interpolation of the difference between grid points.
inline CrossingEstimate locate_critical_beta(const BinderRunner& run, const std::vector<int>& Ls,
                                             const std::vector<double>& betas) {
    if (Ls.size() < 3) throw ConfigError("critical point search needs >= 3 sizes");
    if (betas.size() < 5) throw ConfigError("critical point search needs >= 5 beta values");
    if (!std::is_sorted(betas.begin(), betas.end())) throw ConfigError("beta grid must be increasing");
    CrossingEstimate out;
    for (int L : Ls) {
        std::vector<BinderValue> row;
        for (double b : betas) row.push_back(run(L, b));
        out.U.push_back(std::move(row));
    }
    for (std::size_t i = 0; i + 1 < Ls.size(); ++i) {
        bool found = false;
        for (std::size_t k = 0; k + 1 < betas.size() && !found; ++k) {
            const double d0 = out.U[i][k].U - out.U[i + 1][k].U;
            const double d1 = out.U[i][k + 1].U - out.U[i + 1][k + 1].U;
            if (d0 == 0.0 || (d0 > 0) != (d1 > 0)) {
                const double slope = (d1 - d0) / (betas[k + 1] - betas[k]);
                const double bc = d0 == 0.0 ? betas[k] : betas[k] - d0 / slope;
                // Error from the two bracketing differences.
                const double s0 = std::hypot(out.U[i][k].error, out.U[i + 1][k].error);
                const double s1 = std::hypot(out.U[i][k + 1].error, out.U[i + 1][k + 1].error);
                const double t = (bc - betas[k]) / (betas[k + 1] - betas[k]);
                const double sd = std::hypot((1 - t) * s0, t * s1);
                out.pair_crossings.push_back(bc);
                out.pair_errors.push_back(std::abs(slope) > 0 ? sd / std::abs(slope) : INFINITY);
                found = true;
            }
        }
        if (!found)
            throw NumericError("no Binder crossing between L=" + std::to_string(Ls[i]) + " and L=" +
                               std::to_string(Ls[i + 1]) + " on the beta grid");
    }
    double wsum = 0.0, mean = 0.0;
    for (std::size_t k = 0; k < out.pair_crossings.size(); ++k) {
        const double w = out.pair_errors[k] > 0 ? 1.0 / (out.pair_errors[k] * out.pair_errors[k]) : 1.0;
        wsum += w;
        mean += w * out.pair_crossings[k];
    }
    out.beta_c = mean / wsum;
    double spread = 0.0;
    for (double c : out.pair_crossings) spread = std::max(spread, std::abs(c - out.beta_c));
    out.error = std::hypot(1.0 / std::sqrt(wsum), spread);
    return out;
}

}  // namespace planar
