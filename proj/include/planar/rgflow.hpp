#pragma once

// Running-coupling recursions
//   lambda_{h-1} = lambda_h + beta_lambda^h,   Z_{h-1} / Z_h = 1 + b lambda_h^2
// iterated from h = 0 down to hmin, and the power-counting classifier
// D = 2 - n/2 - s.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "planar/errors.hpp"

namespace planar {

enum class BetaMode { anchored, runaway, tabulated };

inline std::string beta_mode_name(BetaMode m) {
    switch (m) {
        case BetaMode::anchored: return "anchored";
        case BetaMode::runaway: return "runaway";
        case BetaMode::tabulated: return "tabulated";
    }
    return "?";
}

inline BetaMode beta_mode_from_name(const std::string& s) {
    for (BetaMode m : {BetaMode::anchored, BetaMode::runaway, BetaMode::tabulated})
        if (beta_mode_name(m) == s) return m;
    throw ConfigError("unknown beta mode '" + s + "'");
}

// anchored:  beta_lambda = c gamma^{h-1} lambda_h^2 on the step h -> h-1
// runaway:   beta_lambda = a lambda_h^2
// tabulated: beta_lambda = table[k] lambda_h^2 on the k-th step (h = -k)
struct BetaSpec {
    BetaMode mode = BetaMode::anchored;
    double a = 1.0;
    double c = 1.0;
    double b = 1.0;
    std::vector<double> table;

    void validate() const {
        for (double v : {a, c, b})
            if (!std::isfinite(v)) throw ConfigError("beta function coefficients must be finite");
        if (!(b > 0)) throw ConfigError("the Z coefficient b must be positive");
        for (double v : table)
            if (!std::isfinite(v)) throw ConfigError("tabulated coefficients must be finite");
    }
};

struct FlowState {
    int h = 0;
    double lambda = 0.0;
    double Z = 1.0;
};

struct FlowSummary {
    bool diverged = false;
    int divergence_h = 0;      // first scale with |lambda_h| > overflow guard
    bool converged = false;    // last increment below convergence_tol
    double lambda_inf = 0.0;   // lambda at the deepest scale reached
    double last_increment = 0.0;
    double eta = 0.0;          // ln(Z_{h-1}/Z_h) / ln gamma at the deepest step
};

struct FlowResult {
    double gamma = 2.0;
    BetaSpec spec;
    std::vector<FlowState> trajectory;
    FlowSummary summary;
};

inline constexpr double flow_overflow_guard = 10.0;
inline constexpr double flow_convergence_tol = 1e-12;

inline FlowResult run_flow(double lambda0, const BetaSpec& spec, double gamma, int hmin) {
    spec.validate();
    if (!(std::abs(lambda0) < 0.5)) throw ConfigError("run_flow needs |lambda0| < 0.5");
    if (!(gamma > 1.0) || !std::isfinite(gamma)) throw ConfigError("scale ratio gamma must exceed 1");
    if (hmin > -10) throw ConfigError("hmin must be <= -10");
    const int steps = -hmin;
    if (spec.mode == BetaMode::tabulated && static_cast<int>(spec.table.size()) < steps)
        throw ConfigError("tabulated beta function needs " + std::to_string(steps) + " coefficients");

    FlowResult out;
    out.gamma = gamma;
    out.spec = spec;
    FlowState s{0, lambda0, 1.0};
    out.trajectory.push_back(s);
    for (int k = 0; k < steps; ++k) {
        const int h = s.h;
        double coeff = 0.0;
        switch (spec.mode) {
            case BetaMode::anchored: coeff = spec.c * std::pow(gamma, h - 1); break;
            case BetaMode::runaway: coeff = spec.a; break;
            case BetaMode::tabulated: coeff = spec.table[k]; break;
        }
        const double l = s.lambda;
        FlowState next{h - 1, l + coeff * l * l, s.Z * (1.0 + spec.b * l * l)};
        out.summary.last_increment = next.lambda - l;
        out.trajectory.push_back(next);
        s = next;
        if (std::abs(s.lambda) > flow_overflow_guard || !std::isfinite(s.lambda)) {
            out.summary.diverged = true;
            out.summary.divergence_h = s.h;
            break;
        }
    }
    out.summary.lambda_inf = s.lambda;
    out.summary.converged =
        !out.summary.diverged && std::abs(out.summary.last_increment) <= flow_convergence_tol * std::max(1.0, std::abs(s.lambda));
    const auto& t = out.trajectory;
    if (t.size() >= 2) out.summary.eta = std::log(t.back().Z / t[t.size() - 2].Z) / std::log(gamma);
    return out;
}

struct EtaEstimate {
    double eta = 0.0;             // ln(Z_{h-1}/Z_h) / ln gamma at the deepest step
    double stationary = 0.0;      // ln(1 + b lambda_inf^2) / ln gamma
    double small_coupling = 0.0;  // b lambda_inf^2 / ln gamma
};

inline EtaEstimate eta_from_flow(const FlowResult& f, double b) {
    if (!f.summary.converged) throw NumericError("eta_from_flow needs a converged trajectory");
    if (!(b > 0)) throw ConfigError("b must be positive");
    const auto& t = f.trajectory;
    EtaEstimate e;
    const double lg = std::log(f.gamma);
    e.eta = std::log(t.back().Z / t[t.size() - 2].Z) / lg;
    const double li = f.summary.lambda_inf;
    e.stationary = std::log1p(b * li * li) / lg;
    e.small_coupling = b * li * li / lg;
    return e;
}

enum class Relevance { relevant, marginal, irrelevant };

inline std::string relevance_name(Relevance r) {
    switch (r) {
        case Relevance::relevant: return "relevant";
        case Relevance::marginal: return "marginal";
        case Relevance::irrelevant: return "irrelevant";
    }
    return "?";
}

struct ScalingDimension {
    double D = 0.0;
    Relevance label = Relevance::marginal;
};

// Monomial with n fields and s derivatives.
inline ScalingDimension scaling_dimension(int n, int s) {
    if (n < 2 || n % 2 != 0) throw ConfigError("n must be an even integer >= 2");
    if (s < 0) throw ConfigError("s must be non-negative");
    ScalingDimension d;
    d.D = 2.0 - n / 2.0 - s;
    d.label = d.D > 0 ? Relevance::relevant : (d.D < 0 ? Relevance::irrelevant : Relevance::marginal);
    return d;
}

}  // namespace planar
