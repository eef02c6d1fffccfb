#pragma once

// Closed-form critical data: Onsager and Baxter values, parameter maps between
// Ashkin-Teller, eight-vertex, six-vertex and dimer weights, continuum
// exponent formulas and the relations tying the exponents together.

#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "planar/errors.hpp"
#include "planar/hamiltonian.hpp"

namespace planar {

enum class Exponent { X_e, X_CR, X_P, X_A, nu, mu, eta, eta1, A, mu_baxter };

inline constexpr std::array<Exponent, 10> all_exponents{Exponent::X_e, Exponent::X_CR, Exponent::X_P,
                                                        Exponent::X_A, Exponent::nu,   Exponent::mu,
                                                        Exponent::eta, Exponent::eta1, Exponent::A,
                                                        Exponent::mu_baxter};

inline std::string exponent_name(Exponent e) {
    switch (e) {
        case Exponent::X_e: return "X_e";
        case Exponent::X_CR: return "X_CR";
        case Exponent::X_P: return "X_P";
        case Exponent::X_A: return "X_A";
        case Exponent::nu: return "nu";
        case Exponent::mu: return "mu";
        case Exponent::eta: return "eta";
        case Exponent::eta1: return "eta1";
        case Exponent::A: return "A";
        case Exponent::mu_baxter: return "mu_baxter";
    }
    return "?";
}

inline std::optional<Exponent> exponent_from_name(const std::string& s) {
    for (Exponent e : all_exponents)
        if (exponent_name(e) == s) return e;
    return std::nullopt;
}

enum class Provenance { exact, fitted };

struct Estimate {
    double value = 0.0;
    double uncertainty = 0.0;
    Provenance provenance = Provenance::exact;
};

class ExponentSet {
public:
    void set(Exponent e, double value, double uncertainty = 0.0, Provenance p = Provenance::exact) {
        if (!std::isfinite(value)) throw NumericError(exponent_name(e) + " is not finite");
        if (!(uncertainty >= 0.0) || !std::isfinite(uncertainty))
            throw ConfigError(exponent_name(e) + " uncertainty must be finite and non-negative");
        values_[e] = Estimate{value, p == Provenance::exact ? 0.0 : uncertainty, p};
    }
    void set(Exponent e, const Estimate& est) { set(e, est.value, est.uncertainty, est.provenance); }

    bool has(Exponent e) const { return values_.count(e) != 0; }
    const Estimate& at(Exponent e) const {
        auto it = values_.find(e);
        if (it == values_.end()) throw ConfigError("exponent " + exponent_name(e) + " not present");
        return it->second;
    }
    double value(Exponent e) const { return at(e).value; }
    const std::map<Exponent, Estimate>& entries() const { return values_; }

    // Entries of `other` override ours.
    void merge(const ExponentSet& other) {
        for (const auto& [k, v] : other.values_) values_[k] = v;
    }

private:
    std::map<Exponent, Estimate> values_;
};

// ---------------------------------------------------------------------------
// Ising and eight-vertex

inline double onsager_critical_beta(double J) {
    if (!(J > 0) || !std::isfinite(J)) throw ConfigError("onsager_critical_beta needs J > 0");
    return std::atanh(std::numbers::sqrt2 - 1.0) / J;
}

inline ExponentSet ising_exponents() {
    ExponentSet s;
    s.set(Exponent::eta, 0.25);
    s.set(Exponent::nu, 1.0);
    s.set(Exponent::X_e, 1.0);
    return s;
}

// Baxter: tan(mu/2) = e^{-4 lambda}, nu = pi / (2 mu).
inline double baxter_mu(double lambda) {
    if (!std::isfinite(lambda)) throw ConfigError("lambda must be finite");
    return 2.0 * std::atan(std::exp(-4.0 * lambda));
}
inline double baxter_nu(double lambda) { return std::numbers::pi / (2.0 * baxter_mu(lambda)); }

struct VertexWeights8 {
    double a = 1, b = 1, c = 1, d = 1;
    void validate() const {
        for (double v : {a, b, c, d})
            if (!(v > 0) || !std::isfinite(v)) throw ConfigError("eight-vertex weights must be positive");
    }
};

inline VertexWeights8 at_to_8v(double J, double lambda) {
    if (!std::isfinite(J) || !std::isfinite(lambda)) throw ConfigError("couplings must be finite");
    return {std::exp(2 * J + lambda), std::exp(-2 * J + lambda), std::exp(-lambda), std::exp(-lambda)};
}

// Same as baxter_nu, read off the weights: tan(mu/2) = cd/ab under at_to_8v.
inline double baxter_nu_from_weights(const VertexWeights8& w) {
    w.validate();
    const double ratio = (w.c * w.d) / (w.a * w.b);
    return std::numbers::pi / (4.0 * std::atan(ratio));
}

// ---------------------------------------------------------------------------
// Ashkin-Teller energies

// eps0: both pairs equal; eps1: only the sigma' pair differs; eps2: only the
// sigma pair differs; eps3: both differ.
struct ATEnergies {
    double eps0 = 0, eps1 = 0, eps2 = 0, eps3 = 0;
    void validate() const {
        for (double v : {eps0, eps1, eps2, eps3})
            if (!std::isfinite(v)) throw ConfigError("Ashkin-Teller energies must be finite");
    }
};

// Four linear combinations of the four energies. The J combination is
// sometimes written with a fifth energy eps4; it is eps2 here.
inline CouplingParams at_energies_to_couplings(const ATEnergies& e, double beta = 1.0) {
    e.validate();
    CouplingParams p;
    p.J = -(e.eps0 + e.eps1 - e.eps3 - e.eps2) / 4.0;
    p.J_prime = -(e.eps0 + e.eps2 - e.eps3 - e.eps1) / 4.0;
    p.lambda = -(e.eps0 + e.eps3 - e.eps1 - e.eps2) / 4.0;
    p.J4 = -(e.eps0 + e.eps1 + e.eps3 + e.eps2) / 4.0;
    p.beta = beta;
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// Six-vertex <-> interacting dimer

struct VertexWeights6 {
    std::array<double, 6> a{1, 1, 1, 1, 1, 1};  // a1..a6
    void validate() const {
        for (double v : a)
            if (!(v > 0) || !std::isfinite(v)) throw ConfigError("six-vertex weights must be positive");
    }
};

inline constexpr double sixv_consistency_tol = 1e-12;

// lambda implied by a6 = (a1 a2 + a4) e^lambda.
inline double recover_lambda(const VertexWeights6& w) {
    w.validate();
    return std::log(w.a[5] / (w.a[0] * w.a[1] + w.a[3]));
}

// t1 = a1, t2 = a4, t3 = a2, t4 = 1 (gauge).
inline std::array<double, 4> sixv_to_dimer(const VertexWeights6& w, double lambda) {
    w.validate();
    if (!std::isfinite(lambda)) throw ConfigError("lambda must be finite");
    const std::array<double, 4> t{w.a[0], w.a[3], w.a[1], 1.0};
    const double expected = (t[0] * t[2] + t[1]) * std::exp(lambda);
    if (std::abs(w.a[5] - expected) > sixv_consistency_tol * std::max(1.0, expected))
        throw ConfigError("six-vertex weights inconsistent with lambda: a6 = " + std::to_string(w.a[5]) +
                          ", expected " + std::to_string(expected));
    return t;
}

// Inverse map; a3 and a5 are not fixed by the correspondence and are set to 1.
inline VertexWeights6 dimer_to_sixv(const std::array<double, 4>& t, double lambda) {
    for (double v : t)
        if (!(v > 0) || !std::isfinite(v)) throw ConfigError("dimer weights must be positive");
    if (t[3] != 1.0) throw ConfigError("dimer_to_sixv expects the t4 = 1 gauge");
    VertexWeights6 w;
    w.a = {t[0], t[2], 1.0, t[1], 1.0, (t[0] * t[2] + t[1]) * std::exp(lambda)};
    return w;
}

// ---------------------------------------------------------------------------
// Extended scaling relations and continuum formulas

inline ExponentSet kadanoff_relations(double Xe) {
    if (!(Xe > 0 && Xe < 2)) throw ConfigError("kadanoff_relations needs 0 < X_e < 2");
    ExponentSet s;
    const double xcr = 1.0 / Xe;
    s.set(Exponent::X_e, Xe);
    s.set(Exponent::X_CR, xcr);
    s.set(Exponent::X_P, Xe / 4.0);
    s.set(Exponent::nu, 1.0 / (2.0 - Xe));
    if (xcr != 2.0) s.set(Exponent::mu, (2.0 - Xe) / (2.0 - xcr));
    return s;
}

struct ContinuumCoupling {
    double lambda_tilde = 0.0;
    double v = 1.0;
    double lambda_inf = 0.0;
    double Z = 1.0;
    double Z1 = 1.0;
};

inline double anomaly_tau(const ContinuumCoupling& c) {
    if (c.v == 0.0 || !std::isfinite(c.v)) throw ConfigError("velocity must be finite and non-zero");
    return c.lambda_tilde / (4.0 * std::numbers::pi * c.v);
}

// X_e = (1 - tau)/(1 + tau), X_CR = 1/X_e; nu = 1/(2 - X_e) and
// mu = (2 - X_e)/(2 - X_CR).
inline ExponentSet continuum_exponents(const ContinuumCoupling& c) {
    const double tau = anomaly_tau(c);
    if (!(std::abs(tau) < 1.0)) throw ConfigError("continuum formulas need |lambda~ / 4 pi v| < 1");
    ExponentSet s;
    const double xe = (1.0 - tau) / (1.0 + tau);
    const double xcr = (1.0 + tau) / (1.0 - tau);
    s.set(Exponent::X_e, xe);
    s.set(Exponent::X_CR, xcr);
    s.set(Exponent::nu, 1.0 / (2.0 - xe));
    if (xcr != 2.0) s.set(Exponent::mu, (2.0 - xe) / (2.0 - xcr));
    return s;
}

namespace detail {
inline double dimer_ratio(double lambda_inf) {
    const double u = lambda_inf / (4.0 * std::numbers::pi);
    if (!std::isfinite(u) || !(std::abs(u) < 1.0)) throw ConfigError("need |lambda_inf / 4 pi| < 1");
    return u;
}
}  // namespace detail

inline double eta1_continuum(double lambda_inf) {
    const double u = detail::dimer_ratio(lambda_inf);
    return (1.0 + u) / (1.0 - u);
}

// A = (Z1)^2 / (Z^2 (1 - lambda_inf^2 / 16 pi^2)) without imposing the
// vertex identity.
inline double amplitude_A_general(const ContinuumCoupling& c) {
    const double u = detail::dimer_ratio(c.lambda_inf);
    if (c.Z == 0.0) throw ConfigError("Z must be non-zero");
    return (c.Z1 * c.Z1) / (c.Z * c.Z * (1.0 - u * u));
}

// With Z1 = (1 + lambda_inf/4pi) Z imposed.
inline double amplitude_A(const ContinuumCoupling& c) {
    const double u = detail::dimer_ratio(c.lambda_inf);
    ContinuumCoupling k = c;
    k.Z = 1.0;
    k.Z1 = 1.0 + u;
    return amplitude_A_general(k);
}

inline double electric_exponent(double A) {
    if (!(A > 0) || !std::isfinite(A)) throw ConfigError("electric_exponent needs A > 0");
    return A / 4.0;
}

// eta1, A and X_A of the effective dimer model.
inline ExponentSet dimer_continuum_exponents(const ContinuumCoupling& c) {
    ExponentSet s;
    const double A = amplitude_A(c);
    s.set(Exponent::eta1, eta1_continuum(c.lambda_inf));
    s.set(Exponent::A, A);
    s.set(Exponent::X_A, electric_exponent(A));
    return s;
}

// ---------------------------------------------------------------------------
// Relation verification

struct RelationCheck {
    std::string name;
    std::string formula;
    double lhs = 0.0;
    double rhs = 0.0;
    double residual = 0.0;
    double sigma = 0.0;
    bool pass = false;
};

struct MissingRelation {
    std::string name;
    std::vector<std::string> missing;
};

struct RelationReport {
    double tol = 0.0;
    std::vector<RelationCheck> checks;
    std::vector<MissingRelation> skipped;

    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

namespace detail {
struct RelationDef {
    const char* name;
    const char* formula;
    std::vector<Exponent> inputs;
    double (*lhs)(const std::vector<double>&);
    double (*rhs)(const std::vector<double>&);
};

inline const std::vector<RelationDef>& relation_table() {
    using V = const std::vector<double>&;
    static const std::vector<RelationDef> table{
        {"energy_crossover", "X_e * X_CR = 1", {Exponent::X_e, Exponent::X_CR},
         [](V x) { return x[0] * x[1]; }, [](V) { return 1.0; }},
        {"polarization", "X_P = X_e / 4", {Exponent::X_P, Exponent::X_e},
         [](V x) { return x[0]; }, [](V x) { return x[1] / 4.0; }},
        {"nu", "nu = 1 / (2 - X_e)", {Exponent::nu, Exponent::X_e},
         [](V x) { return x[0]; }, [](V x) { return 1.0 / (2.0 - x[1]); }},
        {"mu", "mu = (2 - X_e) / (2 - X_CR)", {Exponent::mu, Exponent::X_e, Exponent::X_CR},
         [](V x) { return x[0]; }, [](V x) { return (2.0 - x[1]) / (2.0 - x[2]); }},
        {"energy_dimer", "X_e = eta1", {Exponent::X_e, Exponent::eta1},
         [](V x) { return x[0]; }, [](V x) { return x[1]; }},
        {"polarization_electric", "X_P = X_A", {Exponent::X_P, Exponent::X_A},
         [](V x) { return x[0]; }, [](V x) { return x[1]; }},
        {"amplitude_exponent", "A = eta1", {Exponent::A, Exponent::eta1},
         [](V x) { return x[0]; }, [](V x) { return x[1]; }},
        {"electric", "X_A = A / 4", {Exponent::X_A, Exponent::A},
         [](V x) { return x[0]; }, [](V x) { return x[1] / 4.0; }},
        {"baxter_nu", "nu = pi / (2 mu_baxter)", {Exponent::nu, Exponent::mu_baxter},
         [](V x) { return x[0]; }, [](V x) { return std::numbers::pi / (2.0 * x[1]); }},
    };
    return table;
}
}  // namespace detail

// Each relation whose inputs are all present is evaluated; its residual
// uncertainty is propagated linearly from the input uncertainties (central
// differences). A relation passes when |residual| <= tol + 2 sigma.
inline RelationReport verify_relations(const ExponentSet& E, double tol) {
    if (!(tol >= 0) || !std::isfinite(tol)) throw ConfigError("tolerance must be non-negative");
    RelationReport report;
    report.tol = tol;
    for (const auto& def : detail::relation_table()) {
        std::vector<std::string> missing;
        for (Exponent e : def.inputs)
            if (!E.has(e)) missing.push_back(exponent_name(e));
        if (!missing.empty()) {
            report.skipped.push_back({def.name, missing});
            continue;
        }
        std::vector<double> x, s;
        for (Exponent e : def.inputs) {
            x.push_back(E.at(e).value);
            s.push_back(E.at(e).uncertainty);
        }
        RelationCheck c;
        c.name = def.name;
        c.formula = def.formula;
        c.lhs = def.lhs(x);
        c.rhs = def.rhs(x);
        c.residual = c.lhs - c.rhs;
        double var = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            if (s[k] == 0.0) continue;
            auto xp = x, xm = x;
            const double h = std::max(1e-7, 1e-4 * s[k]);
            xp[k] += h;
            xm[k] -= h;
            const double d = ((def.lhs(xp) - def.rhs(xp)) - (def.lhs(xm) - def.rhs(xm))) / (2 * h);
            var += d * d * s[k] * s[k];
        }
        c.sigma = std::sqrt(var);
        c.pass = std::isfinite(c.residual) && std::abs(c.residual) <= tol + 2.0 * c.sigma;
        report.checks.push_back(c);
    }
    return report;
}

}  // namespace planar
