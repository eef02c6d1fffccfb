#pragma once

// Command implementations behind the `planar` tool. Each command takes a
// JSON configuration (file contents merged with flag overrides), resolves
// defaults, runs, and persists a record into a fresh run directory.

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "planar/errors.hpp"
#include "planar/exact.hpp"
#include "planar/fitting.hpp"
#include "planar/io.hpp"
#include "planar/kasteleyn.hpp"
#include "planar/montecarlo.hpp"
#include "planar/oracle.hpp"
#include "planar/rgflow.hpp"

namespace planar::cli {

struct RunContext {
    std::filesystem::path out = "runs";
    std::uint64_t seed = 1;
    int threads = 1;
    std::ostream* log = &std::cout;
};

struct CommandResult {
    ResultRecord record;
    std::filesystem::path dir;
    int exit = exit_code::ok;
};

// ---------------------------------------------------------------------------
// Config access

namespace detail {

template <typename T>
T get_or(const json& cfg, const char* key, const T& fallback) {
    if (!cfg.contains(key) || cfg.at(key).is_null()) return fallback;
    try {
        return cfg.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

inline void reject_unknown(const json& cfg, std::initializer_list<const char*> known) {
    for (auto it = cfg.begin(); it != cfg.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw ConfigError("unknown config key '" + it.key() + "'");
    }
}

inline std::optional<FitWindow> window_from(const json& cfg, const char* key) {
    if (!cfg.contains(key) || cfg.at(key).is_null()) return std::nullopt;
    auto v = get_or<std::vector<double>>(cfg, key, {});
    if (v.size() != 2 || !(v[0] < v[1])) throw ConfigError(std::string(key) + " must be [r_min, r_max] with r_min < r_max");
    return FitWindow{v[0], v[1]};
}

inline json window_json(const FitWindow& w) { return json::array({w.r_min, w.r_max}); }

inline json fit_json(const FitResult& f) {
    return {{"model", f.model},
            {"estimate", f.estimate},
            {"error", f.error},
            {"prefactor", f.prefactor},
            {"prefactor_error", f.prefactor_error},
            {"chi2_reduced", f.chi2_reduced},
            {"points", f.points},
            {"window", json::array({f.r_min, f.r_max})},
            {"errors_from_replicas", f.errors_from_replicas}};
}

inline std::string save_series(const std::filesystem::path& dir, const std::string& name, const CorrelationSeries& s) {
    const std::string file = name + ".csv";
    write_series_csv(dir / file, s);
    if (!s.replicas.empty()) write_replicas_csv(replica_path(dir / file), s);
    write_series_plot(dir / (name + ".dat"), s);
    return file;
}

inline ResultRecord new_record(const std::string& kind, const json& config, const RunContext& ctx) {
    ResultRecord r;
    r.kind = kind;
    r.config = config;
    r.config["command"] = kind;
    r.config["seed"] = ctx.seed;
    r.hash = config_hash(r.config);
    r.seed = ctx.seed;
    r.timestamp = utc_timestamp();
    return r;
}

inline std::string fmt(double x, int prec = 6) {
    std::ostringstream o;
    o << std::setprecision(prec) << x;
    return o.str();
}

// Exponent from a fitted power: C ~ r^{-p}, exponent = p / divisor.
inline void set_fitted(ResultRecord& rec, Exponent e, const FitResult& f, double divisor) {
    rec.exponents.set(e, f.estimate / divisor, f.error / divisor, Provenance::fitted);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// exact

inline json resolve_exact_config(const json& in) {
    detail::reject_unknown(in, {"what", "L", "t", "window", "variance_window", "A_method", "lambda_tilde", "v",
                                "lambda_inf", "baxter_lambda", "tol"});
    json c;
    const auto what = detail::get_or<std::string>(in, "what", "dimer");
    c["what"] = what;
    if (what == "dimer") {
        const int L = detail::get_or(in, "L", 32);
        TorusLattice check(L);
        (void)check;
        c["L"] = L;
        auto t = detail::get_or<std::vector<double>>(in, "t", {1, 1, 1, 1});
        if (t.size() != 4) throw ConfigError("t needs four weights");
        DimerWeights{{t[0], t[1], t[2], t[3]}}.validate();
        c["t"] = t;
        c["window"] = detail::window_json(detail::window_from(in, "window").value_or(even_channel_window(L)));
        const auto method = detail::get_or<std::string>(in, "A_method", "scaled");
        if (method != "scaled" && method != "direct") throw ConfigError("A_method must be scaled or direct");
        if (method == "scaled" && (L / 2 < 4 || (L / 2) % 2 != 0))
            throw ConfigError("the scaled A estimator needs L/2 even and >= 4");
        c["A_method"] = method;
        const int Ls = method == "scaled" ? L / 2 : L;
        c["variance_window"] =
            detail::window_json(detail::window_from(in, "variance_window").value_or(window_with_points(Ls, 1, method == "scaled" ? 2 : 4)));
    } else if (what == "formulas") {
        const bool continuum = in.contains("lambda_tilde") || in.contains("lambda_inf");
        const bool baxter = in.contains("baxter_lambda");
        if (continuum == baxter)
            throw ConfigError("exact formulas needs either lambda_tilde/lambda_inf or baxter_lambda");
        if (continuum) {
            // The coupled-spin and dimer parametrizations use different
            // sign conventions; each family is evaluated only when its
            // coupling is given.
            if (in.contains("lambda_tilde")) {
                c["lambda_tilde"] = detail::get_or(in, "lambda_tilde", 0.0);
                c["v"] = detail::get_or(in, "v", 1.0);
            }
            if (in.contains("lambda_inf")) c["lambda_inf"] = detail::get_or(in, "lambda_inf", 0.0);
        } else {
            c["baxter_lambda"] = detail::get_or(in, "baxter_lambda", 0.0);
        }
        c["tol"] = detail::get_or(in, "tol", 1e-12);
    } else {
        throw ConfigError("exact target must be 'dimer' or 'formulas'");
    }
    return c;
}

inline CommandResult cmd_exact(const json& raw, const RunContext& ctx) {
    const json cfg = resolve_exact_config(raw);
    CommandResult res;
    auto& rec = res.record = detail::new_record("exact", cfg, ctx);
    auto& log = *ctx.log;

    if (cfg["what"] == "formulas") {
        if (cfg.contains("baxter_lambda")) {
            const double l = cfg["baxter_lambda"];
            rec.exponents.set(Exponent::mu_baxter, baxter_mu(l));
            rec.exponents.set(Exponent::nu, baxter_nu(l));
            rec.notes["nu"] = "baxter_nu: pi / (2 mu), tan(mu / 2) = exp(-4 lambda)";
            rec.notes["mu_baxter"] = "baxter_mu: 2 atan(exp(-4 lambda))";
        } else {
            if (cfg.contains("lambda_tilde")) {
                ContinuumCoupling cc{cfg["lambda_tilde"], cfg["v"], 0.0, 1.0, 1.0};
                rec.exponents.merge(continuum_exponents(cc));
                rec.exponents.set(Exponent::X_P, rec.exponents.value(Exponent::X_e) / 4.0);
                rec.notes["X_e"] = "continuum_exponents: (1 - tau) / (1 + tau), tau = lambda_tilde / (4 pi v)";
                rec.notes["X_CR"] = "continuum_exponents: (1 + tau) / (1 - tau)";
                rec.notes["nu"] = "continuum_exponents: 1 / (2 - X_e)";
                rec.notes["mu"] = "continuum_exponents: (2 - X_e) / (2 - X_CR)";
                rec.notes["X_P"] = "kadanoff_relations: X_e / 4";
                rec.fits["tau"] = anomaly_tau(cc);
            }
            if (cfg.contains("lambda_inf")) {
                ContinuumCoupling cc{0.0, 1.0, cfg["lambda_inf"], 1.0, 1.0};
                rec.exponents.merge(dimer_continuum_exponents(cc));
                rec.notes["eta1"] = "eta1_continuum: (1 + u) / (1 - u), u = lambda_inf / (4 pi)";
                rec.notes["A"] = "amplitude_A: Z1^2 / (Z^2 (1 - u^2)) with Z1 = (1 + u) Z";
                rec.notes["X_A"] = "electric_exponent: A / 4";
            }
        }
        rec.relations = verify_relations(rec.exponents, cfg["tol"]);
        rec.has_relations = true;
        for (const auto& [e, v] : rec.exponents.entries())
            log << std::left << std::setw(10) << exponent_name(e) << std::setprecision(17) << v.value << '\n';
        res.exit = rec.relations.all_pass() ? exit_code::ok : exit_code::verify_failed;
    } else {
        const int L = cfg["L"];
        const auto t = cfg["t"].get<std::vector<double>>();
        const DimerWeights w{{t[0], t[1], t[2], t[3]}};
        const TorusLattice lat(L);
        const KasteleynSystem sys(lat, w);
        const auto part = dimer_partition_detail(sys);
        const DimerCorrelator corr(sys);
        const auto ch = exact_dimer_channels(corr);
        const auto cw = cfg["window"].get<std::vector<double>>();
        const FitWindow win{cw[0], cw[1]};

        auto variance_series = [](const DimerCorrelator& c) {
            CorrelationSeries s;
            s.observable = "height_pair";
            const int Lc = c.system().lattice().size();
            for (int r = 0; 2 * r < Lc; ++r) s.push(r, height_variance_exact(c, r).variance, 0.0, 0);
            return s;
        };
        const auto var = variance_series(corr);
        const auto vw = cfg["variance_window"].get<std::vector<double>>();
        FitResult fa;
        if (cfg["A_method"] == "scaled") {
            const TorusLattice small_lat(L / 2);
            const KasteleynSystem small_sys(small_lat, w);
            const DimerCorrelator small_corr(small_sys);
            const auto small_var = variance_series(small_corr);
            res.dir = create_run_directory(ctx.out, "exact", rec.hash);
            rec.series["height_variance_half"] = detail::save_series(res.dir, "height_variance_half", small_var);
            fa = fit_log_variance_scaled(small_var, var, 2, {vw[0], vw[1]});
        } else {
            res.dir = create_run_directory(ctx.out, "exact", rec.hash);
            fa = fit_log_variance(var, {vw[0], vw[1]});
        }
        rec.series["dimer_longitudinal"] = detail::save_series(res.dir, "dimer_longitudinal", ch.longitudinal);
        rec.series["dimer_transverse"] = detail::save_series(res.dir, "dimer_transverse", ch.transverse);
        rec.series["dimer_plain"] = detail::save_series(res.dir, "dimer_plain", ch.plain);
        rec.series["dimer_staggered"] = detail::save_series(res.dir, "dimer_staggered", ch.staggered);
        rec.series["height_variance"] = detail::save_series(res.dir, "height_variance", var);

        const auto fp = fit_power_law(ch.plain, win);
        const auto fs = fit_power_law(ch.staggered, win);
        detail::set_fitted(rec, Exponent::eta1, fp, 2.0);
        rec.exponents.set(Exponent::A, fa.estimate, fa.error, Provenance::fitted);
        rec.fits["plain"] = detail::fit_json(fp);
        rec.fits["staggered"] = detail::fit_json(fs);
        rec.fits["height_variance"] = detail::fit_json(fa);
        rec.fits["log_z"] = part.log_z;
        rec.fits["sign_consistent"] = part.sign_consistent;
        rec.notes["eta1"] = "dimer_plain.csv: power-law exponent / 2";
        rec.notes["A"] = cfg["A_method"] == "scaled"
                             ? "height_variance_half.csv vs height_variance.csv: pi^2 (V_L(2r) - V_{L/2}(r)) / ln 2"
                             : "height_variance.csv: pi^2 x slope in ln r";
        rec.notes["staggered"] = "dimer_staggered.csv: power-law exponent (dipolar term, A / (2 pi^2) r^-2)";
        rec.notes["window"] = "fit windows in fits.*.window";
        log << "log Z          " << std::setprecision(17) << part.log_z << '\n'
            << "plain exp      " << detail::fmt(fp.estimate) << " +- " << detail::fmt(fp.error) << "  (2 eta1)\n"
            << "staggered exp  " << detail::fmt(fs.estimate) << " +- " << detail::fmt(fs.error) << '\n'
            << "A              " << detail::fmt(fa.estimate) << " +- " << detail::fmt(fa.error) << '\n';
    }
    if (res.dir.empty()) res.dir = create_run_directory(ctx.out, "exact", rec.hash);
    write_record(res.dir, rec);
    log << "record         " << (res.dir / "record.json").string() << '\n';
    return res;
}

// ---------------------------------------------------------------------------
// mc

inline std::vector<std::string> default_observables(McModel m) {
    if (m == McModel::interacting_dimer) return {"dimer", "height_pair", "electric"};
    if (is_coupled(m)) return {"energy_sum", "energy_diff", "polarization", "spin"};
    return {"energy_sum", "spin"};
}

inline json resolve_mc_config(const json& in) {
    detail::reject_unknown(in, {"model", "L", "beta", "J", "J_prime", "lambda", "J4", "t", "kernel", "measurements",
                                "thermalization", "stride", "chains", "observables", "fit", "window", "oracle_check",
                                "binder"});
    json c;
    const auto model = model_from_name(detail::get_or<std::string>(in, "model", "coupled-AT"));
    c["model"] = model_name(model);
    c["L"] = detail::get_or(in, "L", model == McModel::interacting_dimer ? 16 : 8);
    c["lambda"] = detail::get_or(in, "lambda", 0.0);
    if (model == McModel::interacting_dimer) {
        auto t = detail::get_or<std::vector<double>>(in, "t", {1, 1, 1, 1});
        if (t.size() != 4) throw ConfigError("t needs four weights");
        c["t"] = t;
    } else {
        c["beta"] = detail::get_or(in, "beta", onsager_critical_beta(1.0));
        c["J"] = detail::get_or(in, "J", 1.0);
        if (is_coupled(model)) {
            c["J_prime"] = detail::get_or(in, "J_prime", c["J"].get<double>());
            c["J4"] = detail::get_or(in, "J4", 0.0);
        }
        if (model == McModel::coupled_ising_kernel || model == McModel::generalized_ising)
            c["kernel"] = detail::get_or(in, "kernel", json::array());
    }
    c["measurements"] = detail::get_or(in, "measurements", 2000L);
    c["thermalization"] = detail::get_or(in, "thermalization", -1L);
    c["stride"] = detail::get_or(in, "stride", -1);
    c["chains"] = detail::get_or(in, "chains", 1);
    if (c["chains"].get<int>() < 1) throw ConfigError("chains must be >= 1");
    const auto obs = detail::get_or<std::vector<std::string>>(in, "observables", default_observables(model));
    for (const auto& o : obs) {
        const auto k = observable_from_name(o);
        const bool dimer_obs = k == ObservableKind::dimer || k == ObservableKind::height_pair ||
                               k == ObservableKind::electric;
        if (dimer_obs != (model == McModel::interacting_dimer))
            throw ConfigError("observable '" + o + "' does not apply to model " + model_name(model));
    }
    c["observables"] = obs;
    c["fit"] = detail::get_or(in, "fit", false);
    if (auto w = detail::window_from(in, "window")) c["window"] = detail::window_json(*w);
    c["oracle_check"] = detail::get_or(in, "oracle_check", false);
    c["binder"] = detail::get_or(in, "binder", false);
    return c;
}

inline McConfig mc_config_from(const json& c, std::uint64_t seed, std::uint64_t stream) {
    McConfig m;
    m.model = model_from_name(c["model"]);
    m.L = c["L"];
    if (m.model == McModel::interacting_dimer) {
        const auto t = c["t"].get<std::vector<double>>();
        m.weights.t = {t[0], t[1], t[2], t[3]};
        m.dimer_lambda = c["lambda"];
    } else {
        m.params.beta = c["beta"];
        m.params.J = c["J"];
        m.params.lambda = c["lambda"];
        if (c.contains("J_prime")) m.params.J_prime = c["J_prime"];
        if (c.contains("J4")) m.params.J4 = c["J4"];
        if (c.contains("kernel"))
            for (const auto& k : c["kernel"])
                m.kernel.push_back({detail::get_or(k, "dx", 0), detail::get_or(k, "dy", 0), detail::get_or(k, "dir", 0),
                                    detail::get_or(k, "value", 0.0)});
    }
    m.measurements = c["measurements"];
    m.thermalization = c["thermalization"];
    m.stride = c["stride"];
    m.seed = seed;
    m.stream = stream;
    m.validate();
    return m;
}

namespace detail {

// Runs `chains` independent streams on up to `threads` workers; `make`
// builds a per-chain state, `run` fills it, results are merged in stream
// order so the outcome does not depend on the worker count.
template <typename State, typename Make, typename Run>
State run_chains(int chains, int threads, Make&& make, Run&& run) {
    std::vector<std::optional<State>> states(chains);
    std::vector<std::exception_ptr> errors(chains);
    std::mutex next_lock;
    int next = 0;
    auto worker = [&] {
        for (;;) {
            int k;
            {
                std::lock_guard<std::mutex> g(next_lock);
                if (next >= chains) return;
                k = next++;
            }
            try {
                states[k].emplace(make(k));
                run(k, *states[k]);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const int n = std::max(1, std::min(threads, chains));
    std::vector<std::thread> pool;
    for (int i = 1; i < n; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    State out = std::move(*states[0]);
    for (int k = 1; k < chains; ++k) out.merge(*states[k]);
    return out;
}

struct SpinChainState {
    std::vector<SpinCorrelationAccumulator> corr;
    std::optional<BinnedAccumulator> binder;
    void merge(const SpinChainState& o) {
        for (std::size_t i = 0; i < corr.size(); ++i) corr[i].merge(o.corr[i]);
        if (binder) binder->merge(*o.binder);
    }
};

struct DimerChainState {
    std::optional<DimerCorrelationAccumulator> corr;
    std::optional<HeightAccumulator> height;
    void merge(const DimerChainState& o) {
        if (corr) corr->merge(*o.corr);
        if (height) height->merge(*o.height);
    }
};

}  // namespace detail

inline CommandResult cmd_mc(const json& raw, const RunContext& ctx) {
    const json cfg = resolve_mc_config(raw);
    CommandResult res;
    auto& rec = res.record = detail::new_record("mc", cfg, ctx);
    auto& log = *ctx.log;
    const int chains = cfg["chains"];
    const McConfig base = mc_config_from(cfg, ctx.seed, 0);
    const int L = base.L;
    const auto obs = cfg["observables"].get<std::vector<std::string>>();
    const bool do_fit = cfg["fit"];
    std::optional<FitWindow> user_window;
    if (cfg.contains("window")) user_window = FitWindow{cfg["window"][0], cfg["window"][1]};
    bool fit_failed = false;

    if (cfg["oracle_check"].get<bool>()) {
        json rows = json::array();
        bool pass = true;
        for (int k = 0; k < chains; ++k) {
            const auto rep = oracle_check(mc_config_from(cfg, ctx.seed, k));
            for (const auto& r : rep.rows) {
                rows.push_back({{"stream", k}, {"observable", r.observable}, {"exact", r.exact},
                                {"estimate", r.estimate}, {"error", r.error}, {"z", r.z}, {"pass", r.pass}});
                log << "oracle " << std::left << std::setw(20) << r.observable << " exact " << detail::fmt(r.exact, 10)
                    << "  mc " << detail::fmt(r.estimate, 10) << " +- " << detail::fmt(r.error, 3) << "  "
                    << (r.pass ? "ok" : "FAIL") << '\n';
            }
            pass = pass && rep.all_pass();
        }
        rec.fits["oracle"] = {{"rows", rows}, {"pass", pass}, {"sigmas", 3.0}};
        if (!pass) res.exit = exit_code::verify_failed;
    }

    res.dir = create_run_directory(ctx.out, "mc", rec.hash);
    auto fit_and_record = [&](const std::string& name, const CorrelationSeries& s, bool log_variance,
                              std::optional<Exponent> e, double divisor, const FitWindow& w) {
        if (!do_fit) return;
        try {
            const auto f = log_variance ? fit_log_variance(s, w) : fit_power_law(s, w);
            rec.fits[name] = detail::fit_json(f);
            if (e) {
                detail::set_fitted(rec, *e, f, divisor);
                rec.notes[exponent_name(*e)] =
                    name + ".csv: " + (log_variance ? "pi^2 x slope in ln r" : "power-law exponent / " + detail::fmt(divisor));
            }
            log << "fit " << std::left << std::setw(18) << name << detail::fmt(f.estimate) << " +- "
                << detail::fmt(f.error) << "  window [" << f.r_min << ", " << f.r_max << "]\n";
        } catch (const std::exception& ex) {
            rec.fits[name] = {{"error", ex.what()}};
            log << "fit " << name << " failed: " << ex.what() << '\n';
            fit_failed = true;
        }
    };

    if (base.model == McModel::interacting_dimer) {
        const TorusLattice lat(L);
        const bool want_corr = std::find(obs.begin(), obs.end(), "dimer") != obs.end();
        const bool want_height = std::find(obs.begin(), obs.end(), "height_pair") != obs.end() ||
                                 std::find(obs.begin(), obs.end(), "electric") != obs.end();
        auto state = detail::run_chains<detail::DimerChainState>(
            chains, ctx.threads,
            [&](int) {
                detail::DimerChainState s;
                if (want_corr) s.corr.emplace(lat, base.measurements);
                if (want_height) s.height.emplace(lat, L / 2, base.measurements);
                return s;
            },
            [&](int k, detail::DimerChainState& s) {
                run_interacting_dimer(mc_config_from(cfg, ctx.seed, k), [&](long i, const DimerRecord& r) {
                    if (s.corr) s.corr->add(i, r.matched);
                    if (s.height) s.height->add(i, r.matched);
                });
            });
        if (state.corr) {
            const auto ch = state.corr->result();
            const FitWindow w = user_window.value_or(even_channel_window(L));
            rec.series["dimer_longitudinal"] = detail::save_series(res.dir, "dimer_longitudinal", ch.longitudinal);
            rec.series["dimer_transverse"] = detail::save_series(res.dir, "dimer_transverse", ch.transverse);
            rec.series["dimer_plain"] = detail::save_series(res.dir, "dimer_plain", ch.plain);
            rec.series["dimer_staggered"] = detail::save_series(res.dir, "dimer_staggered", ch.staggered);
            fit_and_record("dimer_plain", ch.plain, false, Exponent::eta1, 2.0, w);
            fit_and_record("dimer_staggered", ch.staggered, false, std::nullopt, 1.0, w);
        }
        if (state.height) {
            const auto hs = state.height->result();
            const FitWindow w = user_window.value_or(window_with_points(L));
            if (std::find(obs.begin(), obs.end(), "height_pair") != obs.end()) {
                rec.series["height_variance"] = detail::save_series(res.dir, "height_variance", hs.variance);
                rec.series["height_cumulant4"] = detail::save_series(res.dir, "height_cumulant4", hs.cumulant4);
                fit_and_record("height_variance", hs.variance, true, Exponent::A, 1.0, w);
            }
            if (std::find(obs.begin(), obs.end(), "electric") != obs.end()) {
                const auto el = electric_from(hs);
                rec.series["electric"] = detail::save_series(res.dir, "electric", el.real);
                rec.series["electric_imag"] = detail::save_series(res.dir, "electric_imag", el.imag);
                rec.fits["electric_imag_vanishes"] = el.imag_vanishes;
                fit_and_record("electric", el.real, false, Exponent::X_A, 2.0, w);
            }
        }
    } else {
        const int fields = field_count(base.model);
        const bool binder = cfg["binder"];
        const auto op = is_coupled(base.model) ? OrderParameter::polarization : OrderParameter::magnetization;
        auto state = detail::run_chains<detail::SpinChainState>(
            chains, ctx.threads,
            [&](int) {
                detail::SpinChainState s;
                for (const auto& o : obs)
                    s.corr.emplace_back(L, fields, ObservableDef{observable_from_name(o), 0}, base.measurements);
                if (binder) s.binder.emplace(min_jackknife_bins, 2);
                return s;
            },
            [&](int k, detail::SpinChainState& s) {
                const int sites = L * L;
                run_spin_chain(mc_config_from(cfg, ctx.seed, k), [&](long i, const SpinRecord& r) {
                    for (auto& a : s.corr) a.add(i, r.spins);
                    if (s.binder) {
                        const double m = order_parameter(r.spins, sites, op);
                        s.binder->add(bin_of(i, base.measurements, min_jackknife_bins), {m * m, m * m * m * m});
                    }
                });
            });
        const FitWindow w = user_window.value_or(window_with_points(L));
        for (std::size_t i = 0; i < obs.size(); ++i) {
            const auto s = state.corr[i].result();
            rec.series[obs[i]] = detail::save_series(res.dir, obs[i], s);
            const auto k = observable_from_name(obs[i]);
            std::optional<Exponent> e;
            if (k == ObservableKind::energy_sum) e = Exponent::X_e;
            if (k == ObservableKind::energy_diff) e = Exponent::X_CR;
            if (k == ObservableKind::polarization) e = Exponent::X_P;
            if (k == ObservableKind::spin) e = Exponent::eta;
            fit_and_record(obs[i], s, false, e, k == ObservableKind::spin ? 1.0 : 2.0, w);
        }
        if (state.binder) {
            const auto b = binder_from_moments(*state.binder);
            rec.fits["binder"] = {{"U", b.U}, {"error", b.error},
                                  {"order_parameter", op == OrderParameter::polarization ? "polarization" : "magnetization"}};
            log << "binder U " << detail::fmt(b.U) << " +- " << detail::fmt(b.error) << '\n';
        }
    }
    rec.notes["rng"] = rng_identity;
    rec.notes["sampling"] = base.model == McModel::interacting_dimer
                                ? "plaquette Metropolis at random faces, zero-winding sector from the columnar state"
                                : L >= 4 ? "checkerboard single-spin Metropolis"
                                           : "single-spin Metropolis at random sites";
    write_record(res.dir, rec);
    log << "record         " << (res.dir / "record.json").string() << '\n';
    if (res.exit == exit_code::ok && fit_failed) res.exit = exit_code::numeric;
    return res;
}

// ---------------------------------------------------------------------------
// fit

inline json resolve_fit_config(const json& in) {
    detail::reject_unknown(in, {"series", "model", "window", "exponent", "divisor"});
    json c;
    if (!in.contains("series")) throw ConfigError("fit needs a series file");
    c["series"] = detail::get_or<std::string>(in, "series", "");
    const auto model = detail::get_or<std::string>(in, "model", "power_law");
    if (model != "power_law" && model != "log_variance" && model != "correlation_length")
        throw ConfigError("fit model must be power_law, log_variance or correlation_length");
    c["model"] = model;
    if (auto w = detail::window_from(in, "window")) c["window"] = detail::window_json(*w);
    if (in.contains("exponent")) {
        const auto name = detail::get_or<std::string>(in, "exponent", "");
        if (!exponent_from_name(name)) throw ConfigError("unknown exponent '" + name + "'");
        c["exponent"] = name;
    }
    c["divisor"] = detail::get_or(in, "divisor", 1.0);
    if (!(c["divisor"].get<double>() > 0)) throw ConfigError("divisor must be positive");
    return c;
}

inline CommandResult cmd_fit(const json& raw, const RunContext& ctx) {
    json cfg = resolve_fit_config(raw);
    const std::filesystem::path src = cfg["series"].get<std::string>();
    const auto s = read_series_csv(src);
    int rmax = 0;
    for (int r : s.r) rmax = std::max(rmax, r);
    if (!cfg.contains("window")) cfg["window"] = detail::window_json(window_with_points(2 * rmax));
    const FitWindow w{cfg["window"][0], cfg["window"][1]};
    CommandResult res;
    auto& rec = res.record = detail::new_record("fit", cfg, ctx);
    const auto model = cfg["model"].get<std::string>();
    const FitResult f = model == "power_law"      ? fit_power_law(s, w)
                        : model == "log_variance" ? fit_log_variance(s, w)
                                                  : fit_correlation_length(s, w);
    rec.fits[model] = detail::fit_json(f);
    if (cfg.contains("exponent")) {
        const auto e = *exponent_from_name(cfg["exponent"]);
        detail::set_fitted(rec, e, f, cfg["divisor"]);
        rec.notes[exponent_name(e)] = src.string() + ": " + model + " estimate / " + detail::fmt(cfg["divisor"]);
    }
    res.dir = create_run_directory(ctx.out, "fit", rec.hash);
    rec.series["input"] = detail::save_series(res.dir, "input", s);
    write_record(res.dir, rec);
    *ctx.log << model << ' ' << detail::fmt(f.estimate) << " +- " << detail::fmt(f.error) << "  chi2/dof "
             << detail::fmt(f.chi2_reduced, 3) << "  window [" << f.r_min << ", " << f.r_max << "]\n"
             << "record         " << (res.dir / "record.json").string() << '\n';
    return res;
}

// ---------------------------------------------------------------------------
// verify

inline json resolve_verify_config(const json& in) {
    detail::reject_unknown(in, {"records", "tol"});
    json c;
    const auto records = detail::get_or<std::vector<std::string>>(in, "records", {});
    if (records.empty()) throw ConfigError("verify needs at least one record");
    c["records"] = records;
    c["tol"] = detail::get_or(in, "tol", 1e-12);
    return c;
}

inline std::string relation_table_text(const RelationReport& r) {
    std::ostringstream o;
    o << std::left << std::setw(24) << "relation" << std::setw(26) << "formula" << std::right << std::setw(14)
      << "residual" << std::setw(12) << "sigma" << "  result\n";
    for (const auto& c : r.checks)
        o << std::left << std::setw(24) << c.name << std::setw(26) << c.formula << std::right << std::setw(14)
          << std::setprecision(4) << c.residual << std::setw(12) << c.sigma << "  " << (c.pass ? "pass" : "FAIL")
          << '\n';
    for (const auto& s : r.skipped) {
        o << std::left << std::setw(24) << s.name << "skipped, missing:";
        for (const auto& m : s.missing) o << ' ' << m;
        o << '\n';
    }
    return o.str();
}

inline CommandResult cmd_verify(const json& raw, const RunContext& ctx) {
    const json cfg = resolve_verify_config(raw);
    ExponentSet all;
    json sources = json::object();
    for (const auto& p : cfg["records"]) {
        const auto r = load_record(p.get<std::string>());
        all.merge(r.exponents);
        for (const auto& [e, v] : r.exponents.entries()) sources[exponent_name(e)] = p;
    }
    CommandResult res;
    auto& rec = res.record = detail::new_record("verify", cfg, ctx);
    rec.exponents = all;
    rec.relations = verify_relations(all, cfg["tol"]);
    rec.has_relations = true;
    rec.notes["sources"] = sources;
    res.dir = create_run_directory(ctx.out, "verify", rec.hash);
    write_record(res.dir, rec);
    *ctx.log << relation_table_text(rec.relations);
    if (rec.relations.checks.empty()) *ctx.log << "no relation could be evaluated\n";
    res.exit = rec.relations.all_pass() ? exit_code::ok : exit_code::verify_failed;
    return res;
}

// ---------------------------------------------------------------------------
// rgflow

inline json resolve_rgflow_config(const json& in) {
    detail::reject_unknown(in, {"mode", "lambda0", "gamma", "hmin", "a", "c", "b", "table"});
    json c;
    c["mode"] = beta_mode_name(beta_mode_from_name(detail::get_or<std::string>(in, "mode", "anchored")));
    c["lambda0"] = detail::get_or(in, "lambda0", 0.1);
    c["gamma"] = detail::get_or(in, "gamma", 2.0);
    c["hmin"] = detail::get_or(in, "hmin", -60);
    c["a"] = detail::get_or(in, "a", 1.0);
    c["c"] = detail::get_or(in, "c", 1.0);
    c["b"] = detail::get_or(in, "b", 1.0);
    if (in.contains("table")) c["table"] = detail::get_or<std::vector<double>>(in, "table", {});
    return c;
}

inline CommandResult cmd_rgflow(const json& raw, const RunContext& ctx) {
    const json cfg = resolve_rgflow_config(raw);
    BetaSpec spec;
    spec.mode = beta_mode_from_name(cfg["mode"]);
    spec.a = cfg["a"];
    spec.c = cfg["c"];
    spec.b = cfg["b"];
    if (cfg.contains("table")) spec.table = cfg["table"].get<std::vector<double>>();
    const auto flow = run_flow(cfg["lambda0"], spec, cfg["gamma"], cfg["hmin"]);

    CommandResult res;
    auto& rec = res.record = detail::new_record("rgflow", cfg, ctx);
    res.dir = create_run_directory(ctx.out, "rgflow", rec.hash);
    std::vector<double> h, l, z;
    for (const auto& s : flow.trajectory) {
        h.push_back(s.h);
        l.push_back(s.lambda);
        z.push_back(s.Z);
    }
    {
        std::ofstream out(res.dir / "trajectory.csv");
        if (!out) throw IoError("cannot write trajectory");
        out << "h,lambda,Z\n";
        for (const auto& s : flow.trajectory)
            out << s.h << ',' << format_double(s.lambda) << ',' << format_double(s.Z) << '\n';
    }
    write_plot_data(res.dir / "trajectory.dat", {"h", "lambda", "Z"}, {h, l, z});
    const auto& sm = flow.summary;
    rec.fits["summary"] = {{"diverged", sm.diverged},
                           {"divergence_h", sm.diverged ? json(sm.divergence_h) : json(nullptr)},
                           {"converged", sm.converged},
                           {"lambda_inf", sm.lambda_inf},
                           {"last_increment", sm.last_increment},
                           {"eta", sm.eta}};
    rec.notes["trajectory"] = "trajectory.csv: h, lambda_h, Z_h";
    auto& log = *ctx.log;
    if (sm.converged) {
        const auto e = eta_from_flow(flow, spec.b);
        rec.exponents.set(Exponent::eta, e.eta);
        rec.fits["eta"] = {{"eta", e.eta}, {"stationary", e.stationary}, {"small_coupling", e.small_coupling}};
        rec.notes["eta"] = "eta_from_flow: ln(Z_{h-1} / Z_h) / ln gamma at the deepest step";
        log << "lambda_inf     " << std::setprecision(17) << sm.lambda_inf << '\n'
            << "eta            " << e.eta << "  (stationary " << e.stationary << ")\n";
    } else if (sm.diverged) {
        log << "diverged at h = " << sm.divergence_h << '\n';
    } else {
        log << "not converged; last increment " << sm.last_increment << '\n';
    }
    write_record(res.dir, rec);
    log << "record         " << (res.dir / "record.json").string() << '\n';
    return res;
}

}  // namespace planar::cli
