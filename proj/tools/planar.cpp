// planar: exact solvers, Monte Carlo, fits, relation checks and RG flows.

#include <CLI11.hpp>

#include <cstdint>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "planar/cli.hpp"

using planar::json;
namespace pc = planar::cli;

namespace {

// Collects flag values that were given explicitly, keyed like the config
// file, so flags override file entries and unset flags leave them alone.
class Overrides {
public:
    template <typename T>
    CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        auto holder = std::make_shared<T>();
        auto* opt = app->add_option(flag, *holder, help);
        setters_.push_back([opt, holder, key](json& j) {
            if (opt->count() > 0) j[key] = *holder;
        });
        return opt;
    }
    CLI::Option* flag(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        auto holder = std::make_shared<bool>(false);
        auto* opt = app->add_flag(flag, *holder, help);
        setters_.push_back([opt, holder, key](json& j) {
            if (opt->count() > 0) j[key] = *holder;
        });
        return opt;
    }
    void apply(json& j) const {
        for (const auto& s : setters_) s(j);
    }

private:
    std::vector<std::function<void(json&)>> setters_;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"planar: exact dimer solver, Monte Carlo, exponent fits, relation checks, RG flows"};
    app.require_subcommand(1);

    std::string config_file;
    std::uint64_t seed = 1;
    std::string out = "runs";
    int threads = 1;
    app.add_option("--config", config_file, "JSON file with parameters for the subcommand")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "RNG seed")->capture_default_str();
    app.add_option("--out", out, "root directory for run directories")->capture_default_str();
    app.add_option("--threads", threads, "worker threads for independent chains")->capture_default_str()
        ->check(CLI::PositiveNumber);

    Overrides ov_exact, ov_mc, ov_fit, ov_verify, ov_rg;

    auto* exact = app.add_subcommand("exact", "exact dimer solver or closed-form exponents");
    std::string what = "dimer";
    exact->add_option("what", what, "dimer | formulas")->check(CLI::IsMember({"dimer", "formulas"}));
    ov_exact.add<int>(exact, "--L", "L", "torus side (even, >= 4)");
    ov_exact.add<std::vector<double>>(exact, "--t", "t", "weights t1,t2,t3,t4")->delimiter(',');
    ov_exact.add<std::vector<double>>(exact, "--window", "window", "plain/staggered fit window rmin,rmax")->delimiter(',');
    ov_exact.add<std::vector<double>>(exact, "--variance-window", "variance_window", "height variance window")
        ->delimiter(',');
    ov_exact.add<std::string>(exact, "--A-method", "A_method", "scaled | direct");
    ov_exact.add<double>(exact, "--lambda-tilde", "lambda_tilde", "reference-model coupling");
    ov_exact.add<double>(exact, "--v", "v", "velocity");
    ov_exact.add<double>(exact, "--lambda-inf", "lambda_inf", "limiting dimer coupling");
    ov_exact.add<double>(exact, "--baxter-lambda", "baxter_lambda", "eight-vertex coupling");
    ov_exact.add<double>(exact, "--tol", "tol", "relation tolerance");

    auto* mc = app.add_subcommand("mc", "Markov-chain Monte Carlo");
    ov_mc.add<std::string>(mc, "--model", "model", "coupled-AT | coupled-8V | coupled-kernel | generalized-ising | dimer");
    ov_mc.add<int>(mc, "--L", "L", "lattice side");
    ov_mc.add<double>(mc, "--beta", "beta", "inverse temperature (spin models)");
    ov_mc.add<double>(mc, "--J", "J", "coupling J");
    ov_mc.add<double>(mc, "--J-prime", "J_prime", "coupling J'");
    ov_mc.add<double>(mc, "--lambda", "lambda", "quartic or plaquette coupling");
    ov_mc.add<double>(mc, "--J4", "J4", "constant J4");
    ov_mc.add<std::vector<double>>(mc, "--t", "t", "dimer weights t1,t2,t3,t4")->delimiter(',');
    ov_mc.add<long>(mc, "--measurements", "measurements", "records per chain");
    ov_mc.add<long>(mc, "--thermalization", "thermalization", "sweeps before measuring (-1: default)");
    ov_mc.add<int>(mc, "--stride", "stride", "sweeps between records (-1: default)");
    ov_mc.add<int>(mc, "--chains", "chains", "independent chains (streams 0..n-1)");
    ov_mc.add<std::vector<std::string>>(mc, "--observables", "observables", "comma-separated observables")
        ->delimiter(',');
    ov_mc.flag(mc, "--fit", "fit", "fit exponents from the measured series");
    ov_mc.add<std::vector<double>>(mc, "--window", "window", "fit window rmin,rmax")->delimiter(',');
    ov_mc.flag(mc, "--oracle-check", "oracle_check", "compare with exact enumeration (small systems)");
    ov_mc.flag(mc, "--binder", "binder", "record the Binder cumulant of the order parameter");

    auto* fit = app.add_subcommand("fit", "fit a stored correlation series");
    ov_fit.add<std::string>(fit, "--series", "series", "CSV file r,mean,stderr,n");
    ov_fit.add<std::string>(fit, "--model", "model", "power_law | log_variance | correlation_length");
    ov_fit.add<std::vector<double>>(fit, "--window", "window", "rmin,rmax")->delimiter(',');
    ov_fit.add<std::string>(fit, "--exponent", "exponent", "store estimate / divisor as this exponent");
    ov_fit.add<double>(fit, "--divisor", "divisor", "divisor applied to the estimate");

    auto* verify = app.add_subcommand("verify", "check exponent relations across records");
    ov_verify.add<std::vector<std::string>>(verify, "records", "records", "record files or run directories");
    ov_verify.add<double>(verify, "--tol", "tol", "absolute tolerance added to 2 sigma");

    auto* rg = app.add_subcommand("rgflow", "iterate the running-coupling recursion");
    ov_rg.add<std::string>(rg, "--mode", "mode", "anchored | runaway | tabulated");
    ov_rg.add<double>(rg, "--lambda0", "lambda0", "initial coupling");
    ov_rg.add<double>(rg, "--gamma", "gamma", "scale ratio");
    ov_rg.add<int>(rg, "--hmin", "hmin", "deepest scale (<= -10)");
    ov_rg.add<double>(rg, "--a", "a", "runaway coefficient");
    ov_rg.add<double>(rg, "--c", "c", "anchored coefficient");
    ov_rg.add<double>(rg, "--b", "b", "field-strength coefficient");
    ov_rg.add<std::vector<double>>(rg, "--table", "table", "per-scale coefficients")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return planar::exit_code::config;
    }

    try {
        json cfg = json::object();
        if (!config_file.empty()) cfg = planar::load_config_file(config_file);
        pc::RunContext ctx;
        ctx.out = out;
        ctx.seed = seed;
        ctx.threads = threads;
        pc::CommandResult res;
        if (exact->parsed()) {
            if (exact->get_option("what")->count() > 0 || !cfg.contains("what")) cfg["what"] = what;
            ov_exact.apply(cfg);
            res = pc::cmd_exact(cfg, ctx);
        } else if (mc->parsed()) {
            ov_mc.apply(cfg);
            res = pc::cmd_mc(cfg, ctx);
        } else if (fit->parsed()) {
            ov_fit.apply(cfg);
            res = pc::cmd_fit(cfg, ctx);
        } else if (verify->parsed()) {
            ov_verify.apply(cfg);
            res = pc::cmd_verify(cfg, ctx);
        } else {
            ov_rg.apply(cfg);
            res = pc::cmd_rgflow(cfg, ctx);
        }
        return res.exit;
    } catch (const planar::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return planar::exit_code::config;
    } catch (const planar::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return planar::exit_code::numeric;
    } catch (const planar::IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return planar::exit_code::io;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return planar::exit_code::numeric;
    }
}
