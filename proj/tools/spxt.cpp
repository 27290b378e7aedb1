// Command-line driver: phantom, simulate, reconstruct, sweep, evaluate, verify.

#include <cstdint>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "spxt/commands.hpp"

namespace {

struct CommonFlags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_seed) {
    cmd->add_option("--config", f.config, "JSON config file (defaults apply when omitted)");
    cmd->add_option("--out", f.out, "output directory (default: output.dir from the config)");
    if (with_seed) cmd->add_option("--seed", f.seed, "noise seed");
    cmd->add_option("--threads", f.threads, "OpenMP threads (0 = runtime default)");
    cmd->add_option("--set", f.overrides, "override a config key, e.g. --set solver.alpha=0.1")->take_all();
}

spxt::ExperimentConfig load(const CommonFlags& f) {
    spxt::json raw = f.config.empty() ? spxt::json::object() : spxt::load_config_file(f.config);
    for (const auto& o : f.overrides) spxt::apply_override(raw, o);
    if (f.seed) raw["seed"] = *f.seed;
    if (f.threads) raw["threads"] = *f.threads;
    return spxt::resolve_config(raw);
}

std::filesystem::path out_dir(const CommonFlags& f, const spxt::ExperimentConfig& cfg) {
    return f.out.empty() ? std::filesystem::path(cfg.output_dir) : std::filesystem::path(f.out);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Single pixel X-ray transform: simulation and radial reconstruction"};
    app.require_subcommand(1);

    CommonFlags phantom_f, sim_f, rec_f, sweep_f;
    auto* phantom_cmd = app.add_subcommand("phantom", "write the voxelized phantom and its radial profile");
    add_common(phantom_cmd, phantom_f, false);

    auto* sim_cmd = app.add_subcommand("simulate", "synthesize noisy measurements");
    add_common(sim_cmd, sim_f, true);

    auto* rec_cmd = app.add_subcommand("reconstruct", "reconstruct a radial profile from measurements");
    add_common(rec_cmd, rec_f, false);
    std::string measurements;
    rec_cmd->add_option("--measurements", measurements, "measurement CSV (config.json must sit beside it)")
        ->required();

    auto* sweep_cmd = app.add_subcommand("sweep", "noise x alpha grid of simulate + reconstruct + evaluate");
    add_common(sweep_cmd, sweep_f, true);
    std::vector<double> sweep_noise, sweep_alpha;
    std::optional<int> sweep_workers;
    sweep_cmd->add_option("--noise", sweep_noise, "noise levels (overrides sweep.noise_levels)");
    sweep_cmd->add_option("--alpha", sweep_alpha, "regularization weights (overrides sweep.alphas)");
    sweep_cmd->add_option("--workers", sweep_workers, "concurrent cells (0 = logical cores)");

    auto* eval_cmd = app.add_subcommand("evaluate", "SSIM and RMSE of a candidate grid against a reference grid");
    std::string eval_ref, eval_cand, eval_out = ".";
    spxt::SsimParams ssim_params;
    double data_range = 0.0;
    eval_cmd->add_option("reference", eval_ref)->required();
    eval_cmd->add_option("candidate", eval_cand)->required();
    eval_cmd->add_option("--out", eval_out, "output directory");
    eval_cmd->add_option("--k1", ssim_params.k1);
    eval_cmd->add_option("--k2", ssim_params.k2);
    eval_cmd->add_option("--window", ssim_params.window);
    eval_cmd->add_option("--sigma", ssim_params.sigma);
    auto* range_opt = eval_cmd->add_option("--data-range", data_range, "default: max of the reference");

    auto* verify_cmd = app.add_subcommand("verify", "accept/reject a candidate measurement set against a template");
    std::string ver_a, ver_b, ver_out = ".";
    double tol = std::numeric_limits<double>::infinity();
    verify_cmd->add_option("template", ver_a)->required();
    verify_cmd->add_option("candidate", ver_b)->required();
    verify_cmd->add_option("--tol", tol, "max allowed per-source deviation")->required();
    verify_cmd->add_option("--out", ver_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? spxt::kExitOk : spxt::kExitConfig;
    }

    try {
        if (*phantom_cmd) {
            const auto cfg = load(phantom_f);
            spxt::run_phantom(cfg, out_dir(phantom_f, cfg));
        } else if (*sim_cmd) {
            const auto cfg = load(sim_f);
            spxt::run_simulate(cfg, out_dir(sim_f, cfg));
        } else if (*rec_cmd) {
            const auto cfg = load(rec_f);
            const auto rec = spxt::run_reconstruct(cfg, measurements, out_dir(rec_f, cfg));
            if (!rec.history.empty()) std::cout << "final J " << rec.history.back().J << "\n";
        } else if (*sweep_cmd) {
            auto cfg = load(sweep_f);
            if (!sweep_noise.empty()) cfg.sweep_noise = sweep_noise;
            if (!sweep_alpha.empty()) cfg.sweep_alpha = sweep_alpha;
            if (sweep_workers) cfg.sweep_workers = *sweep_workers;
            for (const auto& r : spxt::run_sweep(cfg, out_dir(sweep_f, cfg)))
                std::cout << "noise " << r.noise << " alpha " << r.alpha << " ssim " << r.ssim << "\n";
        } else if (*eval_cmd) {
            if (range_opt->count() > 0) ssim_params.data_range = data_range;
            const auto report = spxt::run_evaluate(eval_ref, eval_cand, eval_out, ssim_params);
            std::cout << "ssim " << report["ssim"].get<double>() << " rmse " << report["rmse"].get<double>() << "\n";
        } else if (*verify_cmd) {
            const auto report = spxt::run_verify(ver_a, ver_b, tol, ver_out);
            std::cout << (report["accept"].get<bool>() ? "accept" : "reject") << "\n";
        }
    } catch (const spxt::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return spxt::kExitConfig;
    } catch (const spxt::InputMismatch& e) {
        std::cerr << "input mismatch: " << e.what() << "\n";
        return spxt::kExitMismatch;
    } catch (const spxt::SolverFailure& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return spxt::kExitSolver;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return spxt::kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return spxt::kExitIo;
    }
    return spxt::kExitOk;
}
