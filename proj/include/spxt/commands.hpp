#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "spxt/config.hpp"
#include "spxt/errors.hpp"
#include "spxt/forward.hpp"
#include "spxt/io.hpp"
#include "spxt/metrics.hpp"
#include "spxt/phantom.hpp"
#include "spxt/solver.hpp"

namespace spxt {

namespace fs = std::filesystem;

inline constexpr const char* kConfigEcho = "config.json";
inline constexpr const char* kMeasurementsFile = "measurements.csv";

inline void set_thread_count(int threads) {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

inline void write_json(const fs::path& path, const json& j) { io::write_atomic(path, j.dump(2) + "\n"); }

inline void write_config_echo(const fs::path& dir, const ExperimentConfig& cfg) {
    write_json(dir / kConfigEcho, cfg.to_json());
}

/// Writes the voxelized phantom grid and its radial profile.
inline void run_phantom(const ExperimentConfig& cfg, const fs::path& out) {
    const RadialMap map = build_radial_map(cfg.n);
    const VoxelGrid grid = voxelize(cfg.phantom, cfg.n);
    io::write_atomic(out / "phantom_grid.txt", io::format_grid(grid));
    io::write_atomic(out / "phantom_profile.csv", io::format_profile(reduce_to_profile(grid, map), map));
    write_config_echo(out, cfg);
}

inline MeasurementSet run_simulate(const ExperimentConfig& cfg, const fs::path& out) {
    set_thread_count(cfg.threads);
    MeasurementSet ms = simulate(cfg.phantom, cfg.geometry, cfg.n_sim, cfg.noise_level, cfg.seed);
    io::write_atomic(out / kMeasurementsFile, io::format_measurements(ms));
    write_config_echo(out, cfg);
    return ms;
}

/**
 * Checks that a measurement file was produced with the geometry of `cfg`:
 * the config echo beside it must carry the same geometry digest, and the
 * recorded source positions must match the generated ones.
 */
inline void check_measurement_geometry(const ExperimentConfig& cfg, const MeasurementSet& ms,
                                       const fs::path& measurements_path) {
    const fs::path echo = measurements_path.parent_path() / kConfigEcho;
    if (!fs::exists(echo))
        throw InputMismatch("no " + std::string(kConfigEcho) + " next to " + measurements_path.string() +
                            "; cannot validate geometry");
    ExperimentConfig recorded;
    try {
        recorded = resolve_config(load_config_file(echo.string()));
    } catch (const ConfigError& e) {
        throw InputMismatch("unreadable config echo " + echo.string() + ": " + e.what());
    }
    if (recorded.geometry_digest() != cfg.geometry_digest())
        throw InputMismatch("measurement geometry digest " + recorded.geometry_digest() +
                            " does not match config geometry digest " + cfg.geometry_digest());
    if (ms.size() != cfg.geometry.sources.size())
        throw InputMismatch("measurement file has " + std::to_string(ms.size()) + " sources, config expects " +
                            std::to_string(cfg.geometry.sources.size()));
    for (std::size_t s = 0; s < ms.size(); ++s)
        if ((ms.positions[s] - cfg.geometry.sources.positions[s]).norm() > 1e-9)
            throw InputMismatch("source " + std::to_string(s) + " position does not match the config geometry");
}

/// Reconstruction from in-memory data through precomputed path matrices.
inline DRState reconstruct_profile(const std::vector<double>& data, const std::vector<PathMatrix>& paths,
                                   const RadialMap& map, const DRParams& params) {
    SpxtDataTerm term(data, paths);
    return run_douglas_rachford(DRState::zeros(static_cast<Eigen::Index>(map.num_classes())), params, term);
}

inline Reconstruction run_reconstruct(const ExperimentConfig& cfg, const fs::path& measurements_path,
                                      const fs::path& out) {
    set_thread_count(cfg.threads);
    const MeasurementSet ms = io::read_measurements(measurements_path);
    check_measurement_geometry(cfg, ms, measurements_path);
    Reconstruction rec = reconstruct(ms, cfg.geometry, cfg.n, cfg.solver);
    io::write_atomic(out / "profile.csv", io::format_profile(rec.profile, rec.map));
    io::write_atomic(out / "history.csv", io::format_history(rec.history));
    io::write_atomic(out / "reconstruction_grid.txt", io::format_grid(embed_profile(rec.profile, rec.map)));
    write_config_echo(out, cfg);
    return rec;
}

struct SweepRow {
    double noise;
    double alpha;
    double ssim;
    double rmse;
};

inline std::string format_sweep(const std::vector<std::optional<SweepRow>>& rows) {
    auto ss = io::precise_stream();
    ss << "noise,alpha,ssim,rmse\n";
    for (const auto& r : rows)
        if (r) ss << r->noise << ',' << r->alpha << ',' << r->ssim << ',' << r->rmse << '\n';
    return ss.str();
}

/// Seed of sweep cell `index` (row-major over noise x alpha).
inline std::uint64_t sweep_cell_seed(std::uint64_t base, std::size_t index) { return base + index; }

/**
 * Noise x alpha grid. Each cell simulates with its own seed, reconstructs and
 * scores SSIM/RMSE against the voxelized phantom. Cells run on a worker pool;
 * each finished cell is written to cells/ and sweep.csv is refreshed.
 */
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const fs::path& out) {
    if (cfg.sweep_noise.empty() || cfg.sweep_alpha.empty()) throw ConfigError("sweep lists must be non-empty");
    write_config_echo(out, cfg);

    const RadialMap map = build_radial_map(cfg.n);
    const VoxelGrid truth_grid = voxelize(cfg.phantom, cfg.n);
    const auto paths = build_path_matrices(cfg.geometry, map);
    const RadialMap sim_map = cfg.n_sim == cfg.n ? map : build_radial_map(cfg.n_sim);
    const auto sim_paths = cfg.n_sim == cfg.n ? std::vector<PathMatrix>{} : build_path_matrices(cfg.geometry, sim_map);
    const Profile sim_truth = phantom_profile(cfg.phantom, sim_map);

    const std::size_t na = cfg.sweep_alpha.size();
    const std::size_t cells = cfg.sweep_noise.size() * na;
    std::vector<std::optional<SweepRow>> rows(cells);
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;

    auto worker = [&]() {
        set_thread_count(1);
        for (;;) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= cells) return;
            {
                std::lock_guard lock(mu);
                if (failure) return;
            }
            try {
                const double noise = cfg.sweep_noise[idx / na];
                DRParams params = cfg.solver;
                params.alpha = cfg.sweep_alpha[idx % na];
                const auto ms = measure(sim_truth, cfg.n_sim == cfg.n ? paths : sim_paths,
                                        cfg.geometry.sources.positions, noise, sweep_cell_seed(cfg.seed, idx));
                const DRState st = reconstruct_profile(ms.noisy, paths, map, params);
                const VoxelGrid cand = embed_profile(st.f, map);
                SweepRow row{noise, params.alpha, ssim(truth_grid, cand), rmse(truth_grid, cand)};

                const fs::path cell_dir = out / "cells" / ("cell_" + std::to_string(idx));
                io::write_atomic(cell_dir / "profile.csv", io::format_profile(st.f, map));
                io::write_atomic(cell_dir / "history.csv", io::format_history(st.history));
                io::write_atomic(cell_dir / "row.csv", format_sweep({row}));

                std::lock_guard lock(mu);
                rows[idx] = row;
                io::write_atomic(out / "sweep.csv", format_sweep(rows));
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    std::size_t workers = cfg.sweep_workers > 0 ? static_cast<std::size_t>(cfg.sweep_workers)
                                                : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, cells);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<SweepRow> result;
    for (const auto& r : rows) result.push_back(*r);
    return result;
}

inline json ssim_params_json(const SsimParams& p, double resolved_range) {
    return json{{"k1", p.k1}, {"k2", p.k2}, {"data_range", resolved_range}, {"window", p.window}, {"sigma", p.sigma}};
}

inline json file_provenance(const fs::path& path, const std::string& content) {
    return json{{"path", path.string()}, {"fnv1a64", io::fnv1a_hex(content)}};
}

inline json run_evaluate(const fs::path& reference_path, const fs::path& candidate_path, const fs::path& out,
                         const SsimParams& params = {}) {
    const std::string ref_text = io::read_file(reference_path);
    const std::string cand_text = io::read_file(candidate_path);
    const VoxelGrid ref = io::parse_grid(ref_text, reference_path.string());
    const VoxelGrid cand = io::parse_grid(cand_text, candidate_path.string());
    if (ref.n != cand.n) throw InputMismatch("evaluate: grid dimensions differ");
    const json report{
        {"ssim", ssim(ref, cand, params)},
        {"rmse", rmse(ref, cand)},
        {"ssim_params", ssim_params_json(params, resolved_data_range(ref, params))},
        {"reference", file_provenance(reference_path, ref_text)},
        {"candidate", file_provenance(candidate_path, cand_text)},
    };
    write_json(out / "metrics.json", report);
    return report;
}

inline json run_verify(const fs::path& a_path, const fs::path& b_path, double tol, const fs::path& out) {
    if (std::isnan(tol) || tol < 0.0) throw ConfigError("verify: tolerance must be >= 0");
    const std::string a_text = io::read_file(a_path);
    const std::string b_text = io::read_file(b_path);
    const MeasurementSet a = io::parse_measurements(a_text, a_path.string());
    const MeasurementSet b = io::parse_measurements(b_text, b_path.string());
    const Verdict v = compare_measurements(a, b, tol);
    const json report{
        {"accept", v.accept},
        {"max_deviation", v.max_deviation},
        {"worst_source", v.worst_source},
        {"tol", std::isinf(tol) ? json("inf") : json(tol)},
        {"template", file_provenance(a_path, a_text)},
        {"candidate", file_provenance(b_path, b_text)},
    };
    write_json(out / "verdict.json", report);
    return report;
}

}  // namespace spxt
