#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "spxt/errors.hpp"
#include "spxt/geometry.hpp"
#include "spxt/io.hpp"
#include "spxt/phantom.hpp"
#include "spxt/solver.hpp"

namespace spxt {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/**
 * Every key a config file may contain, with its default. Defaults reproduce
 * the two-shell reconstruction parameters (n=20, 1030 sources, 1% noise,
 * alpha=0.03, gamma=1, 5000 iterations).
 */
inline json default_config() {
    return json{
        {"schema_version", kSchemaVersion},
        {"phantom", {{"preset", "two-shell"}, {"shells", nullptr}}},
        {"grid", {{"n", 20}, {"n_sim", nullptr}}},
        {"sources", {{"count", 1030}, {"radius", 3.0}}},
        {"detector", {{"distance", 6.0}, {"side", 4.0}, {"rays_per_axis", 10}}},
        {"noise", {{"level", 0.01}}},
        {"seed", 42},
        {"solver",
         {{"alpha", 0.03},
          {"gamma", 1.0},
          {"max_iters", 5000},
          {"inner_max_iters", 200},
          {"inner_tol", 1e-9},
          {"memory", 10},
          {"f_max", 1.0},
          {"early_stop", false}}},
        {"dr", {{"paper_literal_update", false}}},
        {"sweep", {{"noise_levels", {0.005, 0.01, 0.02}}, {"alphas", {0.01, 0.03, 0.1}}, {"workers", 0}}},
        {"output", {{"dir", "out"}}},
        {"threads", 0},
    };
}

struct ExperimentConfig {
    std::optional<std::string> preset;
    ShellPhantom phantom;
    int n = 20;
    int n_sim = 20;
    Geometry geometry;
    int source_count = 1030;
    double noise_level = 0.01;
    std::uint64_t seed = 42;
    DRParams solver;
    std::vector<double> sweep_noise;
    std::vector<double> sweep_alpha;
    int sweep_workers = 0;
    std::string output_dir = "out";
    int threads = 0;

    /// Fully resolved config, every default materialized.
    json to_json() const {
        json shells = json::array();
        for (const auto& s : phantom.shells()) shells.push_back({s.outer_radius, s.density});
        json phantom_j = {{"preset", preset ? json(*preset) : json(nullptr)}, {"shells", shells}};
        return json{
            {"schema_version", kSchemaVersion},
            {"phantom", phantom_j},
            {"grid", {{"n", n}, {"n_sim", n_sim}}},
            {"sources", {{"count", source_count}, {"radius", geometry.sources.radius}}},
            {"detector",
             {{"distance", geometry.detector.distance},
              {"side", geometry.detector.side},
              {"rays_per_axis", geometry.detector.rays_per_axis}}},
            {"noise", {{"level", noise_level}}},
            {"seed", seed},
            {"solver",
             {{"alpha", solver.alpha},
              {"gamma", solver.gamma},
              {"max_iters", solver.max_iters},
              {"inner_max_iters", solver.inner.max_iters},
              {"inner_tol", solver.inner.pg_tol},
              {"memory", solver.inner.memory},
              {"f_max", solver.f_max},
              {"early_stop", solver.early_stop}}},
            {"dr", {{"paper_literal_update", solver.paper_literal_update}}},
            {"sweep", {{"noise_levels", sweep_noise}, {"alphas", sweep_alpha}, {"workers", sweep_workers}}},
            {"output", {{"dir", output_dir}}},
            {"threads", threads},
        };
    }

    /// Digest of the blocks that determine source positions and ray bundles.
    std::string geometry_digest() const {
        const json j = to_json();
        const json g = {{"sources", j["sources"]}, {"detector", j["detector"]}};
        return io::fnv1a_hex(g.dump());
    }
};

namespace detail {

inline void reject_unknown_keys(const json& given, const json& schema, const std::string& prefix) {
    if (!given.is_object()) throw ConfigError("config: '" + prefix + "' must be an object");
    for (auto it = given.begin(); it != given.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!schema.contains(it.key())) throw ConfigError("config: unknown key '" + key + "'");
        const json& sub = schema.at(it.key());
        if (sub.is_object()) reject_unknown_keys(it.value(), sub, key);
    }
}

inline void merge_into(json& base, const json& over) {
    for (auto it = over.begin(); it != over.end(); ++it) {
        if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object())
            merge_into(base[it.key()], it.value());
        else
            base[it.key()] = it.value();
    }
}

template <class T>
T get_as(const json& j, const std::string& path) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: key '" + path + "' has the wrong type");
    }
}

inline int get_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ConfigError("config: key '" + path + "' must be an integer");
    return j.get<int>();
}

inline double get_number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError("config: key '" + path + "' must be a number");
    return j.get<double>();
}

}  // namespace detail

/// Applies a dotted `key=value` override; the value is parsed as JSON when possible.
inline void apply_override(json& raw, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    json* node = &raw;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("malformed override key '" + key + "'");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
        node = &(*node)[part];
        start = dot + 1;
    }
}

/// Validates a raw config (possibly partial) and resolves it against the defaults.
inline ExperimentConfig resolve_config(const json& raw) {
    const json schema = default_config();
    detail::reject_unknown_keys(raw, schema, "");
    if (raw.contains("schema_version") && raw["schema_version"] != kSchemaVersion)
        throw ConfigError("config: unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");

    json j = schema;
    detail::merge_into(j, raw);

    ExperimentConfig cfg;
    using detail::get_int;
    using detail::get_number;

    // Phantom: an explicit shell list wins over the preset.
    const json& ph = j["phantom"];
    const bool user_shells = raw.contains("phantom") && raw["phantom"].contains("shells") && !raw["phantom"]["shells"].is_null();
    if (user_shells) {
        if (!ph["shells"].is_array()) throw ConfigError("config: phantom.shells must be a list of [radius, density]");
        std::vector<Shell> shells;
        for (const auto& s : ph["shells"]) {
            if (!s.is_array() || s.size() != 2 || !s[0].is_number() || !s[1].is_number())
                throw ConfigError("config: each shell must be [radius, density]");
            shells.push_back({s[0].get<double>(), s[1].get<double>()});
        }
        cfg.phantom = ShellPhantom(shells);
        // Both keys are allowed only when they agree (as in a config echo).
        const bool user_preset = raw["phantom"].contains("preset") && !raw["phantom"]["preset"].is_null();
        if (user_preset) {
            if (!raw["phantom"]["preset"].is_string()) throw ConfigError("config: phantom.preset must be a string");
            const auto name = raw["phantom"]["preset"].get<std::string>();
            const auto preset_phantom = phantom_preset(name);
            const auto& expect = preset_phantom.shells();
            const bool same = expect.size() == shells.size() &&
                              std::equal(expect.begin(), expect.end(), shells.begin(), [](const Shell& a, const Shell& b) {
                                  return a.outer_radius == b.outer_radius && a.density == b.density;
                              });
            if (!same) throw ConfigError("config: phantom.shells contradict phantom.preset '" + name + "'");
            cfg.preset = name;
        }
    } else {
        if (!ph["preset"].is_string()) throw ConfigError("config: phantom.preset must be a string");
        cfg.preset = ph["preset"].get<std::string>();
        cfg.phantom = phantom_preset(*cfg.preset);
    }

    cfg.n = get_int(j["grid"]["n"], "grid.n");
    if (cfg.n < 1) throw ConfigError("config: grid.n must be >= 1");
    cfg.n_sim = j["grid"]["n_sim"].is_null() ? cfg.n : get_int(j["grid"]["n_sim"], "grid.n_sim");
    if (cfg.n_sim < cfg.n) throw ConfigError("config: grid.n_sim must be >= grid.n");

    cfg.source_count = get_int(j["sources"]["count"], "sources.count");
    const double radius = get_number(j["sources"]["radius"], "sources.radius");
    cfg.geometry.sources = generate_sources(cfg.source_count, radius);
    cfg.geometry.detector.distance = get_number(j["detector"]["distance"], "detector.distance");
    cfg.geometry.detector.side = get_number(j["detector"]["side"], "detector.side");
    cfg.geometry.detector.rays_per_axis = get_int(j["detector"]["rays_per_axis"], "detector.rays_per_axis");
    // Source radius is fixed, so one source suffices for the cone check.
    check_detector(cfg.geometry.sources.positions.front(), cfg.geometry.detector);

    cfg.noise_level = get_number(j["noise"]["level"], "noise.level");
    if (!(cfg.noise_level >= 0.0)) throw ConfigError("config: noise.level must be >= 0");
    const auto& seed = j["seed"];
    if (!seed.is_number_integer() || (!seed.is_number_unsigned() && seed.get<std::int64_t>() < 0))
        throw ConfigError("config: seed must be a non-negative integer");
    cfg.seed = j["seed"].get<std::uint64_t>();

    const json& s = j["solver"];
    cfg.solver.alpha = get_number(s["alpha"], "solver.alpha");
    cfg.solver.gamma = get_number(s["gamma"], "solver.gamma");
    cfg.solver.max_iters = get_int(s["max_iters"], "solver.max_iters");
    cfg.solver.inner.max_iters = get_int(s["inner_max_iters"], "solver.inner_max_iters");
    cfg.solver.inner.pg_tol = get_number(s["inner_tol"], "solver.inner_tol");
    cfg.solver.inner.memory = get_int(s["memory"], "solver.memory");
    cfg.solver.f_max = get_number(s["f_max"], "solver.f_max");
    cfg.solver.early_stop = detail::get_as<bool>(s["early_stop"], "solver.early_stop");
    cfg.solver.paper_literal_update = detail::get_as<bool>(j["dr"]["paper_literal_update"], "dr.paper_literal_update");
    if (!(cfg.solver.gamma > 0.0)) throw ConfigError("config: solver.gamma must be > 0");
    if (!(cfg.solver.alpha >= 0.0)) throw ConfigError("config: solver.alpha must be >= 0");
    if (cfg.solver.max_iters < 0) throw ConfigError("config: solver.max_iters must be >= 0");
    if (cfg.solver.inner.max_iters < 1 || cfg.solver.inner.memory < 1 || !(cfg.solver.inner.pg_tol > 0.0))
        throw ConfigError("config: inner solver settings must be positive");
    if (!(cfg.solver.f_max > 0.0)) throw ConfigError("config: solver.f_max must be > 0");

    cfg.sweep_noise = detail::get_as<std::vector<double>>(j["sweep"]["noise_levels"], "sweep.noise_levels");
    cfg.sweep_alpha = detail::get_as<std::vector<double>>(j["sweep"]["alphas"], "sweep.alphas");
    cfg.sweep_workers = get_int(j["sweep"]["workers"], "sweep.workers");
    for (double v : cfg.sweep_noise)
        if (!(v >= 0.0)) throw ConfigError("config: sweep.noise_levels must be >= 0");
    for (double v : cfg.sweep_alpha)
        if (!(v >= 0.0)) throw ConfigError("config: sweep.alphas must be >= 0");

    cfg.output_dir = detail::get_as<std::string>(j["output"]["dir"], "output.dir");
    cfg.threads = get_int(j["threads"], "threads");
    if (cfg.threads < 0 || cfg.sweep_workers < 0) throw ConfigError("config: thread counts must be >= 0");
    return cfg;
}

inline json parse_config_text(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
}

inline json load_config_file(const std::string& path) {
    try {
        return parse_config_text(io::read_file(path));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

}  // namespace spxt
