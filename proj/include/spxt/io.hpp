#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "spxt/errors.hpp"
#include "spxt/forward.hpp"
#include "spxt/phantom.hpp"
#include "spxt/solver.hpp"

namespace spxt::io {

namespace fs = std::filesystem;

/// Writes `content` to `path` via a temporary file and a rename.
inline void write_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out << content;
        if (!out) throw std::runtime_error("failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// 64-bit FNV-1a digest, hex encoded.
inline std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << h;
    return ss.str();
}

inline std::ostringstream precise_stream() {
    std::ostringstream ss;
    ss << std::setprecision(17);
    return ss;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size() && s.find_first_not_of(" \r\t", pos) != std::string::npos) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw InputMismatch("malformed number in " + what + ": '" + s + "'");
    }
}

// ---- measurements -----------------------------------------------------------

inline std::string format_measurements(const MeasurementSet& ms) {
    auto ss = precise_stream();
    ss << "source_id,x,y,z,clean,noisy\n";
    for (std::size_t s = 0; s < ms.size(); ++s) {
        const auto& p = ms.positions[s];
        ss << s << ',' << p.x() << ',' << p.y() << ',' << p.z() << ',' << ms.clean[s] << ',' << ms.noisy[s] << '\n';
    }
    return ss.str();
}

inline MeasurementSet parse_measurements(const std::string& text, const std::string& origin = "measurements") {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("source_id,x,y,z,clean,noisy", 0) != 0)
        throw InputMismatch(origin + ": missing measurement CSV header");
    MeasurementSet ms;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv_line(line);
        if (f.size() != 6) throw InputMismatch(origin + ": expected 6 columns per row");
        if (static_cast<std::size_t>(parse_double(f[0], origin)) != ms.size())
            throw InputMismatch(origin + ": source ids must be consecutive from 0");
        ms.positions.emplace_back(parse_double(f[1], origin), parse_double(f[2], origin), parse_double(f[3], origin));
        ms.clean.push_back(parse_double(f[4], origin));
        ms.noisy.push_back(parse_double(f[5], origin));
    }
    return ms;
}

inline MeasurementSet read_measurements(const fs::path& path) {
    return parse_measurements(read_file(path), path.string());
}

// ---- profile and history ----------------------------------------------------

inline std::string format_profile(const Profile& profile, const RadialMap& map) {
    if (static_cast<std::size_t>(profile.size()) != map.num_classes())
        throw InputMismatch("profile length does not match radial map");
    auto ss = precise_stream();
    ss << "class_index,sq_dist_key,radius,value\n";
    for (std::size_t c = 0; c < map.num_classes(); ++c)
        ss << c << ',' << map.class_key[c] << ',' << map.class_radius(c) << ',' << profile[static_cast<Eigen::Index>(c)] << '\n';
    return ss.str();
}

inline Profile parse_profile(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("class_index,sq_dist_key,radius,value", 0) != 0)
        throw InputMismatch("missing profile CSV header");
    std::vector<double> vals;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv_line(line);
        if (f.size() != 4) throw InputMismatch("profile CSV: expected 4 columns");
        vals.push_back(parse_double(f[3], "profile"));
    }
    return Eigen::Map<Profile>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

inline std::string format_history(const std::vector<DRHistoryEntry>& history) {
    auto ss = precise_stream();
    ss << "iter,J,F,G,step_norm\n";
    for (const auto& h : history) ss << h.iter << ',' << h.J << ',' << h.F << ',' << h.G << ',' << h.step_norm << '\n';
    return ss.str();
}

// ---- voxel grids ------------------------------------------------------------

/// `n=<int>` header, then n^3 values with i fastest, one i-row per line.
inline std::string format_grid(const VoxelGrid& grid) {
    auto ss = precise_stream();
    ss << "n=" << grid.n << '\n';
    for (std::size_t v = 0; v < grid.size(); ++v) {
        ss << grid.values[v];
        ss << (((v + 1) % static_cast<std::size_t>(grid.n) == 0) ? '\n' : ' ');
    }
    return ss.str();
}

inline VoxelGrid parse_grid(const std::string& text, const std::string& origin = "grid") {
    std::istringstream in(text);
    std::string header;
    if (!std::getline(in, header) || header.rfind("n=", 0) != 0) throw InputMismatch(origin + ": missing 'n=' header");
    const int n = static_cast<int>(parse_double(header.substr(2), origin));
    if (n < 1) throw InputMismatch(origin + ": grid size must be >= 1");
    VoxelGrid grid(n);
    std::string tok;
    std::size_t v = 0;
    while (in >> tok) {
        if (v >= grid.size()) throw InputMismatch(origin + ": too many values");
        grid.values[v++] = parse_double(tok, origin);
    }
    if (v != grid.size()) throw InputMismatch(origin + ": expected n^3 values");
    return grid;
}

inline VoxelGrid read_grid(const fs::path& path) { return parse_grid(read_file(path), path.string()); }

}  // namespace spxt::io
