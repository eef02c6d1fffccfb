#pragma once

// Persistence: correlation series as CSV, result records as JSON documents
// (schema 1), content-hashed run directories that are never overwritten.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "planar/errors.hpp"
#include "planar/exact.hpp"
#include "planar/series.hpp"

namespace planar {

using json = nlohmann::json;

inline constexpr int record_schema = 1;
inline constexpr const char* tool_version = "1.0.0";

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// FNV-1a (64 bit) of the canonical dump. Object keys are stored sorted, so
// the hash does not depend on the order keys were written in.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string config_hash(const json& config) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config.dump())));
    return buf;
}

// ---------------------------------------------------------------------------
// Series CSV: header r,mean,stderr,n. Leave-one-bin-out replicas go to an
// optional sidecar with one row per bin.

inline void write_series_csv(const std::filesystem::path& path, const CorrelationSeries& s) {
    std::ofstream out(path, std::ios::out | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "r,mean,stderr,n\n";
    for (std::size_t k = 0; k < s.size(); ++k)
        out << s.r[k] << ',' << format_double(s.mean[k]) << ',' << format_double(s.error[k]) << ',' << s.n[k] << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

inline std::filesystem::path replica_path(const std::filesystem::path& csv) {
    auto p = csv;
    p.replace_extension();
    return p.string() + ".replicas.csv";
}

inline void write_replicas_csv(const std::filesystem::path& path, const CorrelationSeries& s) {
    std::ofstream out(path, std::ios::out | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "bin";
    for (int r : s.r) out << ",r" << r;
    out << '\n';
    for (std::size_t b = 0; b < s.replicas.size(); ++b) {
        out << b;
        for (double v : s.replicas[b]) out << ',' << format_double(v);
        out << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

namespace detail {
inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw IoError("malformed number '" + s + "' in " + where);
    }
}
}  // namespace detail

// Reads a series and, when present, its replica sidecar.
inline CorrelationSeries read_series_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "r,mean,stderr,n")
        throw IoError(path.string() + ": expected header r,mean,stderr,n");
    CorrelationSeries s;
    s.observable = path.stem().string();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto c = detail::split_csv(line);
        if (c.size() != 4) throw IoError(path.string() + ": expected 4 columns");
        s.push(static_cast<int>(detail::parse_double(c[0], path.string())), detail::parse_double(c[1], path.string()),
               detail::parse_double(c[2], path.string()),
               static_cast<long>(detail::parse_double(c[3], path.string())));
    }
    const auto rp = replica_path(path);
    if (std::filesystem::exists(rp)) {
        std::ifstream rin(rp);
        std::getline(rin, line);
        while (std::getline(rin, line)) {
            if (line.empty()) continue;
            auto c = detail::split_csv(line);
            if (c.size() != s.size() + 1) throw IoError(rp.string() + ": replica row width mismatch");
            std::vector<double> row;
            for (std::size_t k = 1; k < c.size(); ++k) row.push_back(detail::parse_double(c[k], rp.string()));
            s.replicas.push_back(std::move(row));
        }
    }
    return s;
}

// Gnuplot-ready whitespace-separated columns.
inline void write_plot_data(const std::filesystem::path& path, const std::vector<std::string>& header,
                            const std::vector<std::vector<double>>& columns) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << '#';
    for (const auto& h : header) out << ' ' << h;
    out << '\n';
    const std::size_t rows = columns.empty() ? 0 : columns[0].size();
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? " " : "") << format_double(columns[c].at(i));
        out << '\n';
    }
}

inline void write_series_plot(const std::filesystem::path& path, const CorrelationSeries& s) {
    std::vector<double> r(s.r.begin(), s.r.end());
    write_plot_data(path, {"r", "mean", "stderr"}, {r, s.mean, s.error});
}

// ---------------------------------------------------------------------------
// Records

struct ResultRecord {
    int schema = record_schema;
    std::string kind;
    json config = json::object();
    std::string hash;
    std::uint64_t seed = 0;
    std::string timestamp;
    std::string version = tool_version;
    ExponentSet exponents;
    RelationReport relations;
    bool has_relations = false;
    std::map<std::string, std::string> series;  // name -> file name relative to the record
    json fits = json::object();
    json notes = json::object();  // formula names and method choices behind each number
};

inline std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline json to_json(const ExponentSet& e) {
    json j = json::object();
    for (const auto& [k, v] : e.entries())
        j[exponent_name(k)] = {{"value", v.value},
                               {"uncertainty", v.uncertainty},
                               {"provenance", v.provenance == Provenance::exact ? "exact" : "fitted"}};
    return j;
}

inline ExponentSet exponents_from_json(const json& j) {
    ExponentSet e;
    for (auto it = j.begin(); it != j.end(); ++it) {
        auto k = exponent_from_name(it.key());
        if (!k) throw IoError("unknown exponent '" + it.key() + "' in record");
        const auto& v = it.value();
        const auto prov = v.value("provenance", "exact") == "exact" ? Provenance::exact : Provenance::fitted;
        e.set(*k, v.at("value").get<double>(), v.value("uncertainty", 0.0), prov);
    }
    return e;
}

inline json to_json(const RelationReport& r) {
    json checks = json::array();
    for (const auto& c : r.checks)
        checks.push_back({{"name", c.name},
                          {"formula", c.formula},
                          {"lhs", c.lhs},
                          {"rhs", c.rhs},
                          {"residual", c.residual},
                          {"sigma", c.sigma},
                          {"pass", c.pass}});
    json skipped = json::array();
    for (const auto& s : r.skipped) skipped.push_back({{"name", s.name}, {"missing", s.missing}});
    return {{"tol", r.tol}, {"checks", checks}, {"skipped", skipped}, {"all_pass", r.all_pass()}};
}

inline json to_json(const ResultRecord& r) {
    json j = {{"schema", r.schema},       {"kind", r.kind},       {"config", r.config},
              {"config_hash", r.hash},    {"seed", r.seed},       {"timestamp", r.timestamp},
              {"tool_version", r.version}, {"exponents", to_json(r.exponents)}, {"series", r.series},
              {"fits", r.fits},           {"notes", r.notes}};
    if (r.has_relations) j["relations"] = to_json(r.relations);
    return j;
}

inline ResultRecord record_from_json(const json& j) {
    ResultRecord r;
    try {
        r.schema = j.at("schema").get<int>();
        if (r.schema != record_schema) throw IoError("unsupported record schema " + std::to_string(r.schema));
        r.kind = j.at("kind").get<std::string>();
        r.config = j.value("config", json::object());
        r.hash = j.value("config_hash", "");
        r.seed = j.value("seed", std::uint64_t{0});
        r.timestamp = j.value("timestamp", "");
        r.version = j.value("tool_version", "");
        r.exponents = exponents_from_json(j.value("exponents", json::object()));
        r.series = j.value("series", std::map<std::string, std::string>{});
        r.fits = j.value("fits", json::object());
        r.notes = j.value("notes", json::object());
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed record: ") + e.what());
    }
    return r;
}

inline ResultRecord load_record(const std::filesystem::path& path) {
    auto file = std::filesystem::is_directory(path) ? path / "record.json" : path;
    std::ifstream in(file);
    if (!in) throw IoError("cannot read " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(file.string() + ": " + e.what());
    }
    return record_from_json(j);
}

// New directory <root>/<kind>-<hash>-<k> with the smallest unused k.
inline std::filesystem::path create_run_directory(const std::filesystem::path& root, const std::string& kind,
                                                  const std::string& hash) {
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
    for (int k = 0; k < 100000; ++k) {
        auto dir = root / (kind + "-" + hash + "-" + std::to_string(k));
        if (std::filesystem::create_directory(dir, ec)) return dir;
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    }
    throw IoError("no free run directory under " + root.string());
}

// Writes record.json into a run directory; refuses to replace an existing
// record and checks that every referenced series file exists.
inline std::filesystem::path write_record(const std::filesystem::path& dir, const ResultRecord& r) {
    for (const auto& [name, file] : r.series)
        if (!std::filesystem::exists(dir / file)) throw IoError("series '" + name + "' references missing " + file);
    const auto path = dir / "record.json";
    if (std::filesystem::exists(path)) throw IoError(path.string() + " exists; records are append-only");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_json(r).dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
    return path;
}

inline json load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    try {
        json j;
        in >> j;
        if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
        return j;
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

}  // namespace planar
