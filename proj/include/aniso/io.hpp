#pragma once

#include "aniso/integrand.hpp"
#include "aniso/mhset.hpp"
#include "aniso/surface.hpp"
#include "aniso/varifold.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace aniso::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw InvalidInput(where + ": cannot parse number '" + std::string(s) + "'");
    return v;
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write '" + path.string() + "'");
    out << text;
}

// ---------------------------------------------------------------------------
// JSON access with key paths in diagnostics

inline std::string join_key(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

inline const json& require(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object()) throw InvalidInput("scenario key '" + path + "' must be an object");
    const auto it = j.find(key);
    if (it == j.end()) throw InvalidInput("scenario key '" + join_key(path, key) + "' is missing");
    return *it;
}

inline double number(const json& j, const std::string& key, const std::string& path) {
    const json& v = require(j, key, path);
    if (!v.is_number()) throw InvalidInput("scenario key '" + join_key(path, key) + "' must be a number");
    return v.get<double>();
}

inline double number_or(const json& j, const std::string& key, const std::string& path, double fallback) {
    return j.is_object() && j.contains(key) ? number(j, key, path) : fallback;
}

inline long integer(const json& j, const std::string& key, const std::string& path) {
    const json& v = require(j, key, path);
    if (!v.is_number_integer()) throw InvalidInput("scenario key '" + join_key(path, key) + "' must be an integer");
    return v.get<long>();
}

inline long integer_or(const json& j, const std::string& key, const std::string& path, long fallback) {
    return j.is_object() && j.contains(key) ? integer(j, key, path) : fallback;
}

inline std::string string_at(const json& j, const std::string& key, const std::string& path) {
    const json& v = require(j, key, path);
    if (!v.is_string()) throw InvalidInput("scenario key '" + join_key(path, key) + "' must be a string");
    return v.get<std::string>();
}

inline Vec vec_from_json(const json& j, const std::string& path, int dim = -1) {
    if (!j.is_array()) throw InvalidInput("scenario key '" + path + "' must be an array of numbers");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw InvalidInput("scenario key '" + path + "' must be an array of numbers");
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    if (dim >= 0 && v.size() != dim)
        throw InvalidInput("scenario key '" + path + "' must have " + std::to_string(dim) + " entries");
    return v;
}

inline Vec vec_at(const json& j, const std::string& key, const std::string& path, int dim = -1) {
    return vec_from_json(require(j, key, path), join_key(path, key), dim);
}

// Row-major: nested rows, or a flat list of d*d entries.
inline Mat mat_from_json(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) throw InvalidInput("scenario key '" + path + "' must be a non-empty array");
    if (j[0].is_array()) {
        const std::size_t rows = j.size(), cols = j[0].size();
        Mat M(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            if (!j[r].is_array() || j[r].size() != cols)
                throw InvalidInput("scenario key '" + path + "' has ragged rows");
            M.row(static_cast<Eigen::Index>(r)) = vec_from_json(j[r], path).transpose();
        }
        return M;
    }
    const Vec flat = vec_from_json(j, path);
    const auto d = static_cast<Eigen::Index>(std::lround(std::sqrt(static_cast<double>(flat.size()))));
    if (d * d != flat.size()) throw InvalidInput("scenario key '" + path + "' is not a square matrix");
    Mat M(d, d);
    for (Eigen::Index r = 0; r < d; ++r)
        for (Eigen::Index c = 0; c < d; ++c) M(r, c) = flat[r * d + c];
    return M;
}

inline json to_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline json to_json(const Mat& M) {
    json a = json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) a.push_back(to_json(Vec(M.row(r).transpose())));
    return a;
}

// {"kind": "area" | "quadratic" | "modulated" | "lp_smoothed", ...}
//   area:        dim
//   quadratic:   matrix (row-major, SPD)
//   modulated:   base (descriptor), amplitude, wave, phase
//   lp_smoothed: dim, p, eps
inline Integrand integrand_from_json(const json& j, const std::string& path = "integrand") {
    const std::string kind = string_at(j, "kind", path);
    if (kind == "area") return area_integrand(static_cast<int>(integer_or(j, "dim", path, 3)));
    if (kind == "quadratic") return quadratic_integrand(mat_from_json(require(j, "matrix", path), join_key(path, "matrix")));
    if (kind == "modulated") {
        const Integrand base = integrand_from_json(require(j, "base", path), join_key(path, "base"));
        return modulated_integrand(base, number(j, "amplitude", path), vec_at(j, "wave", path, base.dim()),
                                   number_or(j, "phase", path, 0.0));
    }
    if (kind == "lp_smoothed")
        return lp_smoothed_integrand(static_cast<int>(integer_or(j, "dim", path, 3)), number(j, "p", path),
                                     number(j, "eps", path));
    throw InvalidInput("scenario key '" + join_key(path, "kind") + "' has unknown value '" + kind + "'");
}

// ---------------------------------------------------------------------------
// OFF meshes

inline TriMesh parse_off(std::istream& in, const std::string& where = "OFF") {
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string t;
        while (ls >> t) tokens.push_back(t);
    }
    std::size_t pos = 0;
    auto next = [&]() -> const std::string& {
        if (pos >= tokens.size()) throw InvalidInput(where + ": unexpected end of file");
        return tokens[pos++];
    };
    if (next() != "OFF") throw InvalidInput(where + ": missing OFF header");
    auto count = [&](const char* what) {
        const double v = parse_double(next(), where);
        if (v < 0 || v != std::floor(v)) throw InvalidInput(where + ": bad " + what + " count");
        return static_cast<std::size_t>(v);
    };
    const std::size_t nv = count("vertex"), nf = count("face");
    count("edge");
    TriMesh m;
    m.vertices.reserve(nv);
    for (std::size_t i = 0; i < nv; ++i) {
        const double x = parse_double(next(), where), y = parse_double(next(), where), z = parse_double(next(), where);
        m.vertices.emplace_back(x, y, z);
    }
    for (std::size_t f = 0; f < nf; ++f) {
        if (count("polygon vertex") != 3) throw InvalidInput(where + ": face " + std::to_string(f) + " is not a triangle");
        std::array<int, 3> t{};
        for (int& v : t) {
            const std::size_t idx = count("index");
            if (idx >= nv) throw InvalidInput(where + ": face " + std::to_string(f) + " references a missing vertex");
            v = static_cast<int>(idx);
        }
        m.faces.push_back(t);
    }
    return m;
}

inline TriMesh read_off(const fs::path& path) {
    std::istringstream in(read_text(path));
    return parse_off(in, path.string());
}

inline std::string format_off(const TriMesh& m) {
    std::string s = "OFF\n" + std::to_string(m.vertices.size()) + " " + std::to_string(m.faces.size()) + " 0\n";
    for (const auto& v : m.vertices)
        s += format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z()) + "\n";
    for (const auto& f : m.faces)
        s += "3 " + std::to_string(f[0]) + " " + std::to_string(f[1]) + " " + std::to_string(f[2]) + "\n";
    return s;
}

// ---------------------------------------------------------------------------
// CSV tables

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline bool numeric_row(const std::vector<std::string>& cells) {
    for (const auto& c : cells) {
        double v;
        std::string_view s(c);
        while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
        if (!s.empty() && s.front() == '+') s.remove_prefix(1);
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc()) return false;
    }
    return true;
}

// Numeric rows of a CSV file; a non-numeric first row is taken as header.
inline std::vector<std::vector<double>> read_rows(const std::string& text, const std::string& where) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::vector<double>> rows;
    bool first = true;
    std::size_t width = 0, lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv(line);
        if (first && !numeric_row(cells)) {
            first = false;
            continue;
        }
        first = false;
        std::vector<double> row;
        for (const auto& c : cells) row.push_back(parse_double(c, where + ":" + std::to_string(lineno)));
        if (width == 0) width = row.size();
        if (row.size() != width) throw InvalidInput(where + ":" + std::to_string(lineno) + ": wrong column count");
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string join_row(const std::vector<double>& row) {
    std::string s;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) s += ',';
        s += format_double(row[i]);
    }
    return s + "\n";
}

}  // namespace detail

// Columns x1..xd, n1..nd, w.
inline std::string format_varifold_csv(const DiscreteVarifold& V) {
    const int d = V.dim();
    std::string s;
    for (int i = 1; i <= d; ++i) s += "x" + std::to_string(i) + ",";
    for (int i = 1; i <= d; ++i) s += "n" + std::to_string(i) + ",";
    s += "w\n";
    std::vector<double> row(static_cast<std::size_t>(2 * d + 1));
    for (const auto& a : V.atoms()) {
        for (int i = 0; i < d; ++i) {
            row[i] = a.x[i];
            row[d + i] = a.nu[i];
        }
        row[2 * d] = a.w;
        s += detail::join_row(row);
    }
    return s;
}

inline DiscreteVarifold parse_varifold_csv(const std::string& text, const std::string& where = "varifold") {
    const auto rows = detail::read_rows(text, where);
    if (rows.empty()) throw InvalidInput(where + ": no atoms");
    const std::size_t cols = rows[0].size();
    if (cols < 5 || (cols - 1) % 2 != 0) throw InvalidInput(where + ": expected columns x1..xd, n1..nd, w");
    const int d = static_cast<int>((cols - 1) / 2);
    DiscreteVarifold V(d);
    for (const auto& r : rows) {
        Vec x(d), n(d);
        for (int i = 0; i < d; ++i) {
            x[i] = r[i];
            n[i] = r[d + i];
        }
        V.add(x, n, r[2 * d]);
    }
    return V;
}

inline DiscreteVarifold read_varifold_csv(const fs::path& path) {
    return parse_varifold_csv(read_text(path), path.string());
}

// One point per row.
inline std::string format_points_csv(const Mat& P) {
    std::string s;
    std::vector<double> row(static_cast<std::size_t>(P.rows()));
    for (Eigen::Index c = 0; c < P.cols(); ++c) {
        for (Eigen::Index r = 0; r < P.rows(); ++r) row[r] = P(r, c);
        s += detail::join_row(row);
    }
    return s;
}

inline Mat parse_points_csv(const std::string& text, const std::string& where = "points") {
    const auto rows = detail::read_rows(text, where);
    if (rows.empty()) return Mat(0, 0);
    Mat P(static_cast<Eigen::Index>(rows[0].size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t c = 0; c < rows.size(); ++c)
        for (std::size_t r = 0; r < rows[c].size(); ++r) P(r, c) = rows[c][r];
    return P;
}

inline Mat read_points_csv(const fs::path& path) { return parse_points_csv(read_text(path), path.string()); }

// Generic table with a header row.
inline std::string format_table(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
    std::string s;
    for (std::size_t i = 0; i < header.size(); ++i) s += (i ? "," : "") + header[i];
    s += "\n";
    for (const auto& r : rows) s += detail::join_row(r);
    return s;
}

// ---------------------------------------------------------------------------
// Sequence manifests: {"entries": [{"file": "v1.csv", "label": 1}, ...]},
// files relative to the manifest.

inline MeasureSequence read_manifest(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
    const json& entries = require(j, "entries", "manifest");
    if (!entries.is_array() || entries.empty()) throw InvalidInput("manifest key 'entries' must be a non-empty array");
    MeasureSequence seq;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const std::string where = "manifest.entries[" + std::to_string(i) + "]";
        const fs::path file = path.parent_path() / string_at(entries[i], "file", where);
        seq.push(read_varifold_csv(file), integer_or(entries[i], "label", where, static_cast<long>(i + 1)));
    }
    return seq;
}

inline void write_manifest(const fs::path& path, const MeasureSequence& seq, const std::string& stem = "entry") {
    json entries = json::array();
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const std::string name = stem + "_" + std::to_string(i + 1) + ".csv";
        write_text(path.parent_path() / name, format_varifold_csv(seq.entries[i]));
        entries.push_back({{"file", name}, {"label", seq.labels[i]}});
    }
    write_text(path, json{{"entries", entries}}.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Certificates

inline json paraboloid_json(const Paraboloid& P) {
    json j = {{"a0", P.a0}};
    j["a1"] = P.a1.size() ? to_json(P.a1) : json::array();
    j["A"] = P.A.size() ? to_json(P.A) : json::array();
    j["center"] = P.center.size() ? to_json(P.center) : json::array();
    return j;
}

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json certificate_json(const TouchReport& r) {
    json j;
    j["paraboloid"] = paraboloid_json(r.paraboloid);
    j["argmax"] = r.argmax.size() ? to_json(r.argmax) : json::array();
    j["argmax_index"] = r.argmax_index;
    j["lhs"] = number_or_null(r.lhs);
    j["margin"] = number_or_null(r.margin);
    j["verdict"] = verdict_name(r.verdict);
    j["threshold"] = r.threshold;
    j["local"] = r.local;
    j["touching"] = r.touching;
    j["trials_accepted"] = r.trials_accepted;
    if (!r.note.empty()) j["note"] = r.note;
    return j;
}

}  // namespace aniso::io
