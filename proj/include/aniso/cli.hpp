#pragma once

#include "aniso/blowup.hpp"
#include "aniso/boundary.hpp"
#include "aniso/io.hpp"
#include "aniso/mesh_gen.hpp"
#include "aniso/mhset.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <map>
#include <random>

namespace aniso::cli {

using io::json;
namespace fs = std::filesystem;

inline const std::vector<std::string>& commands() {
    static const std::vector<std::string> names = {"check-integrand", "first-variation", "mean-curvature",
                                                   "mh-verify",       "blowup-locate",   "density-map",
                                                   "solve-graph",     "hopf",            "monotonicity",
                                                   "stability"};
    return names;
}

enum Exit : int { kSuccess = 0, kError = 1, kViolation = 2 };

// Pretty JSON with doubles in shortest round-trip form.
inline void dump_json(const json& j, std::string& out, int indent = 0) {
    const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += "{\n";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ",\n";
                first = false;
                out += pad + json(it.key()).dump() + ": ";
                dump_json(it.value(), out, indent + 2);
            }
            out += "\n" + std::string(static_cast<std::size_t>(indent), ' ') + "}";
            return;
        }
        case json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            const bool flat = std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_primitive(); });
            if (flat) {
                out += "[";
                for (std::size_t i = 0; i < j.size(); ++i) {
                    if (i) out += ", ";
                    dump_json(j[i], out, indent + 2);
                }
                out += "]";
                return;
            }
            out += "[\n";
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) out += ",\n";
                out += pad;
                dump_json(j[i], out, indent + 2);
            }
            out += "\n" + std::string(static_cast<std::size_t>(indent), ' ') + "]";
            return;
        }
        case json::value_t::number_float: {
            const double v = j.get<double>();
            out += std::isfinite(v) ? io::format_double(v) : "null";
            return;
        }
        default:
            out += j.dump();
    }
}

inline std::string to_text(const json& j) {
    std::string s;
    dump_json(j, s);
    return s + "\n";
}

struct Options {
    std::string command;
    fs::path scenario;
    fs::path out = ".";
    std::optional<std::uint64_t> seed;
    int threads = 0;
    double tol_scale = 1.0;
};

struct Context {
    json scenario;
    fs::path dir;
    std::uint64_t seed = 0;
    double tol_scale = 1.0;
    std::vector<std::pair<std::string, std::string>> tables;  // file suffix, CSV body

    const json& at(const std::string& key) const { return io::require(scenario, key, ""); }
    bool has(const std::string& key) const { return scenario.contains(key); }
    double number(const std::string& key, double fallback) const { return io::number_or(scenario, key, "", fallback); }
    double number(const std::string& key) const { return io::number(scenario, key, ""); }
    long integer(const std::string& key, long fallback) const { return io::integer_or(scenario, key, "", fallback); }
    Vec vec(const std::string& key, int dim = -1) const { return io::vec_at(scenario, key, "", dim); }
    void table(const std::string& name, std::string body) { tables.emplace_back(name, std::move(body)); }
};

struct Outcome {
    json result;
    int exit = kSuccess;
};

// ---------------------------------------------------------------------------
// Descriptors

namespace detail {

using Scalar = std::function<double(const Vec&)>;

inline Vec3 vec3_at(const json& j, const std::string& key, const std::string& path) {
    return io::vec_at(j, key, path, 3);
}

inline Vec3 vec3_or(const json& j, const std::string& key, const std::string& path, const Vec3& fallback) {
    return j.contains(key) ? vec3_at(j, key, path) : fallback;
}

inline std::vector<double> doubles(const json& j, const std::string& path) {
    const Vec v = io::vec_from_json(j, path);
    return {v.data(), v.data() + v.size()};
}

// {"type": "constant", "value"} | {"type": "affine", "a", "b"} |
// {"type": "paraboloid", "center", "curvature"} = k/2 |x - c|^2 |
// {"type": "quadratic", "c", "b", "Q"} = c + <b, x> + x.Q x / 2
inline Scalar scalar_function(const json& j, const std::string& path, int dim) {
    const std::string type = io::string_at(j, "type", path);
    if (type == "constant") {
        const double c = io::number(j, "value", path);
        return [c](const Vec&) { return c; };
    }
    if (type == "affine") {
        const Vec a = io::vec_at(j, "a", path, dim);
        const double b = io::number_or(j, "b", path, 0.0);
        return [a, b](const Vec& x) { return a.dot(x) + b; };
    }
    if (type == "paraboloid") {
        const Vec c = j.contains("center") ? io::vec_at(j, "center", path, dim) : Vec(Vec::Zero(dim));
        const double k = io::number_or(j, "curvature", path, 1.0);
        const double a0 = io::number_or(j, "offset", path, 0.0);
        return [c, k, a0](const Vec& x) { return a0 + 0.5 * k * (x - c).squaredNorm(); };
    }
    if (type == "quadratic") {
        const double c = io::number_or(j, "c", path, 0.0);
        const Vec b = j.contains("b") ? io::vec_at(j, "b", path, dim) : Vec(Vec::Zero(dim));
        const Mat Q = io::mat_from_json(io::require(j, "Q", path), io::join_key(path, "Q"));
        if (Q.rows() != dim || Q.cols() != dim)
            throw InvalidInput("scenario key '" + io::join_key(path, "Q") + "' has the wrong size");
        return [c, b, Q](const Vec& x) { return c + b.dot(x) + 0.5 * x.dot(Q * x); };
    }
    throw InvalidInput("scenario key '" + io::join_key(path, "type") + "' has unknown value '" + type + "'");
}

inline TriMesh mesh_from(const json& j, const std::string& path, const fs::path& dir) {
    if (j.contains("file")) return io::read_off(dir / io::string_at(j, "file", path));
    const std::string gen = io::string_at(j, "generator", path);
    auto n = [&](const char* key, long fallback) { return static_cast<int>(io::integer_or(j, key, path, fallback)); };
    auto x = [&](const char* key, double fallback) { return io::number_or(j, key, path, fallback); };
    if (gen == "icosphere") return icosphere(n("level", 3), x("radius", 1.0), vec3_or(j, "center", path, Vec3::Zero()));
    if (gen == "flat_disk") return flat_disk(n("rings", 20), x("radius", 1.0));
    if (gen == "flat_half_disk") return flat_half_disk(n("rings", 20), x("radius", 1.0));
    if (gen == "spherical_cap")
        return spherical_cap(n("rings", 20), x("radius", 1.0), x("theta_max", 1.0), vec3_or(j, "center", path, Vec3::Zero()));
    if (gen == "plane_grid") return plane_grid(n("n", 20), x("half_width", 1.0));
    if (gen == "catenoid") return catenoid_patch(n("nt", 60), n("nz", 30), x("c", 1.0), x("z0", -1.0), x("z1", 1.0));
    throw InvalidInput("scenario key '" + io::join_key(path, "generator") + "' has unknown value '" + gen + "'");
}

inline Region region_from(const json& j, const std::string& path, int dim) {
    const std::string type = io::string_at(j, "type", path);
    if (type == "ball") return Region::ball(io::vec_at(j, "center", path, dim), io::number(j, "radius", path));
    if (type == "box") return Region::box(io::vec_at(j, "lo", path, dim), io::vec_at(j, "hi", path, dim));
    throw InvalidInput("scenario key '" + io::join_key(path, "type") + "' has unknown value '" + type + "'");
}

inline PointCloudSet cloud_from(const json& j, const std::string& path, const fs::path& dir) {
    if (j.contains("file")) {
        PointCloudSet Z;
        Z.points = io::read_points_csv(dir / io::string_at(j, "file", path));
        if (Z.points.cols() == 0) throw InvalidInput("scenario key '" + io::join_key(path, "file") + "' holds no points");
        Z.resolution = io::number(j, "resolution", path);
        if (j.contains("region")) {
            Z.region = region_from(j["region"], io::join_key(path, "region"), Z.dim());
        } else {
            const Vec pad = Vec::Constant(Z.dim(), Z.resolution);
            Z.region = Region::box(Z.points.rowwise().minCoeff() - pad, Z.points.rowwise().maxCoeff() + pad);
        }
        Z.validate();
        return Z;
    }
    const std::string gen = io::string_at(j, "generator", path);
    const double res = io::number(j, "resolution", path);
    if (gen == "sphere")
        return sphere_cloud(res, io::number_or(j, "radius", path, 1.0),
                            j.contains("center") ? io::vec_at(j, "center", path, 3) : Vec(Vec::Zero(3)));
    if (gen == "plane")
        return plane_cloud(static_cast<int>(io::integer_or(j, "dim", path, 3)), io::number_or(j, "half_width", path, 1.0),
                           res);
    if (gen == "wedge")
        return wedge_cloud(io::vec_at(j, "slope", path), io::number(j, "cH", path),
                           io::number_or(j, "half_width", path, 0.1), res);
    throw InvalidInput("scenario key '" + io::join_key(path, "generator") + "' has unknown value '" + gen + "'");
}

// {"manifest": "file.json"} | {"generator": "point_mass", "point", "count"} |
// {"generator": "sphere", "radius", "center", "atoms", "count"}: entry k is k times the base measure.
inline MeasureSequence sequence_from(const json& j, const std::string& path, const fs::path& dir) {
    if (j.contains("manifest")) return io::read_manifest(dir / io::string_at(j, "manifest", path));
    const std::string gen = io::string_at(j, "generator", path);
    const long count = io::integer_or(j, "count", path, 10);
    if (count < 1) throw InvalidInput("scenario key '" + io::join_key(path, "count") + "' must be positive");
    DiscreteVarifold base(3);
    if (gen == "point_mass") {
        const Vec x = io::vec_at(j, "point", path);
        base = DiscreteVarifold(static_cast<int>(x.size()));
        base.add(x, Vec::Unit(x.size(), x.size() - 1), io::number_or(j, "weight", path, 1.0));
    } else if (gen == "sphere") {
        const long n = io::integer_or(j, "atoms", path, 20000);
        const double r = io::number_or(j, "radius", path, 0.5);
        const Vec c = j.contains("center") ? io::vec_at(j, "center", path, 3) : Vec(Vec::Zero(3));
        const Mat D = fibonacci_directions(3, static_cast<int>(n));
        for (long i = 0; i < n; ++i) base.add(c + r * D.col(i), D.col(i), 1.0 / static_cast<double>(n));
    } else {
        throw InvalidInput("scenario key '" + io::join_key(path, "generator") + "' has unknown value '" + gen + "'");
    }
    MeasureSequence seq;
    for (long k = 1; k <= count; ++k) seq.push(base.scaled(static_cast<double>(k)), k);
    return seq;
}

// {"type": "dilation", "center", "factor"} | {"type": "constant", "value"} |
// {"type": "linear", "matrix", "offset"} | {"type": "random_smooth", "modes", "amplitude"}
inline VectorFieldSpec field_from(const json& j, const std::string& path, int dim, std::uint64_t seed) {
    const std::string type = io::string_at(j, "type", path);
    if (type == "dilation")
        return dilation_field(j.contains("center") ? io::vec_at(j, "center", path, dim) : Vec(Vec::Zero(dim)),
                              io::number_or(j, "factor", path, 1.0));
    if (type == "constant") return constant_field(io::vec_at(j, "value", path, dim));
    if (type == "linear") {
        const Mat M = io::mat_from_json(io::require(j, "matrix", path), io::join_key(path, "matrix"));
        if (M.rows() != dim || M.cols() != dim)
            throw InvalidInput("scenario key '" + io::join_key(path, "matrix") + "' has the wrong size");
        return linear_field(M, j.contains("offset") ? io::vec_at(j, "offset", path, dim) : Vec(Vec::Zero(dim)));
    }
    if (type == "random_smooth") {
        std::mt19937_64 rng(seed);
        return random_smooth_field(dim, rng, static_cast<int>(io::integer_or(j, "modes", path, 3)),
                                   io::number_or(j, "amplitude", path, 0.5));
    }
    throw InvalidInput("scenario key '" + io::join_key(path, "type") + "' has unknown value '" + type + "'");
}

inline NonParametricFunctional functional_from(const Context& ctx) {
    const Integrand F =
        ctx.has("integrand") ? io::integrand_from_json(ctx.at("integrand")) : area_integrand(3);
    if (!ctx.has("functional")) return NonParametricFunctional::standard(F);
    const json& j = ctx.at("functional");
    NonParametricFunctional G = NonParametricFunctional::at(
        F, j.contains("q") ? io::vec_at(j, "q", "functional", 3) : Vec(Vec::Zero(3)),
        j.contains("normal") ? io::vec_at(j, "normal", "functional", 3) : Vec(Vec::Unit(3, 2)));
    G.r = io::number_or(j, "r", "functional", 1.0);
    G.validate();
    return G;
}

// {"type": "disk", "center", "radius", "spacing", "anchor"} |
// {"type": "mask", "origin", "spacing", "rows": ["0110", ...]} (row j lists i = 0..nx-1)
inline GridDomain domain_from(const json& j, const std::string& path) {
    const std::string type = io::string_at(j, "type", path);
    const double h = io::number(j, "spacing", path);
    if (type == "disk") {
        const Vec c = io::vec_at(j, "center", path, 2);
        return GridDomain::disk(c, io::number(j, "radius", path), h,
                                j.contains("anchor") ? io::vec_at(j, "anchor", path, 2) : c);
    }
    if (type == "mask") {
        const json& rows = io::require(j, "rows", path);
        const std::string rpath = io::join_key(path, "rows");
        if (!rows.is_array() || rows.empty()) throw InvalidInput("scenario key '" + rpath + "' must be a list of strings");
        const long ny = static_cast<long>(rows.size());
        long nx = -1;
        std::vector<char> mask;
        for (const auto& r : rows) {
            if (!r.is_string()) throw InvalidInput("scenario key '" + rpath + "' must be a list of strings");
            const std::string s = r.get<std::string>();
            if (nx < 0) nx = static_cast<long>(s.size());
            if (static_cast<long>(s.size()) != nx) throw InvalidInput("scenario key '" + rpath + "' has ragged rows");
            for (char ch : s) {
                if (ch != '0' && ch != '1') throw InvalidInput("scenario key '" + rpath + "' may only contain 0 and 1");
                mask.push_back(ch == '1');
            }
        }
        return GridDomain::from_mask(io::vec_at(j, "origin", path, 2), h, nx, ny, std::move(mask));
    }
    throw InvalidInput("scenario key '" + io::join_key(path, "type") + "' has unknown value '" + type + "'");
}

inline SolveOptions solve_options(const Context& ctx) {
    SolveOptions o;
    o.tol = ctx.number("newton_tol", o.tol) * ctx.tol_scale;
    o.max_iterations = static_cast<int>(ctx.integer("max_iterations", o.max_iterations));
    o.delta = ctx.number("delta", o.delta);
    return o;
}

inline json solution_json(const GraphSolution& s) {
    return {{"residual_norm", s.residual_norm},
            {"newton_iterations", s.newton_iterations},
            {"residual_history", s.residual_history},
            {"small_data", s.small_data},
            {"data_norm", s.data_norm},
            {"estimate_ratio", s.estimate_ratio}};
}

inline std::string grid_csv(const GridDomain& D, const Vec& u) {
    std::vector<std::vector<double>> rows;
    for (long k = 0; k < static_cast<long>(D.size()); ++k) {
        if (!D.mask[k]) continue;
        const Vec x = D.position(k);
        rows.push_back({x[0], x[1], u[k], D.interior[k] ? 1.0 : 0.0});
    }
    return io::format_table({"x1", "x2", "u", "interior"}, rows);
}

inline std::vector<Vec3> points3(const json& j, const std::string& path) {
    if (!j.is_array()) throw InvalidInput("scenario key '" + path + "' must be a list of points");
    std::vector<Vec3> out;
    for (std::size_t i = 0; i < j.size(); ++i)
        out.push_back(io::vec_from_json(j[i], path + "[" + std::to_string(i) + "]", 3));
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands

inline Outcome check_integrand(Context& ctx) {
    const Integrand F = io::integrand_from_json(ctx.at("integrand"));
    const long samples = ctx.integer("samples", 10000);
    const double range = ctx.number("x_range", 3.0);
    if (samples < 1) throw InvalidInput("scenario key 'samples' must be positive");
    const double tol_euler = 1e-10 * ctx.tol_scale, tol_range = 1e-12 * ctx.tol_scale;
    const double tol_hess = 1e-10 * ctx.tol_scale, tol_dual = 1e-6 * ctx.tol_scale;
    std::mt19937_64 rng(ctx.seed);
    std::uniform_real_distribution<double> ux(-range, range);
    const int d = F.dim();
    double euler = 0, brange = 0, hess = 0, dual = 0;
    bool dual_checked = false;
    for (long t = 0; t < samples; ++t) {
        Vec x(d);
        for (int i = 0; i < d; ++i) x[i] = ux(rng);
        const Vec nu = random_unit(d, rng);
        euler = std::max(euler, std::abs(F.euler_residual(x, nu)));
        brange = std::max(brange, (F.b_matrix(x, nu) * nu).norm());
        hess = std::max(hess, (F.d22(x, nu) * nu).norm());
        const Vec w = random_unit(d, rng);
        if (const auto closed = F.model().dual(x, w)) {
            dual_checked = true;
            dual = std::max(dual, std::abs(*closed - F.dual_norm_iterative(x, w)));
        }
    }
    Outcome o;
    o.result = {{"kind", F.kind()},
                {"samples", samples},
                {"euler_residual_max", euler},
                {"range_residual_max", brange},
                {"hessian_normal_max", hess},
                {"dual_checked", dual_checked},
                {"dual_gap_max", dual},
                {"tolerances", {{"euler", tol_euler}, {"range", tol_range}, {"hessian", tol_hess}, {"dual", tol_dual}}}};
    const bool ok = euler < tol_euler && brange < tol_range && hess < tol_hess && (!dual_checked || dual < tol_dual);
    o.result["passed"] = ok;
    o.exit = ok ? kSuccess : kViolation;
    return o;
}

inline Outcome first_variation_cmd(Context& ctx) {
    const Integrand F = io::integrand_from_json(ctx.at("integrand"));
    const TriMesh M = detail::mesh_from(ctx.at("mesh"), "mesh", ctx.dir);
    const VectorFieldSpec g = detail::field_from(ctx.at("field"), "field", F.dim(), ctx.seed);
    const DiscreteVarifold V = from_mesh(M);
    const VariationReport rep = first_variation(V, F, g);
    Outcome o;
    o.result = {{"atoms", V.size()}, {"value", rep.value}};
    const MeshGeometry geo = mesh_geometry(M);
    if (!geo.boundary_edges.empty()) {
        const VariationReport b = boundary_first_variation(M, F, g);
        o.result["interior_term"] = b.interior_term;
        o.result["boundary_term"] = b.boundary_term;
        o.result["interior_plus_boundary"] = b.interior_term + b.boundary_term;
    }
    if (ctx.scenario.value("compare_fd", true)) {
        const double step = ctx.number("fd_step", 1e-4);
        const double fd = fd_variation(V, F, g, step);
        const double err = variation_relative_error(rep.value, fd, V, F, g);
        const double tol = ctx.number("tolerance", 1e-6) * ctx.tol_scale;
        o.result["fd_value"] = fd;
        o.result["fd_step"] = step;
        o.result["relative_error"] = err;
        o.result["tolerance"] = tol;
        if (!(err < tol)) o.exit = kViolation;
    }
    return o;
}

inline Outcome mean_curvature_cmd(Context& ctx) {
    const Integrand F = io::integrand_from_json(ctx.at("integrand"));
    if (F.dim() != 3) throw InvalidInput("scenario key 'integrand' must be three-dimensional");
    const json& s = ctx.at("surface");
    const std::string type = io::string_at(s, "type", "surface");
    const long n = ctx.integer("points", 100);
    std::mt19937_64 rng(ctx.seed);
    std::vector<std::vector<double>> rows;
    double disagreement = 0.0, sphere_error = 0.0;
    bool sphere = false;
    if (type == "sphere") {
        sphere = true;
        const double r = io::number(s, "radius", "surface");
        const Vec c = s.contains("center") ? io::vec_at(s, "center", "surface", 3) : Vec(Vec::Zero(3));
        const LevelSetField L = sphere_level_set(c, r);
        for (long t = 0; t < n; ++t) {
            const Vec nu = random_unit(3, rng);
            const Vec p = c + r * nu;
            const double par = f_mean_curvature_parametric(F, p, nu, second_fundamental_form(L, p)).dot(nu);
            const double lev = f_mean_curvature_levelset(F, L, p);
            disagreement = std::max(disagreement, std::abs(par - lev));
            if (F.kind() == "area") sphere_error = std::max(sphere_error, std::abs(par + 2.0 / r));
            rows.push_back({p[0], p[1], p[2], par, lev});
        }
    } else if (type == "quadratic_graph" || type == "wave_graph") {
        const GraphSurface G = type == "wave_graph"
                                   ? wave_graph(io::number(s, "amplitude", "surface"), io::number(s, "kx", "surface"),
                                                io::number(s, "ky", "surface"))
                                   : quadratic_graph(io::number_or(s, "c", "surface", 0.0),
                                                     io::vec_at(s, "b", "surface", 2),
                                                     io::mat_from_json(io::require(s, "Q", "surface"), "surface.Q"));
        const LevelSetField L = G.as_level_set();
        const double half = io::number_or(s, "half_width", "surface", 0.7);
        std::uniform_real_distribution<double> u(-half, half);
        for (long t = 0; t < n; ++t) {
            Vec base(2);
            base << u(rng), u(rng);
            const Vec p = G.point(base);
            const auto S = second_fundamental_form(G, base);
            const double par = f_mean_curvature_parametric(F, p, S.normal, S).dot(S.normal);
            const double lev = f_mean_curvature_levelset(F, L, p);
            disagreement = std::max(disagreement, std::abs(par - lev));
            rows.push_back({p[0], p[1], p[2], par, lev});
        }
    } else {
        throw InvalidInput("scenario key 'surface.type' has unknown value '" + type + "'");
    }
    const double tol = 1e-8 * ctx.tol_scale;
    Outcome o;
    o.result = {{"surface", type}, {"points", n}, {"max_disagreement", disagreement}, {"tolerance", tol}};
    if (sphere && F.kind() == "area") o.result["max_sphere_error"] = sphere_error;
    ctx.table("points", io::format_table({"x1", "x2", "x3", "parametric", "level_set"}, rows));
    const bool ok = disagreement < tol && sphere_error < tol;
    o.exit = ok ? kSuccess : kViolation;
    return o;
}

inline Outcome mh_verify_cmd(Context& ctx) {
    const Integrand F = io::integrand_from_json(ctx.at("integrand"));
    const PointCloudSet Z = detail::cloud_from(ctx.at("cloud"), "cloud", ctx.dir);
    const double h = ctx.number("h");
    const long trials = ctx.integer("trials", 1000);
    VerifyOptions vo;
    vo.c_sample *= ctx.tol_scale;
    std::vector<LevelSetField> tests;
    json wedge;
    if (ctx.has("wedge_test")) {
        const json& w = ctx.at("wedge_test");
        const Vec slope = io::vec_at(w, "slope", "wedge_test", F.dim() - 1);
        const WedgeCertificate cert =
            wedge_certificate(slope, io::number(w, "cH", "wedge_test"), freeze(F, Vec::Zero(F.dim())));
        tests.push_back(cert.f);
        wedge = {{"T", cert.T},          {"epsilon", cert.epsilon},     {"lambda", cert.lambda},
                 {"Lambda", cert.Lambda}, {"strip_max", cert.strip_max}, {"strip_bound", cert.strip_bound},
                 {"strip_ok", cert.strip_ok}};
    }
    const MhVerifyResult res = mh_verify(Z, F, h, static_cast<int>(trials), ctx.seed, tests, vo);
    Outcome o;
    o.result = {{"points", Z.size()},
                {"resolution", Z.resolution},
                {"h", h},
                {"trials", trials},
                {"verdict", verdict_name(res.verdict)},
                {"sampled", io::certificate_json(res.sampled)},
                {"certificate", io::certificate_json(res.worst)}};
    if (!tests.empty()) {
        json smooth = json::array();
        for (const auto& r : res.smooth) smooth.push_back(io::certificate_json(r));
        o.result["smooth"] = smooth;
        o.result["wedge"] = wedge;
    }
    o.exit = res.verdict == Verdict::violation ? kViolation : kSuccess;
    return o;
}

inline Outcome blowup_locate_cmd(Context& ctx) {
    const MeasureSequence seq = detail::sequence_from(ctx.at("sequence"), "sequence", ctx.dir);
    const int depth = static_cast<int>(ctx.integer("depth", 12));
    BlowupOptions bo;
    bo.g0 = ctx.number("g0", bo.g0);
    bo.tail = static_cast<int>(ctx.integer("tail", bo.tail));
    const int d = seq.entries.front().dim();
    if (ctx.has("root_center")) bo.root_center = ctx.vec("root_center", d);
    bo.root_side = ctx.number("root_side", bo.root_side);
    const BlowupReport rep = locate_blowup(seq, depth, bo);
    Outcome o;
    o.result = {{"found", rep.found},
                {"located_point", rep.found ? io::to_json(rep.located_point) : json(nullptr)},
                {"depth", depth},
                {"growth_threshold", rep.growth_threshold},
                {"root_tail_min", rep.root_tail_min},
                {"support_ok", rep.support_ok}};
    if (!rep.note.empty()) o.result["note"] = rep.note;
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < rep.cube_chain.size(); ++k) {
        const auto& c = rep.cube_chain[k];
        std::vector<double> row{static_cast<double>(c.depth)};
        for (Eigen::Index i = 0; i < c.center.size(); ++i) row.push_back(c.center[i]);
        row.push_back(c.side);
        const auto& m = k < rep.tail_masses.size() ? rep.tail_masses[k] : std::vector<double>{};
        row.push_back(m.empty() ? std::numeric_limits<double>::quiet_NaN() : *std::min_element(m.begin(), m.end()));
        rows.push_back(row);
    }
    std::vector<std::string> header{"depth"};
    for (int i = 1; i <= d; ++i) header.push_back("c" + std::to_string(i));
    header.insert(header.end(), {"side", "tail_min"});
    ctx.table("chain", io::format_table(header, rows));
    if (ctx.has("expected")) {
        const json& e = ctx.at("expected");
        const double tol = std::pow(2.0, 1 - depth) * std::sqrt(static_cast<double>(d)) * ctx.tol_scale;
        double dist = std::numeric_limits<double>::infinity();
        if (rep.found) {
            if (e.contains("point")) {
                dist = (rep.located_point - io::vec_at(e, "point", "expected", d)).norm();
            } else {
                const Vec c = io::vec_at(e, "center", "expected", d);
                dist = std::abs((rep.located_point - c).norm() - io::number(e, "radius", "expected"));
            }
        }
        o.result["distance_to_support"] = io::number_or_null(dist);
        o.result["tolerance"] = tol;
        if (!(dist <= tol)) o.exit = kViolation;
    }
    return o;
}

inline Outcome density_map_cmd(Context& ctx) {
    const MeasureSequence seq = detail::sequence_from(ctx.at("sequence"), "sequence", ctx.dir);
    const int d = seq.entries.front().dim();
    const json& lj = ctx.at("lattice");
    const Lattice grid = Lattice::box(io::vec_at(lj, "lo", "lattice", d), io::vec_at(lj, "hi", "lattice", d),
                                      io::number(lj, "spacing", "lattice"));
    const double r = ctx.number("radius");
    const int tail = static_cast<int>(ctx.integer("tail", 3));
    const auto dens = density_map(seq, grid, r, tail);
    std::vector<std::vector<double>> rows;
    double peak = 0.0;
    for (std::size_t i = 0; i < dens.size(); ++i) {
        const Vec x = grid.node(i);
        std::vector<double> row(x.data(), x.data() + x.size());
        row.push_back(dens[i]);
        rows.push_back(row);
        peak = std::max(peak, dens[i]);
    }
    std::vector<std::string> header;
    for (int i = 1; i <= d; ++i) header.push_back("x" + std::to_string(i));
    header.push_back("tail_min_mass");
    ctx.table("density", io::format_table(header, rows));
    Outcome o;
    o.result = {{"nodes", dens.size()}, {"radius", r}, {"tail", tail}, {"max_tail_min_mass", peak}};
    if (ctx.has("g0")) {
        const double g0 = ctx.number("g0");
        const PointCloudSet Z = estimate_Z(seq, grid, r, [g0](double k) { return g0 * k; }, tail);
        o.result["g0"] = g0;
        o.result["blowup_nodes"] = Z.size();
        ctx.table("z", io::format_points_csv(Z.points));
    }
    return o;
}

inline Outcome solve_graph_cmd(Context& ctx) {
    const NonParametricFunctional G = detail::functional_from(ctx);
    const GridDomain D = detail::domain_from(ctx.at("domain"), "domain");
    const auto f = detail::scalar_function(ctx.at("f"), "f", 2);
    const auto g = detail::scalar_function(ctx.at("g"), "g", 2);
    const GraphSolution sol = solve_dirichlet(G, D, f, g, detail::solve_options(ctx));
    ctx.table("grid", detail::grid_csv(D, sol.u));
    Outcome o;
    o.result = detail::solution_json(sol);
    o.result["interior_nodes"] = D.interior_nodes.size();
    o.result["boundary_nodes"] = D.boundary_nodes.size();
    return o;
}

inline Outcome hopf_cmd(Context& ctx) {
    const NonParametricFunctional G = detail::functional_from(ctx);
    const json& dj = ctx.at("disks");
    TangentDisks disks;
    disks.touch = dj.contains("touch") ? io::vec_at(dj, "touch", "disks", 2) : disks.touch;
    disks.normal = dj.contains("normal") ? io::vec_at(dj, "normal", "disks", 2) : disks.normal;
    disks.radius = io::number_or(dj, "radius", "disks", disks.radius);
    disks.spacing = io::number_or(dj, "spacing", "disks", disks.spacing);
    const auto Phi = detail::scalar_function(ctx.at("phi"), "phi", 2);
    double s = 0.0;
    if (ctx.has("s")) {
        s = ctx.number("s");
    } else {
        const double frac = ctx.number("s_fraction", 0.5);
        const auto rp = el_range(G, disks.plus(), Phi), rm = el_range(G, disks.minus(), Phi);
        s = frac * std::min(rp.first, rm.first);
    }
    const SolveOptions so = detail::solve_options(ctx);
    const HopfReport rep = hopf_gap(G, disks, Phi, s, so);
    Outcome o;
    o.result = {{"s", rep.s},
                {"gap_plus", rep.gap_plus},
                {"gap_minus", rep.gap_minus},
                {"cH", rep.cH},
                {"l_phi_min", rep.l_phi_min},
                {"l_phi_max", rep.l_phi_max},
                {"plus_diff", {rep.plus_diff_min, rep.plus_diff_max}},
                {"minus_diff", {rep.minus_diff_min, rep.minus_diff_max}},
                {"plus", detail::solution_json(rep.plus)},
                {"minus", detail::solution_json(rep.minus)}};
    ctx.table("plus", detail::grid_csv(disks.plus(), rep.plus.u));
    ctx.table("minus", detail::grid_csv(disks.minus(), rep.minus.u));
    if (ctx.has("comparison")) {
        const json& cj = ctx.at("comparison");
        const TriMesh M = detail::mesh_from(io::require(cj, "mesh", "comparison"), "comparison.mesh", ctx.dir);
        const ComparisonReport cr = comparison_sweep(
            G, disks, Phi, M, detail::doubles(io::require(cj, "s_values", "comparison"), "comparison.s_values"),
            io::number_or(cj, "touch_tol", "comparison", 1e-9) * ctx.tol_scale,
            static_cast<int>(io::integer_or(cj, "bisections", "comparison", 20)), so);
        json rows = json::array();
        for (const auto& r : cr.rows)
            rows.push_back({{"s", r.s}, {"gap_plus", r.gap_plus}, {"gap_minus", r.gap_minus}, {"touched", r.touched}});
        o.result["comparison"] = {{"rows", rows}, {"first_touch", io::number_or_null(cr.first_touch)}};
    }
    o.exit = rep.cH > 0 ? kSuccess : kViolation;
    return o;
}

inline Outcome monotonicity_cmd(Context& ctx) {
    const TriMesh M = detail::mesh_from(ctx.at("mesh"), "mesh", ctx.dir);
    const Vec3 p = ctx.has("point") ? Vec3(ctx.vec("point", 3)) : Vec3::Zero();
    const auto radii = detail::doubles(ctx.at("radii"), "radii");
    const MonotonicityReport rep = monotonicity_ratio(M, p, radii, ctx.number("c", 8.0), ctx.number("d", 0.0));
    std::vector<std::vector<double>> rows;
    for (const auto& r : rep.rows) rows.push_back({r.r, r.ratio, r.bound, r.within ? 1.0 : 0.0});
    ctx.table("ratios", io::format_table({"r", "ratio", "bound", "within"}, rows));
    Outcome o;
    o.result = {{"c", rep.c},
                {"d", rep.d},
                {"ratio_half_d", rep.ratio_half_d},
                {"mean_curvature_integral", rep.mean_curvature_integral},
                {"all_within", rep.all_within}};
    bool ok = rep.all_within;
    if (ctx.has("density")) {
        const json& dj = ctx.at("density");
        const auto gamma = detail::points3(io::require(dj, "gamma", "density"), "density.gamma");
        const auto centers =
            dj.contains("centers") ? detail::points3(dj["centers"], "density.centers") : std::vector<Vec3>{};
        const DensityTable t = density_ratio_boundary(
            M, gamma, detail::doubles(io::require(dj, "radii", "density"), "density.radii"), centers);
        std::vector<std::vector<double>> drows;
        for (const auto& r : t.rows) drows.push_back({r.q.x(), r.q.y(), r.q.z(), r.r, r.ratio});
        ctx.table("density", io::format_table({"q1", "q2", "q3", "r", "ratio"}, drows));
        o.result["density_sup_ratio"] = t.sup_ratio;
        if (dj.contains("expected")) {
            const double expected = io::number(dj, "expected", "density");
            const double tol = io::number_or(dj, "tolerance", "density", 0.03) * ctx.tol_scale;
            double worst = 0.0;
            for (const auto& r : t.rows) worst = std::max(worst, std::abs(r.ratio - expected));
            o.result["density_max_deviation"] = worst;
            ok = ok && worst <= tol;
        }
    }
    o.exit = ok ? kSuccess : kViolation;
    return o;
}

inline Outcome stability_cmd(Context& ctx) {
    const Integrand F = ctx.has("integrand") ? io::integrand_from_json(ctx.at("integrand")) : area_integrand(3);
    const TriMesh M = detail::mesh_from(ctx.at("mesh"), "mesh", ctx.dir);
    const json& cj = ctx.at("cutoff");
    StabilityCutoff phi;
    phi.center = detail::vec3_or(cj, "center", "cutoff", Vec3::Zero());
    phi.radius = io::number(cj, "radius", "cutoff");
    const StabilityReport rep = stability_check(M, F, phi, ctx.number("c1"), ctx.number("c2", 0.0));
    Outcome o;
    o.result = {{"lhs", rep.lhs},
                {"rhs", rep.rhs},
                {"c1", rep.c1},
                {"c2", rep.c2},
                {"grad_integral", rep.grad_integral},
                {"phi_integral", rep.phi_integral},
                {"holds", rep.holds}};
    o.exit = rep.holds ? kSuccess : kViolation;
    return o;
}

inline Outcome dispatch(const std::string& command, Context& ctx) {
    static const std::map<std::string, Outcome (*)(Context&)> table = {
        {"check-integrand", check_integrand}, {"first-variation", first_variation_cmd},
        {"mean-curvature", mean_curvature_cmd}, {"mh-verify", mh_verify_cmd},
        {"blowup-locate", blowup_locate_cmd},  {"density-map", density_map_cmd},
        {"solve-graph", solve_graph_cmd},      {"hopf", hopf_cmd},
        {"monotonicity", monotonicity_cmd},    {"stability", stability_cmd}};
    const auto it = table.find(command);
    if (it == table.end()) throw InvalidInput("unknown command '" + command + "'");
    return it->second(ctx);
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

// Runs one command and writes <out>/<command>.json plus <out>/<command>.<table>.csv.
inline int run(const Options& opt, std::ostream& out, std::ostream& err) {
    json report = {{"command", opt.command}, {"version", kVersion}};
    Context ctx;
    ctx.tol_scale = opt.tol_scale;
    int code = kError;
    try {
        if (!(opt.tol_scale > 0)) throw InvalidInput("--tol-scale must be positive");
        if (opt.threads > 0) default_threads() = opt.threads;
        const std::string text = io::read_text(opt.scenario);
        report["scenario_hash"] = "fnv1a:" + hex64(fnv1a(text));
        try {
            ctx.scenario = json::parse(text);
        } catch (const json::parse_error& e) {
            throw InvalidInput(opt.scenario.string() + ": " + e.what());
        }
        if (!ctx.scenario.is_object()) throw InvalidInput("scenario must be a JSON object");
        if (ctx.scenario.contains("command") && ctx.scenario["command"] != opt.command)
            throw InvalidInput("scenario key 'command' names a different command");
        ctx.dir = opt.scenario.parent_path();
        if (opt.seed) {
            ctx.seed = *opt.seed;
        } else if (ctx.scenario.contains("seed")) {
            const json& s = ctx.scenario["seed"];
            if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
                throw InvalidInput("scenario key 'seed' must be a non-negative integer");
            ctx.seed = s.get<std::uint64_t>();
        }
        if (ctx.scenario.contains("name")) report["name"] = ctx.scenario["name"];
        report["seed"] = ctx.seed;
        report["tol_scale"] = opt.tol_scale;
        Outcome o = dispatch(opt.command, ctx);
        code = o.exit;
        report["status"] = code == kSuccess ? "ok" : "violation";
        report["result"] = std::move(o.result);
    } catch (const NonConvergence& e) {
        report["status"] = "error";
        report["error"] = e.what();
        report["residual_history"] = e.trace();
        err << "error: " << e.what() << "\n";
    } catch (const InvalidInput& e) {
        report["status"] = "error";
        report["error"] = e.what();
        err << "error: " << e.what() << "\n";
    } catch (const std::exception& e) {
        report["status"] = "error";
        report["error"] = e.what();
        err << "error: " << e.what() << "\n";
    }
    report["exit_code"] = code;
    try {
        json files = json::array();
        for (const auto& [name, body] : ctx.tables) {
            const std::string file = opt.command + "." + name + ".csv";
            io::write_text(opt.out / file, body);
            files.push_back(file);
        }
        if (!files.empty()) report["tables"] = files;
        io::write_text(opt.out / (opt.command + ".json"), to_text(report));
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kError;
    }
    out << opt.command << ": " << report["status"].get<std::string>() << " (exit " << code << ")\n";
    return code;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Anisotropic curvature toolkit"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1, 1);
    Options opt;
    std::uint64_t seed = 0;
    for (const auto& name : commands()) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--scenario", opt.scenario, "scenario JSON")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", opt.out, "output directory");
        sub->add_option("--seed", seed, "override the scenario seed");
        sub->add_option("--threads", opt.threads, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
        sub->add_option("--tol-scale", opt.tol_scale, "multiplier on verification tolerances");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kError;
    }
    for (const auto* sub : app.get_subcommands()) {
        opt.command = sub->get_name();
        if (sub->count("--seed")) opt.seed = seed;
    }
    return run(opt, out, err);
}

}  // namespace aniso::cli
