// Acceptance run: one line per criterion with the measured quantities,
// the thresholds and the wall time.

#include "aniso/blowup.hpp"
#include "aniso/boundary.hpp"
#include "aniso/mesh_gen.hpp"
#include "aniso/mhset.hpp"
#include "fixtures.hpp"

#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>

using namespace aniso;
using fixtures::v3;

namespace {

struct Line {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

template <typename Body>
bool criterion(int id, const char* title, double budget_s, Body&& body) {
    Line line;
    line.detail.precision(4);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(line);
    } catch (const std::exception& e) {
        line.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (budget_s > 0) line.check(secs < budget_s, "runtime");
    std::printf("[%s] %2d %-38s %7.2fs%s |%s\n", line.pass ? "PASS" : "FAIL", id, title, secs,
                budget_s > 0 ? "" : " (no budget)", line.detail.str().c_str());
    std::fflush(stdout);
    return line.pass;
}

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

double half_square(const Vec& x) { return 0.5 * x.squaredNorm(); }

double manufactured(const Vec& p) { return 0.3 * std::sin(p[0]) * std::cos(p[1]) + 0.2 * p[0] * p[0]; }

double manufactured_L(const Vec& p) {
    const double x = p[0], y = p[1];
    const double ux = 0.3 * std::cos(x) * std::cos(y) + 0.4 * x;
    const double uy = -0.3 * std::sin(x) * std::sin(y);
    const double uxx = -0.3 * std::sin(x) * std::cos(y) + 0.4;
    const double uyy = -0.3 * std::sin(x) * std::cos(y);
    const double uxy = -0.3 * std::cos(x) * std::sin(y);
    const double q = 1 + ux * ux + uy * uy;
    return ((1 + uy * uy) * uxx - 2 * ux * uy * uxy + (1 + ux * ux) * uyy) / std::pow(q, 1.5);
}

double manufactured_error(double h) {
    const auto G = NonParametricFunctional::standard(area_integrand(3));
    double err = 0.0;
    for (const Vec& c : {v2(0.25, 0.15), v2(-0.4, 0.3), v2(0.1, -0.6)}) {
        const GridDomain D = GridDomain::disk(c, 3.5 * h, h, c);
        err = std::max(err, std::abs(el_operator(G, D, nodal(D, manufactured), D.index(0, 0)) - manufactured_L(c)));
    }
    return err;
}

MeasureSequence multiples(const DiscreteVarifold& V, int count) {
    MeasureSequence seq;
    for (int k = 1; k <= count; ++k) seq.push(V.scaled(k), k);
    return seq;
}

Vec3 onto_boundary(const TriMesh& M, const MeshGeometry& geo, const Vec3& q) {
    double best = std::numeric_limits<double>::infinity();
    Vec3 proj = q;
    for (const auto& e : geo.boundary_edges) {
        const Vec3 a = M.vertices[e.a], b = M.vertices[e.b];
        const double t = std::clamp((q - a).dot(b - a) / (b - a).squaredNorm(), 0.0, 1.0);
        const Vec3 p = a + t * (b - a);
        if ((p - q).norm() < best) {
            best = (p - q).norm();
            proj = p;
        }
    }
    return proj;
}

}  // namespace

int main() {
    int failures = 0;
    auto tally = [&](bool ok) { failures += ok ? 0 : 1; };

    tally(criterion(1, "integrand algebra", 10.0, [](Line& L) {
        std::mt19937_64 rng(2024);
        std::uniform_real_distribution<double> u(-3, 3);
        const auto Fs = fixtures::builtin_integrands(rng);
        double euler = 0, range = 0, hess = 0, dual = 0, oracle = 0;
        for (const auto& F : Fs) {
            const Mat A = F.kind() == "quadratic" ? static_cast<const QuadraticModel&>(F.model()).matrix() : Mat();
            for (int t = 0; t < 10000; ++t) {
                const Vec x = v3(u(rng), u(rng), u(rng));
                const Vec nu = random_unit(3, rng);
                euler = std::max(euler, std::abs(F.euler_residual(x, nu)));
                range = std::max(range, (F.b_matrix(x, nu) * nu).norm());
                hess = std::max(hess, (F.d22(x, nu) * nu).norm());
                if (A.size()) {
                    const Vec w = random_unit(3, rng) * (0.1 + 2.0 * std::abs(u(rng)));
                    const double closed = std::sqrt(w.dot(A.ldlt().solve(w)));
                    dual = std::max(dual, std::abs(closed - F.dual_norm_iterative(x, w)));
                    oracle = std::max(oracle, std::abs(closed - F.dual_norm(x, w)));
                }
            }
        }
        L.detail << " euler=" << euler << " B.nu=" << range << " D22.nu=" << hess << " dual(iter)=" << dual
                 << " dual(closed)=" << oracle;
        L.check(euler < 1e-10, "euler < 1e-10");
        L.check(range < 1e-12, "B.nu < 1e-12");
        L.check(hess < 1e-10, "D22.nu < 1e-10");
        L.check(dual < 1e-6 && oracle < 1e-6, "dual < 1e-6");
    }));

    tally(criterion(2, "first variation vs finite differences", 60.0, [](Line& L) {
        std::mt19937_64 rng(77);
        double worst = 0.0;
        for (int s = 0; s < 50; ++s) {
            const DiscreteVarifold V = from_mesh(fixtures::random_mesh(s, rng));
            const auto Fs = fixtures::builtin_integrands(rng);
            const Integrand& F = Fs[s % Fs.size()];
            const VectorFieldSpec g = random_smooth_field(3, rng, 3, 0.5);
            const double a = first_variation(V, F, g).value;
            const double b = fd_variation(V, F, g, 1e-4);
            worst = std::max(worst, variation_relative_error(a, b, V, F, g));
        }
        L.detail << " scenarios=50 max_rel_err=" << worst;
        L.check(worst < 1e-6, "relative error < 1e-6");
    }));

    tally(criterion(3, "mean curvature cross-validation", 30.0, [](Line& L) {
        std::mt19937_64 rng(31);
        const std::vector<Integrand> Fs = {area_integrand(3), quadratic_integrand(fixtures::diag3(1, 2, 4)),
                                           quadratic_integrand(fixtures::random_spd(3, rng))};
        double agree = 0.0, sphere = 0.0;
        for (const auto& F : Fs) {
            for (double r : {0.5, 1.0, 2.0}) {
                const LevelSetField S = sphere_level_set(Vec::Zero(3), r);
                for (int t = 0; t < 50; ++t) {
                    const Vec nu = random_unit(3, rng);
                    const Vec p = r * nu;
                    const double par = f_mean_curvature_parametric(F, p, nu, second_fundamental_form(S, p)).dot(nu);
                    agree = std::max(agree, std::abs(par - f_mean_curvature_levelset(F, S, p)));
                    if (F.kind() == "area") sphere = std::max(sphere, std::abs(par + 2.0 / r));
                }
            }
            Mat Q(2, 2);
            Q << 1.2, -0.3, -0.3, 0.4;
            const std::vector<GraphSurface> graphs = {quadratic_graph(0.0, v2(0.2, 0.5), Q), wave_graph(0.3, 2.0, 1.5)};
            std::uniform_real_distribution<double> u(-0.7, 0.7);
            for (const auto& G : graphs) {
                const LevelSetField LG = G.as_level_set();
                for (int t = 0; t < 50; ++t) {
                    const Vec base = v2(u(rng), u(rng));
                    const Vec p = G.point(base);
                    const auto S = second_fundamental_form(G, base);
                    const double par = f_mean_curvature_parametric(F, p, S.normal, S).dot(S.normal);
                    agree = std::max(agree, std::abs(par - f_mean_curvature_levelset(F, LG, p)));
                }
            }
        }
        // F-decreasing identity at 1000 random points, all built-ins, spheres and a graph
        const auto builtins = fixtures::builtin_integrands(rng);
        const ScalarField a{[](const Vec& x) { return 2.0 + std::sin(x[0]); },
                            [](const Vec& x) { return Vec(v3(std::cos(x[0]), 0, 0)); }};
        const LevelSetField wave = wave_graph(0.3, 2.0, 1.5).as_level_set();
        std::uniform_real_distribution<double> u(-0.7, 0.7);
        double fdec = 0.0;
        for (int t = 0; t < 1000; ++t) {
            const Integrand& F = builtins[t % builtins.size()];
            if (t % 2 == 0) {
                const double r = std::array<double, 3>{0.5, 1.0, 2.0}[t / 2 % 3];
                fdec = std::max(fdec, f_decreasing_residual(F, sphere_level_set(Vec::Zero(3), r), r * random_unit(3, rng), a));
            } else {
                Vec p = v3(u(rng), u(rng), 0.0);
                p[2] = 0.3 * std::sin(2.0 * p[0]) * std::cos(1.5 * p[1]);
                fdec = std::max(fdec, f_decreasing_residual(F, wave, p, a));
            }
        }
        L.detail << " param_vs_levelset=" << agree << " sphere(-m/r)=" << sphere << " f_decreasing=" << fdec;
        L.check(agree < 1e-8, "agreement < 1e-8");
        L.check(sphere < 1e-12, "sphere value");
        L.check(fdec < 1e-5, "F-decreasing residual < 1e-5");
    }));

    tally(criterion(4, "boundary first variation", 60.0, [](Line& L) {
        const TriMesh disk = flat_disk(58);
        const auto F = area_integrand(3);
        const VariationReport d = boundary_first_variation(disk, F, dilation_field(v3(0, 0, 0)));
        const double disk_err = std::abs(d.boundary_term - 2 * std::numbers::pi) / (2 * std::numbers::pi);
        const TriMesh cap = spherical_cap(58, 1.0, 1.0);
        const auto g = linear_field(fixtures::diag3(1.0, 0.5, -0.3), v3(0.2, 0.1, 0.4));
        const VariationReport c = boundary_first_variation(cap, F, g);
        const double ref = first_variation(from_mesh(cap), F, g).value;
        const double cap_err = std::abs(c.interior_term + c.boundary_term - ref) / std::abs(ref);
        L.detail << " disk_faces=" << disk.faces.size() << " boundary_term=" << d.boundary_term
                 << " rel_err=" << disk_err << " cap_rel_err=" << cap_err;
        L.check(disk.faces.size() >= 20000, "20k faces");
        L.check(disk_err < 0.01, "disk within 1%");
        L.check(cap_err < 0.03, "cap within 3%");
    }));

    tally(criterion(5, "(m,h) verifier calibration", 120.0, [](Line& L) {
        const Integrand F = area_integrand(3);
        const PointCloudSet S = sphere_cloud(0.01);
        const double tol = violation_threshold(S.resolution);
        const TouchReport above = sample_verify(S, F, 2.0 + tol, 1000, 42);
        const TouchReport below = sample_verify(S, F, 2.0 - 10.0 * tol, 1000, 42);
        const TouchReport plane = sample_verify(plane_cloud(3, 1.0, 0.01), F, 0.0, 1000, 7);
        const WedgeCertificate w = wedge_certificate(Vec::Zero(2), 0.25, F);
        L.detail << " sphere_pts=" << S.size() << " tol=" << tol << " h=2+tol:" << verdict_name(above.verdict)
                 << " h=2-10tol:" << verdict_name(below.verdict) << " plane:" << verdict_name(plane.verdict)
                 << " wedge:" << verdict_name(w.report.verdict) << " margin=" << w.report.margin;
        L.check(above.verdict == Verdict::consistent, "sphere passes at 2 + tol");
        L.check(below.verdict == Verdict::violation, "sphere fails at 2 - 10 tol");
        L.check(plane.verdict == Verdict::consistent, "plane passes at 0");
        L.check(w.report.verdict == Verdict::violation && w.report.margin > 0, "wedge certificate");
    }));

    tally(criterion(6, "rescaling covariance", 0.0, [](Line& L) {
        std::mt19937_64 rng(606);
        const PointCloudSet Z = sphere_cloud(0.04);
        const Mat dirs = fibonacci_directions(3, 512);
        std::uniform_int_distribution<int> pick(0, 511);
        std::uniform_int_distribution<long> node(0, static_cast<long>(Z.size()) - 1);
        std::uniform_real_distribution<double> ur(0.05, 3.0), uh(0.0, 3.0);
        const auto Fs = fixtures::builtin_integrands(rng);
        double worst = 0.0;
        int compared = 0;
        for (int t = 0; t < 100; ++t) {
            const Integrand& F = Fs[t % Fs.size()];
            const Paraboloid P{0.0, dirs.col(pick(rng)), random_symmetric(3, 4.0, rng), Z.point(node(rng))};
            const Vec p = Z.point(node(rng));
            const double r = ur(rng), h = uh(rng);
            const RescaledData d = rescale_set(Z, p, r, F, h);
            const TouchReport a = verify_paraboloid(Z, P, F, h);
            const TouchReport b = verify_paraboloid(d.Z, transport_paraboloid(P, p, r), d.F, d.h);
            if (a.argmax_index != b.argmax_index || a.touching != b.touching) {
                worst = std::numeric_limits<double>::infinity();
                continue;
            }
            if (!a.touching) continue;
            ++compared;
            worst = std::max(worst, std::abs(b.margin - r * a.margin) / (1.0 + std::abs(r * a.margin)));
        }
        L.detail << " certificates=100 touching=" << compared << " max_margin_drift=" << worst;
        L.check(worst < 1e-8, "margins invariant to 1e-8");
    }));

    tally(criterion(7, "dyadic blow-up locator", 10.0, [](Line& L) {
        const int depth = 12;
        const double tol = std::pow(2.0, 1 - depth) * std::sqrt(3.0);
        const Vec x0 = v3(0.3, -0.217, 0.41);
        DiscreteVarifold delta(3);
        delta.add(x0, v3(0, 0, 1), 1.0);
        const BlowupReport a = locate_blowup(multiples(delta, 10), depth);
        const double da = a.found ? (a.located_point - x0).norm() : std::numeric_limits<double>::infinity();
        const Mat D = fibonacci_directions(3, 20000);
        DiscreteVarifold sphere(3);
        for (Eigen::Index i = 0; i < D.cols(); ++i) sphere.add(0.5 * D.col(i), D.col(i), 1.0 / 20000);
        const BlowupReport b = locate_blowup(multiples(sphere, 10), depth);
        const double db = b.found ? std::abs(b.located_point.norm() - 0.5) : std::numeric_limits<double>::infinity();
        L.detail << " depth=12 tol=" << tol << " point_mass_dist=" << da << " sphere_dist=" << db;
        L.check(da <= tol, "point mass");
        L.check(db <= tol, "sphere");
    }));

    tally(criterion(8, "blow-up set pipeline", 120.0, [](Line& L) {
        const Integrand F = area_integrand(3);
        const fixtures::ConcentratingSheet wedge;
        const PointCloudSet Zw = wedge.estimate();
        const WedgeCertificate cw = wedge_certificate(Vec::Zero(2), wedge.cH, F);
        const MhVerifyResult rw = mh_verify(Zw, F, 0.0, 1000, 1, {cw.f});
        fixtures::ConcentratingSheet plane;
        plane.cH = 0.0;
        const PointCloudSet Zp = plane.estimate();
        const MhVerifyResult rp = mh_verify(Zp, F, 0.0, 1000, 1, {cw.f});
        L.detail << " wedge_Z=" << Zw.size() << " verdict=" << verdict_name(rw.verdict) << " margin=" << rw.worst.margin
                 << " plane_Z=" << Zp.size() << " verdict=" << verdict_name(rp.verdict);
        L.check(!Zw.empty() && rw.verdict == Verdict::violation, "wedge violation");
        L.check(!Zp.empty() && rp.verdict == Verdict::consistent, "plane consistent");
    }));

    tally(criterion(9, "violating field divergence", 0.0, [](Line& L) {
        const fixtures::ParaboloidScenario sc;
        const Integrand F = area_integrand(3);
        const auto seq = sc.concentrating(8);
        const auto out = violating_field_demo(F, sc.touching(), v3(0, 0, 0), {sc.r, sc.eta2}, seq, 0.0);
        const double ratio = fixtures::divergence_ratio(out, seq, v3(0, 0, 0), sc.r);
        const auto bseq = sc.bounded(6);
        const auto bout = violating_field_demo(F, sc.touching(), v3(0, 0, 0), {sc.r, sc.eta2}, bseq, 0.0);
        double growth = 0.0;
        for (double o : bout) growth = std::max(growth, std::abs(o) / std::abs(bout[0]));
        L.detail << " slope_ratio=" << ratio << " bounded_max/initial=" << growth;
        L.check(out[0] > 0 && ratio > 0.9, "linear growth");
        L.check(growth < 2.0, "bounded");
    }));

    tally(criterion(10, "boundary experiment", 300.0, [](Line& L) {
        const double e1 = manufactured_error(0.1), e2 = manufactured_error(0.05), e3 = manufactured_error(0.025);
        const double order = std::min(std::log2(e1 / e2), std::log2(e2 / e3));
        L.detail << " el_order=" << order;
        L.check(order >= 1.8, "order >= 1.8");

        // h_min = min of L(|x|^2/2) = (2 + |x|^2) / (1 + |x|^2)^{3/2} over the two unit-diameter disks
        const auto G = NonParametricFunctional::standard(area_integrand(3));
        const double h_min = 3.0 / std::pow(2.0, 1.5);
        const double s = 0.5 * h_min;
        std::vector<double> gaps;
        double measured_min = std::numeric_limits<double>::infinity();
        for (double h : {0.05, 0.025, 0.0125}) {
            TangentDisks disks;
            disks.spacing = h;
            const HopfReport rep = hopf_gap(G, disks, half_square, s);
            gaps.push_back(rep.cH);
            measured_min = std::min(measured_min, rep.l_phi_min);
        }
        const double drift = std::abs(gaps[2] - gaps[1]) / std::abs(gaps[2]);
        L.detail << " s=" << s << " L(phi)_min=" << measured_min << " cH=" << gaps[0] << "," << gaps[1] << ","
                 << gaps[2] << " drift=" << drift;
        L.check(std::all_of(gaps.begin(), gaps.end(), [](double g) { return g > 0; }), "Hopf gap positive");
        L.check(drift < 0.10, "refinement drift < 10%");

        const double theta = std::numbers::pi / 3;
        const TriMesh cap = spherical_cap(80, 1.0, theta);
        const MeshGeometry geo = mesh_geometry(cap);
        std::vector<Vec3> gamma;
        for (double a : {0.0, 1.0, 2.5, 4.0})
            gamma.push_back(onto_boundary(cap, geo,
                                          Vec3(std::sin(theta) * std::cos(a), std::sin(theta) * std::sin(a), std::cos(theta))));
        const DensityTable bd = density_ratio_boundary(cap, gamma, {0.05});
        const DensityTable in = density_ratio_boundary(
            cap, gamma, {0.05}, {Vec3(0, 0, 1), Vec3(std::sin(0.5), 0, std::cos(0.5)), Vec3(0, std::sin(0.7), std::cos(0.7))});
        const DensityTable half = density_ratio_boundary(flat_half_disk(20), {Vec3(0, 0, 0)}, {0.1, 0.3, 0.5});
        double bdev = 0.0, idev = 0.0;
        for (const auto& r : bd.rows) bdev = std::max(bdev, std::abs(r.ratio - 0.5) / 0.5);
        for (const auto& r : half.rows) bdev = std::max(bdev, std::abs(r.ratio - 0.5) / 0.5);
        for (const auto& r : in.rows) idev = std::max(idev, std::abs(r.ratio - 1.0));
        L.detail << " boundary_density_dev=" << bdev << " interior_density_dev=" << idev;
        L.check(bdev < 0.03, "boundary density within 3%");
        L.check(idev < 0.03, "interior density within 3%");

        const MonotonicityReport mono = monotonicity_ratio(plane_grid(10, 2.0), Vec3(0.1, 0.2, 0), {0.8, 0.4, 0.1, 0.01});
        double mdev = 0.0;
        for (const auto& r : mono.rows) mdev = std::max(mdev, std::abs(r.ratio - 1.0));
        L.detail << " plane_monotonicity_dev=" << mdev;
        L.check(mdev < 1e-12, "plane monotonicity == 1");
    }));

    std::printf("%d of 10 criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
