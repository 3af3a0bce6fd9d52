#pragma once

// Shared scenario builders for the test suites and the acceptance runner.

#include "aniso/blowup.hpp"
#include "aniso/mesh_gen.hpp"
#include "aniso/varifold.hpp"

#include <random>

namespace fixtures {

using namespace aniso;

inline Vec v3(double a, double b, double c) {
    Vec v(3);
    v << a, b, c;
    return v;
}

inline Mat diag3(double a, double b, double c) { return v3(a, b, c).asDiagonal(); }

inline Mat random_spd(int d, std::mt19937_64& rng, double lo = 0.5, double hi = 3.0) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(lo, hi);
    Mat Q = Mat::NullaryExpr(d, d, [&]() { return g(rng); });
    Eigen::HouseholderQR<Mat> qr(Q);
    const Mat O = qr.householderQ();
    Vec ev(d);
    for (int i = 0; i < d; ++i) ev[i] = u(rng);
    return O * ev.asDiagonal() * O.transpose();
}

// The four built-in integrand families in ambient dimension 3.
inline std::vector<Integrand> builtin_integrands(std::mt19937_64& rng) {
    std::vector<Integrand> out;
    out.push_back(area_integrand(3));
    out.push_back(quadratic_integrand(random_spd(3, rng)));
    out.push_back(modulated_integrand(quadratic_integrand(random_spd(3, rng)), 0.3, v3(1.0, -0.7, 0.4), 0.3));
    out.push_back(lp_smoothed_integrand(3, 4.0, 0.2));
    return out;
}

// Jittered closed or open meshes for randomized first-variation checks.
inline TriMesh random_mesh(int kind, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double a = 0.3 * u(rng), b = 0.3 * u(rng), c = 0.3 * u(rng);
    switch (kind % 3) {
        case 0: {
            TriMesh m = icosphere(2, 0.8 + 0.2 * std::abs(u(rng)));
            for (auto& v : m.vertices) v *= 1.0 + 0.1 * std::sin(3 * v.x() + 2 * v.y()) * a;
            return m;
        }
        case 1:
            return grid_graph_mesh(12, 12, -1, 1, -1, 1,
                                   [=](double x, double y) { return a * x * x + b * x * y + c * std::sin(2 * y); });
        default:
            return graph_disk_mesh(10, 1.0, [=](double x, double y) { return a * x * y + b * y * y + c * x; });
    }
}

// Paraboloid x3 = (ap / 2)|x'|^2 touched from below at the origin by
// f = -x3 + (a / 2)|x'|^2 with a < ap.
struct ParaboloidScenario {
    double ap = 2.0;
    double a = 1.0;
    double r = 0.5;
    double eta2 = 0.1;
    int rings = 40;

    TriMesh mesh(int ring_count) const {
        const double c = ap;
        return graph_disk_mesh(ring_count, 1.2 * r, [c](double x, double y) { return 0.5 * c * (x * x + y * y); });
    }

    LevelSetField touching() const {
        const double c = a;
        LevelSetField L;
        L.f = [c](const Vec& x) { return -x[2] + 0.5 * c * (x[0] * x[0] + x[1] * x[1]); };
        L.grad = [c](const Vec& x) { return v3(c * x[0], c * x[1], -1.0); };
        L.hess = [c](const Vec&) { return diag3(c, c, 0.0); };
        L.scale = 1.0;
        L.name = "touching_paraboloid";
        return L;
    }

    // V_k = V + (k - 1) * (V restricted to B_{r/2}(0)).
    MeasureSequence concentrating(int count) const {
        const DiscreteVarifold base = from_mesh(mesh(rings));
        DiscreteVarifold inner(3);
        for (const auto& at : base.atoms())
            if (at.x.norm() < 0.5 * r) inner.add(at.x, at.nu, at.w);
        MeasureSequence seq;
        for (int k = 1; k <= count; ++k) {
            DiscreteVarifold V = base;
            if (k > 1) V.append(inner.scaled(k - 1));
            seq.push(V, k);
        }
        return seq;
    }

    // Refinements of the same surface: bounded mass and curvature.
    MeasureSequence bounded(int count) const {
        MeasureSequence seq;
        for (int k = 1; k <= count; ++k) seq.push(from_mesh(mesh(20 + 4 * k)), k);
        return seq;
    }
};

// V_k = k * (surface x3 = cH |x2| over a square), with the lattice, ball
// radius and threshold schedule used to estimate its blow-up set near 0.
struct ConcentratingSheet {
    double cH = 0.25;
    double atom_spacing = 2e-4;
    double half_width = 0.035;
    double lattice_spacing = 1e-3;
    double radius = 2e-3;
    double keep_fraction = 0.85;  // of the flat-sheet ball mass per unit k
    int count = 10;
    int tail = 3;

    MeasureSequence sequence() const {
        const int n = static_cast<int>(std::lround(2.0 * half_width / atom_spacing));
        const double c = cH;
        const DiscreteVarifold V = from_mesh(grid_graph_mesh(n, n, -half_width, half_width, -half_width, half_width,
                                                             [c](double, double y) { return c * std::abs(y); }));
        MeasureSequence seq;
        for (int k = 1; k <= count; ++k) seq.push(V.scaled(k), k);
        return seq;
    }

    Lattice lattice() const { return Lattice::box(v3(-0.03, -0.03, -0.015), v3(0.03, 0.03, 0.02), lattice_spacing); }

    // The tail-min at the last index is (count - tail + 1) times the unit mass.
    std::function<double(double)> schedule() const {
        const double g0 = keep_fraction * std::numbers::pi * radius * radius * (count - tail + 1) / count;
        return [g0](double k) { return g0 * k; };
    }

    PointCloudSet estimate() const { return estimate_Z(sequence(), lattice(), radius, schedule(), tail); }
};

inline double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Slope of O_k / O_1 against k divided by the slope of M_k / M_1, where M_k is
// the mass of V_k inside the cutoff ball.
inline double divergence_ratio(const std::vector<double>& out, const MeasureSequence& seq, const Vec& p, double r) {
    std::vector<double> ks, o, m;
    const double m1 = mass_in_ball(seq.entries[0], p, r);
    for (std::size_t k = 0; k < out.size(); ++k) {
        ks.push_back(static_cast<double>(seq.labels[k]));
        o.push_back(out[k] / out[0]);
        m.push_back(mass_in_ball(seq.entries[k], p, r) / m1);
    }
    return least_squares_slope(ks, o) / least_squares_slope(ks, m);
}

}  // namespace fixtures
