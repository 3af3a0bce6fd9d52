#include "aniso/mesh_gen.hpp"
#include "aniso/mhset.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace aniso;
using fixtures::diag3;
using fixtures::v3;

namespace {

LevelSetField quadratic_field(const Mat& H, const Vec& b, double c0, const std::string& name) {
    LevelSetField L;
    L.f = [=](const Vec& x) { return c0 + b.dot(x) + 0.5 * x.dot(H * x); };
    L.grad = [=](const Vec& x) { return Vec(b + H * x); };
    L.hess = [=](const Vec&) { return H; };
    L.scale = 1.0;
    L.name = name;
    return L;
}

LevelSetField radial_square() { return quadratic_field(2.0 * Mat::Identity(3, 3), Vec::Zero(3), 0.0, "radial"); }

PointCloudSet single_point(const Vec& p) {
    PointCloudSet Z;
    Z.points = p;
    Z.region = Region::ball(p, 1.0);
    Z.resolution = 0.01;
    return Z;
}

PointCloudSet lower_unit_sphere_patch(double half_width, double resolution) {
    return graph_cloud(3, half_width, resolution,
                       [](const Vec& x) { return -std::sqrt(std::max(0.0, 1.0 - x.squaredNorm())); });
}

}  // namespace

// ---------------------------------------------------------------------------
// Paraboloid touching

TEST(VerifyParaboloid, FlatTestPolynomialOnSphereIsConsistent) {
    const PointCloudSet Z = sphere_cloud(0.02);
    const Integrand F = area_integrand(3);
    Paraboloid P{0.0, v3(0, 0, 1), Mat::Zero(3, 3), v3(0, 0, 1)};
    for (double h : {0.0, 0.5, 3.0}) {
        const TouchReport r = verify_paraboloid(Z, P, F, h);
        EXPECT_NEAR(r.lhs, 0.0, 1e-12);
        EXPECT_EQ(r.verdict, Verdict::consistent);
        EXPECT_GT(r.argmax[2], 0.999);
    }
}

TEST(VerifyParaboloid, ConcaveTestPolynomialOnSphere) {
    const PointCloudSet Z = sphere_cloud(0.02);
    const Paraboloid P{0.0, v3(0, 0, 1), -3.0 * Mat::Identity(3, 3), v3(0, 0, 1)};
    const TouchReport r = verify_paraboloid(Z, P, area_integrand(3), 0.0);
    EXPECT_NEAR(r.lhs, -6.0, 0.05);
    EXPECT_EQ(r.verdict, Verdict::consistent);
}

TEST(VerifyParaboloid, ConvexTestPolynomialOnPlaneIsConsistent) {
    const PointCloudSet Z = plane_cloud(3, 1.0, 0.02);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (double c : {0.5, 2.0, 4.0}) {
        const Paraboloid P{0.0, v3(0, 0, 1), c * Mat::Identity(3, 3), v3(u(rng), u(rng), 0.0)};
        const TouchReport r = verify_paraboloid(Z, P, area_integrand(3), 0.0);
        EXPECT_EQ(r.verdict, Verdict::consistent) << "c = " << c << " note: " << r.note;
    }
}

TEST(VerifyParaboloid, RejectsBadInput) {
    const Integrand F = area_integrand(3);
    PointCloudSet empty;
    empty.points.resize(3, 0);
    empty.region = Region::ball(Vec::Zero(3), 1.0);
    empty.resolution = 0.1;
    const Paraboloid P{0.0, v3(0, 0, 1), Mat::Zero(3, 3), Vec::Zero(3)};
    EXPECT_THROW(verify_paraboloid(empty, P, F, 0.0), InvalidInput);
    const PointCloudSet Z = sphere_cloud(0.1);
    EXPECT_THROW(verify_paraboloid(Z, P, F, -1.0), InvalidInput);
    const Paraboloid bad{0.0, v3(0, 0, 2), Mat::Zero(3, 3), Vec::Zero(3)};
    EXPECT_THROW(verify_paraboloid(Z, bad, F, 0.0), InvalidInput);
}

TEST(VerifyParaboloid, VerdictMatchesMarginRule) {
    const PointCloudSet Z = sphere_cloud(0.03);
    std::mt19937_64 rng(17);
    const Integrand F = area_integrand(3);
    const Mat dirs = fibonacci_directions(3, 256);
    std::uniform_int_distribution<int> pick(0, 255);
    for (int t = 0; t < 60; ++t) {
        const Paraboloid P{0.0, dirs.col(pick(rng)), random_symmetric(3, 4.0, rng), Z.point(t * 97 % Z.size())};
        const double h = 0.1 * (t % 7);
        const TouchReport r = verify_paraboloid(Z, P, F, h);
        EXPECT_NEAR(r.margin, r.lhs - h, 1e-14);
        const bool expect = r.local && r.touching && r.margin > r.threshold;
        EXPECT_EQ(r.verdict == Verdict::violation, expect);
    }
}

// ---------------------------------------------------------------------------
// Smooth test functions

TEST(VerifySmooth, SphereOfRadiusR) {
    const Integrand F = area_integrand(3);
    for (double R : {0.5, 1.0, 2.0}) {
        const PointCloudSet Z = sphere_cloud(0.02 * R, R);
        const double expected = 2.0 / R;
        const TouchReport at = verify_smooth(Z, radial_square(), F, expected);
        EXPECT_NEAR(at.lhs, expected, 1e-10);
        EXPECT_EQ(at.verdict, Verdict::consistent);
        const TouchReport below = verify_smooth(Z, radial_square(), F, expected - 2.0 * at.threshold);
        EXPECT_EQ(below.verdict, Verdict::violation);
    }
}

TEST(VerifySmooth, AffineFunctionOnHalfSpaceBoundary) {
    const PointCloudSet Z = plane_cloud(3, 1.0, 0.02);
    const LevelSetField f = quadratic_field(Mat::Zero(3, 3), v3(0.3, -0.2, 1.0), 0.0, "affine");
    for (double h : {0.0, 0.5, 3.0}) {
        const TouchReport r = verify_smooth(Z, f, area_integrand(3), h);
        EXPECT_NEAR(r.lhs, 0.0, 1e-14);
        EXPECT_EQ(r.verdict, Verdict::consistent);
    }
}

TEST(VerifySmooth, ConstantFunctionIsDegenerate) {
    const PointCloudSet Z = sphere_cloud(0.05);
    const LevelSetField f = quadratic_field(Mat::Zero(3, 3), Vec::Zero(3), 7.0, "constant");
    const TouchReport r = verify_smooth(Z, f, area_integrand(3), 0.0);
    EXPECT_FALSE(r.touching);
    EXPECT_NE(r.note.find("degenerate"), std::string::npos);
    EXPECT_EQ(r.verdict, Verdict::consistent);
}

TEST(VerifySmooth, EmptyCloudThrows) {
    PointCloudSet Z;
    Z.points.resize(3, 0);
    Z.region = Region::ball(Vec::Zero(3), 1.0);
    EXPECT_THROW(verify_smooth(Z, radial_square(), area_integrand(3), 0.0), InvalidInput);
}

// ---------------------------------------------------------------------------
// Condition (i)

TEST(ConditionI, NegativeSemidefiniteHessianAtCriticalPoint) {
    const PointCloudSet Z = plane_cloud(3, 1.0, 0.02);
    const LevelSetField f = quadratic_field(-Mat::Identity(3, 3), Vec::Zero(3), 0.0, "cap");
    std::mt19937_64 rng(3);
    for (const Integrand& F : fixtures::builtin_integrands(rng)) {
        const TouchReport r = verify_condition_i(Z, f, F, 0.0);
        EXPECT_NEAR(r.argmax.norm(), 0.0, 1e-12);
        EXPECT_LE(r.lhs, 1e-12) << F.kind();
        EXPECT_EQ(r.verdict, Verdict::consistent);
    }
}

TEST(ConditionI, IsolatedPointViolates) {
    const PointCloudSet Z = single_point(v3(0.1, 0.2, -0.3));
    const LevelSetField f = quadratic_field(Mat::Identity(3, 3), -v3(0.1, 0.2, -0.3), 0.0, "bowl");
    const TouchReport r = verify_condition_i(Z, f, area_integrand(3), 0.0);
    EXPECT_NEAR(r.lhs, 2.0, 1e-12);
    EXPECT_EQ(r.verdict, Verdict::violation);
}

TEST(ConditionI, AgreesWithSmoothForIsotropicHessian) {
    const Integrand F = area_integrand(3);
    const PointCloudSet Z = sphere_cloud(0.05, 0.7);
    for (double h : {0.0, 1.0, 4.0}) {
        const TouchReport a = verify_condition_i(Z, radial_square(), F, h);
        const TouchReport b = verify_smooth(Z, radial_square(), F, h);
        EXPECT_NEAR(a.lhs, b.lhs, 1e-8);
        EXPECT_EQ(a.verdict, b.verdict);
        EXPECT_EQ(a.argmax_index, b.argmax_index);
    }
}

TEST(ConditionI, NeverExceedsSmoothCondition) {
    std::mt19937_64 rng(11);
    const PointCloudSet Z = sphere_cloud(0.05);
    for (int t = 0; t < 8; ++t) {
        for (const Integrand& F : fixtures::builtin_integrands(rng)) {
            const LevelSetField f = quadratic_field(random_symmetric(3, 3.0, rng), fixtures::v3(0.2, -0.1, 0.4), 0.0,
                                                    "random");
            const TouchReport a = verify_condition_i(Z, f, F, 0.0);
            const TouchReport b = verify_smooth(Z, f, F, 0.0);
            EXPECT_LE(a.lhs, b.lhs + 1e-10) << F.kind();
        }
    }
}

// ---------------------------------------------------------------------------
// Random paraboloid sampling

TEST(SampleVerify, PlaneIsConsistentAtZero) {
    const PointCloudSet Z = plane_cloud(3, 1.0, 0.02);
    const TouchReport r = sample_verify(Z, area_integrand(3), 0.0, 1000, 7);
    EXPECT_EQ(r.verdict, Verdict::consistent) << r.margin;
    EXPECT_GT(r.trials_accepted, 0);
}

TEST(SampleVerify, SphereCalibration) {
    const PointCloudSet Z = sphere_cloud(0.02);
    const Integrand F = area_integrand(3);
    const double tol = violation_threshold(Z.resolution);
    const TouchReport above = sample_verify(Z, F, 2.0 + tol, 1000, 42);
    EXPECT_EQ(above.verdict, Verdict::consistent) << above.lhs;
    const TouchReport below = sample_verify(Z, F, 2.0 - 10.0 * tol, 1000, 42);
    EXPECT_EQ(below.verdict, Verdict::violation) << below.lhs;
}

TEST(SampleVerify, SphereOfRadiusTwo) {
    const double R = 2.0;
    const PointCloudSet Z = sphere_cloud(0.04, R);
    const Integrand F = area_integrand(3);
    const double tol = violation_threshold(Z.resolution);
    EXPECT_EQ(sample_verify(Z, F, 2.0 / R + tol, 600, 9).verdict, Verdict::consistent);
}

TEST(SampleVerify, MonotoneInH) {
    const PointCloudSet Z = sphere_cloud(0.05);
    const Integrand F = area_integrand(3);
    bool seen_consistent = false;
    double prev = std::numeric_limits<double>::infinity();
    for (double h = 0.0; h <= 3.0; h += 0.25) {
        const TouchReport r = sample_verify(Z, F, h, 300, 4);
        EXPECT_LE(r.margin, prev);
        prev = r.margin;
        if (seen_consistent) EXPECT_EQ(r.verdict, Verdict::consistent) << h;
        if (r.verdict == Verdict::consistent) seen_consistent = true;
    }
    EXPECT_TRUE(seen_consistent);
}

TEST(SampleVerify, DeterministicAcrossThreadCounts) {
    const PointCloudSet Z = sphere_cloud(0.05);
    VerifyOptions one, many;
    one.threads = 1;
    many.threads = 4;
    const TouchReport a = sample_verify(Z, area_integrand(3), 1.0, 300, 123, one);
    const TouchReport b = sample_verify(Z, area_integrand(3), 1.0, 300, 123, many);
    EXPECT_EQ(a.argmax_index, b.argmax_index);
    EXPECT_EQ(a.margin, b.margin);
    EXPECT_EQ(a.trials_accepted, b.trials_accepted);
}

TEST(SampleVerify, RejectsZeroTrials) {
    EXPECT_THROW(sample_verify(sphere_cloud(0.1), area_integrand(3), 0.0, 0, 1), InvalidInput);
}

TEST(SampleVerify, HausdorffStability) {
    const Integrand F = area_integrand(3);
    const double res = 0.04;
    const double tol = violation_threshold(res);
    for (double delta : {0.08, 0.04, 0.02}) {
        const PointCloudSet Zk = sphere_cloud(res, 1.0 + delta);
        const double hk = 2.0 / (1.0 + delta);
        EXPECT_EQ(sample_verify(Zk, F, hk + tol, 400, 21).verdict, Verdict::consistent) << delta;
    }
    const PointCloudSet Z = sphere_cloud(res);
    EXPECT_EQ(sample_verify(Z, F, 2.0 + tol, 400, 21).verdict, Verdict::consistent);
}

// ---------------------------------------------------------------------------
// Rescaling

TEST(RescaleSet, UnitScaleIsIdentity) {
    const PointCloudSet Z = sphere_cloud(0.1);
    std::mt19937_64 rng(2);
    for (const Integrand& F : fixtures::builtin_integrands(rng)) {
        const RescaledData d = rescale_set(Z, Vec::Zero(3), 1.0, F, 0.7);
        EXPECT_EQ((d.Z.points - Z.points).norm(), 0.0);
        EXPECT_EQ(d.Z.resolution, Z.resolution);
        EXPECT_EQ(d.h, 0.7);
        const Vec x = v3(0.3, -0.2, 0.5), nu = v3(0.1, 0.7, -0.3).normalized();
        EXPECT_NEAR(d.F.eval(x, nu), F.eval(x, nu), 1e-15);
    }
}

TEST(RescaleSet, FrozenIntegrandIsInvariant) {
    std::mt19937_64 rng(8);
    const Integrand F = freeze(fixtures::builtin_integrands(rng)[2], v3(0.2, 0.1, 0.0));
    const RescaledData d = rescale_set(sphere_cloud(0.2), v3(1, 2, 3), 0.01, F, 1.0);
    for (int t = 0; t < 20; ++t) {
        const Vec x = Vec::Random(3), nu = Vec::Random(3).normalized();
        EXPECT_NEAR(d.F.eval(x, nu), F.eval(x, nu), 1e-14);
    }
}

TEST(RescaleSet, RejectsNonPositiveScale) {
    EXPECT_THROW(rescale_set(sphere_cloud(0.2), Vec::Zero(3), 0.0, area_integrand(3), 0.0), InvalidInput);
}

TEST(RescaleSet, CertificatesTransport) {
    std::mt19937_64 rng(99);
    const PointCloudSet Z = sphere_cloud(0.04);
    const Mat dirs = fibonacci_directions(3, 512);
    std::uniform_int_distribution<int> pick(0, 511);
    std::uniform_real_distribution<double> ur(0.05, 3.0);
    const auto Fs = fixtures::builtin_integrands(rng);
    for (int t = 0; t < 100; ++t) {
        const Integrand& F = Fs[t % Fs.size()];
        const Paraboloid P{0.0, dirs.col(pick(rng)), random_symmetric(3, 4.0, rng), Z.point(t * 131 % Z.size())};
        const Vec p = Z.point(t * 57 % Z.size());
        const double r = ur(rng), h = 0.3;
        const RescaledData d = rescale_set(Z, p, r, F, h);
        const TouchReport a = verify_paraboloid(Z, P, F, h);
        const TouchReport b = verify_paraboloid(d.Z, transport_paraboloid(P, p, r), d.F, d.h);
        EXPECT_EQ(a.argmax_index, b.argmax_index);
        EXPECT_LE((b.argmax - (a.argmax - p) / r).norm(), 1e-12 * (1.0 + 1.0 / r));
        if (a.touching && b.touching)
            EXPECT_NEAR(b.margin, r * a.margin, 1e-8 * (1.0 + std::abs(r * a.margin))) << F.kind();
    }
}

TEST(RescaleSet, SphereBlowUpApproachesTangentPlane) {
    const Vec p = v3(0, 0, -1);
    const PointCloudSet plane = plane_cloud(3, 1.2, 0.005);
    const Region window = Region::ball(Vec::Zero(3), 1.0);
    std::vector<double> rs, ds;
    for (double r : {0.2, 0.1, 0.05}) {
        const PointCloudSet cap = lower_unit_sphere_patch(1.2 * r, 0.005 * r);
        const RescaledData d = rescale_set(cap, p, r, area_integrand(3), 0.0);
        const double dist = hausdorff_distance(d.Z, plane, window);
        EXPECT_NEAR(dist, 0.5 * r, 0.006) << r;
        rs.push_back(r);
        ds.push_back(dist);
    }
    EXPECT_LT(ds[2], ds[1]);
    EXPECT_LT(ds[1], ds[0]);
}

// ---------------------------------------------------------------------------
// Hausdorff distance

TEST(Hausdorff, IdenticalCloudsAreAtDistanceZero) {
    const PointCloudSet Z = sphere_cloud(0.05);
    EXPECT_EQ(hausdorff_distance(Z, Z, Region::ball(Vec::Zero(3), 3.0)), 0.0);
}

TEST(Hausdorff, ParallelPlanes) {
    const PointCloudSet A = plane_cloud(3, 1.0, 0.05);
    PointCloudSet B = A;
    B.points.row(2).array() += 0.3;
    const Region window = Region::box(v3(-2, -2, -1), v3(2, 2, 1));
    EXPECT_NEAR(hausdorff_distance(A, B, window), 0.3, 1e-12);
}

TEST(Hausdorff, ConcentricSpheres) {
    const double res = 0.02, delta = 0.05;
    const PointCloudSet A = sphere_cloud(res), B = sphere_cloud(res, 1.0 + delta);
    const double d = hausdorff_distance(A, B, Region::shell(Vec::Zero(3), 0.5, 2.0));
    EXPECT_NEAR(d, delta, res);
    EXPECT_GE(d, delta - 1e-12);
}

TEST(Hausdorff, EmptyWindowThrows) {
    const PointCloudSet Z = sphere_cloud(0.1);
    EXPECT_THROW(hausdorff_distance(Z, Z, Region::ball(Vec::Zero(3), 0.5)), InvalidInput);
}

// ---------------------------------------------------------------------------
// Wedge certificate

TEST(WedgeCertificate, FlatWedgeUnderAreaViolates) {
    const WedgeCertificate c = wedge_certificate(Vec::Zero(2), 0.25, area_integrand(3));
    EXPECT_NEAR(c.T, 16.0, 1e-14);
    EXPECT_EQ(c.report.verdict, Verdict::violation);
    EXPECT_TRUE(c.report.local);
    EXPECT_GT(c.report.margin, 0.0);
    EXPECT_NEAR(c.report.argmax.norm(), 0.0, 1e-12);
    // For the area integrand D2F(nu) = I - nu nu^T, so lambda = 3/4 and Lambda = m.
    EXPECT_NEAR(c.lambda, 0.75, 5e-3);
    EXPECT_NEAR(c.Lambda, 2.0, 1e-12);
    const double cT = 0.25 / c.T;
    EXPECT_GE(c.report.margin, cT * (c.lambda - c.epsilon * c.Lambda) - 1e-14);
    EXPECT_NEAR(c.report.margin, cT * (1.0 - 2.0 * c.epsilon), 1e-12);
}

TEST(WedgeCertificate, CertificateWeakensAsOpeningCloses) {
    double prev = std::numeric_limits<double>::infinity();
    const Integrand F = area_integrand(3);
    for (double cH : {0.25, 0.1, 0.03, 0.01}) {
        const WedgeCertificate c = wedge_certificate(Vec::Zero(2), cH, F);
        EXPECT_GT(c.report.margin, 0.0);
        EXPECT_LT(c.report.margin, prev);
        EXPECT_NEAR(c.report.margin / (cH * cH), (1.0 - 2.0 * c.epsilon) / 4.0, 1e-9);
        prev = c.report.margin;
    }
    EXPECT_LT(prev, 1e-4);
}

TEST(WedgeCertificate, StripBoundHoldsBySampling) {
    std::mt19937_64 rng(6);
    for (const Integrand& F : fixtures::builtin_integrands(rng)) {
        for (const Vec& slope : {Vec(Vec::Zero(2)), Vec(fixtures::v3(0.3, -0.2, 0).head(2))}) {
            const WedgeCertificate c = wedge_certificate(slope, 0.25, freeze(F, Vec::Zero(3)));
            EXPECT_TRUE(c.strip_ok) << F.kind();
            EXPECT_LE(c.strip_max, -2.0 * (1.0 + slope.norm()) + 1e-12);
        }
    }
}

TEST(WedgeCertificate, TiltedAnisotropicWedgeViolates) {
    std::mt19937_64 rng(12);
    const Integrand F = quadratic_integrand(fixtures::random_spd(3, rng));
    Vec slope(2);
    slope << 0.2, -0.1;
    const WedgeCertificate c = wedge_certificate(slope, 0.25, F);
    EXPECT_GT(c.epsilon, 0.0);
    EXPECT_GT(c.report.margin, 0.0);
    EXPECT_EQ(c.report.verdict, Verdict::violation);
}

TEST(WedgeCertificate, RejectsOpeningOutsideRange) {
    const Integrand F = area_integrand(3);
    EXPECT_THROW(wedge_certificate(Vec::Zero(2), 0.0, F), InvalidInput);
    EXPECT_THROW(wedge_certificate(Vec::Zero(2), 0.3, F), InvalidInput);
    EXPECT_THROW(wedge_certificate(Vec::Zero(3), 0.25, F), InvalidInput);
}

// ---------------------------------------------------------------------------
// Constancy on a connected surface

namespace {

PointCloudSet cloud_of(const std::vector<Vec3>& pts, double resolution) {
    PointCloudSet Z;
    Z.points.resize(3, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) Z.points.col(static_cast<Eigen::Index>(i)) = pts[i];
    Z.region = Region::ball(Vec::Zero(3), 3.0);
    Z.resolution = resolution;
    return Z;
}

}  // namespace

TEST(Constancy, EmptyCloud) {
    const TriMesh M = icosphere(3);
    EXPECT_EQ(constancy_check(cloud_of({}, 0.01), M, 1e-6).verdict, ConstancyVerdict::empty);
}

TEST(Constancy, AllVerticesCoverTheSurface) {
    const TriMesh M = icosphere(3);
    const ConstancyReport r = constancy_check(cloud_of(M.vertices, 0.01), M, 1e-6);
    EXPECT_EQ(r.verdict, ConstancyVerdict::all_of_M);
    EXPECT_DOUBLE_EQ(r.coverage, 1.0);
}

TEST(Constancy, HalfTheSurfaceIsFlagged) {
    const TriMesh M = icosphere(3);
    std::vector<Vec3> half;
    for (const auto& v : M.vertices)
        if (v.z() > 0) half.push_back(v);
    const ConstancyReport r = constancy_check(cloud_of(half, 0.01), M, 1e-6);
    EXPECT_EQ(r.verdict, ConstancyVerdict::violation);
    EXPECT_LT(r.coverage, 0.6);
    EXPECT_GT(r.max_gap, 1.0);
}

TEST(Constancy, ContainmentIsChecked) {
    const TriMesh M = icosphere(3);
    std::vector<Vec3> pts = M.vertices;
    pts.push_back(Vec3(1.5, 0.0, 0.0));
    try {
        constancy_check(cloud_of(pts, 0.01), M, 1e-3);
        FAIL() << "expected InvalidInput";
    } catch (const InvalidInput& e) {
        EXPECT_NE(std::string(e.what()).find(std::to_string(pts.size() - 1)), std::string::npos);
    }
}
