#pragma once

#include "aniso/spatial.hpp"
#include "aniso/surface.hpp"

#include <memory>
#include <optional>

namespace aniso {

// Ball (optionally a spherical shell) or axis-aligned box.
struct Region {
    enum class Kind { ball, box };
    Kind kind = Kind::ball;
    Vec center;
    double radius = 1.0;
    double inner_radius = 0.0;
    Vec lo, hi;

    static Region ball(const Vec& c, double r) {
        if (!(r > 0)) throw InvalidInput("Region: radius must be positive");
        Region g;
        g.kind = Kind::ball;
        g.center = c;
        g.radius = r;
        return g;
    }
    static Region shell(const Vec& c, double r_in, double r_out) {
        if (!(r_out > r_in) || r_in < 0) throw InvalidInput("Region: bad shell radii");
        Region g = ball(c, r_out);
        g.inner_radius = r_in;
        return g;
    }
    static Region box(const Vec& lo, const Vec& hi) {
        if (lo.size() != hi.size() || ((hi - lo).array() <= 0).any()) throw InvalidInput("Region: bad box");
        Region g;
        g.kind = Kind::box;
        g.lo = lo;
        g.hi = hi;
        return g;
    }

    int dim() const { return static_cast<int>(kind == Kind::ball ? center.size() : lo.size()); }

    // Signed distance to the boundary, positive inside.
    double depth(const Vec& x) const {
        if (kind == Kind::ball) {
            const double r = (x - center).norm();
            double d = radius - r;
            if (inner_radius > 0) d = std::min(d, r - inner_radius);
            return d;
        }
        return std::min((x - lo).minCoeff(), (hi - x).minCoeff());
    }

    bool contains(const Vec& x) const { return depth(x) >= 0.0; }

    // Image under x -> (x - p) / r.
    Region rescaled(const Vec& p, double r) const {
        Region g = *this;
        if (kind == Kind::ball) {
            g.center = (center - p) / r;
            g.radius = radius / r;
            g.inner_radius = inner_radius / r;
        } else {
            g.lo = (lo - p) / r;
            g.hi = (hi - p) / r;
        }
        return g;
    }
};

// Finite sample of a relatively closed set, with its sampling fineness.
struct PointCloudSet {
    Mat points;  // dim x n
    Region region;
    double resolution = 1.0;

    std::size_t size() const { return static_cast<std::size_t>(points.cols()); }
    bool empty() const { return points.cols() == 0; }
    int dim() const { return static_cast<int>(points.rows()); }
    Vec point(std::size_t i) const { return points.col(static_cast<Eigen::Index>(i)); }

    void validate() const {
        if (!(resolution > 0)) throw InvalidInput("PointCloudSet: resolution must be positive");
        for (Eigen::Index i = 0; i < points.cols(); ++i)
            if (region.depth(points.col(i)) < -1e-9 * (1.0 + points.col(i).norm()))
                throw InvalidInput("PointCloudSet: point " + std::to_string(i) + " outside the bounding region");
    }
};

struct Paraboloid {
    double a0 = 0.0;
    Vec a1;
    Mat A;
    Vec center;

    double operator()(const Vec& x) const {
        const Vec d = x - center;
        return a0 + a1.dot(d) + 0.5 * d.dot(A * d);
    }
    Vec gradient(const Vec& x) const { return a1 + A * (x - center); }

    void validate() const {
        if (std::abs(a1.norm() - 1.0) > 1e-10) throw InvalidInput("Paraboloid: a1 must be a unit vector");
        if ((A - A.transpose()).norm() > 1e-12 * (1.0 + A.norm())) throw InvalidInput("Paraboloid: A not symmetric");
    }
};

enum class Verdict { consistent, violation };

inline const char* verdict_name(Verdict v) { return v == Verdict::consistent ? "consistent" : "violation"; }

// lhs is in curvature units: the touching inequality reads lhs <= h.
struct TouchReport {
    Vec argmax;
    long argmax_index = -1;
    double lhs = 0.0;
    double margin = 0.0;
    Verdict verdict = Verdict::consistent;
    double locality_radius = 0.0;
    double threshold = 0.0;
    bool local = true;
    bool touching = true;
    std::string note;
    Paraboloid paraboloid;  // unit-gradient form centered at the argmax, when applicable
    long trials_accepted = 0;
};

struct VerifyOptions {
    double locality_factor = 10.0;     // locality radius / resolution
    double c_sample = 10.0;            // violation threshold / resolution
    double touch_factor = 2.0;         // tangential slack / (resolution (1 + |A|))
    double neighbourhood_factor = 4.0; // planarity neighbourhood / resolution
    double planarity = 1e-3;           // eigenvalue ratio accepted as planar
    double min_gradient = 0.25;
    double kappa = 4.0;                // eigenvalue range of random A
    double trial_radius_factor = std::numeric_limits<double>::infinity();  // scan ball / resolution
    int directions = kDefaultDirectionGrid;
    int threads = 0;
};

inline double violation_threshold(double resolution, const VerifyOptions& o = {}) {
    return std::max(1e-6, o.c_sample * resolution);
}

// Index of the largest value; ties go to the lowest index.
template <typename Fn>
long scan_argmax(const PointCloudSet& Z, Fn&& value, int threads = 0) {
    const std::size_t n = Z.size();
    if (n == 0) return -1;
    const int t = std::max(1, threads > 0 ? threads : default_threads());
    const std::size_t chunks = std::min<std::size_t>(t, n);
    std::vector<long> best(chunks, -1);
    std::vector<double> bestv(chunks, -std::numeric_limits<double>::infinity());
    const std::size_t per = (n + chunks - 1) / chunks;
    parallel_for(chunks, t, [&](std::size_t c) {
        for (std::size_t i = c * per; i < std::min(n, (c + 1) * per); ++i) {
            const double v = value(Z.points.col(static_cast<Eigen::Index>(i)));
            if (v > bestv[c]) {
                bestv[c] = v;
                best[c] = static_cast<long>(i);
            }
        }
    });
    long b = best[0];
    double bv = bestv[0];
    for (std::size_t c = 1; c < chunks; ++c)
        if (bestv[c] > bv) {
            bv = bestv[c];
            b = best[c];
        }
    return b < 0 ? 0 : b;
}

namespace detail {

inline TouchReport base_report(const PointCloudSet& Z, long index, const VerifyOptions& o) {
    TouchReport r;
    r.argmax_index = index;
    r.argmax = Z.point(static_cast<std::size_t>(index));
    r.locality_radius = o.locality_factor * Z.resolution;
    r.threshold = violation_threshold(Z.resolution, o);
    if (Z.region.depth(r.argmax) <= r.locality_radius) {
        r.local = false;
        r.note = "non-local maximum";
    }
    return r;
}

inline void finish(TouchReport& r, double h) {
    r.margin = r.lhs - h;
    r.verdict = (r.local && r.touching && r.margin > r.threshold) ? Verdict::violation : Verdict::consistent;
}

// Unit normal of the cloud near x when the neighbourhood is flat, else empty.
inline std::optional<Vec> planar_normal(const PointCloudSet& Z, const PointIndex* index, const Vec& x,
                                        const VerifyOptions& o) {
    if (index == nullptr) return std::nullopt;
    const int d = Z.dim();
    std::vector<int> nb;
    index->for_each_within(x, o.neighbourhood_factor * Z.resolution, [&](int i) { nb.push_back(i); });
    if (static_cast<int>(nb.size()) < d + 1) return std::nullopt;
    Vec mean = Vec::Zero(d);
    for (int i : nb) mean += Z.points.col(i);
    mean /= static_cast<double>(nb.size());
    Mat C = Mat::Zero(d, d);
    for (int i : nb) {
        const Vec q = Z.points.col(i) - mean;
        C += q * q.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(C);
    const Vec ev = es.eigenvalues();
    if (!(ev[1] > 0) || ev[0] > o.planarity * ev[1]) return std::nullopt;
    return Vec(es.eigenvectors().col(0));
}

// Touching evaluation at a scanned argmax for a paraboloid with gradient g
// there and Hessian A.
inline TouchReport touch_at(const PointCloudSet& Z, const PointIndex* index, long i, const Vec& g, const Mat& A,
                            const Integrand& F, double h, const VerifyOptions& o) {
    TouchReport r = base_report(Z, i, o);
    const Vec& x = r.argmax;
    Vec dir = g;
    double scale = g.norm();
    if (const auto n = planar_normal(Z, index, x, o)) {
        Vec nn = *n;
        if (nn.dot(g) < 0) nn = -nn;
        const Vec gT = g - g.dot(nn) * nn;
        if (gT.norm() > o.touch_factor * Z.resolution * (1.0 + A.norm())) {
            r.touching = false;
            r.note = "not touching: tangential gradient exceeds sampling slack";
        }
        dir = nn;
        scale = g.dot(nn);
    } else if (scale > 0) {
        dir = g / scale;
    }
    if (!(scale >= o.min_gradient)) {
        r.touching = false;
        r.note = "degenerate: gradient too small at the argmax";
        finish(r, h);
        return r;
    }
    r.paraboloid = {0.0, dir, A / scale, x};
    r.lhs = F.d22(x, dir).cwiseProduct(A).sum() / scale + F.trace_d12(x, dir);
    finish(r, h);
    return r;
}

inline void require_cloud(const PointCloudSet& Z, const Integrand& F, const char* who) {
    if (Z.empty()) throw InvalidInput(std::string(who) + ": empty point cloud");
    if (Z.dim() != F.dim()) throw InvalidInput(std::string(who) + ": dimension mismatch");
    if (!(Z.resolution > 0)) throw InvalidInput(std::string(who) + ": resolution must be positive");
}

inline std::unique_ptr<PointIndex> make_index(const PointCloudSet& Z) {
    if (Z.dim() > 3) return nullptr;
    return std::make_unique<PointIndex>(Z.points, 2.0 * Z.resolution);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Verifiers

inline TouchReport verify_paraboloid(const PointCloudSet& Z, const Paraboloid& P, const Integrand& F, double h,
                                     const VerifyOptions& o = {}) {
    detail::require_cloud(Z, F, "verify_paraboloid");
    if (h < 0) throw InvalidInput("verify_paraboloid: h must be >= 0");
    P.validate();
    const long i = scan_argmax(Z, [&](const auto& x) { return P(x); }, o.threads);
    const auto index = detail::make_index(Z);
    const Vec x = Z.point(static_cast<std::size_t>(i));
    return detail::touch_at(Z, index.get(), i, P.gradient(x), P.A, F, h, o);
}

// Condition (i): inf_v F_ij(p, v) D_ij f(p) + tr D12F(p, n)|Df| against h |Df|.
// With Df != 0 the report is normalized by |Df|.
inline TouchReport verify_condition_i(const PointCloudSet& Z, const LevelSetField& f, const Integrand& F, double h,
                                      const VerifyOptions& o = {}) {
    detail::require_cloud(Z, F, "verify_condition_i");
    const long i = scan_argmax(Z, [&](const auto& x) { return f.f(Vec(x)); }, o.threads);
    TouchReport r = detail::base_report(Z, i, o);
    const Vec& p = r.argmax;
    const Vec g = f.grad(p);
    const Mat H = f.hess(p);
    const Mat dirs = fibonacci_directions(F.dim(), o.directions);
    double inf = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < dirs.cols(); ++k)
        inf = std::min(inf, F.d22(p, dirs.col(k)).cwiseProduct(H).sum());
    const double gn = g.norm();
    if (gn > 1e-10 * f.scale) {
        // The normal direction itself joins the grid.
        inf = std::min(inf, F.d22(p, g / gn).cwiseProduct(H).sum());
        const Vec n = g / gn;
        r.lhs = (inf + F.trace_d12(p, n) * gn) / gn;
        r.paraboloid = {0.0, n, H / gn, p};
    } else {
        r.lhs = inf;
        r.note = r.note.empty() ? "critical point" : r.note + "; critical point";
        r.margin = r.lhs;
        r.verdict = (r.local && r.margin > r.threshold) ? Verdict::violation : Verdict::consistent;
        return r;
    }
    detail::finish(r, h);
    return r;
}

// Condition (ii) at the argmax of f over Z.
inline TouchReport verify_smooth(const PointCloudSet& Z, const LevelSetField& f, const Integrand& F, double h,
                                 const VerifyOptions& o = {}) {
    detail::require_cloud(Z, F, "verify_smooth");
    const long i = scan_argmax(Z, [&](const auto& x) { return f.f(Vec(x)); }, o.threads);
    const Vec p = Z.point(static_cast<std::size_t>(i));
    const Vec g = f.grad(p);
    const double gn = g.norm();
    if (!(gn > 1e-10 * f.scale)) {
        if (f.hess(p).norm() <= 1e-10 * f.scale) {
            TouchReport r = detail::base_report(Z, i, o);
            r.touching = false;
            r.note = "degenerate: f is locally constant, no strict maximum";
            detail::finish(r, h);
            return r;
        }
        return verify_condition_i(Z, f, F, h, o);
    }
    TouchReport r = detail::base_report(Z, i, o);
    const Vec n = g / gn;
    const Mat H = f.hess(p);
    r.lhs = (F.d22(p, n).cwiseProduct(H).sum() + F.trace_d12(p, n) * gn) / gn;
    r.paraboloid = {0.0, n, H / gn, p};
    detail::finish(r, h);
    return r;
}

// Random symmetric matrix with eigenvalues uniform in [-kappa, kappa].
template <typename Rng>
Mat random_symmetric(int d, double kappa, Rng& rng) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(-kappa, kappa);
    Mat G(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) G(i, j) = g(rng);
    Eigen::HouseholderQR<Mat> qr(G);
    const Mat Q = qr.householderQ();
    Vec ev(d);
    for (int i = 0; i < d; ++i) ev[i] = u(rng);
    Mat A = Q * ev.asDiagonal() * Q.transpose();
    return 0.5 * (A + A.transpose());
}

// Random paraboloids centered at random cloud points. Each is maximized over
// the whole cloud, or over a ball of radius trial_radius_factor * resolution
// around its center when that factor is finite. Returns the trial with the
// largest margin among local touching trials.
inline TouchReport sample_verify(const PointCloudSet& Z, const Integrand& F, double h, int trials,
                                 std::uint64_t seed, const VerifyOptions& o = {}) {
    detail::require_cloud(Z, F, "sample_verify");
    if (trials < 1) throw InvalidInput("sample_verify: trials must be >= 1");
    const int d = Z.dim();
    const Mat dirs = fibonacci_directions(d, o.directions);
    const auto index = detail::make_index(Z);
    std::vector<TouchReport> reports(trials);
    const double rho = o.trial_radius_factor * Z.resolution;
    VerifyOptions inner = o;
    inner.threads = 1;
    parallel_for(static_cast<std::size_t>(trials), o.threads, [&](std::size_t t) {
        std::seed_seq ss{static_cast<std::uint64_t>(seed), static_cast<std::uint64_t>(t), std::uint64_t{0x6d68}};
        std::mt19937_64 rng(ss);
        std::uniform_int_distribution<long> pick_dir(0, dirs.cols() - 1);
        std::uniform_int_distribution<long> pick_pt(0, static_cast<long>(Z.size()) - 1);
        Paraboloid P;
        P.a1 = dirs.col(pick_dir(rng));
        P.A = random_symmetric(d, o.kappa, rng);
        P.center = Z.point(static_cast<std::size_t>(pick_pt(rng)));
        long i = -1;
        double best = -std::numeric_limits<double>::infinity();
        auto consider = [&](long k) {
            const double v = P(Z.points.col(k));
            if (v > best || (v == best && k < i)) {
                best = v;
                i = k;
            }
        };
        if (std::isfinite(rho) && index) {
            index->for_each_within(P.center, rho, [&](int k) { consider(k); });
        } else {
            for (long k = 0; k < static_cast<long>(Z.size()); ++k)
                if (!std::isfinite(rho) || (Z.points.col(k) - P.center).norm() < rho) consider(k);
        }
        const Vec x = Z.point(static_cast<std::size_t>(i));
        reports[t] = detail::touch_at(Z, index.get(), i, P.gradient(x), P.A, F, h, inner);
        if (std::isfinite(rho) && rho - (x - P.center).norm() <= reports[t].locality_radius) {
            reports[t].local = false;
            reports[t].note = "maximum on the trial ball boundary";
            detail::finish(reports[t], h);
        }
    });
    long accepted = 0;
    long best = -1;
    for (int t = 0; t < trials; ++t) {
        if (!(reports[t].local && reports[t].touching)) continue;
        ++accepted;
        if (best < 0 || reports[t].margin > reports[best].margin) best = t;
    }
    TouchReport out;
    if (best < 0) {
        out = reports[0];
        out.verdict = Verdict::consistent;
        out.note = "no local touching trial";
    } else {
        out = reports[best];
    }
    out.trials_accepted = accepted;
    return out;
}

// Random paraboloid sampling combined with explicit smooth test functions.
// The verdict is a violation when any component finds one.
struct MhVerifyResult {
    TouchReport sampled;
    std::vector<TouchReport> smooth;
    TouchReport worst;
    Verdict verdict = Verdict::consistent;
};

inline MhVerifyResult mh_verify(const PointCloudSet& Z, const Integrand& F, double h, int trials, std::uint64_t seed,
                                const std::vector<LevelSetField>& tests = {}, const VerifyOptions& o = {}) {
    MhVerifyResult out;
    out.sampled = sample_verify(Z, F, h, trials, seed, o);
    out.worst = out.sampled;
    for (const auto& f : tests) {
        out.smooth.push_back(verify_smooth(Z, f, F, h, o));
        const TouchReport& r = out.smooth.back();
        const bool better = r.verdict == Verdict::violation &&
                            (out.worst.verdict != Verdict::violation || r.margin > out.worst.margin);
        if (better) out.worst = r;
    }
    out.verdict = out.worst.verdict;
    return out;
}

// ---------------------------------------------------------------------------
// Rescaling and Hausdorff tooling

struct RescaledData {
    PointCloudSet Z;
    Integrand F;
    double h = 0.0;
};

inline RescaledData rescale_set(const PointCloudSet& Z, const Vec& p, double r, const Integrand& F, double h) {
    if (!(r > 0)) throw InvalidInput("rescale_set: r must be positive");
    RescaledData out{Z, rescale_integrand(F, p, r), r * h};
    out.Z.points = (Z.points.colwise() - p) / r;
    out.Z.region = Z.region.rescaled(p, r);
    out.Z.resolution = Z.resolution / r;
    return out;
}

// P(p + r y) / r in unit-gradient form.
inline Paraboloid transport_paraboloid(const Paraboloid& P, const Vec& p, double r) {
    return {P.a0 / r, P.a1, r * P.A, (P.center - p) / r};
}

inline double hausdorff_distance(const PointCloudSet& Z1, const PointCloudSet& Z2, const Region& window) {
    auto restrict = [&](const PointCloudSet& Z) {
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = 0; i < Z.points.cols(); ++i)
            if (window.contains(Z.points.col(i))) keep.push_back(i);
        Mat P(Z.points.rows(), keep.size());
        for (std::size_t k = 0; k < keep.size(); ++k) P.col(k) = Z.points.col(keep[k]);
        return P;
    };
    const Mat A = restrict(Z1), B = restrict(Z2);
    if (A.cols() == 0 || B.cols() == 0) throw InvalidInput("hausdorff_distance: empty intersection with window");
    auto directed = [](const Mat& from, const Mat& to, double res) {
        if (to.rows() > 3) {
            double worst = 0.0;
            for (Eigen::Index i = 0; i < from.cols(); ++i)
                worst = std::max(worst, (to.colwise() - from.col(i)).colwise().norm().minCoeff());
            return worst;
        }
        const double extent = (to.rowwise().maxCoeff() - to.rowwise().minCoeff()).maxCoeff();
        const PointIndex index(to, std::max(res, extent / 64.0));
        double worst = 0.0;
        for (Eigen::Index i = 0; i < from.cols(); ++i) worst = std::max(worst, index.nearest(from.col(i)).second);
        return worst;
    };
    const double res = std::max({Z1.resolution, Z2.resolution, 1e-12});
    return std::max(directed(A, B, res), directed(B, A, res));
}

// ---------------------------------------------------------------------------
// Sample clouds

inline PointCloudSet sphere_cloud(double resolution, double radius = 1.0, const Vec& center = Vec::Zero(3)) {
    const long n = std::max(16L, std::lround(4.0 * std::numbers::pi * radius * radius / (resolution * resolution)));
    PointCloudSet Z;
    const Mat D = fibonacci_directions(3, static_cast<int>(n));
    Z.points = (radius * D).colwise() + center;
    Z.region = Region::ball(center, 2.0 * radius);
    Z.resolution = resolution;
    return Z;
}

// Lattice samples of a graph x_{d} = u(x) over [-w, w]^{d-1}.
inline PointCloudSet graph_cloud(int dim, double half_width, double resolution,
                                 const std::function<double(const Vec&)>& u) {
    const int m = dim - 1;
    const long per = std::lround(2.0 * half_width / resolution) + 1;
    long total = 1;
    for (int k = 0; k < m; ++k) total *= per;
    if (total > 20'000'000) throw InvalidInput("graph_cloud: too many points");
    PointCloudSet Z;
    Z.points.resize(dim, total);
    double zlo = std::numeric_limits<double>::infinity(), zhi = -zlo;
    std::vector<long> idx(m, 0);
    for (long c = 0; c < total; ++c) {
        long rem = c;
        Vec x(m);
        for (int k = 0; k < m; ++k) {
            idx[k] = rem % per;
            rem /= per;
            x[k] = -half_width + 2.0 * half_width * idx[k] / (per - 1);
        }
        const double z = u(x);
        Z.points.col(c).head(m) = x;
        Z.points(m, c) = z;
        zlo = std::min(zlo, z);
        zhi = std::max(zhi, z);
    }
    Vec lo = Vec::Constant(dim, -half_width), hi = Vec::Constant(dim, half_width);
    const double pad = std::max(1.0, half_width);
    lo[m] = zlo - pad;
    hi[m] = zhi + pad;
    Z.region = Region::box(lo, hi);
    Z.resolution = 2.0 * half_width / (per - 1);
    return Z;
}

inline PointCloudSet plane_cloud(int dim, double half_width, double resolution) {
    return graph_cloud(dim, half_width, resolution, [](const Vec&) { return 0.0; });
}

// Boundary of {x_{m+1} >= <slope, x> + cH |x_m|}.
inline PointCloudSet wedge_cloud(const Vec& slope, double cH, double half_width, double resolution) {
    const int m = static_cast<int>(slope.size());
    return graph_cloud(m + 1, half_width, resolution,
                       [slope, cH, m](const Vec& x) { return slope.dot(x) + cH * std::abs(x[m - 1]); });
}

// ---------------------------------------------------------------------------
// Wedge certificate

struct WedgeOptions {
    double half_width = 0.1;
    double resolution = 5e-4;
    int directions = kDefaultDirectionGrid;
};

struct WedgeCertificate {
    LevelSetField f;
    double T = 0.0;
    double epsilon = 0.0;
    double lambda = 0.0;  // min of D2F(nu) : e_m e_m over |<nu, e_m>| <= 1/2
    double Lambda = 0.0;  // max of tr D2F(nu)
    double strip_max = 0.0;      // sup of f on the wedge over |x_m| = T
    double strip_bound = 0.0;    // -2 (1 + |slope|)
    bool strip_ok = false;
    PointCloudSet cloud;
    TouchReport report;
};

inline WedgeCertificate wedge_certificate(const Vec& slope, double cH, const Integrand& F_frozen,
                                          const WedgeOptions& opt = {}) {
    const int m = static_cast<int>(slope.size());
    const int d = m + 1;
    if (m < 1 || F_frozen.dim() != d) throw InvalidInput("wedge_certificate: dimension mismatch");
    if (!(cH > 0 && cH <= 0.25)) throw InvalidInput("wedge_certificate: cH must lie in (0, 1/4]");
    WedgeCertificate c;
    const double s = slope.norm();
    c.T = 4.0 * (1.0 + s) / cH;

    const Mat dirs = fibonacci_directions(d, opt.directions);
    const Vec origin = Vec::Zero(d);
    c.lambda = std::numeric_limits<double>::infinity();
    c.Lambda = 0.0;
    for (Eigen::Index k = 0; k < dirs.cols(); ++k) {
        const Vec nu = dirs.col(k);
        const Mat D22 = F_frozen.d22(origin, nu);
        c.Lambda = std::max(c.Lambda, D22.trace());
        if (std::abs(nu[m - 1]) <= 0.5) c.lambda = std::min(c.lambda, D22(m - 1, m - 1));
    }
    c.epsilon = c.lambda / (4.0 * c.Lambda);

    const double k = cH / (2.0 * c.T);
    const double eps = c.epsilon;
    const Vec sl = slope;
    c.f.f = [=](const Vec& x) {
        const Vec h = x.head(m);
        return -x[m] + sl.dot(h) + k * (h[m - 1] * h[m - 1] - eps * h.squaredNorm());
    };
    c.f.grad = [=](const Vec& x) {
        Vec g = Vec::Zero(d);
        g.head(m) = sl - 2.0 * k * eps * x.head(m);
        g[m - 1] += 2.0 * k * x[m - 1];
        g[m] = -1.0;
        return g;
    };
    c.f.hess = [=](const Vec&) {
        Mat H = Mat::Zero(d, d);
        H.topLeftCorner(m, m) = -2.0 * k * eps * Mat::Identity(m, m);
        H(m - 1, m - 1) += 2.0 * k;
        return H;
    };
    c.f.scale = 1.0;
    c.f.name = "wedge_test_function";

    // Strip bound: wedge points over |x_m| = T with the other coordinates in [-1, 1].
    c.strip_bound = -2.0 * (1.0 + s);
    c.strip_max = -std::numeric_limits<double>::infinity();
    const int per = 21;
    long total = 1;
    for (int j = 0; j < m - 1; ++j) total *= per;
    for (double side : {-1.0, 1.0})
        for (long q = 0; q < total; ++q) {
            Vec x = Vec::Zero(d);
            long rem = q;
            for (int j = 0; j < m - 1; ++j) {
                x[j] = -1.0 + 2.0 * (rem % per) / (per - 1);
                rem /= per;
            }
            x[m - 1] = side * c.T;
            for (double lift : {0.0, 0.5, 2.0}) {
                x[m] = slope.dot(x.head(m)) + cH * c.T + lift;
                c.strip_max = std::max(c.strip_max, c.f.f(x));
            }
        }

    const int max_per_axis = static_cast<int>(std::pow(2.0e6, 1.0 / m));
    const double res = std::max(opt.resolution, 2.0 * opt.half_width / std::max(2, max_per_axis - 1));
    c.cloud = wedge_cloud(slope, cH, opt.half_width, res);
    c.report = verify_smooth(c.cloud, c.f, F_frozen, 0.0);
    c.strip_ok = c.strip_max <= c.strip_bound + 1e-12 && c.strip_max < c.f.f(c.report.argmax);
    return c;
}

// ---------------------------------------------------------------------------
// Constancy on a connected manifold

enum class ConstancyVerdict { empty, all_of_M, violation };

inline const char* constancy_name(ConstancyVerdict v) {
    switch (v) {
        case ConstancyVerdict::empty: return "empty";
        case ConstancyVerdict::all_of_M: return "all_of_M";
        default: return "violation";
    }
}

struct ConstancyReport {
    ConstancyVerdict verdict = ConstancyVerdict::empty;
    double coverage = 0.0;  // fraction of mesh vertices within reach of Z
    double max_gap = 0.0;   // largest vertex-to-Z distance
};

namespace detail {

inline double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return (p - a).norm();
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return (p - b).norm();
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + d1 / (d1 - d3) * ab)).norm();
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return (p - c).norm();
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + d2 / (d2 - d6) * ac)).norm();
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
        return (p - (b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b))).norm();
    const double den = 1.0 / (va + vb + vc);
    return (p - (a + ab * (vb * den) + ac * (vc * den))).norm();
}

}  // namespace detail

inline ConstancyReport constancy_check(const PointCloudSet& Z, const TriMesh& M, double tol) {
    if (!(tol > 0)) throw InvalidInput("constancy_check: tol must be positive");
    validate_mesh(M);
    ConstancyReport r;
    if (Z.empty()) return r;
    if (Z.dim() != 3) throw InvalidInput("constancy_check: clouds must be 3-dimensional");
    Mat V(3, M.vertices.size());
    for (std::size_t i = 0; i < M.vertices.size(); ++i) V.col(i) = M.vertices[i];
    const MeshTopology topo(M);
    double edge = 0.0;
    for (const auto& f : M.faces)
        for (int e = 0; e < 3; ++e) edge = std::max(edge, (M.vertices[f[e]] - M.vertices[f[(e + 1) % 3]]).norm());
    const PointIndex vindex(V, std::max(edge, tol));
    for (std::size_t i = 0; i < Z.size(); ++i) {
        const Vec3 p = Z.point(i);
        double best = std::numeric_limits<double>::infinity();
        vindex.for_each_within(Vec(p), edge + tol, [&](int v) {
            for (int f : topo.vertex_faces[v]) {
                const auto& t = M.faces[f];
                best = std::min(best, detail::point_triangle_distance(p, M.vertices[t[0]], M.vertices[t[1]],
                                                                      M.vertices[t[2]]));
            }
        });
        if (best > tol)
            throw InvalidInput("constancy_check: point " + std::to_string(i) + " is not within tol of the mesh");
    }
    const PointIndex zindex(Z.points, std::max(Z.resolution, tol));
    const double reach = Z.resolution + tol;
    long covered = 0;
    for (std::size_t v = 0; v < M.vertices.size(); ++v) {
        const double gap = zindex.nearest(Vec(M.vertices[v])).second;
        r.max_gap = std::max(r.max_gap, gap);
        if (gap <= reach) ++covered;
    }
    r.coverage = static_cast<double>(covered) / static_cast<double>(M.vertices.size());
    r.verdict = covered == static_cast<long>(M.vertices.size()) ? ConstancyVerdict::all_of_M
                                                                : ConstancyVerdict::violation;
    return r;
}

}  // namespace aniso
