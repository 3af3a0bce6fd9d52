#pragma once

#include "aniso/integrand.hpp"

#include <array>
#include <functional>
#include <map>
#include <set>

namespace aniso {

using Vec3 = Eigen::Vector3d;

// Oriented triangle mesh in R^3.
struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;

    bool empty() const { return faces.empty(); }
};

struct BoundaryEdge {
    int a = 0;
    int b = 0;
    int face = 0;
    Vec3 midpoint;
    double length = 0.0;
    Vec3 conormal;  // unit, tangent to the face, orthogonal to the edge, outward
};

struct MeshGeometry {
    std::vector<Vec3> normals;
    std::vector<double> areas;
    std::vector<Vec3> centroids;
    std::vector<BoundaryEdge> boundary_edges;
    double total_area = 0.0;
};

inline constexpr double kMinFaceArea = 1e-14;

// Throws InvalidInput on bad indices, inconsistent orientation or non-manifold
// edges, DegenerateGeometry on faces with area <= 1e-14.
inline void validate_mesh(const TriMesh& mesh) {
    const int nv = static_cast<int>(mesh.vertices.size());
    std::map<std::pair<int, int>, int> directed;
    std::map<std::pair<int, int>, int> undirected;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& t = mesh.faces[f];
        for (int k = 0; k < 3; ++k) {
            if (t[k] < 0 || t[k] >= nv)
                throw InvalidInput("mesh: face " + std::to_string(f) + " references a missing vertex");
        }
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
            throw DegenerateGeometry("mesh: face with repeated vertex", static_cast<long>(f));
        const double area = 0.5 * (mesh.vertices[t[1]] - mesh.vertices[t[0]])
                                      .cross(mesh.vertices[t[2]] - mesh.vertices[t[0]])
                                      .norm();
        if (!(area > kMinFaceArea)) throw DegenerateGeometry("mesh: degenerate face", static_cast<long>(f));
        for (int k = 0; k < 3; ++k) {
            const int a = t[k], b = t[(k + 1) % 3];
            if (++directed[{a, b}] > 1)
                throw InvalidInput("mesh: inconsistent orientation at edge (" + std::to_string(a) + ", " +
                                   std::to_string(b) + ")");
            if (++undirected[{std::min(a, b), std::max(a, b)}] > 2)
                throw InvalidInput("mesh: non-manifold edge (" + std::to_string(a) + ", " + std::to_string(b) +
                                   ")");
        }
    }
}

inline MeshGeometry mesh_geometry(const TriMesh& mesh, int threads = 0) {
    validate_mesh(mesh);
    MeshGeometry g;
    const std::size_t nf = mesh.faces.size();
    g.normals.resize(nf);
    g.areas.resize(nf);
    g.centroids.resize(nf);
    parallel_for(nf, threads, [&](std::size_t f) {
        const auto& t = mesh.faces[f];
        const Vec3& p0 = mesh.vertices[t[0]];
        const Vec3& p1 = mesh.vertices[t[1]];
        const Vec3& p2 = mesh.vertices[t[2]];
        const Vec3 c = (p1 - p0).cross(p2 - p0);
        g.areas[f] = 0.5 * c.norm();
        g.normals[f] = c.normalized();
        g.centroids[f] = (p0 + p1 + p2) / 3.0;
    });
    g.total_area = pairwise_sum(g.areas);

    std::set<std::pair<int, int>> directed;
    for (const auto& t : mesh.faces)
        for (int k = 0; k < 3; ++k) directed.insert({t[k], t[(k + 1) % 3]});
    for (std::size_t f = 0; f < nf; ++f) {
        const auto& t = mesh.faces[f];
        for (int k = 0; k < 3; ++k) {
            const int a = t[k], b = t[(k + 1) % 3], opposite = t[(k + 2) % 3];
            if (directed.count({b, a})) continue;
            BoundaryEdge e;
            e.a = a;
            e.b = b;
            e.face = static_cast<int>(f);
            const Vec3 d = mesh.vertices[b] - mesh.vertices[a];
            e.length = d.norm();
            e.midpoint = 0.5 * (mesh.vertices[a] + mesh.vertices[b]);
            Vec3 eta = d.cross(g.normals[f]).normalized();
            if (eta.dot(e.midpoint - mesh.vertices[opposite]) < 0) eta = -eta;
            e.conormal = eta;
            g.boundary_edges.push_back(e);
        }
    }
    return g;
}

// Vertex adjacency used by the discrete curvature estimates.
struct MeshTopology {
    std::vector<std::vector<int>> vertex_faces;
    std::vector<std::vector<int>> vertex_neighbors;

    explicit MeshTopology(const TriMesh& mesh) {
        vertex_faces.resize(mesh.vertices.size());
        vertex_neighbors.resize(mesh.vertices.size());
        for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
            const auto& t = mesh.faces[f];
            for (int k = 0; k < 3; ++k) {
                vertex_faces[t[k]].push_back(static_cast<int>(f));
                vertex_neighbors[t[k]].push_back(t[(k + 1) % 3]);
                vertex_neighbors[t[k]].push_back(t[(k + 2) % 3]);
            }
        }
        for (auto& n : vertex_neighbors) {
            std::sort(n.begin(), n.end());
            n.erase(std::unique(n.begin(), n.end()), n.end());
        }
    }
};

// A_{lj} = <D_{tau_j} nu, tau_l> in the orthonormal frame tau (columns).
struct SecondFundamentalForm {
    Vec normal;
    Mat frame;
    Mat matrix;

    Mat ambient() const { return frame * matrix * frame.transpose(); }
    double norm_squared() const { return matrix.squaredNorm(); }
};

// Implicit surface {f = 0} with analytic derivatives. `scale` sets the
// singular-gradient threshold 1e-10 * scale.
struct LevelSetField {
    std::function<double(const Vec&)> f;
    std::function<Vec(const Vec&)> grad;
    std::function<Mat(const Vec&)> hess;
    double scale = 1.0;
    std::string name = "custom";
};

// Graph x_{m+1} = u(x') over a base domain.
struct GraphSurface {
    std::function<double(const Vec&)> u;
    std::function<Vec(const Vec&)> grad;
    std::function<Mat(const Vec&)> hess;
    enum class Domain { rectangle, disk } domain = Domain::disk;
    Vec domain_params;  // disk: (cx, cy, radius); rectangle: (x0, x1, y0, y1)
    std::string name = "custom";

    int base_dim() const { return 2; }

    Vec point(const Vec& base) const {
        Vec p(base.size() + 1);
        p.head(base.size()) = base;
        p[base.size()] = u(base);
        return p;
    }

    // Upward unit normal (-Du, 1) / sqrt(1 + |Du|^2).
    Vec normal(const Vec& base) const {
        const Vec g = grad(base);
        Vec n(g.size() + 1);
        n.head(g.size()) = -g;
        n[g.size()] = 1.0;
        return n.normalized();
    }

    // Defining function u(x') - x_{m+1}; its gradient is the downward normal.
    LevelSetField as_level_set() const {
        LevelSetField L;
        auto uu = u;
        auto gg = grad;
        auto hh = hess;
        L.f = [uu](const Vec& x) { return uu(x.head(x.size() - 1)) - x[x.size() - 1]; };
        L.grad = [gg](const Vec& x) {
            Vec out(x.size());
            out.head(x.size() - 1) = gg(x.head(x.size() - 1));
            out[x.size() - 1] = -1.0;
            return out;
        };
        L.hess = [hh](const Vec& x) {
            Mat out = Mat::Zero(x.size(), x.size());
            out.topLeftCorner(x.size() - 1, x.size() - 1) = hh(x.head(x.size() - 1));
            return out;
        };
        L.name = name + "_level_set";
        return L;
    }
};

// ---------------------------------------------------------------------------
// Analytic families

inline LevelSetField sphere_level_set(const Vec& center, double r) {
    LevelSetField L;
    L.f = [center, r](const Vec& x) { return (x - center).squaredNorm() - r * r; };
    L.grad = [center](const Vec& x) { return Vec(2.0 * (x - center)); };
    L.hess = [](const Vec& x) { return Mat(2.0 * Mat::Identity(x.size(), x.size())); };
    L.scale = std::max(1.0, r);
    L.name = "sphere";
    return L;
}

inline LevelSetField affine_level_set(const Vec& a, double b) {
    LevelSetField L;
    L.f = [a, b](const Vec& x) { return a.dot(x) + b; };
    L.grad = [a](const Vec&) { return a; };
    L.hess = [](const Vec& x) { return Mat(Mat::Zero(x.size(), x.size())); };
    L.scale = std::max(1.0, a.norm());
    L.name = "affine";
    return L;
}

// f(x) = c + <b, x> + x^T Q x / 2.
inline LevelSetField quadratic_level_set(double c, const Vec& b, const Mat& Q) {
    LevelSetField L;
    L.f = [c, b, Q](const Vec& x) { return c + b.dot(x) + 0.5 * x.dot(Q * x); };
    L.grad = [b, Q](const Vec& x) { return Vec(b + Q * x); };
    L.hess = [Q](const Vec&) { return Q; };
    L.scale = std::max(1.0, b.norm());
    L.name = "quadratic";
    return L;
}

inline LevelSetField scaled_level_set(const LevelSetField& L, double lambda) {
    LevelSetField S = L;
    S.f = [L, lambda](const Vec& x) { return lambda * L.f(x); };
    S.grad = [L, lambda](const Vec& x) { return Vec(lambda * L.grad(x)); };
    S.hess = [L, lambda](const Vec& x) { return Mat(lambda * L.hess(x)); };
    S.scale = L.scale * std::abs(lambda);
    return S;
}

// u(x) = c + <b, x> + x^T Q x / 2 on a disk.
inline GraphSurface quadratic_graph(double c, const Vec& b, const Mat& Q, double radius = 1.0) {
    GraphSurface G;
    G.u = [c, b, Q](const Vec& x) { return c + b.dot(x) + 0.5 * x.dot(Q * x); };
    G.grad = [b, Q](const Vec& x) { return Vec(b + Q * x); };
    G.hess = [Q](const Vec&) { return Q; };
    G.domain_params = Vec(3);
    G.domain_params << 0.0, 0.0, radius;
    G.name = "quadratic_graph";
    return G;
}

// Upper unit hemisphere-type cap sqrt(R^2 - |x|^2) as a graph.
inline GraphSurface sphere_cap_graph(double R) {
    GraphSurface G;
    G.u = [R](const Vec& x) { return std::sqrt(R * R - x.squaredNorm()); };
    G.grad = [R](const Vec& x) { return Vec(-x / std::sqrt(R * R - x.squaredNorm())); };
    G.hess = [R](const Vec& x) {
        const double s = std::sqrt(R * R - x.squaredNorm());
        return Mat(-Mat::Identity(x.size(), x.size()) / s - x * x.transpose() / (s * s * s));
    };
    G.domain_params = Vec(3);
    G.domain_params << 0.0, 0.0, 0.9 * R;
    G.name = "sphere_cap_graph";
    return G;
}

// u(x, y) = amp * sin(kx x) cos(ky y).
inline GraphSurface wave_graph(double amp, double kx, double ky) {
    GraphSurface G;
    G.u = [=](const Vec& x) { return amp * std::sin(kx * x[0]) * std::cos(ky * x[1]); };
    G.grad = [=](const Vec& x) {
        Vec g(2);
        g << amp * kx * std::cos(kx * x[0]) * std::cos(ky * x[1]), -amp * ky * std::sin(kx * x[0]) * std::sin(ky * x[1]);
        return g;
    };
    G.hess = [=](const Vec& x) {
        Mat H(2, 2);
        const double s = std::sin(kx * x[0]), c = std::cos(kx * x[0]);
        const double sy = std::sin(ky * x[1]), cy = std::cos(ky * x[1]);
        H << -amp * kx * kx * s * cy, -amp * kx * ky * c * sy, -amp * kx * ky * c * sy, -amp * ky * ky * s * cy;
        return H;
    };
    G.domain_params = Vec(3);
    G.domain_params << 0.0, 0.0, 1.0;
    G.name = "wave_graph";
    return G;
}

// ---------------------------------------------------------------------------
// Second fundamental forms

inline Vec checked_gradient(const LevelSetField& field, const Vec& p) {
    const Vec g = field.grad(p);
    if (!(g.norm() > 1e-10 * field.scale))
        throw SingularGradient("level set: |Df| below singular threshold at query point");
    return g;
}

// A = tau^T D^2 f tau / |Df| with normal Df / |Df|.
inline SecondFundamentalForm second_fundamental_form(const LevelSetField& field, const Vec& p) {
    const Vec g = checked_gradient(field, p);
    SecondFundamentalForm s;
    s.normal = g / g.norm();
    s.frame = tangent_frame(s.normal);
    s.matrix = s.frame.transpose() * field.hess(p) * s.frame / g.norm();
    s.matrix = 0.5 * (s.matrix + s.matrix.transpose());
    return s;
}

// Graph form at the base point, relative to the normal (Du, -1)/W, the outer
// normal of the epigraph: convex u gives a positive semidefinite A.
inline SecondFundamentalForm second_fundamental_form(const GraphSurface& graph, const Vec& base) {
    const Vec Du = graph.grad(base);
    const double W = std::sqrt(1.0 + Du.squaredNorm());
    SecondFundamentalForm s;
    s.normal = -graph.normal(base);
    s.frame = tangent_frame(s.normal);
    // tau_l = sum_i C(i, l) (e_i, u_i): the coefficients are the base components.
    const int m = static_cast<int>(base.size());
    const Mat C = s.frame.topRows(m);
    s.matrix = C.transpose() * (graph.hess(base) / W) * C;
    s.matrix = 0.5 * (s.matrix + s.matrix.transpose());
    return s;
}

namespace detail {

// Least-squares height fit in the frame (t1, t2, n) around origin o,
// h = (a x^2 + 2 b xy + c y^2) / 2 + d x + e y (+ const when `with_offset`).
// Returns the fitted Hessian divided by sqrt(1 + |slope|^2).
inline Eigen::Matrix2d fit_height_hessian(const std::vector<Vec3>& pts, const Vec3& o, const Vec3& t1,
                                          const Vec3& t2, const Vec3& n, bool with_offset) {
    const int cols = with_offset ? 6 : 5;
    Mat M(pts.size(), cols);
    Vec rhs(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vec3 d = pts[i] - o;
        const double x = d.dot(t1), y = d.dot(t2);
        rhs[i] = d.dot(n);
        M(i, 0) = 0.5 * x * x;
        M(i, 1) = x * y;
        M(i, 2) = 0.5 * y * y;
        M(i, 3) = x;
        M(i, 4) = y;
        if (with_offset) M(i, 5) = 1.0;
    }
    const Vec c = M.colPivHouseholderQr().solve(rhs);
    Eigen::Matrix2d H;
    H << c[0], c[1], c[1], c[2];
    return H / std::sqrt(1.0 + c[3] * c[3] + c[4] * c[4]);
}

inline SecondFundamentalForm sff_from_fit(const Vec3& n, const Mat& frame, const Eigen::Matrix2d& H) {
    SecondFundamentalForm s;
    s.normal = n;
    s.frame = frame;
    s.matrix = Mat(-H);
    return s;
}

}  // namespace detail

// Area-weighted vertex normal.
inline Vec3 vertex_normal(const TriMesh& mesh, const MeshTopology& topo, int v) {
    Vec3 n = Vec3::Zero();
    for (int f : topo.vertex_faces[v]) {
        const auto& t = mesh.faces[f];
        n += (mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
    }
    return n.normalized();
}

// Quadratic fit of the 1-ring (2-ring if the 1-ring is too small) in the
// tangent frame of the vertex normal; A = -Hess(height) / W.
inline SecondFundamentalForm vertex_sff(const TriMesh& mesh, const MeshTopology& topo, int v) {
    const Vec3 n = vertex_normal(mesh, topo, v);
    const Mat T = tangent_frame(n);
    const Vec3 t1 = T.col(0), t2 = T.col(1);
    std::vector<Vec3> pts;
    for (int w : topo.vertex_neighbors[v]) pts.push_back(mesh.vertices[w]);
    if (pts.size() < 6) {
        std::set<int> ring(topo.vertex_neighbors[v].begin(), topo.vertex_neighbors[v].end());
        for (int w : topo.vertex_neighbors[v])
            for (int z : topo.vertex_neighbors[w])
                if (z != v) ring.insert(z);
        pts.clear();
        for (int w : ring) pts.push_back(mesh.vertices[w]);
    }
    if (pts.size() < 5) throw DegenerateGeometry("vertex_sff: not enough neighbours", v);
    return detail::sff_from_fit(n, T, detail::fit_height_hessian(pts, mesh.vertices[v], t1, t2, n, false));
}

// Six-parameter fit around the face centroid over the union of the vertex
// 1-rings, in the frame of the face normal.
inline SecondFundamentalForm face_sff(const TriMesh& mesh, const MeshTopology& topo, const MeshGeometry& geo,
                                      int f) {
    const Vec3 n = geo.normals[f];
    const Mat T = tangent_frame(n);
    std::set<int> ring;
    for (int v : mesh.faces[f]) {
        ring.insert(v);
        for (int w : topo.vertex_neighbors[v]) ring.insert(w);
    }
    if (ring.size() < 8) {
        std::set<int> wider = ring;
        for (int v : ring)
            for (int w : topo.vertex_neighbors[v]) wider.insert(w);
        ring.swap(wider);
    }
    std::vector<Vec3> pts;
    for (int v : ring) pts.push_back(mesh.vertices[v]);
    if (pts.size() < 6) throw DegenerateGeometry("face_sff: not enough neighbours", f);
    return detail::sff_from_fit(n, T, detail::fit_height_hessian(pts, geo.centroids[f], T.col(0), T.col(1), n, true));
}

inline int nearest_vertex(const TriMesh& mesh, const Vec& p) {
    int best = -1;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const double d = (mesh.vertices[i] - Vec3(p)).squaredNorm();
        if (d < bd) {
            bd = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

// Discrete estimate at the mesh vertex nearest to p.
inline SecondFundamentalForm second_fundamental_form(const TriMesh& mesh, const Vec& p) {
    if (mesh.vertices.empty()) throw InvalidInput("second_fundamental_form: empty mesh");
    validate_mesh(mesh);
    const MeshTopology topo(mesh);
    return vertex_sff(mesh, topo, nearest_vertex(mesh, p));
}

// ---------------------------------------------------------------------------
// F-mean curvature

// H_F = -(D22F(p, nu) : A_amb + sum_i d_i F_i(p, nu)) / F(p, nu) * nu.
inline Vec f_mean_curvature_parametric(const Integrand& F, const Vec& p, const Vec& nu,
                                       const SecondFundamentalForm& A) {
    if (A.frame.rows() != nu.size()) throw InvalidInput("f_mean_curvature_parametric: frame dimension mismatch");
    if ((A.frame.transpose() * nu).norm() > 1e-8 * nu.norm())
        throw InvalidInput("f_mean_curvature_parametric: frame not orthogonal to nu");
    const Mat D22 = F.d22(p, nu);
    const double s = (D22.cwiseProduct(A.ambient())).sum() + F.trace_d12(p, nu);
    return -s / F.eval(p, nu) * nu;
}

// <H_F, Df/|Df|> = -[tr(D22F(x, n) D^2 f) + tr D12F(x, n) |Df|] / F(x, Df).
inline double f_mean_curvature_levelset(const Integrand& F, const LevelSetField& field, const Vec& p) {
    const Vec g = checked_gradient(field, p);
    const double gn = g.norm();
    const Vec n = g / gn;
    const double tr = (F.d22(p, n).cwiseProduct(field.hess(p))).sum();
    return -(tr + F.trace_d12(p, n) * gn) / F.eval(p, g);
}

struct ScalarField {
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> grad;
};

inline ScalarField constant_scalar(double c) {
    return {[c](const Vec&) { return c; }, [](const Vec& x) { return Vec(Vec::Zero(x.size())); }};
}

// | -<H_F, X> F(x, n) - B(x, n) : DX - <D1F(x, n), X> | with X = D2F(x, a Df),
// DX by central differences with step 1e-5.
inline double f_decreasing_residual(const Integrand& F, const LevelSetField& field, const Vec& p,
                                    const ScalarField& a, double step = 1e-5) {
    const Vec g = checked_gradient(field, p);
    const Vec n = g / g.norm();
    auto X = [&](const Vec& x) {
        const double ax = a.value(x);
        if (!(ax > 0)) throw InvalidInput("f_decreasing_residual: weight must be positive");
        return F.d2(x, ax * field.grad(x));
    };
    const int d = static_cast<int>(p.size());
    Mat DX(d, d);
    for (int j = 0; j < d; ++j) {
        Vec xp = p, xm = p;
        xp[j] += step;
        xm[j] -= step;
        DX.col(j) = (X(xp) - X(xm)) / (xp[j] - xm[j]);
    }
    const Vec Xp = X(p);
    const Vec H = f_mean_curvature_levelset(F, field, p) * n;
    const double lhs = -H.dot(Xp) * F.eval(p, n);
    const double rhs = F.b_matrix(p, n).cwiseProduct(DX).sum() + F.d1(p, n).dot(Xp);
    return std::abs(lhs - rhs);
}

}  // namespace aniso
