#pragma once

#include "aniso/integrand.hpp"
#include "aniso/surface.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <deque>

namespace aniso {

// F in graph form over the plane spanned by t1, t2 through q:
// G(x, y, p) = F(q + r (x1 t1 + x2 t2 + y nu), p1 t1 + p2 t2 - nu).
struct NonParametricFunctional {
    Integrand F;
    Vec q;
    Mat frame;  // columns t1, t2, nu
    double r = 1.0;

    static NonParametricFunctional standard(const Integrand& F) {
        if (F.dim() != 3) throw InvalidInput("NonParametricFunctional: ambient dimension must be 3");
        return {F, Vec::Zero(3), Mat::Identity(3, 3), 1.0};
    }

    static NonParametricFunctional at(const Integrand& F, const Vec& q, const Vec& nu) {
        NonParametricFunctional G = standard(F);
        const Mat T = tangent_frame(nu.normalized());
        G.q = q;
        G.frame.col(0) = T.col(0);
        G.frame.col(1) = T.col(1);
        G.frame.col(2) = nu.normalized();
        return G;
    }

    NonParametricFunctional rescaled(double s) const {
        if (!(s > 0)) throw InvalidInput("NonParametricFunctional: scale must be positive");
        NonParametricFunctional G = *this;
        G.r *= s;
        return G;
    }

    void validate() const {
        if (F.dim() != 3 || q.size() != 3 || frame.rows() != 3 || frame.cols() != 3)
            throw InvalidInput("NonParametricFunctional: expects a 3-dimensional frame");
        if ((frame.transpose() * frame - Mat::Identity(3, 3)).norm() > 1e-10)
            throw InvalidInput("NonParametricFunctional: frame is not orthonormal");
    }

    Vec point(const Vec& x, double y) const { return q + r * (frame.leftCols(2) * x + y * frame.col(2)); }
    Vec direction(const Vec& p) const { return frame.leftCols(2) * p - frame.col(2); }

    double eval(const Vec& x, double y, const Vec& p) const { return F.eval(point(x, y), direction(p)); }

    // dG/dp_i = <D2F, t_i>.
    Vec dp(const Vec& x, double y, const Vec& p) const {
        return frame.leftCols(2).transpose() * F.d2(point(x, y), direction(p));
    }

    // dG/dy = r <D1F, nu>.
    double dy(const Vec& x, double y, const Vec& p) const {
        if (!F.has_x_dependence()) return 0.0;
        return r * F.d1(point(x, y), direction(p)).dot(frame.col(2));
    }
};

// Nodes anchor + spacing (i a1 + j a2) for i in [i0, i0 + nx), j in [j0, j0 + ny),
// with a1, a2 the orthonormal columns of `axes`.
struct GridDomain {
    Vec anchor = Vec::Zero(2);
    Mat axes = Mat::Identity(2, 2);
    double spacing = 0.1;
    long i0 = 0, j0 = 0, nx = 0, ny = 0;
    std::vector<char> mask;      // nodes that carry values
    std::vector<char> interior;  // unknowns of the Dirichlet problem
    std::vector<long> interior_nodes;
    std::vector<long> boundary_nodes;

    // Optional geometric description, negative inside. When set, interior
    // nodes are the nodes inside, and every lattice edge from an interior node
    // to a node outside is cut at the boundary.
    std::function<double(const Vec&)> level;
    struct Crossing {
        long node = 0;
        int dir = 0;         // 0: +a1, 1: -a1, 2: +a2, 3: -a2
        double theta = 1.0;  // cut distance in units of spacing
        Vec point;
    };
    std::vector<Crossing> crossings;
    std::vector<std::array<int, 4>> crossing_at;  // per node and direction, -1 when uncut

    static constexpr long kStep[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};

    std::size_t size() const { return static_cast<std::size_t>(nx * ny); }
    long index(long i, long j) const { return (i - i0) + nx * (j - j0); }
    long gi(long k) const { return i0 + k % nx; }
    long gj(long k) const { return j0 + k / nx; }
    bool in_range(long i, long j) const { return i >= i0 && i < i0 + nx && j >= j0 && j < j0 + ny; }
    bool masked(long i, long j) const { return in_range(i, j) && mask[index(i, j)]; }

    Vec position(long i, long j) const {
        return anchor + spacing * (static_cast<double>(i) * axes.col(0) + static_cast<double>(j) * axes.col(1));
    }
    Vec position(long k) const { return position(gi(k), gj(k)); }

    // Builds interior / boundary lists from `mask`; drops masked nodes that
    // touch no interior node and checks that the interior is connected.
    // Stencils of interior nodes may reach unmasked diagonal nodes, whose
    // values act as Dirichlet ghosts.
    void finalize() {
        if (level) {
            mask.assign(size(), 0);
            for (long k = 0; k < nx * ny; ++k) mask[k] = level(position(k)) < 0;
        }
        if (static_cast<long>(mask.size()) != nx * ny) throw InvalidInput("GridDomain: mask size mismatch");
        interior.assign(mask.size(), 0);
        crossings.clear();
        crossing_at.clear();
        if (level) {
            crossing_at.assign(size(), {-1, -1, -1, -1});
            const std::vector<char> inside = mask;
            for (long k = 0; k < nx * ny; ++k) {
                if (!inside[k]) continue;
                const long i = gi(k), j = gj(k);
                if (!in_range(i - 1, j) || !in_range(i + 1, j) || !in_range(i, j - 1) || !in_range(i, j + 1))
                    throw InvalidInput("GridDomain: lattice does not enclose the domain");
                interior[k] = 1;
                for (int dir = 0; dir < 4; ++dir) {
                    const long n = index(i + kStep[dir][0], j + kStep[dir][1]);
                    if (inside[n]) continue;
                    mask[n] = 1;
                    const Vec a = position(k), b = position(n);
                    double lo = 0.0, hi = 1.0;
                    for (int it = 0; it < 60; ++it) {
                        const double mid = 0.5 * (lo + hi);
                        (level(a + mid * (b - a)) < 0 ? lo : hi) = mid;
                    }
                    const double theta = std::max(hi, 1e-6);
                    crossing_at[k][dir] = static_cast<int>(crossings.size());
                    crossings.push_back({k, dir, theta, Vec(a + theta * (b - a))});
                }
            }
        } else {
            for (long k = 0; k < nx * ny; ++k) {
                if (!mask[k]) continue;
                const long i = gi(k), j = gj(k);
                interior[k] = masked(i + 1, j) && masked(i - 1, j) && masked(i, j + 1) && masked(i, j - 1);
            }
        }
        interior_nodes.clear();
        boundary_nodes.clear();
        for (long k = 0; k < nx * ny; ++k) {
            if (!mask[k]) continue;
            if (interior[k]) {
                interior_nodes.push_back(k);
                continue;
            }
            const long i = gi(k), j = gj(k);
            bool touches = false;
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj)
                    if (in_range(i + di, j + dj) && interior[index(i + di, j + dj)]) touches = true;
            if (touches)
                boundary_nodes.push_back(k);
            else
                mask[k] = 0;
        }
        if (interior_nodes.empty()) throw InvalidInput("GridDomain: no interior nodes");
        std::vector<char> seen(mask.size(), 0);
        std::deque<long> queue{interior_nodes.front()};
        seen[interior_nodes.front()] = 1;
        std::size_t reached = 0;
        while (!queue.empty()) {
            const long k = queue.front();
            queue.pop_front();
            ++reached;
            const long i = gi(k), j = gj(k);
            const long nb[4][2] = {{i + 1, j}, {i - 1, j}, {i, j + 1}, {i, j - 1}};
            for (const auto& n : nb) {
                if (!in_range(n[0], n[1])) continue;
                const long m = index(n[0], n[1]);
                if (interior[m] && !seen[m]) {
                    seen[m] = 1;
                    queue.push_back(m);
                }
            }
        }
        if (reached != interior_nodes.size()) throw InvalidInput("GridDomain: interior is not connected");
    }

    static GridDomain from_mask(const Vec& origin, double spacing, long nx, long ny, std::vector<char> mask) {
        if (!(spacing > 0) || nx < 3 || ny < 3) throw InvalidInput("GridDomain: bad lattice");
        GridDomain D;
        D.anchor = origin;
        D.spacing = spacing;
        D.nx = nx;
        D.ny = ny;
        D.mask = std::move(mask);
        D.finalize();
        return D;
    }

    // Disk |x - center| < radius on the lattice through `anchor`, with cut
    // edges at the circle.
    static GridDomain disk(const Vec& center, double radius, double spacing, const Vec& anchor,
                           const Mat& axes = Mat::Identity(2, 2)) {
        if (!(radius > 0) || !(spacing > 0)) throw InvalidInput("GridDomain: bad disk");
        if ((axes.transpose() * axes - Mat::Identity(2, 2)).norm() > 1e-12)
            throw InvalidInput("GridDomain: axes must be orthonormal");
        GridDomain D;
        D.anchor = anchor;
        D.axes = axes;
        D.spacing = spacing;
        const Vec c = axes.transpose() * (center - anchor) / spacing;
        const double R = radius / spacing;
        D.i0 = static_cast<long>(std::floor(c[0] - R)) - 1;
        D.j0 = static_cast<long>(std::floor(c[1] - R)) - 1;
        D.nx = static_cast<long>(std::ceil(c[0] + R)) + 2 - D.i0;
        D.ny = static_cast<long>(std::ceil(c[1] + R)) + 2 - D.j0;
        D.level = [center, radius](const Vec& x) { return (x - center).norm() - radius * (1.0 - 1e-12); };
        D.finalize();
        return D;
    }
};

namespace detail {

// Stencil evaluation with cut edges. `gb` holds the boundary values at the
// crossings; when empty they are interpolated from u along the cut edge.
class Stencil {
public:
    Stencil(const NonParametricFunctional& G, const GridDomain& D, const Vec& u, const Vec& gb)
        : G_(G), D_(D), u_(u), gb_(gb) {}

    double el(long k) const {
        double div = 0.0;
        for (int a = 0; a < 2; ++a) {
            const Arm plus = arm(k, 2 * a), minus = arm(k, 2 * a + 1);
            div += (flux(k, 2 * a, plus) - flux(k, 2 * a + 1, minus)) / (0.5 * (plus.dist + minus.dist));
        }
        Vec pg(2);
        pg << slope(k, 0), slope(k, 1);
        return div - G_.dy(D_.position(k), u_[k], D_.axes * pg);
    }

private:
    struct Arm {
        double dist;
        double value;
        long node;  // -1 at a cut
        double theta;
    };

    Arm arm(long k, int dir) const {
        const double h = D_.spacing;
        const long n = D_.index(D_.gi(k) + GridDomain::kStep[dir][0], D_.gj(k) + GridDomain::kStep[dir][1]);
        if (!D_.crossing_at.empty()) {
            const int c = D_.crossing_at[k][dir];
            if (c >= 0) {
                const double th = D_.crossings[c].theta;
                const double v = gb_.size() ? gb_[c] : u_[k] + th * (u_[n] - u_[k]);
                return {th * h, v, -1, th};
            }
        }
        return {h, u_[n], n, 1.0};
    }

    // Derivative along axis b at node k.
    double slope(long k, int b) const {
        if (!D_.interior[k]) {
            const long i = D_.gi(k), j = D_.gj(k);
            const long p = D_.index(i + GridDomain::kStep[2 * b][0], j + GridDomain::kStep[2 * b][1]);
            const long m = D_.index(i + GridDomain::kStep[2 * b + 1][0], j + GridDomain::kStep[2 * b + 1][1]);
            return (u_[p] - u_[m]) / (2 * D_.spacing);
        }
        const Arm p = arm(k, 2 * b), m = arm(k, 2 * b + 1);
        const double a = m.dist, c = p.dist;
        return (a * a * (p.value - u_[k]) + c * c * (u_[k] - m.value)) / (a * c * (a + c));
    }

    // Flux of dG/dp along +axis through the midpoint of the arm (k, dir).
    double flux(long k, int dir, const Arm& A) const {
        const int a = dir / 2, b = 1 - a;
        const double s = dir % 2 == 0 ? 1.0 : -1.0;
        Vec pg(2);
        pg[a] = s * (A.value - u_[k]) / A.dist;
        const double tk = slope(k, b);
        if (A.node >= 0) {
            pg[b] = 0.5 * (tk + slope(A.node, b));
        } else {
            const Arm O = arm(k, dir ^ 1);
            pg[b] = O.node >= 0 ? tk + 0.5 * A.theta * (tk - slope(O.node, b)) : tk;
        }
        const Vec x = D_.position(k) + s * 0.5 * A.dist * D_.axes.col(a);
        return D_.axes.col(a).dot(G_.dp(x, 0.5 * (u_[k] + A.value), D_.axes * pg));
    }

    const NonParametricFunctional& G_;
    const GridDomain& D_;
    const Vec& u_;
    const Vec& gb_;
};

}  // namespace detail

// L u = sum_i D_i [dG/dp_i(x, u, Du)] - dG/dy(x, u, Du) at an interior node,
// in conservative form with centered differences (nonuniform at cut edges).
inline double el_operator(const NonParametricFunctional& G, const GridDomain& D, const Vec& u, long node,
                          const Vec& boundary_values = Vec()) {
    if (node < 0 || node >= static_cast<long>(D.size()) || !D.interior[node])
        throw InvalidInput("el_operator: node " + std::to_string(node) + " is not an interior node");
    if (u.size() != static_cast<Eigen::Index>(D.size())) throw InvalidInput("el_operator: field size mismatch");
    if (boundary_values.size() && boundary_values.size() != static_cast<Eigen::Index>(D.crossings.size()))
        throw InvalidInput("el_operator: boundary value count mismatch");
    return detail::Stencil(G, D, u, boundary_values).el(node);
}

// Samples a function of the plane on every lattice node of D, masked or not.
inline Vec nodal(const GridDomain& D, const std::function<double(const Vec&)>& fn) {
    Vec u(static_cast<Eigen::Index>(D.size()));
    for (long k = 0; k < static_cast<long>(D.size()); ++k) u[k] = fn(D.position(k));
    return u;
}

struct SolveOptions {
    double tol = 1e-10;
    int max_iterations = 100;
    double delta = 0.2;  // smallness bound on sup|f| + sup|g|
    double fd_step = 1e-6;
};

struct GraphSolution {
    Vec u;
    double residual_norm = 0.0;
    int newton_iterations = 0;
    std::vector<double> residual_history;
    bool small_data = true;      // sup|f| + sup|g| <= delta
    double data_norm = 0.0;      // sup|f| + sup|g|
    double estimate_ratio = 0.0; // discrete C^2 norm of u / data_norm
};

// Damped Newton on L u = f at interior nodes with u = g elsewhere.
// The Jacobian is assembled from central differences on a 9-colouring of the
// lattice, so each column group costs two residual sweeps.
inline GraphSolution solve_dirichlet(const NonParametricFunctional& G, const GridDomain& D,
                                     const std::function<double(const Vec&)>& f,
                                     const std::function<double(const Vec&)>& g, const SolveOptions& opt = {}) {
    G.validate();
    const auto& I = D.interior_nodes;
    const long n = static_cast<long>(I.size());
    std::vector<long> slot(D.size(), -1);
    for (long a = 0; a < n; ++a) slot[I[a]] = a;

    GraphSolution sol;
    sol.u = nodal(D, g);
    Vec rhs(n);
    double fsup = 0.0, gsup = 0.0;
    for (long a = 0; a < n; ++a) {
        rhs[a] = f(D.position(I[a]));
        fsup = std::max(fsup, std::abs(rhs[a]));
    }
    Vec gb(static_cast<Eigen::Index>(D.crossings.size()));
    for (std::size_t c = 0; c < D.crossings.size(); ++c) {
        gb[static_cast<Eigen::Index>(c)] = g(D.crossings[c].point);
        gsup = std::max(gsup, std::abs(gb[static_cast<Eigen::Index>(c)]));
    }
    if (D.crossings.empty())
        for (long k : D.boundary_nodes) gsup = std::max(gsup, std::abs(sol.u[k]));
    sol.data_norm = fsup + gsup;
    sol.small_data = sol.data_norm <= opt.delta;

    auto residual = [&](const Vec& u) {
        const detail::Stencil st(G, D, u, gb);
        Vec R(n);
        for (long a = 0; a < n; ++a) R[a] = st.el(I[a]) - rhs[a];
        return R;
    };

    Vec R = residual(sol.u);
    sol.residual_history.push_back(R.cwiseAbs().maxCoeff());
    for (int it = 0; it < opt.max_iterations && sol.residual_history.back() >= opt.tol; ++it) {
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(9 * n));
        for (int color = 0; color < 9; ++color) {
            Vec up = sol.u, um = sol.u;
            std::vector<long> members;
            for (long a = 0; a < n; ++a) {
                const long k = I[a];
                const long ci = ((D.gi(k) % 3) + 3) % 3, cj = ((D.gj(k) % 3) + 3) % 3;
                if (ci * 3 + cj != color) continue;
                members.push_back(a);
                const double e = opt.fd_step * std::max(1.0, std::abs(sol.u[k]));
                up[k] += e;
                um[k] -= e;
            }
            if (members.empty()) continue;
            const Vec Rp = residual(up), Rm = residual(um);
            for (long a : members) {
                const long k = I[a];
                const double e2 = up[k] - um[k];
                const long i = D.gi(k), j = D.gj(k);
                for (int di = -1; di <= 1; ++di)
                    for (int dj = -1; dj <= 1; ++dj) {
                        if (!D.in_range(i + di, j + dj)) continue;
                        const long row = slot[D.index(i + di, j + dj)];
                        if (row < 0) continue;
                        trip.emplace_back(row, a, (Rp[row] - Rm[row]) / e2);
                    }
            }
        }
        Eigen::SparseMatrix<double> J(n, n);
        J.setFromTriplets(trip.begin(), trip.end());
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(J);
        if (lu.info() != Eigen::Success)
            throw NonConvergence("solve_dirichlet: singular Jacobian", sol.residual_history);
        const Vec step = lu.solve(-R);
        const double r0 = sol.residual_history.back();
        double t = 1.0;
        Vec trial;
        Vec Rt;
        for (;;) {
            trial = sol.u;
            for (long a = 0; a < n; ++a) trial[I[a]] += t * step[a];
            Rt = residual(trial);
            if (Rt.cwiseAbs().maxCoeff() < (1.0 - 1e-4 * t) * r0 || t < 1.0 / 1024) break;
            t *= 0.5;
        }
        sol.u = trial;
        R = Rt;
        sol.residual_history.push_back(R.cwiseAbs().maxCoeff());
        sol.newton_iterations = it + 1;
    }
    sol.residual_norm = sol.residual_history.back();
    if (!(sol.residual_norm < opt.tol))
        throw NonConvergence("solve_dirichlet: Newton did not reach tolerance", sol.residual_history);

    // Discrete C^2 norm over the interior.
    const double h = D.spacing;
    double c0 = 0, c1 = 0, c2 = 0;
    for (long k : I) {
        const long i = D.gi(k), j = D.gj(k);
        auto at = [&](long di, long dj) { return sol.u[D.index(i + di, j + dj)]; };
        c0 = std::max(c0, std::abs(at(0, 0)));
        c1 = std::max({c1, std::abs(at(1, 0) - at(-1, 0)) / (2 * h), std::abs(at(0, 1) - at(0, -1)) / (2 * h)});
        c2 = std::max({c2, std::abs(at(1, 0) - 2 * at(0, 0) + at(-1, 0)) / (h * h),
                       std::abs(at(0, 1) - 2 * at(0, 0) + at(0, -1)) / (h * h),
                       std::abs(at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * h * h)});
    }
    sol.estimate_ratio = sol.data_norm > 0 ? (c0 + c1 + c2) / sol.data_norm : 0.0;
    return sol;
}

// Triangulated graph of nodal values in the frame of G, over every lattice
// cell whose four corners are masked.
inline TriMesh graph_mesh(const NonParametricFunctional& G, const GridDomain& D, const Vec& u) {
    if (u.size() != static_cast<Eigen::Index>(D.size())) throw InvalidInput("graph_mesh: field size mismatch");
    TriMesh M;
    std::vector<int> vid(D.size(), -1);
    for (long k = 0; k < static_cast<long>(D.size()); ++k) {
        if (!D.mask[k]) continue;
        vid[k] = static_cast<int>(M.vertices.size());
        M.vertices.emplace_back(Vec3(G.point(D.position(k), u[k])));
    }
    for (long j = D.j0; j + 1 < D.j0 + D.ny; ++j)
        for (long i = D.i0; i + 1 < D.i0 + D.nx; ++i) {
            const int a = vid[D.index(i, j)], b = vid[D.index(i + 1, j)];
            const int c = vid[D.index(i + 1, j + 1)], d = vid[D.index(i, j + 1)];
            if (a < 0 || b < 0 || c < 0 || d < 0) continue;
            M.faces.push_back({a, b, c});
            M.faces.push_back({a, c, d});
        }
    if (M.faces.empty()) throw InvalidInput("graph_mesh: no complete cells");
    return M;
}

// Range of L(Phi) over the interior nodes of D.
inline std::pair<double, double> el_range(const NonParametricFunctional& G, const GridDomain& D,
                                          const std::function<double(const Vec&)>& Phi) {
    const Vec u = nodal(D, Phi);
    Vec gb(static_cast<Eigen::Index>(D.crossings.size()));
    for (std::size_t c = 0; c < D.crossings.size(); ++c) gb[static_cast<Eigen::Index>(c)] = Phi(D.crossings[c].point);
    const detail::Stencil st(G, D, u, gb);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (long k : D.interior_nodes) {
        const double v = st.el(k);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return {lo, hi};
}

// ---------------------------------------------------------------------------
// Hopf comparison on two tangent disks

// Disks B+ and B- of radius `radius` tangent at `touch`, with centers
// touch +- radius * normal. Both lattices have `touch` as a node and `normal`
// as first axis.
struct TangentDisks {
    Vec touch = Vec::Zero(2);
    Vec normal = Vec::Unit(2, 0);
    double radius = 0.5;
    double spacing = 0.02;

    Mat axes() const {
        const Vec n = normal.normalized();
        Mat A(2, 2);
        A << n[0], -n[1], n[1], n[0];
        return A;
    }
    GridDomain plus() const {
        return GridDomain::disk(touch + radius * normal.normalized(), radius, spacing, touch, axes());
    }
    GridDomain minus() const {
        return GridDomain::disk(touch - radius * normal.normalized(), radius, spacing, touch, axes());
    }
};

struct HopfReport {
    double gap_plus = 0.0;
    double gap_minus = 0.0;
    double cH = 0.0;
    double s = 0.0;
    double l_phi_min = 0.0;  // range of L(Phi) over both disks
    double l_phi_max = 0.0;
    double plus_diff_min = 0.0, plus_diff_max = 0.0;    // of u+ - Phi over interior nodes
    double minus_diff_min = 0.0, minus_diff_max = 0.0;  // of u- - Phi over interior nodes
    GraphSolution plus, minus;
};

// Solves L u = s on both disks with boundary data Phi and reports the
// one-sided normal-derivative gaps of u - Phi at the touching point, each
// from the second-order formula (4 d(h) - d(2h)) / (2h).
inline HopfReport hopf_gap(const NonParametricFunctional& G, const TangentDisks& disks,
                           const std::function<double(const Vec&)>& Phi, double s, const SolveOptions& opt = {}) {
    if (!(disks.radius > 4 * disks.spacing)) throw InvalidInput("hopf_gap: disks too small for the spacing");
    HopfReport rep;
    rep.s = s;
    const GridDomain Dp = disks.plus(), Dm = disks.minus();
    const auto rp = el_range(G, Dp, Phi), rm = el_range(G, Dm, Phi);
    rep.l_phi_min = std::min(rp.first, rm.first);
    rep.l_phi_max = std::max(rp.second, rm.second);
    auto constant = [s](const Vec&) { return s; };
    rep.plus = solve_dirichlet(G, Dp, constant, Phi, opt);
    rep.minus = solve_dirichlet(G, Dm, constant, Phi, opt);
    const double h = disks.spacing;
    auto diff = [&](const GridDomain& D, const GraphSolution& S, long i) {
        const long k = D.index(i, 0);
        if (!D.interior[k]) throw InvalidInput("hopf_gap: no interior node next to the touching point");
        return S.u[k] - Phi(D.position(k));
    };
    rep.gap_plus = (4 * diff(Dp, rep.plus, 1) - diff(Dp, rep.plus, 2)) / (2 * h);
    rep.gap_minus = (4 * diff(Dm, rep.minus, -1) - diff(Dm, rep.minus, -2)) / (2 * h);
    rep.cH = std::min(rep.gap_plus, rep.gap_minus);
    auto extrema = [&](const GridDomain& D, const GraphSolution& S, double& lo, double& hi) {
        lo = std::numeric_limits<double>::infinity();
        hi = -lo;
        for (long k : D.interior_nodes) {
            const double d = S.u[k] - Phi(D.position(k));
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
    };
    extrema(Dp, rep.plus, rep.plus_diff_min, rep.plus_diff_max);
    extrema(Dm, rep.minus, rep.minus_diff_min, rep.minus_diff_max);
    return rep;
}

// ---------------------------------------------------------------------------
// Comparison sweep against a discrete surface

namespace detail {

// Height of a mesh over the (t1, t2) plane of G, by barycentric interpolation.
class GraphLookup {
public:
    GraphLookup(const TriMesh& M, const NonParametricFunctional& G) {
        validate_mesh(M);
        const Mat T = G.frame.leftCols(2);
        for (const auto& v : M.vertices) {
            const Vec d = Vec(v) - G.q;
            base_.push_back(T.transpose() * d / G.r);
            height_.push_back(d.dot(G.frame.col(2)) / G.r);
        }
        faces_ = M.faces;
        double edge = 0.0;
        for (const auto& f : faces_)
            for (int e = 0; e < 3; ++e) edge = std::max(edge, (base_[f[e]] - base_[f[(e + 1) % 3]]).norm());
        cell_ = std::max(edge, 1e-12);
        for (std::size_t f = 0; f < faces_.size(); ++f) {
            Vec lo = base_[faces_[f][0]], hi = lo;
            for (int e = 1; e < 3; ++e) {
                lo = lo.cwiseMin(base_[faces_[f][e]]);
                hi = hi.cwiseMax(base_[faces_[f][e]]);
            }
            for (long a = cell(lo[0]); a <= cell(hi[0]); ++a)
                for (long b = cell(lo[1]); b <= cell(hi[1]); ++b) buckets_[key(a, b)].push_back(static_cast<int>(f));
        }
    }

    // Height over x, or nullopt when no face covers x. Throws if covering
    // faces disagree (the mesh folds over x).
    std::optional<double> height(const Vec& x) const {
        auto it = buckets_.find(key(cell(x[0]), cell(x[1])));
        if (it == buckets_.end()) return std::nullopt;
        std::optional<double> out;
        for (int f : it->second) {
            const Vec& a = base_[faces_[f][0]];
            const Vec& b = base_[faces_[f][1]];
            const Vec& c = base_[faces_[f][2]];
            const double det = (b - a)[0] * (c - a)[1] - (b - a)[1] * (c - a)[0];
            if (std::abs(det) < 1e-300) continue;
            const Vec d = x - a;
            const double l1 = (d[0] * (c - a)[1] - d[1] * (c - a)[0]) / det;
            const double l2 = ((b - a)[0] * d[1] - (b - a)[1] * d[0]) / det;
            const double l0 = 1.0 - l1 - l2;
            const double eps = -1e-12;
            if (l0 < eps || l1 < eps || l2 < eps) continue;
            const double z = l0 * height_[faces_[f][0]] + l1 * height_[faces_[f][1]] + l2 * height_[faces_[f][2]];
            if (out && std::abs(*out - z) > 1e-9 * (1.0 + std::abs(z)))
                throw InvalidInput("comparison_sweep: M is not a graph over the disks (fold at a node)");
            out = z;
        }
        return out;
    }

private:
    long cell(double v) const { return static_cast<long>(std::floor(v / cell_)); }
    static std::uint64_t key(long a, long b) {
        return (static_cast<std::uint64_t>(a + (1L << 30)) << 32) ^ static_cast<std::uint64_t>(b + (1L << 30));
    }

    std::vector<Vec> base_;
    std::vector<double> height_;
    std::vector<std::array<int, 3>> faces_;
    double cell_ = 1.0;
    std::unordered_map<std::uint64_t, std::vector<int>> buckets_;
};

}  // namespace detail

struct SweepRow {
    double s = 0.0;
    double gap_plus = 0.0;   // min over interior nodes of height(M) - u+
    double gap_minus = 0.0;  // same on B-
    bool touched = false;
};

struct ComparisonReport {
    std::vector<SweepRow> rows;
    double first_touch = std::numeric_limits<double>::quiet_NaN();  // bisected s where touching starts
    double l_phi_min = 0.0, l_phi_max = 0.0;
};

// Sweeps s over `s_values` (sorted downward internally). A row is touched
// when min(height(M) - u_s) < -touch_tol on either disk; the first crossing
// is refined by bisection.
inline ComparisonReport comparison_sweep(const NonParametricFunctional& G, const TangentDisks& disks,
                                         const std::function<double(const Vec&)>& Phi, const TriMesh& M,
                                         std::vector<double> s_values, double touch_tol = 1e-9,
                                         int bisections = 20, const SolveOptions& opt = {}) {
    if (s_values.empty()) throw InvalidInput("comparison_sweep: empty s range");
    std::sort(s_values.begin(), s_values.end(), std::greater<>());
    const GridDomain Dp = disks.plus(), Dm = disks.minus();
    const detail::GraphLookup lookup(M, G);
    auto heights = [&](const GridDomain& D) {
        std::vector<double> h(D.size(), 0.0);
        for (long k : D.interior_nodes) {
            const auto z = lookup.height(D.position(k));
            if (!z) throw InvalidInput("comparison_sweep: M does not cover node " + std::to_string(k) + " of a disk");
            h[k] = *z;
        }
        return h;
    };
    const auto Hp = heights(Dp), Hm = heights(Dm);
    ComparisonReport rep;
    const auto rp = el_range(G, Dp, Phi), rm = el_range(G, Dm, Phi);
    rep.l_phi_min = std::min(rp.first, rm.first);
    rep.l_phi_max = std::max(rp.second, rm.second);

    auto row_for = [&](double s) {
        auto constant = [s](const Vec&) { return s; };
        SweepRow row;
        row.s = s;
        const GraphSolution up = solve_dirichlet(G, Dp, constant, Phi, opt);
        const GraphSolution um = solve_dirichlet(G, Dm, constant, Phi, opt);
        row.gap_plus = row.gap_minus = std::numeric_limits<double>::infinity();
        for (long k : Dp.interior_nodes) row.gap_plus = std::min(row.gap_plus, Hp[k] - up.u[k]);
        for (long k : Dm.interior_nodes) row.gap_minus = std::min(row.gap_minus, Hm[k] - um.u[k]);
        row.touched = std::min(row.gap_plus, row.gap_minus) < -touch_tol;
        return row;
    };

    for (double s : s_values) rep.rows.push_back(row_for(s));
    for (std::size_t i = 1; i < rep.rows.size(); ++i) {
        if (rep.rows[i - 1].touched || !rep.rows[i].touched) continue;
        double hi = rep.rows[i - 1].s, lo = rep.rows[i].s;
        for (int b = 0; b < bisections; ++b) {
            const double mid = 0.5 * (hi + lo);
            (row_for(mid).touched ? lo : hi) = mid;
        }
        rep.first_touch = 0.5 * (hi + lo);
        break;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Exact areas of mesh pieces inside balls

namespace detail {

// Signed area of the disk |z| < R intersected with the triangle (0, a, b).
inline double disk_triangle_signed(const Eigen::Vector2d& a, const Eigen::Vector2d& b, double R) {
    const Eigen::Vector2d d = b - a;
    auto cross = [](const Eigen::Vector2d& p, const Eigen::Vector2d& q) { return p[0] * q[1] - p[1] * q[0]; };
    auto sector = [&](double t0, double t1) {
        const Eigen::Vector2d p = a + t0 * d, q = a + t1 * d;
        return 0.5 * R * R * std::atan2(cross(p, q), p.dot(q));
    };
    const double A = d.squaredNorm(), B = a.dot(d), C = a.squaredNorm() - R * R;
    const double disc = B * B - A * C;
    if (!(A > 0) || disc <= 0) return sector(0.0, 1.0);
    const double sq = std::sqrt(disc);
    const double tin = std::max(0.0, (-B - sq) / A), tout = std::min(1.0, (-B + sq) / A);
    if (tin >= tout) return sector(0.0, 1.0);
    const Eigen::Vector2d p = a + tin * d, q = a + tout * d;
    double area = 0.5 * cross(p, q);
    if (tin > 0) area += sector(0.0, tin);
    if (tout < 1) area += sector(tout, 1.0);
    return area;
}

}  // namespace detail

// Area of the triangle (a, b, c) inside the ball B_r(center).
inline double triangle_ball_area(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& center, double r) {
    const Vec3 lo = a.cwiseMin(b).cwiseMin(c), hi = a.cwiseMax(b).cwiseMax(c);
    if ((lo - center).cwiseMax(center - hi).cwiseMax(Vec3::Zero()).norm() >= r) return 0.0;
    const Vec3 n0 = (b - a).cross(c - a);
    const double twice = n0.norm();
    if (twice <= 0) return 0.0;
    const Vec3 n = n0 / twice;
    const double dist = (center - a).dot(n);
    if (std::abs(dist) >= r) return 0.0;
    const double rho = std::sqrt(r * r - dist * dist);
    const Vec3 foot = center - dist * n;
    const Vec3 e1 = (b - a).normalized();
    const Vec3 e2 = n.cross(e1);
    auto flat = [&](const Vec3& v) { return Eigen::Vector2d((v - foot).dot(e1), (v - foot).dot(e2)); };
    const Eigen::Vector2d pa = flat(a), pb = flat(b), pc = flat(c);
    if (pa.norm() <= rho && pb.norm() <= rho && pc.norm() <= rho) return 0.5 * twice;
    const double s = detail::disk_triangle_signed(pa, pb, rho) + detail::disk_triangle_signed(pb, pc, rho) +
                     detail::disk_triangle_signed(pc, pa, rho);
    return std::abs(s);
}

inline double mesh_area_in_ball(const TriMesh& M, const Vec3& center, double r) {
    std::vector<double> parts;
    for (const auto& f : M.faces) {
        const double area = triangle_ball_area(M.vertices[f[0]], M.vertices[f[1]], M.vertices[f[2]], center, r);
        if (area > 0) parts.push_back(area);
    }
    return pairwise_sum(parts);
}

struct DensityRow {
    Vec3 q;
    double r = 0.0;
    double ratio = 0.0;  // area(M in B_r(q)) / (pi r^2)
};

struct DensityTable {
    std::vector<DensityRow> rows;
    double sup_ratio = 0.0;
};

// Density ratios at the given centers (the polyline vertices when `centers`
// is empty). Gamma must lie on the mesh boundary within `tol`.
inline DensityTable density_ratio_boundary(const TriMesh& M, const std::vector<Vec3>& Gamma,
                                           const std::vector<double>& radii, const std::vector<Vec3>& centers = {},
                                           double tol = 1e-9) {
    validate_mesh(M);
    const MeshGeometry geo = mesh_geometry(M);
    for (std::size_t i = 0; i < Gamma.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& e : geo.boundary_edges) {
            const Vec3 a = M.vertices[e.a], b = M.vertices[e.b];
            const double t = std::clamp((Gamma[i] - a).dot(b - a) / (b - a).squaredNorm(), 0.0, 1.0);
            best = std::min(best, (Gamma[i] - (a + t * (b - a))).norm());
        }
        if (best > tol)
            throw InvalidInput("density_ratio_boundary: Gamma point " + std::to_string(i) + " is off the mesh boundary");
    }
    for (double r : radii)
        if (!(r > 0)) throw InvalidInput("density_ratio_boundary: radii must be positive");
    DensityTable out;
    for (const auto& q : centers.empty() ? Gamma : centers)
        for (double r : radii) {
            DensityRow row{q, r, mesh_area_in_ball(M, q, r) / (std::numbers::pi * r * r)};
            out.sup_ratio = std::max(out.sup_ratio, row.ratio);
            out.rows.push_back(row);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Stability and monotonicity

// phi(x) = eta(|x - center| / radius) with eta = 1 on [0, 1/3], 2 - 3t on
// [1/3, 2/3], 0 beyond; |eta'| <= 3.
struct StabilityCutoff {
    Vec3 center = Vec3::Zero();
    double radius = 1.0;

    double value(const Vec3& x) const {
        const double t = (x - center).norm() / radius;
        return t <= 1.0 / 3 ? 1.0 : (t >= 2.0 / 3 ? 0.0 : 2.0 - 3.0 * t);
    }
    Vec3 gradient(const Vec3& x) const {
        const Vec3 d = x - center;
        const double t = d.norm() / radius;
        if (t <= 1.0 / 3 || t >= 2.0 / 3) return Vec3::Zero();
        return -3.0 / radius * d / d.norm();
    }
};

struct StabilityReport {
    double lhs = 0.0;  // integral of phi^2 |A|^2
    double rhs = 0.0;  // c1 integral |D phi|^2 + c2 integral phi^2
    double c1 = 0.0, c2 = 0.0;
    double grad_integral = 0.0;
    double phi_integral = 0.0;
    bool holds = false;
};

inline StabilityReport stability_check(const TriMesh& M, const Integrand& F, const StabilityCutoff& phi, double c1,
                                       double c2) {
    if (F.dim() != 3) throw InvalidInput("stability_check: surfaces in R^3 only");
    if (!(phi.radius > 0)) throw InvalidInput("stability_check: cutoff radius must be positive");
    validate_mesh(M);
    const MeshGeometry geo = mesh_geometry(M);
    const MeshTopology topo(M);
    std::vector<double> a2, g2, p2;
    for (std::size_t f = 0; f < M.faces.size(); ++f) {
        const Vec3 c = geo.centroids[f];
        const double w = geo.areas[f];
        const double p = phi.value(c);
        Vec3 g = phi.gradient(c);
        g -= g.dot(geo.normals[f]) * geo.normals[f];
        g2.push_back(w * g.squaredNorm());
        p2.push_back(w * p * p);
        a2.push_back(p == 0.0 ? 0.0 : w * p * p * face_sff(M, topo, geo, static_cast<int>(f)).norm_squared());
    }
    StabilityReport r;
    r.c1 = c1;
    r.c2 = c2;
    r.lhs = pairwise_sum(a2);
    r.grad_integral = pairwise_sum(g2);
    r.phi_integral = pairwise_sum(p2);
    r.rhs = c1 * r.grad_integral + c2 * r.phi_integral;
    r.holds = r.lhs <= r.rhs;
    return r;
}

struct MonotonicityRow {
    double r = 0.0;
    double ratio = 0.0;
    double bound = 0.0;
    bool within = false;
};

struct MonotonicityReport {
    std::vector<MonotonicityRow> rows;
    double c = 8.0;
    double d = 0.0;
    double ratio_half_d = 0.0;
    double mean_curvature_integral = 0.0;  // integral of |H|^2 over B_{d/2}(p)
    bool all_within = false;
};

// Density ratios at p over the radii with the bound c [ratio(d/2) + int |H|^2]
// (d defaults to twice the largest radius).
inline MonotonicityReport monotonicity_ratio(const TriMesh& M, const Vec3& p, const std::vector<double>& radii,
                                             double c = 8.0, double d = 0.0) {
    if (radii.empty()) throw InvalidInput("monotonicity_ratio: no radii");
    for (double r : radii)
        if (!(r > 0)) throw InvalidInput("monotonicity_ratio: radii must be positive");
    validate_mesh(M);
    MonotonicityReport rep;
    rep.c = c;
    rep.d = d > 0 ? d : 2.0 * *std::max_element(radii.begin(), radii.end());
    const MeshGeometry geo = mesh_geometry(M);
    const MeshTopology topo(M);
    std::vector<double> h2;
    for (std::size_t f = 0; f < M.faces.size(); ++f) {
        if ((geo.centroids[f] - p).norm() >= 0.5 * rep.d) continue;
        const double H = face_sff(M, topo, geo, static_cast<int>(f)).matrix.trace();
        h2.push_back(geo.areas[f] * H * H);
    }
    rep.mean_curvature_integral = pairwise_sum(h2);
    const double half = 0.5 * rep.d;
    rep.ratio_half_d = mesh_area_in_ball(M, p, half) / (std::numbers::pi * half * half);
    const double bound = c * (rep.ratio_half_d + rep.mean_curvature_integral);
    rep.all_within = true;
    for (double r : radii) {
        MonotonicityRow row;
        row.r = r;
        row.ratio = mesh_area_in_ball(M, p, r) / (std::numbers::pi * r * r);
        row.bound = bound;
        row.within = row.ratio <= bound;
        rep.all_within = rep.all_within && row.within;
        rep.rows.push_back(row);
    }
    return rep;
}

}  // namespace aniso
