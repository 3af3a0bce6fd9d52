#pragma once

#include "aniso/spatial.hpp"
#include "aniso/surface.hpp"

namespace aniso {

// One atom represents w * H^m restricted to a point, times (delta_nu + delta_{-nu}) / 2.
struct Atom {
    Vec x;
    Vec nu;
    double w = 0.0;
};

class DiscreteVarifold {
public:
    DiscreteVarifold() = default;
    explicit DiscreteVarifold(int dim) : dim_(dim) {
        if (dim < 2) throw InvalidInput("varifold: ambient dimension must be >= 2");
    }

    int dim() const { return dim_; }
    std::size_t size() const { return atoms_.size(); }
    bool empty() const { return atoms_.empty(); }
    const std::vector<Atom>& atoms() const { return atoms_; }
    const Atom& operator[](std::size_t i) const { return atoms_[i]; }

    // Normalizes nu, stores it with canonical sign; rejects w <= 0.
    void add(const Vec& x, const Vec& nu, double w) {
        if (x.size() != dim_ || nu.size() != dim_) throw InvalidInput("varifold: atom dimension mismatch");
        if (!(w > 0.0) || !std::isfinite(w)) throw InvalidInput("varifold: weights must be positive");
        const double n = nu.norm();
        if (!(n > 0.0)) throw InvalidInput("varifold: zero direction");
        atoms_.push_back({x, canonical_sign(nu / n), w});
    }

    double total_weight() const {
        return pairwise_reduce(atoms_.size(), [&](std::size_t i) { return atoms_[i].w; });
    }

    Mat positions() const {
        Mat P(dim_, atoms_.size());
        for (std::size_t i = 0; i < atoms_.size(); ++i) P.col(i) = atoms_[i].x;
        return P;
    }

    DiscreteVarifold scaled(double factor) const {
        if (!(factor > 0)) throw InvalidInput("varifold: scale factor must be positive");
        DiscreteVarifold out(dim_);
        out.atoms_ = atoms_;
        for (auto& a : out.atoms_) a.w *= factor;
        return out;
    }

    void append(const DiscreteVarifold& other) {
        if (other.dim_ != dim_) throw InvalidInput("varifold: dimension mismatch in append");
        atoms_.insert(atoms_.end(), other.atoms_.begin(), other.atoms_.end());
    }

private:
    int dim_ = 3;
    std::vector<Atom> atoms_;
};

// Ordered list of varifolds standing in for V_k.
struct MeasureSequence {
    std::vector<DiscreteVarifold> entries;
    std::vector<long> labels;

    void push(DiscreteVarifold v, long label) {
        entries.push_back(std::move(v));
        labels.push_back(label);
    }
    std::size_t size() const { return entries.size(); }
};

struct Ball {
    Vec center;
    double radius = 1.0;
};

// Compactly supported C^1 test field; Dg(i, j) = d_j g_i.
struct VectorFieldSpec {
    std::function<Vec(const Vec&)> g;
    std::function<Mat(const Vec&)> Dg;
    Vec center;
    double support_radius = std::numeric_limits<double>::infinity();
    std::string name = "field";
};

struct VariationReport {
    double value = 0.0;
    double interior_term = 0.0;
    double boundary_term = 0.0;
    long quadrature_atoms = 0;
};

// ---------------------------------------------------------------------------
// Test fields

inline VectorFieldSpec constant_field(const Vec& c) {
    const int d = static_cast<int>(c.size());
    return {[c](const Vec&) { return c; }, [d](const Vec&) { return Mat(Mat::Zero(d, d)); }, Vec::Zero(d),
            std::numeric_limits<double>::infinity(), "constant"};
}

// g(x) = M x + b.
inline VectorFieldSpec linear_field(const Mat& M, const Vec& b) {
    return {[M, b](const Vec& x) { return Vec(M * x + b); }, [M](const Vec&) { return M; }, Vec::Zero(b.size()),
            std::numeric_limits<double>::infinity(), "linear"};
}

inline VectorFieldSpec dilation_field(const Vec& center, double factor = 1.0) {
    const int d = static_cast<int>(center.size());
    return {[center, factor](const Vec& x) { return Vec(factor * (x - center)); },
            [d, factor](const Vec&) { return Mat(factor * Mat::Identity(d, d)); }, center,
            std::numeric_limits<double>::infinity(), "dilation"};
}

// Central-difference Jacobian for fields given only by values.
inline VectorFieldSpec field_from_function(std::function<Vec(const Vec&)> g, std::string name = "sampled",
                                           double step = 1e-6) {
    VectorFieldSpec s;
    s.g = g;
    s.Dg = [g, step](const Vec& x) {
        const Vec g0 = g(x);
        Mat J(g0.size(), x.size());
        for (Eigen::Index j = 0; j < x.size(); ++j) {
            Vec p = x, m = x;
            p[j] += step;
            m[j] -= step;
            J.col(j) = (g(p) - g(m)) / (p[j] - m[j]);
        }
        return J;
    };
    s.name = std::move(name);
    return s;
}

// phi * X with phi the bump of radius R at c.
inline VectorFieldSpec bumped_field(const VectorFieldSpec& X, const Vec& c, double R) {
    VectorFieldSpec s;
    s.g = [X, c, R](const Vec& x) {
        const double phi = bump(x, c, R);
        return phi == 0.0 ? Vec(Vec::Zero(x.size())) : Vec(phi * X.g(x));
    };
    s.Dg = [X, c, R](const Vec& x) {
        const double phi = bump(x, c, R);
        if (phi == 0.0) return Mat(Mat::Zero(x.size(), x.size()));
        return Mat(phi * X.Dg(x) + X.g(x) * bump_gradient(x, c, R).transpose());
    };
    s.center = c;
    s.support_radius = std::min(R, X.support_radius);
    s.name = X.name + "_bumped";
    return s;
}

inline VectorFieldSpec scaled_field(const VectorFieldSpec& X, double s) {
    VectorFieldSpec out = X;
    out.g = [X, s](const Vec& x) { return Vec(s * X.g(x)); };
    out.Dg = [X, s](const Vec& x) { return Mat(s * X.Dg(x)); };
    return out;
}

inline VectorFieldSpec sum_fields(const VectorFieldSpec& a, const VectorFieldSpec& b) {
    VectorFieldSpec out;
    out.g = [a, b](const Vec& x) { return Vec(a.g(x) + b.g(x)); };
    out.Dg = [a, b](const Vec& x) { return Mat(a.Dg(x) + b.Dg(x)); };
    out.center = a.center;
    out.support_radius = std::max(a.support_radius, b.support_radius);
    out.name = a.name + "+" + b.name;
    return out;
}

// Smooth field b + M x + sum_k c_k sin(<w_k, x> + phase_k) with random data.
template <typename Rng>
VectorFieldSpec random_smooth_field(int dim, Rng& rng, int modes = 3, double amplitude = 1.0) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> ph(0.0, 2.0 * std::numbers::pi);
    Vec b(dim);
    Mat M(dim, dim);
    for (int i = 0; i < dim; ++i) {
        b[i] = amplitude * g(rng);
        for (int j = 0; j < dim; ++j) M(i, j) = 0.5 * amplitude * g(rng);
    }
    std::vector<Vec> c(modes), w(modes);
    std::vector<double> phase(modes);
    for (int k = 0; k < modes; ++k) {
        c[k] = Vec(dim);
        w[k] = Vec(dim);
        for (int i = 0; i < dim; ++i) {
            c[k][i] = 0.5 * amplitude * g(rng);
            w[k][i] = 1.5 * g(rng);
        }
        phase[k] = ph(rng);
    }
    VectorFieldSpec s;
    s.g = [=](const Vec& x) {
        Vec out = b + M * x;
        for (int k = 0; k < modes; ++k) out += c[k] * std::sin(w[k].dot(x) + phase[k]);
        return out;
    };
    s.Dg = [=](const Vec& x) {
        Mat out = M;
        for (int k = 0; k < modes; ++k) out += c[k] * w[k].transpose() * std::cos(w[k].dot(x) + phase[k]);
        return out;
    };
    s.center = Vec::Zero(dim);
    s.name = "random_smooth";
    return s;
}

// ---------------------------------------------------------------------------
// Construction and basic functionals

inline DiscreteVarifold from_mesh(const TriMesh& mesh) {
    DiscreteVarifold V(3);
    if (mesh.faces.empty()) return V;
    const auto g = mesh_geometry(mesh);
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) V.add(Vec(g.centroids[f]), Vec(g.normals[f]), g.areas[f]);
    return V;
}

inline double mass_in_ball(const DiscreteVarifold& V, const Vec& x, double r) {
    if (!(r > 0)) throw InvalidInput("mass_in_ball: radius must be positive");
    const double r2 = r * r;
    return pairwise_reduce(V.size(), [&](std::size_t i) {
        return (V[i].x - x).squaredNorm() < r2 ? V[i].w : 0.0;
    });
}

inline double energy(const DiscreteVarifold& V, const Integrand& F, int threads = 0) {
    std::vector<double> terms(V.size());
    parallel_for(V.size(), threads, [&](std::size_t i) { terms[i] = V[i].w * F.eval(V[i].x, V[i].nu); });
    return pairwise_sum(terms);
}

// sum_i w_i [<D1F, g> + B : Dg] at the atoms.
inline VariationReport first_variation(const DiscreteVarifold& V, const Integrand& F, const VectorFieldSpec& g,
                                       int threads = 0) {
    std::vector<double> terms(V.size());
    parallel_for(V.size(), threads, [&](std::size_t i) {
        const Atom& a = V[i];
        if (std::isfinite(g.support_radius) && (a.x - g.center).norm() >= g.support_radius) {
            terms[i] = 0.0;
            return;
        }
        const Vec gx = g.g(a.x);
        const Mat Dg = g.Dg(a.x);
        terms[i] = a.w * (F.d1(a.x, a.nu).dot(gx) + F.b_matrix(a.x, a.nu).cwiseProduct(Dg).sum());
    });
    VariationReport r;
    r.interior_term = pairwise_sum(terms);
    r.value = r.interior_term;
    r.quadrature_atoms = static_cast<long>(V.size());
    return r;
}

// (x, nu, w) -> (psi(x), dpsi^{-T} nu normalized, w * J_psi(x, nu^perp)).
inline DiscreteVarifold pushforward(const DiscreteVarifold& V, const Diffeomorphism& psi, int threads = 0) {
    DiscreteVarifold out(V.dim());
    std::vector<Atom> atoms(V.size());
    std::vector<long> bad(V.size(), 0);
    parallel_for(V.size(), threads, [&](std::size_t i) {
        const Atom& a = V[i];
        const Mat J = psi.jacobian(a.x);
        Eigen::FullPivLU<Mat> lu(J);
        if (!lu.isInvertible() || !(std::abs(J.determinant()) > 1e-14)) {
            bad[i] = 1;
            return;
        }
        const Mat T = tangent_frame(a.nu);
        const Mat JT = J * T;
        const double jac = std::sqrt(std::max(0.0, (JT.transpose() * JT).determinant()));
        Vec nu = lu.inverse().transpose() * a.nu;
        atoms[i] = {psi.map(a.x), nu, a.w * jac};
    });
    for (std::size_t i = 0; i < V.size(); ++i) {
        if (bad[i]) throw DegenerateGeometry("pushforward: singular differential at atom", static_cast<long>(i));
        out.add(atoms[i].x, atoms[i].nu, atoms[i].w);
    }
    return out;
}

// x -> x + t g(x) as a Diffeomorphism (inverse not provided).
inline Diffeomorphism flow_map(const VectorFieldSpec& g, double t) {
    Diffeomorphism d;
    d.map = [g, t](const Vec& x) { return Vec(x + t * g.g(x)); };
    d.jacobian = [g, t](const Vec& x) { return Mat(Mat::Identity(x.size(), x.size()) + t * g.Dg(x)); };
    d.name = "flow";
    return d;
}

// Injectivity of x -> x + t g(x) on the atoms: pairwise separation for small
// sets, a Lipschitz bound t * max |Dg| < 1/2 otherwise.
inline void check_flow_injective(const DiscreteVarifold& V, const VectorFieldSpec& g, double t) {
    const std::size_t n = V.size();
    if (n <= 4000) {
        std::vector<Vec> gx(n);
        for (std::size_t i = 0; i < n; ++i) gx[i] = g.g(V[i].x);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double sep = (V[i].x - V[j].x).norm();
                if (sep == 0.0) continue;
                if (std::abs(t) * (gx[i] - gx[j]).norm() >= sep)
                    throw StepTooLarge("fd_variation: flow not injective on atoms " + std::to_string(i) + ", " +
                                       std::to_string(j));
            }
        return;
    }
    double lip = 0.0;
    for (std::size_t i = 0; i < n; ++i) lip = std::max(lip, g.Dg(V[i].x).operatorNorm());
    if (std::abs(t) * lip >= 0.5) throw StepTooLarge("fd_variation: t * max|Dg| >= 1/2");
}

// |a - b| / max(|b|, 1e-3 * scale) with scale = sum w (F |Dg| + |D1F| |g|).
inline double variation_relative_error(double a, double b, const DiscreteVarifold& V, const Integrand& F,
                                       const VectorFieldSpec& g) {
    double scale = 0.0;
    for (const auto& at : V.atoms())
        scale += at.w * (F.eval(at.x, at.nu) * g.Dg(at.x).norm() + F.d1(at.x, at.nu).norm() * g.g(at.x).norm());
    return std::abs(a - b) / std::max(std::abs(b), 1e-3 * scale);
}

// [E(phi_t # V) - E(phi_{-t} # V)] / (2t); with `richardson` the two-step
// extrapolation (4 D(t/2) - D(t)) / 3.
inline double fd_variation(const DiscreteVarifold& V, const Integrand& F, const VectorFieldSpec& g, double t,
                           bool richardson = false, int threads = 0) {
    if (!(t > 0)) throw InvalidInput("fd_variation: step must be positive");
    check_flow_injective(V, g, t);
    auto central = [&](double s) {
        const double ep = energy(pushforward(V, flow_map(g, s), threads), F, threads);
        const double em = energy(pushforward(V, flow_map(g, -s), threads), F, threads);
        return (ep - em) / (2.0 * s);
    };
    const double d1 = central(t);
    if (!richardson) return d1;
    return (4.0 * central(0.5 * t) - d1) / 3.0;
}

// Interior term -sum_f area <H_F, g> F from per-face curvature estimates,
// boundary term sum_e length <B(x_mid, nu_face) eta, g(x_mid)>.
inline VariationReport boundary_first_variation(const TriMesh& mesh, const Integrand& F, const VectorFieldSpec& g,
                                                int threads = 0) {
    VariationReport r;
    if (mesh.faces.empty()) return r;
    const auto geo = mesh_geometry(mesh, threads);
    const MeshTopology topo(mesh);
    std::vector<double> interior(mesh.faces.size());
    parallel_for(mesh.faces.size(), threads, [&](std::size_t f) {
        const Vec x = geo.centroids[f];
        const Vec nu = geo.normals[f];
        const auto S = face_sff(mesh, topo, geo, static_cast<int>(f));
        const Vec H = f_mean_curvature_parametric(F, x, nu, S);
        interior[f] = -geo.areas[f] * H.dot(g.g(x)) * F.eval(x, nu);
    });
    std::vector<double> boundary(geo.boundary_edges.size());
    parallel_for(geo.boundary_edges.size(), threads, [&](std::size_t k) {
        const auto& e = geo.boundary_edges[k];
        const Vec x = e.midpoint;
        const Vec nu = geo.normals[e.face];
        boundary[k] = e.length * (F.b_matrix(x, nu) * Vec(e.conormal)).dot(g.g(x));
    });
    r.interior_term = pairwise_sum(interior);
    r.boundary_term = pairwise_sum(boundary);
    r.value = r.interior_term + r.boundary_term;
    r.quadrature_atoms = static_cast<long>(mesh.faces.size() + geo.boundary_edges.size());
    return r;
}

// ---------------------------------------------------------------------------
// Curvature-bound gap

// Sample points of the closed ball: a cubic lattice clipped to the ball.
inline std::vector<Vec> ball_samples(const Ball& K, int per_axis = 11) {
    const int d = static_cast<int>(K.center.size());
    std::vector<Vec> out;
    std::vector<int> idx(d, 0);
    while (true) {
        Vec x(d);
        for (int k = 0; k < d; ++k) x[k] = K.center[k] + K.radius * (-1.0 + 2.0 * idx[k] / (per_axis - 1));
        if ((x - K.center).norm() <= K.radius) out.push_back(x);
        int k = 0;
        while (k < d && ++idx[k] == per_axis) idx[k++] = 0;
        if (k == d) break;
    }
    return out;
}

// Rescales X so that its sampled sup-norm over K is 0.99.
inline VectorFieldSpec normalize_on_ball(const VectorFieldSpec& X, const Ball& K) {
    double sup = 0.0;
    for (const Vec& x : ball_samples(K, 21)) sup = std::max(sup, X.g(x).norm());
    if (sup == 0.0) return X;
    return scaled_field(X, 0.99 / sup);
}

// Constant +-e_i, dilation about the center, and +-D2F(x, x - c) |x - c|^2 / R^2,
// each cut off by the bump on K and normalized to sup 0.99.
inline std::vector<VectorFieldSpec> default_dictionary(const Integrand& F, const Ball& K) {
    const int d = F.dim();
    std::vector<VectorFieldSpec> raw;
    for (int i = 0; i < d; ++i) {
        for (double s : {1.0, -1.0}) {
            Vec e = Vec::Zero(d);
            e[i] = s;
            raw.push_back(constant_field(e));
        }
    }
    raw.push_back(dilation_field(K.center, 1.0 / K.radius));
    const Vec c = K.center;
    const double R = K.radius;
    for (double s : {1.0, -1.0}) {
        auto X = field_from_function(
            [F, c, R, s](const Vec& x) {
                const Vec v = x - c;
                const double r2 = v.squaredNorm();
                if (r2 == 0.0) return Vec(Vec::Zero(x.size()));
                return Vec(s * r2 / (R * R) * F.d2(x, v));
            },
            "aligned");
        raw.push_back(X);
    }
    std::vector<VectorFieldSpec> out;
    for (const auto& X : raw) out.push_back(normalize_on_ball(bumped_field(X, K.center, K.radius), K));
    return out;
}

// Rejects fields that exceed |X| <= 1 or leave K, by sampling.
inline void check_dictionary(const std::vector<VectorFieldSpec>& dict, const Ball& K, const MeasureSequence& seq) {
    const auto samples = ball_samples(K, 11);
    for (std::size_t j = 0; j < dict.size(); ++j) {
        auto fail = [&](const std::string& why) {
            throw InvalidInput("curvature_gap: dictionary field " + std::to_string(j) + " " + why);
        };
        for (const Vec& x : samples)
            if (dict[j].g(x).norm() > 1.0 + 1e-12) fail("exceeds the unit bound");
        for (const auto& V : seq.entries)
            for (const auto& a : V.atoms()) {
                const double n = dict[j].g(a.x).norm();
                if (n > 1.0 + 1e-12) fail("exceeds the unit bound");
                if ((a.x - K.center).norm() > K.radius && n > 0.0) fail("is not supported in K");
            }
    }
}

// Per entry: max over the dictionary of delta_F V(X) - h sum w |X|_{F*} F.
inline std::vector<double> curvature_gap(const MeasureSequence& seq, const Integrand& F, double h, const Ball& K,
                                         const std::vector<VectorFieldSpec>& dictionary, int threads = 0) {
    check_dictionary(dictionary, K, seq);
    std::vector<double> out;
    for (const auto& V : seq.entries) {
        if (V.empty() || dictionary.empty()) {
            out.push_back(0.0);
            continue;
        }
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& X : dictionary) {
            const double dv = first_variation(V, F, X, threads).value;
            std::vector<double> pen(V.size());
            parallel_for(V.size(), threads, [&](std::size_t i) {
                const Atom& a = V[i];
                const Vec gx = X.g(a.x);
                pen[i] = gx.squaredNorm() == 0.0 ? 0.0 : a.w * F.dual_norm(a.x, gx) * F.eval(a.x, a.nu);
            });
            best = std::max(best, dv - h * pairwise_sum(pen));
        }
        out.push_back(best);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Violating field of the blow-up argument

struct CutoffSpec {
    double radius = 0.5;  // bump radius r around p
    double eta2 = 0.1;    // hinge offset
};

inline double hinge(double t, double eta2) { return t <= -eta2 ? 0.0 : eta2 + t; }
inline double hinge_slope(double t, double eta2) { return t <= -eta2 ? 0.0 : 1.0; }

// Y(x) = -phi(x) eta(f(x)) X(x) with X = D2F(x, Df(x)).
struct ViolatingField {
    Integrand F;
    LevelSetField f;
    Vec p;
    CutoffSpec cutoff;

    Vec X(const Vec& x) const { return F.d2(x, f.grad(x)); }

    // DX = D12^T + D22(x, n) D^2 f / |Df|.
    Mat DX(const Vec& x) const {
        const Vec g = f.grad(x);
        const double gn = g.norm();
        const Vec n = g / gn;
        return Mat(F.d12(x, n).transpose() + F.d22(x, n) * f.hess(x) / gn);
    }

    Vec Y(const Vec& x) const {
        const double phi = bump(x, p, cutoff.radius);
        if (phi == 0.0) return Vec::Zero(x.size());
        const double e = hinge(f.f(x), cutoff.eta2);
        if (e == 0.0) return Vec::Zero(x.size());
        return -phi * e * X(x);
    }

    Mat DY(const Vec& x) const {
        const double phi = bump(x, p, cutoff.radius);
        const int d = static_cast<int>(x.size());
        if (phi == 0.0) return Mat::Zero(d, d);
        const double fx = f.f(x);
        const double e = hinge(fx, cutoff.eta2);
        const double de = hinge_slope(fx, cutoff.eta2);
        if (e == 0.0 && de == 0.0) return Mat::Zero(d, d);
        const Vec Xx = X(x);
        return -(phi * e * DX(x) + phi * de * Xx * f.grad(x).transpose() +
                 e * Xx * bump_gradient(x, p, cutoff.radius).transpose());
    }

    VectorFieldSpec as_field() const {
        const ViolatingField self = *this;
        VectorFieldSpec s;
        s.g = [self](const Vec& x) { return self.Y(x); };
        s.Dg = [self](const Vec& x) { return self.DY(x); };
        s.center = p;
        s.support_radius = cutoff.radius;
        s.name = "violating";
        return s;
    }
};

// Per entry: -delta_F V(Y) - h sum w |Y|_{F*} F.
inline std::vector<double> violating_field_demo(const Integrand& F, const LevelSetField& f, const Vec& p,
                                                const CutoffSpec& cutoff, const MeasureSequence& seq, double h,
                                                int threads = 0) {
    checked_gradient(f, p);
    const double fp = f.f(p);
    for (const auto& V : seq.entries) {
        double nearest = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < V.size(); ++i) {
            if (f.f(V[i].x) > fp + 1e-9 * std::max(1.0, std::abs(fp)))
                throw InvalidInput("violating_field_demo: f exceeds f(p) at atom " + std::to_string(i));
            nearest = std::min(nearest, (V[i].x - p).norm());
        }
        if (nearest > 0.05 * cutoff.radius) throw InvalidInput("violating_field_demo: p is not on the support");
    }
    const ViolatingField vf{F, f, p, cutoff};
    const VectorFieldSpec Y = vf.as_field();
    std::vector<double> out;
    for (const auto& V : seq.entries) {
        const double dv = first_variation(V, F, Y, threads).value;
        std::vector<double> pen(V.size());
        parallel_for(V.size(), threads, [&](std::size_t i) {
            const Atom& a = V[i];
            const Vec y = Y.g(a.x);
            pen[i] = y.squaredNorm() == 0.0 ? 0.0 : a.w * F.dual_norm(a.x, y) * F.eval(a.x, a.nu);
        });
        out.push_back(-dv - h * pairwise_sum(pen));
    }
    return out;
}

}  // namespace aniso
