#pragma once

#include "aniso/core.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <functional>
#include <memory>
#include <optional>

namespace aniso {

enum class DerivativeMode { analytic, finite_difference };

// All derivative objects of F at one (x, nu). d12(i, j) = d/dx_i of F_j.
struct DerivativeBundle {
    Vec d1;
    Vec d2;
    Mat d22;
    Mat d12;
    double trace_d12 = 0.0;
};

// A model supplies values and, optionally, analytic derivatives. Missing hooks
// are filled in by central differences in the Integrand wrapper. Models are
// evaluated on arbitrary nonzero nu and must be even and one-homogeneous.
class IntegrandModel {
public:
    virtual ~IntegrandModel() = default;
    virtual int dim() const = 0;
    virtual std::string kind() const = 0;
    virtual bool depends_on_x() const = 0;
    virtual double value(const Vec& x, const Vec& nu) const = 0;
    virtual std::optional<Vec> gradient_nu(const Vec&, const Vec&) const { return std::nullopt; }
    virtual std::optional<Mat> hessian_nu(const Vec&, const Vec&) const { return std::nullopt; }
    virtual std::optional<Vec> gradient_x(const Vec&, const Vec&) const { return std::nullopt; }
    virtual std::optional<Mat> mixed(const Vec&, const Vec&) const { return std::nullopt; }
    virtual std::optional<double> dual(const Vec&, const Vec&) const { return std::nullopt; }
};

class Integrand {
public:
    Integrand() = default;
    explicit Integrand(std::shared_ptr<const IntegrandModel> model,
                       DerivativeMode mode = DerivativeMode::analytic)
        : model_(std::move(model)), mode_(mode) {
        if (!model_) throw InvalidInput("Integrand: null model");
    }

    int dim() const { return model_->dim(); }
    std::string kind() const { return model_->kind(); }
    bool has_x_dependence() const { return model_->depends_on_x(); }
    DerivativeMode mode() const { return mode_; }
    const IntegrandModel& model() const { return *model_; }
    const std::shared_ptr<const IntegrandModel>& model_ptr() const { return model_; }

    Integrand with_mode(DerivativeMode mode) const { return Integrand(model_, mode); }

    double eval(const Vec& x, const Vec& nu) const {
        check(x, nu);
        return model_->value(x, canonical_sign(nu));
    }

    Vec d1(const Vec& x, const Vec& nu) const {
        check(x, nu);
        const Vec n = canonical_sign(nu);
        if (!has_x_dependence()) return Vec::Zero(dim());
        if (analytic())
            if (auto g = model_->gradient_x(x, n)) return *g;
        Vec out(dim());
        for (int i = 0; i < dim(); ++i) {
            const double h = fd_step(x);
            Vec xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            out[i] = (model_->value(xp, n) - model_->value(xm, n)) / (xp[i] - xm[i]);
        }
        return out;
    }

    Vec d2(const Vec& x, const Vec& nu) const {
        check(x, nu);
        const Vec n = canonical_sign(nu);
        const double s = n == nu ? 1.0 : -1.0;
        return s * d2_canonical(x, n);
    }

    Mat d22(const Vec& x, const Vec& nu) const {
        check(x, nu);
        return d22_canonical(x, canonical_sign(nu));
    }

    Mat d12(const Vec& x, const Vec& nu) const {
        check(x, nu);
        const Vec n = canonical_sign(nu);
        const double s = n == nu ? 1.0 : -1.0;
        return s * d12_canonical(x, n);
    }

    double trace_d12(const Vec& x, const Vec& nu) const { return d12(x, nu).trace(); }

    DerivativeBundle derivative_bundle(const Vec& x, const Vec& nu) const {
        DerivativeBundle b;
        b.d1 = d1(x, nu);
        b.d2 = d2(x, nu);
        b.d22 = d22(x, nu);
        b.d12 = d12(x, nu);
        b.trace_d12 = b.d12.trace();
        return b;
    }

    double euler_residual(const Vec& x, const Vec& nu) const {
        return d2(x, nu).dot(nu) - eval(x, nu);
    }

    // B = F Id - nu (x) D2F, so that B:Dg = F div g - <nu, Dg D2F>.
    Mat b_matrix(const Vec& x, const Vec& nu) const {
        return eval(x, nu) * Mat::Identity(dim(), dim()) - nu * d2(x, nu).transpose();
    }

    double dual_norm(const Vec& x, const Vec& w) const {
        if (w.size() != dim() || x.size() != dim()) throw InvalidInput("dual_norm: dimension mismatch");
        if (w.norm() == 0.0) return 0.0;
        if (auto d = model_->dual(x, w)) return *d;
        return dual_norm_iterative(x, w);
    }

    // Projected gradient ascent of <u, w> / F(x, u) over the unit sphere,
    // Barzilai-Borwein trial steps with Armijo backtracking.
    double dual_norm_iterative(const Vec& x, const Vec& w) const {
        if (w.size() != dim() || x.size() != dim()) throw InvalidInput("dual_norm: dimension mismatch");
        const double wn = w.norm();
        if (wn == 0.0) return 0.0;
        auto objective = [&](const Vec& u) { return u.dot(w) / model_->value(x, u); };
        auto gradient = [&](const Vec& u) {
            const double f = model_->value(x, u);
            Vec grad = w / f - u.dot(w) / (f * f) * d2_canonical_any(x, u);
            return Vec(grad - grad.dot(u) * u);
        };
        Vec u = w / wn;
        double g = objective(u);
        Vec grad = gradient(u);
        double step = model_->value(x, u) / wn;
        std::vector<double> trace{g};
        for (int it = 0; it < 200; ++it) {
            const double gn2 = grad.squaredNorm();
            if (gn2 == 0.0) return g;
            double t = step;
            bool accepted = false;
            Vec candidate;
            double gc = g;
            for (int k = 0; k < 60; ++k) {
                candidate = (u + t * grad).normalized();
                gc = objective(candidate);
                if (gc >= g + 1e-4 * t * gn2) {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if (!accepted) return g;
            const Vec next_grad = gradient(candidate);
            const Vec s = candidate - u;
            const Vec y = next_grad - grad;
            const double sy = s.dot(y);
            step = sy < 0.0 ? s.squaredNorm() / -sy : 2.0 * t;
            const double delta = gc - g;
            u = candidate;
            g = gc;
            grad = next_grad;
            trace.push_back(g);
            if (std::abs(delta) < 1e-12) return g;
        }
        throw NonConvergence("dual_norm: ascent did not converge in 200 iterations", trace);
    }

private:
    bool analytic() const { return mode_ == DerivativeMode::analytic; }

    void check(const Vec& x, const Vec& nu) const {
        if (x.size() != dim() || nu.size() != dim())
            throw InvalidInput("integrand: expected vectors of dimension " + std::to_string(dim()));
        if (!(nu.squaredNorm() > 0.0)) throw InvalidInput("integrand: zero direction");
    }

    static double fd_step(const Vec& v) {
        return std::cbrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, v.norm());
    }
    static double fd_step2(const Vec& v) {
        return std::pow(std::numeric_limits<double>::epsilon(), 0.25) * std::max(1.0, v.norm());
    }

    // Gradient in nu for a direction that need not be canonical.
    Vec d2_canonical_any(const Vec& x, const Vec& u) const {
        const Vec n = canonical_sign(u);
        return n == u ? d2_canonical(x, n) : Vec(-d2_canonical(x, n));
    }

    Vec d2_canonical(const Vec& x, const Vec& n) const {
        if (analytic())
            if (auto g = model_->gradient_nu(x, n)) return *g;
        Vec out(dim());
        const double h = fd_step(n);
        for (int j = 0; j < dim(); ++j) {
            Vec np = n, nm = n;
            np[j] += h;
            nm[j] -= h;
            out[j] = (model_->value(x, np) - model_->value(x, nm)) / (np[j] - nm[j]);
        }
        return out;
    }

    Mat d22_canonical(const Vec& x, const Vec& n) const {
        if (analytic()) {
            if (auto H = model_->hessian_nu(x, n)) return *H;
            if (model_->gradient_nu(x, n)) {
                Mat H(dim(), dim());
                const double h = fd_step(n);
                for (int i = 0; i < dim(); ++i) {
                    Vec np = n, nm = n;
                    np[i] += h;
                    nm[i] -= h;
                    H.col(i) = (*model_->gradient_nu(x, np) - *model_->gradient_nu(x, nm)) / (np[i] - nm[i]);
                }
                return 0.5 * (H + H.transpose());
            }
        }
        return hessian_from_values([&](const Vec& v) { return model_->value(x, v); }, n);
    }

    Mat d12_canonical(const Vec& x, const Vec& n) const {
        if (!has_x_dependence()) return Mat::Zero(dim(), dim());
        if (analytic()) {
            if (auto M = model_->mixed(x, n)) return *M;
            if (model_->gradient_nu(x, n)) {
                Mat M(dim(), dim());
                const double h = fd_step(x);
                for (int i = 0; i < dim(); ++i) {
                    Vec xp = x, xm = x;
                    xp[i] += h;
                    xm[i] -= h;
                    M.row(i) = ((*model_->gradient_nu(xp, n) - *model_->gradient_nu(xm, n)) / (xp[i] - xm[i]))
                                   .transpose();
                }
                return M;
            }
        }
        // Mixed second differences of values.
        Mat M(dim(), dim());
        const double hx = fd_step2(x);
        const double hn = fd_step2(n);
        for (int i = 0; i < dim(); ++i) {
            Vec xp = x, xm = x;
            xp[i] += hx;
            xm[i] -= hx;
            for (int j = 0; j < dim(); ++j) {
                Vec np = n, nm = n;
                np[j] += hn;
                nm[j] -= hn;
                M(i, j) = (model_->value(xp, np) - model_->value(xp, nm) - model_->value(xm, np) +
                           model_->value(xm, nm)) /
                          ((xp[i] - xm[i]) * (np[j] - nm[j]));
            }
        }
        return M;
    }

    template <typename Fn>
    Mat hessian_from_values(Fn&& f, const Vec& v) const {
        const int d = dim();
        Mat H(d, d);
        const double h = fd_step2(v);
        const double f0 = f(v);
        for (int i = 0; i < d; ++i) {
            Vec p = v, m = v;
            p[i] += h;
            m[i] -= h;
            H(i, i) = (f(p) - 2.0 * f0 + f(m)) / (h * h);
            for (int j = i + 1; j < d; ++j) {
                Vec pp = v, pm = v, mp = v, mm = v;
                pp[i] += h, pp[j] += h;
                pm[i] += h, pm[j] -= h;
                mp[i] -= h, mp[j] += h;
                mm[i] -= h, mm[j] -= h;
                H(i, j) = H(j, i) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h * h);
            }
        }
        return H;
    }

    std::shared_ptr<const IntegrandModel> model_;
    DerivativeMode mode_ = DerivativeMode::analytic;
};

// ---------------------------------------------------------------------------
// Built-in models

class AreaModel final : public IntegrandModel {
public:
    explicit AreaModel(int dim) : dim_(dim) {}
    int dim() const override { return dim_; }
    std::string kind() const override { return "area"; }
    bool depends_on_x() const override { return false; }
    double value(const Vec&, const Vec& nu) const override { return nu.norm(); }
    std::optional<Vec> gradient_nu(const Vec&, const Vec& nu) const override { return Vec(nu / nu.norm()); }
    std::optional<Mat> hessian_nu(const Vec&, const Vec& nu) const override {
        const double r = nu.norm();
        const Vec u = nu / r;
        return Mat((Mat::Identity(dim_, dim_) - u * u.transpose()) / r);
    }
    std::optional<Vec> gradient_x(const Vec&, const Vec&) const override { return Vec(Vec::Zero(dim_)); }
    std::optional<Mat> mixed(const Vec&, const Vec&) const override { return Mat(Mat::Zero(dim_, dim_)); }
    std::optional<double> dual(const Vec&, const Vec& w) const override { return w.norm(); }

private:
    int dim_;
};

// F(nu) = sqrt(nu^T A nu) with A symmetric positive definite.
class QuadraticModel final : public IntegrandModel {
public:
    explicit QuadraticModel(Mat A) : A_(std::move(A)) {
        if (A_.rows() != A_.cols() || A_.rows() < 2) throw InvalidInput("quadratic: A must be square");
        if ((A_ - A_.transpose()).norm() > 1e-12 * (1.0 + A_.norm()))
            throw InvalidInput("quadratic: A must be symmetric");
        Eigen::LLT<Mat> llt(A_);
        if (llt.info() != Eigen::Success) throw InvalidInput("quadratic: A must be positive definite");
        Ainv_ = llt.solve(Mat::Identity(A_.rows(), A_.cols()));
    }
    const Mat& matrix() const { return A_; }
    int dim() const override { return static_cast<int>(A_.rows()); }
    std::string kind() const override { return "quadratic"; }
    bool depends_on_x() const override { return false; }
    double value(const Vec&, const Vec& nu) const override { return std::sqrt(nu.dot(A_ * nu)); }
    std::optional<Vec> gradient_nu(const Vec& x, const Vec& nu) const override {
        return Vec(A_ * nu / value(x, nu));
    }
    std::optional<Mat> hessian_nu(const Vec& x, const Vec& nu) const override {
        const double f = value(x, nu);
        const Vec an = A_ * nu;
        return Mat(A_ / f - an * an.transpose() / (f * f * f));
    }
    std::optional<Vec> gradient_x(const Vec&, const Vec&) const override { return Vec(Vec::Zero(dim())); }
    std::optional<Mat> mixed(const Vec&, const Vec&) const override { return Mat(Mat::Zero(dim(), dim())); }
    std::optional<double> dual(const Vec&, const Vec& w) const override { return std::sqrt(w.dot(Ainv_ * w)); }

private:
    Mat A_;
    Mat Ainv_;
};

// F(x, nu) = a(x) F0(x, nu), a(x) = 1 + amp sin(<k, x> + phase), |amp| < 1.
class ModulatedModel final : public IntegrandModel {
public:
    ModulatedModel(Integrand base, double amp, Vec k, double phase)
        : base_(std::move(base)), amp_(amp), k_(std::move(k)), phase_(phase) {
        if (!(std::abs(amp_) < 1.0)) throw InvalidInput("modulated: |amplitude| must be < 1");
        if (k_.size() != base_.dim()) throw InvalidInput("modulated: wave vector dimension mismatch");
    }
    int dim() const override { return base_.dim(); }
    std::string kind() const override { return "modulated"; }
    bool depends_on_x() const override { return true; }
    double a(const Vec& x) const { return 1.0 + amp_ * std::sin(k_.dot(x) + phase_); }
    Vec grad_a(const Vec& x) const { return amp_ * std::cos(k_.dot(x) + phase_) * k_; }
    double value(const Vec& x, const Vec& nu) const override { return a(x) * base_.eval(x, nu); }
    std::optional<Vec> gradient_nu(const Vec& x, const Vec& nu) const override {
        return Vec(a(x) * base_.d2(x, nu));
    }
    std::optional<Mat> hessian_nu(const Vec& x, const Vec& nu) const override {
        return Mat(a(x) * base_.d22(x, nu));
    }
    std::optional<Vec> gradient_x(const Vec& x, const Vec& nu) const override {
        return Vec(grad_a(x) * base_.eval(x, nu) + a(x) * base_.d1(x, nu));
    }
    std::optional<Mat> mixed(const Vec& x, const Vec& nu) const override {
        return Mat(grad_a(x) * base_.d2(x, nu).transpose() + a(x) * base_.d12(x, nu));
    }
    std::optional<double> dual(const Vec& x, const Vec& w) const override {
        if (base_.has_x_dependence()) return std::nullopt;
        return base_.dual_norm(x, w) / a(x);
    }
    const Integrand& base() const { return base_; }

private:
    Integrand base_;
    double amp_;
    Vec k_;
    double phase_;
};

// F(nu) = (sum |nu_i|^p + eps |nu|^p)^(1/p), p >= 2, eps > 0.
class LpSmoothedModel final : public IntegrandModel {
public:
    LpSmoothedModel(int dim, double p, double eps) : dim_(dim), p_(p), eps_(eps) {
        if (dim < 2) throw InvalidInput("lp_smoothed: dimension must be >= 2");
        if (!(p >= 2.0)) throw InvalidInput("lp_smoothed: p must be >= 2");
        if (!(eps > 0.0)) throw InvalidInput("lp_smoothed: eps must be > 0");
    }
    int dim() const override { return dim_; }
    std::string kind() const override { return "lp_smoothed"; }
    bool depends_on_x() const override { return false; }
    double value(const Vec&, const Vec& nu) const override { return std::pow(sum(nu), 1.0 / p_); }
    std::optional<Vec> gradient_nu(const Vec& x, const Vec& nu) const override {
        const double f = value(x, nu);
        return Vec(std::pow(f, 1.0 - p_) * g(nu));
    }
    std::optional<Mat> hessian_nu(const Vec& x, const Vec& nu) const override {
        const double f = value(x, nu);
        const Vec gv = g(nu);
        const Vec fi = std::pow(f, 1.0 - p_) * gv;
        const double r = nu.norm();
        Mat gij = eps_ * (std::pow(r, p_ - 2.0) * Mat::Identity(dim_, dim_) +
                          (p_ - 2.0) * std::pow(r, p_ - 4.0) * nu * nu.transpose());
        for (int i = 0; i < dim_; ++i) gij(i, i) += (p_ - 1.0) * std::pow(std::abs(nu[i]), p_ - 2.0);
        return Mat((1.0 - p_) * std::pow(f, -p_) * gv * fi.transpose() + std::pow(f, 1.0 - p_) * gij);
    }
    std::optional<Vec> gradient_x(const Vec&, const Vec&) const override { return Vec(Vec::Zero(dim_)); }
    std::optional<Mat> mixed(const Vec&, const Vec&) const override { return Mat(Mat::Zero(dim_, dim_)); }

private:
    double sum(const Vec& nu) const {
        double s = eps_ * std::pow(nu.norm(), p_);
        for (int i = 0; i < dim_; ++i) s += std::pow(std::abs(nu[i]), p_);
        return s;
    }
    Vec g(const Vec& nu) const {
        Vec out = eps_ * std::pow(nu.norm(), p_ - 2.0) * nu;
        for (int i = 0; i < dim_; ++i) out[i] += std::pow(std::abs(nu[i]), p_ - 2.0) * nu[i];
        return out;
    }

    int dim_;
    double p_;
    double eps_;
};

// x -> F(p, nu).
class FrozenModel final : public IntegrandModel {
public:
    FrozenModel(Integrand base, Vec p) : base_(std::move(base)), p_(std::move(p)) {}
    int dim() const override { return base_.dim(); }
    std::string kind() const override { return "frozen"; }
    bool depends_on_x() const override { return false; }
    double value(const Vec&, const Vec& nu) const override { return base_.eval(p_, nu); }
    std::optional<Vec> gradient_nu(const Vec&, const Vec& nu) const override { return base_.d2(p_, nu); }
    std::optional<Mat> hessian_nu(const Vec&, const Vec& nu) const override { return base_.d22(p_, nu); }
    std::optional<Vec> gradient_x(const Vec&, const Vec&) const override { return Vec(Vec::Zero(dim())); }
    std::optional<Mat> mixed(const Vec&, const Vec&) const override { return Mat(Mat::Zero(dim(), dim())); }
    std::optional<double> dual(const Vec&, const Vec& w) const override { return base_.dual_norm(p_, w); }

private:
    Integrand base_;
    Vec p_;
};

// x -> F(p + r x, nu).
class RescaledModel final : public IntegrandModel {
public:
    RescaledModel(Integrand base, Vec p, double r) : base_(std::move(base)), p_(std::move(p)), r_(r) {}
    int dim() const override { return base_.dim(); }
    std::string kind() const override { return "rescaled"; }
    bool depends_on_x() const override { return base_.has_x_dependence(); }
    double value(const Vec& x, const Vec& nu) const override { return base_.eval(y(x), nu); }
    std::optional<Vec> gradient_nu(const Vec& x, const Vec& nu) const override { return base_.d2(y(x), nu); }
    std::optional<Mat> hessian_nu(const Vec& x, const Vec& nu) const override { return base_.d22(y(x), nu); }
    std::optional<Vec> gradient_x(const Vec& x, const Vec& nu) const override {
        return Vec(r_ * base_.d1(y(x), nu));
    }
    std::optional<Mat> mixed(const Vec& x, const Vec& nu) const override { return Mat(r_ * base_.d12(y(x), nu)); }
    std::optional<double> dual(const Vec& x, const Vec& w) const override { return base_.dual_norm(y(x), w); }

private:
    Vec y(const Vec& x) const { return p_ + r_ * x; }
    Integrand base_;
    Vec p_;
    double r_;
};

inline Integrand area_integrand(int dim) { return Integrand(std::make_shared<AreaModel>(dim)); }

inline Integrand quadratic_integrand(const Mat& A) { return Integrand(std::make_shared<QuadraticModel>(A)); }

inline Integrand modulated_integrand(const Integrand& base, double amplitude, const Vec& wave, double phase) {
    return Integrand(std::make_shared<ModulatedModel>(base, amplitude, wave, phase));
}

inline Integrand lp_smoothed_integrand(int dim, double p, double eps) {
    return Integrand(std::make_shared<LpSmoothedModel>(dim, p, eps));
}

inline Integrand freeze(const Integrand& F, const Vec& p) {
    if (p.size() != F.dim()) throw InvalidInput("freeze: point dimension mismatch");
    if (!F.has_x_dependence()) return F;
    return Integrand(std::make_shared<FrozenModel>(F, p), F.mode());
}

inline Integrand rescale_integrand(const Integrand& F, const Vec& p, double r) {
    if (!(r > 0)) throw InvalidInput("rescale: r must be positive");
    if (p.size() != F.dim()) throw InvalidInput("rescale: point dimension mismatch");
    if (!F.has_x_dependence()) return F;
    return Integrand(std::make_shared<RescaledModel>(F, p, r), F.mode());
}

// ---------------------------------------------------------------------------
// Diffeomorphisms

struct Diffeomorphism {
    std::function<Vec(const Vec&)> map;
    std::function<Vec(const Vec&)> inverse;
    std::function<Mat(const Vec&)> jacobian;          // dPhi at a source point
    std::function<Mat(const Vec&)> inverse_jacobian;  // dPhi^{-1} at a target point
    bool affine = false;
    std::string name = "custom";
};

inline Diffeomorphism affine_map(const Mat& M, const Vec& b, std::string name = "affine") {
    Eigen::FullPivLU<Mat> lu(M);
    if (!lu.isInvertible()) throw InvalidInput("affine_map: singular matrix");
    const Mat Minv = lu.inverse();
    Diffeomorphism d;
    d.map = [M, b](const Vec& x) { return Vec(M * x + b); };
    d.inverse = [Minv, b](const Vec& y) { return Vec(Minv * (y - b)); };
    d.jacobian = [M](const Vec&) { return M; };
    d.inverse_jacobian = [Minv](const Vec&) { return Minv; };
    d.affine = true;
    d.name = std::move(name);
    return d;
}

inline Diffeomorphism identity_map(int dim) {
    return affine_map(Mat::Identity(dim, dim), Vec::Zero(dim), "identity");
}

inline Diffeomorphism dilation(int dim, double r, const Vec& center) {
    if (!(r > 0)) throw InvalidInput("dilation: factor must be positive");
    return affine_map(r * Mat::Identity(dim, dim), center - r * center, "dilation");
}

inline Diffeomorphism rotation(const Mat& R) {
    if ((R.transpose() * R - Mat::Identity(R.rows(), R.cols())).norm() > 1e-10)
        throw InvalidInput("rotation: matrix is not orthogonal");
    return affine_map(R, Vec::Zero(R.rows()), "rotation");
}

// x_3 += beta x_1^2 (dimension 3).
inline Diffeomorphism bend_map(double beta) {
    Diffeomorphism d;
    d.map = [beta](const Vec& x) {
        Vec y = x;
        y[2] += beta * x[0] * x[0];
        return y;
    };
    d.inverse = [beta](const Vec& y) {
        Vec x = y;
        x[2] -= beta * y[0] * y[0];
        return x;
    };
    d.jacobian = [beta](const Vec& x) {
        Mat J = Mat::Identity(3, 3);
        J(2, 0) = 2.0 * beta * x[0];
        return J;
    };
    d.inverse_jacobian = [beta](const Vec& y) {
        Mat J = Mat::Identity(3, 3);
        J(2, 0) = -2.0 * beta * y[0];
        return J;
    };
    d.name = "bend";
    return d;
}

// (Phi#F)(x, nu) = F(Phi^{-1} x, dPhi^T nu) |det dPhi^{-1}(x)|.
class PushforwardModel final : public IntegrandModel {
public:
    PushforwardModel(Integrand base, Diffeomorphism phi) : base_(std::move(base)), phi_(std::move(phi)) {}
    int dim() const override { return base_.dim(); }
    std::string kind() const override { return "pushforward"; }
    bool depends_on_x() const override { return base_.has_x_dependence() || !phi_.affine; }
    double value(const Vec& x, const Vec& nu) const override {
        const Local l = local(x);
        return base_.eval(l.y, l.J.transpose() * nu) / l.det;
    }
    std::optional<Vec> gradient_nu(const Vec& x, const Vec& nu) const override {
        const Local l = local(x);
        return Vec(l.J * base_.d2(l.y, l.J.transpose() * nu) / l.det);
    }
    std::optional<Mat> hessian_nu(const Vec& x, const Vec& nu) const override {
        const Local l = local(x);
        return Mat(l.J * base_.d22(l.y, l.J.transpose() * nu) * l.J.transpose() / l.det);
    }
    std::optional<Vec> gradient_x(const Vec&, const Vec&) const override {
        if (!depends_on_x()) return Vec(Vec::Zero(dim()));
        return std::nullopt;
    }
    std::optional<Mat> mixed(const Vec&, const Vec&) const override {
        if (!depends_on_x()) return Mat(Mat::Zero(dim(), dim()));
        return std::nullopt;
    }

private:
    struct Local {
        Vec y;
        Mat J;
        double det;
    };
    Local local(const Vec& x) const {
        Local l;
        l.y = phi_.inverse(x);
        l.J = phi_.jacobian(l.y);
        l.det = std::abs(l.J.determinant());
        if (!(l.det > 1e-14)) throw InvalidInput("pushforward: singular Jacobian");
        return l;
    }
    Integrand base_;
    Diffeomorphism phi_;
};

inline Integrand pushforward_integrand(const Integrand& F, const Diffeomorphism& phi) {
    return Integrand(std::make_shared<PushforwardModel>(F, phi), F.mode());
}

// ---------------------------------------------------------------------------
// Ellipticity

struct EllipticityReport {
    double lambda_min = std::numeric_limits<double>::infinity();
    long sample_count = 0;
    Vec worst_point;
    Vec worst_direction;
    Vec worst_tangent;
};

// Minimum over sample points and grid directions of the smallest eigenvalue
// of D22F restricted to nu^perp.
inline EllipticityReport ellipticity_lambda(const Integrand& F, const std::vector<Vec>& samples,
                                            int directions = kDefaultDirectionGrid) {
    if (samples.empty()) throw InvalidInput("ellipticity_lambda: no sample points");
    const Mat grid = fibonacci_directions(F.dim(), directions);
    EllipticityReport rep;
    for (const Vec& x : samples) {
        for (int j = 0; j < grid.cols(); ++j) {
            const Vec nu = grid.col(j);
            const Mat T = tangent_frame(nu);
            const Mat M = T.transpose() * F.d22(x, nu) * T;
            Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (M + M.transpose()));
            ++rep.sample_count;
            if (es.eigenvalues()[0] < rep.lambda_min) {
                rep.lambda_min = es.eigenvalues()[0];
                rep.worst_point = x;
                rep.worst_direction = nu;
                rep.worst_tangent = T * es.eigenvectors().col(0);
            }
        }
    }
    return rep;
}

}  // namespace aniso
