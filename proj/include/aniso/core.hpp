#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <exception>
#include <thread>
#include <utility>
#include <vector>

namespace aniso {

inline constexpr const char* kVersion = "0.3.0";

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Error hierarchy. Everything the toolkit throws derives from aniso::Error.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class SingularGradient : public Error {
public:
    using Error::Error;
};

class StepTooLarge : public Error {
public:
    using Error::Error;
};

class DegenerateGeometry : public Error {
public:
    DegenerateGeometry(const std::string& what, long index)
        : Error(what + " (index " + std::to_string(index) + ")"), index_(index) {}
    long index() const { return index_; }

private:
    long index_;
};

class NonConvergence : public Error {
public:
    NonConvergence(const std::string& what, std::vector<double> trace)
        : Error(what), trace_(std::move(trace)) {}
    const std::vector<double>& trace() const { return trace_; }

private:
    std::vector<double> trace_;
};

template <typename T>
constexpr T sq(T x) {
    return x * x;
}

// Pairwise (cascade) summation. Fixed recursion order, so results only depend
// on the order of the input.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

template <typename Term>
double pairwise_reduce(std::size_t n, Term&& term) {
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = term(i);
    return pairwise_sum(values);
}

// Thread count used by parallel loops when the caller passes 0.
inline int& default_threads() {
    static int n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

// Static chunking; each index is visited exactly once. Callers write results
// into per-index slots and merge afterwards, which keeps outputs independent
// of the thread count.
template <typename Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
    int t = threads > 0 ? threads : default_threads();
    if (t <= 1 || n < 2 * static_cast<std::size_t>(t)) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(t);
    std::vector<std::exception_ptr> errors(t);
    const std::size_t chunk = (n + t - 1) / t;
    for (int w = 0; w < t; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        pool.emplace_back([&, lo, hi, w] {
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// Flip so that the first nonzero component is positive.
inline Vec canonical_sign(const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (v[i] > 0) return v;
        if (v[i] < 0) return -v;
    }
    return v;
}

inline bool is_canonical(const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (v[i] != 0) return v[i] > 0;
    }
    return true;
}

// Projective distance between unit directions: min(|v+w|, |v-w|).
inline double dist_rp(const Vec& v, const Vec& w) {
    return std::min((v + w).norm(), (v - w).norm());
}

// Orthonormal basis of nu^perp, as columns. Gram-Schmidt over the coordinate
// axes sorted by increasing |nu_k|, so the frame is a deterministic function
// of nu.
inline Mat tangent_frame(const Vec& nu) {
    const int n = static_cast<int>(nu.size());
    const Vec u = nu.normalized();
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return std::abs(u[a]) < std::abs(u[b]); });
    Mat frame(n, n - 1);
    int found = 0;
    for (int k : order) {
        if (found == n - 1) break;
        Vec e = Vec::Zero(n);
        e[k] = 1.0;
        e -= e.dot(u) * u;
        for (int j = 0; j < found; ++j) e -= e.dot(frame.col(j)) * frame.col(j);
        const double len = e.norm();
        if (len < 1e-8) continue;
        frame.col(found++) = e / len;
    }
    if (found != n - 1) throw InvalidInput("tangent_frame: could not complete basis");
    return frame;
}

// Deterministic, roughly uniform directions on S^{dim-1}, as columns.
// dim 2: equally spaced angles; dim 3: spherical Fibonacci lattice;
// otherwise normalized Gaussian samples from a fixed seed.
inline Mat fibonacci_directions(int dim, int count) {
    if (dim < 2 || count < 1) throw InvalidInput("fibonacci_directions: bad arguments");
    Mat out(dim, count);
    if (dim == 2) {
        for (int i = 0; i < count; ++i) {
            const double a = 2.0 * std::numbers::pi * (i + 0.5) / count;
            out(0, i) = std::cos(a);
            out(1, i) = std::sin(a);
        }
        return out;
    }
    if (dim == 3) {
        const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
        for (int i = 0; i < count; ++i) {
            const double z = 1.0 - 2.0 * (i + 0.5) / count;
            const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            const double a = golden * i;
            out(0, i) = r * std::cos(a);
            out(1, i) = r * std::sin(a);
            out(2, i) = z;
        }
        return out;
    }
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> g;
    for (int i = 0; i < count; ++i) {
        Vec v(dim);
        for (int k = 0; k < dim; ++k) v[k] = g(rng);
        out.col(i) = v.normalized();
    }
    return out;
}

inline constexpr int kDefaultDirectionGrid = 2048;

// Uniform random unit vector.
template <typename Rng>
Vec random_unit(int dim, Rng& rng) {
    std::normal_distribution<double> g;
    Vec v(dim);
    do {
        for (int k = 0; k < dim; ++k) v[k] = g(rng);
    } while (v.norm() < 1e-12);
    return v.normalized();
}

// C^2 cutoff profile: 1 on [0, 1/2], 0 on [1, inf), quintic smoothstep between.
struct BumpProfile {
    static double value(double t) {
        if (t <= 0.5) return 1.0;
        if (t >= 1.0) return 0.0;
        const double s = 2.0 * (t - 0.5);
        return 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
    }
    static double derivative(double t) {
        if (t <= 0.5 || t >= 1.0) return 0.0;
        const double s = 2.0 * (t - 0.5);
        return -2.0 * 30.0 * s * s * (1.0 - s) * (1.0 - s);
    }
};

// phi(x) = profile(|x - c| / R), with gradient.
inline double bump(const Vec& x, const Vec& center, double radius) {
    return BumpProfile::value((x - center).norm() / radius);
}

inline Vec bump_gradient(const Vec& x, const Vec& center, double radius) {
    const Vec d = x - center;
    const double r = d.norm();
    if (r == 0.0) return Vec::Zero(x.size());
    return BumpProfile::derivative(r / radius) / radius * d / r;
}

// FNV-1a, used for scenario hashes in reports.
inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace aniso
