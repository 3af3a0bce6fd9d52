#pragma once

#include "aniso/mhset.hpp"
#include "aniso/spatial.hpp"
#include "aniso/varifold.hpp"

namespace aniso {

// Regular lattice lo + spacing * (i_0, ..., i_{d-1}), 0 <= i_k < counts[k].
struct Lattice {
    Vec lo;
    double spacing = 1.0;
    std::vector<long> counts;

    static Lattice box(const Vec& lo, const Vec& hi, double spacing) {
        if (!(spacing > 0)) throw InvalidInput("Lattice: spacing must be positive");
        if (lo.size() != hi.size() || ((hi - lo).array() < 0).any()) throw InvalidInput("Lattice: bad box");
        Lattice L;
        L.lo = lo;
        L.spacing = spacing;
        for (Eigen::Index k = 0; k < lo.size(); ++k)
            L.counts.push_back(static_cast<long>(std::floor((hi[k] - lo[k]) / spacing + 1e-9)) + 1);
        return L;
    }

    int dim() const { return static_cast<int>(lo.size()); }

    std::size_t size() const {
        std::size_t n = 1;
        for (long c : counts) n *= static_cast<std::size_t>(c);
        return n;
    }

    Vec node(std::size_t index) const {
        Vec x = lo;
        for (std::size_t k = 0; k < counts.size(); ++k) {
            x[k] += spacing * static_cast<double>(index % counts[k]);
            index /= counts[k];
        }
        return x;
    }

    Vec hi() const {
        Vec h = lo;
        for (std::size_t k = 0; k < counts.size(); ++k) h[k] += spacing * static_cast<double>(counts[k] - 1);
        return h;
    }
};

namespace detail {

inline void require_sequence(const MeasureSequence& seq, int tail, const char* who) {
    if (seq.size() == 0) throw InvalidInput(std::string(who) + ": empty sequence");
    if (tail < 1 || static_cast<std::size_t>(tail) > seq.size())
        throw InvalidInput(std::string(who) + ": tail must lie in [1, sequence length]");
    const int d = seq.entries[0].dim();
    for (const auto& V : seq.entries)
        if (V.dim() != d) throw InvalidInput(std::string(who) + ": entries differ in dimension");
}

// Masses of one varifold in open balls of radius r around each node.
inline std::vector<double> ball_masses(const DiscreteVarifold& V, const Lattice& grid, double r, int threads) {
    std::vector<double> out(grid.size(), 0.0);
    if (V.empty()) return out;
    const Mat P = V.positions();
    if (P.rows() <= 3) {
        const PointIndex index(P, r);
        parallel_for(grid.size(), threads, [&](std::size_t i) {
            std::vector<double> w;
            index.for_each_within(grid.node(i), r, [&](int a) { w.push_back(V[a].w); });
            out[i] = pairwise_sum(w);
        });
    } else {
        parallel_for(grid.size(), threads, [&](std::size_t i) { out[i] = mass_in_ball(V, grid.node(i), r); });
    }
    return out;
}

}  // namespace detail

// Min over the last `tail` entries of the mass of B_r(node), per lattice node.
inline std::vector<double> density_map(const MeasureSequence& seq, const Lattice& grid, double r, int tail = 3,
                                       int threads = 0) {
    detail::require_sequence(seq, tail, "density_map");
    if (!(r > 0)) throw InvalidInput("density_map: radius must be positive");
    if (grid.dim() != seq.entries[0].dim()) throw InvalidInput("density_map: grid dimension mismatch");
    std::vector<double> out(grid.size(), std::numeric_limits<double>::infinity());
    for (std::size_t k = seq.size() - tail; k < seq.size(); ++k) {
        const auto m = detail::ball_masses(seq.entries[k], grid, r, threads);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], m[i]);
    }
    return out;
}

struct DyadicCube {
    Vec center;
    double side = 2.0;
    int depth = 0;

    bool contains(const Vec& x, double slack = 0.0) const {
        return ((x - center).cwiseAbs().array() <= 0.5 * side + slack).all();
    }
};

struct BlowupOptions {
    double g0 = 0.5;        // growth threshold G(k) = g0 * k at the last label
    int tail = 3;
    Vec root_center;        // defaults to the origin
    double root_side = 2.0;
};

struct BlowupReport {
    bool found = false;
    Vec located_point;
    std::vector<DyadicCube> cube_chain;
    std::vector<std::vector<double>> tail_masses;  // per depth, per tail entry
    double growth_threshold = 0.0;
    double root_tail_min = 0.0;
    bool support_ok = false;  // every tail entry has an atom in the deepest cube
    std::string note;
};

// Descends the 2^d-ary dyadic tree from the root cube, always keeping the
// child whose tail-min mass is largest. Cubes are half-open [c - s/2, c + s/2).
inline BlowupReport locate_blowup(const MeasureSequence& seq, int max_depth, const BlowupOptions& opt = {}) {
    detail::require_sequence(seq, opt.tail, "locate_blowup");
    if (max_depth < 0) throw InvalidInput("locate_blowup: max_depth must be >= 0");
    if (!(opt.root_side > 0)) throw InvalidInput("locate_blowup: root side must be positive");
    const int d = seq.entries[0].dim();
    const std::size_t first = seq.size() - opt.tail;
    const std::size_t T = static_cast<std::size_t>(opt.tail);

    DyadicCube cube{opt.root_center.size() == d ? opt.root_center : Vec(Vec::Zero(d)), opt.root_side, 0};
    auto inside = [](const Vec& x, const DyadicCube& c) {
        const Vec lo = c.center.array() - 0.5 * c.side;
        return ((x - lo).array() >= 0).all() && ((x - lo).array() < c.side).all();
    };

    // Atoms of each tail entry that lie in the current cube.
    std::vector<std::vector<int>> live(T);
    std::vector<double> masses(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        const auto& V = seq.entries[first + t];
        std::vector<double> w;
        for (std::size_t i = 0; i < V.size(); ++i)
            if (inside(V[i].x, cube)) {
                live[t].push_back(static_cast<int>(i));
                w.push_back(V[i].w);
            }
        masses[t] = pairwise_sum(w);
    }

    BlowupReport rep;
    rep.growth_threshold = opt.g0 * static_cast<double>(seq.labels.back());
    rep.root_tail_min = *std::min_element(masses.begin(), masses.end());
    rep.cube_chain.push_back(cube);
    rep.tail_masses.push_back(masses);
    if (!(rep.root_tail_min > rep.growth_threshold)) {
        rep.note = "no blow-up: tail-min mass on the root cube does not exceed the growth threshold";
        rep.located_point = cube.center;
        return rep;
    }
    rep.found = true;

    const int children = 1 << d;
    for (int depth = 1; depth <= max_depth; ++depth) {
        const double side = 0.5 * cube.side;
        std::vector<std::vector<std::vector<int>>> split(children, std::vector<std::vector<int>>(T));
        std::vector<std::vector<std::vector<double>>> weights(children, std::vector<std::vector<double>>(T));
        const Vec lo = cube.center.array() - cube.side * 0.5;
        for (std::size_t t = 0; t < T; ++t) {
            const auto& V = seq.entries[first + t];
            for (int i : live[t]) {
                int c = 0;
                for (int k = 0; k < d; ++k)
                    if (V[i].x[k] - lo[k] >= side) c |= 1 << (d - 1 - k);
                split[c][t].push_back(i);
                weights[c][t].push_back(V[i].w);
            }
        }
        int best = 0;
        double best_min = -1.0;
        std::vector<double> best_masses;
        for (int c = 0; c < children; ++c) {
            std::vector<double> m(T);
            for (std::size_t t = 0; t < T; ++t) m[t] = pairwise_sum(weights[c][t]);
            const double mn = *std::min_element(m.begin(), m.end());
            if (mn > best_min) {
                best_min = mn;
                best = c;
                best_masses = m;
            }
        }
        Vec center = lo;
        for (int k = 0; k < d; ++k)
            center[k] += ((best >> (d - 1 - k)) & 1 ? 1.5 : 0.5) * side;
        cube = {center, side, depth};
        live = std::move(split[best]);
        rep.cube_chain.push_back(cube);
        rep.tail_masses.push_back(best_masses);
    }
    rep.located_point = cube.center;
    rep.support_ok = std::all_of(live.begin(), live.end(), [](const auto& v) { return !v.empty(); });
    if (!rep.support_ok) rep.note = "a tail entry has no atom in the deepest cube";
    return rep;
}

// Lattice nodes whose tail-min mass exceeds schedule(last label).
inline PointCloudSet estimate_Z(const MeasureSequence& seq, const Lattice& grid, double r,
                                const std::function<double(double)>& schedule, int tail = 3, int threads = 0) {
    const auto dens = density_map(seq, grid, r, tail, threads);
    const double level = schedule(static_cast<double>(seq.labels.back()));
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < dens.size(); ++i)
        if (dens[i] > level) keep.push_back(i);
    PointCloudSet Z;
    Z.points.resize(grid.dim(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) Z.points.col(static_cast<Eigen::Index>(j)) = grid.node(keep[j]);
    Z.region = Region::box(grid.lo, grid.hi());
    Z.resolution = grid.spacing;
    return Z;
}

}  // namespace aniso
