#pragma once

#include "aniso/core.hpp"

#include <unordered_map>

namespace aniso {

// Uniform hash grid over a column-major point matrix (dim x n), dim <= 3.
// Used for ball queries and nearest neighbours on clouds and atom sets.
class PointIndex {
public:
    PointIndex() = default;

    PointIndex(const Mat& points, double cell) : points_(&points), cell_(cell) {
        if (!(cell > 0)) throw InvalidInput("PointIndex: cell size must be positive");
        if (points.rows() > 3) throw InvalidInput("PointIndex: dimension > 3 not supported");
        for (Eigen::Index i = 0; i < points.cols(); ++i) {
            buckets_[key(coords(points.col(i)))].push_back(static_cast<int>(i));
        }
    }

    // Calls fn(i) for each point with |p_i - q| < r.
    template <typename Fn>
    void for_each_within(const Vec& q, double r, Fn&& fn) const {
        if (points_ == nullptr || points_->cols() == 0) return;
        const int d = static_cast<int>(points_->rows());
        std::array<long, 3> lo{0, 0, 0}, hi{0, 0, 0};
        for (int k = 0; k < d; ++k) {
            lo[k] = static_cast<long>(std::floor((q[k] - r) / cell_));
            hi[k] = static_cast<long>(std::floor((q[k] + r) / cell_));
        }
        const double r2 = r * r;
        std::array<long, 3> c{0, 0, 0};
        for (c[0] = lo[0]; c[0] <= hi[0]; ++c[0])
            for (c[1] = lo[1]; c[1] <= hi[1]; ++c[1])
                for (c[2] = lo[2]; c[2] <= hi[2]; ++c[2]) {
                    auto it = buckets_.find(key(c));
                    if (it == buckets_.end()) continue;
                    for (int i : it->second) {
                        if ((points_->col(i) - q).squaredNorm() < r2) fn(i);
                    }
                }
    }

    // Index of the nearest point and its distance; (-1, inf) when empty.
    std::pair<long, double> nearest(const Vec& q) const {
        if (points_ == nullptr || points_->cols() == 0)
            return {-1, std::numeric_limits<double>::infinity()};
        long best = -1;
        double best2 = std::numeric_limits<double>::infinity();
        const int d = static_cast<int>(points_->rows());
        const auto qc = coords(q);
        for (long ring = 0;; ++ring) {
            // Every unvisited cell is at least (ring - 1) * cell away.
            if (best >= 0 && sq(std::max(0.0, (ring - 1) * cell_)) > best2) break;
            if (ring > max_ring_) break;
            // Sparse neighbourhoods: scanning every point is cheaper than more rings.
            if (static_cast<double>(std::pow(2 * ring + 1, d)) > 4.0 * static_cast<double>(points_->cols())) {
                best = -1;
                best2 = std::numeric_limits<double>::infinity();
                break;
            }
            std::array<long, 3> c{0, 0, 0};
            const long r0 = ring;
            const long x0 = qc[0] - r0, x1 = qc[0] + r0;
            const long y0 = d > 1 ? qc[1] - r0 : 0, y1 = d > 1 ? qc[1] + r0 : 0;
            const long z0 = d > 2 ? qc[2] - r0 : 0, z1 = d > 2 ? qc[2] + r0 : 0;
            for (c[0] = x0; c[0] <= x1; ++c[0])
                for (c[1] = y0; c[1] <= y1; ++c[1])
                    for (c[2] = z0; c[2] <= z1; ++c[2]) {
                        const bool shell = std::abs(c[0] - qc[0]) == r0 ||
                                           (d > 1 && std::abs(c[1] - qc[1]) == r0) ||
                                           (d > 2 && std::abs(c[2] - qc[2]) == r0);
                        if (!shell) continue;
                        auto it = buckets_.find(key(c));
                        if (it == buckets_.end()) continue;
                        for (int i : it->second) {
                            const double d2 = (points_->col(i) - q).squaredNorm();
                            if (d2 < best2 || (d2 == best2 && i < best)) {
                                best2 = d2;
                                best = i;
                            }
                        }
                    }
        }
        if (best < 0) {
            for (Eigen::Index i = 0; i < points_->cols(); ++i) {
                const double d2 = (points_->col(i) - q).squaredNorm();
                if (d2 < best2) {
                    best2 = d2;
                    best = static_cast<long>(i);
                }
            }
        }
        return {best, std::sqrt(best2)};
    }

    double cell() const { return cell_; }

private:
    std::array<long, 3> coords(const Vec& p) const {
        std::array<long, 3> c{0, 0, 0};
        for (Eigen::Index k = 0; k < p.size(); ++k) {
            c[k] = static_cast<long>(std::floor(p[k] / cell_));
            max_ring_ = std::max(max_ring_, std::abs(c[k]) * 2 + 2);
        }
        return c;
    }

    static std::uint64_t key(const std::array<long, 3>& c) {
        constexpr long off = 1L << 20;
        auto pack = [](long v) { return static_cast<std::uint64_t>((v + off) & ((1L << 21) - 1)); };
        return pack(c[0]) | (pack(c[1]) << 21) | (pack(c[2]) << 42);
    }

    const Mat* points_ = nullptr;
    double cell_ = 1.0;
    mutable long max_ring_ = 2;
    std::unordered_map<std::uint64_t, std::vector<int>> buckets_;
};

}  // namespace aniso
