#pragma once

#include "aniso/surface.hpp"

#include <unordered_map>

namespace aniso {

// Icosahedral sphere: 20 * 4^level faces, outward orientation.
inline TriMesh icosphere(int level, double radius = 1.0, const Vec3& center = Vec3::Zero()) {
    if (level < 0) throw InvalidInput("icosphere: level must be >= 0");
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    TriMesh m;
    m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                  {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& v : m.vertices) v.normalize();
    m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
               {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
               {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int l = 0; l < level; ++l) {
        std::unordered_map<std::uint64_t, int> cache;
        auto midpoint = [&](int a, int b) {
            const std::uint64_t key = (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b);
            auto it = cache.find(key);
            if (it != cache.end()) return it->second;
            m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
            const int id = static_cast<int>(m.vertices.size() - 1);
            cache.emplace(key, id);
            return id;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(m.faces.size() * 4);
        for (const auto& f : m.faces) {
            const int a = midpoint(f[0], f[1]), b = midpoint(f[1], f[2]), c = midpoint(f[2], f[0]);
            next.push_back({f[0], a, c});
            next.push_back({f[1], b, a});
            next.push_back({f[2], c, b});
            next.push_back({a, b, c});
        }
        m.faces.swap(next);
    }
    for (auto& v : m.vertices) v = center + radius * v;
    return m;
}

// Polar patch in the unit disk: rings of radius i/n, `sectors` angular sectors
// spanning `span` radians from angle 0 (closed when span = 2 pi).
// sectors * n^2 faces, counter-clockwise seen from +z.
inline TriMesh sector_patch(int rings, int sectors, double span) {
    if (rings < 1 || sectors < 1) throw InvalidInput("sector_patch: rings and sectors must be positive");
    const bool closed = std::abs(span - 2.0 * std::numbers::pi) < 1e-12;
    TriMesh m;
    std::vector<int> start(rings + 1);
    std::vector<int> count(rings + 1);
    m.vertices.push_back(Vec3::Zero());
    start[0] = 0;
    count[0] = 1;
    for (int i = 1; i <= rings; ++i) {
        start[i] = static_cast<int>(m.vertices.size());
        count[i] = closed ? i * sectors : i * sectors + 1;
        const double r = static_cast<double>(i) / rings;
        for (int j = 0; j < count[i]; ++j) {
            const double a = span * j / (i * sectors);
            m.vertices.emplace_back(r * std::cos(a), r * std::sin(a), 0.0);
        }
    }
    auto index = [&](int ring, int j) {
        if (ring == 0) return 0;
        if (closed) j %= count[ring];
        return start[ring] + j;
    };
    for (int s = 0; s < sectors; ++s) {
        for (int i = 0; i < rings; ++i) {
            for (int k = 0; k <= i; ++k) {
                const int a = index(i, s * i + k);
                const int b0 = index(i + 1, s * (i + 1) + k);
                const int b1 = index(i + 1, s * (i + 1) + k + 1);
                m.faces.push_back({a, b0, b1});
                if (k < i) m.faces.push_back({a, b1, index(i, s * i + k + 1)});
            }
        }
    }
    return m;
}

inline TriMesh flat_disk(int rings, double radius = 1.0) {
    TriMesh m = sector_patch(rings, 6, 2.0 * std::numbers::pi);
    for (auto& v : m.vertices) v *= radius;
    return m;
}

// Upper half {y >= 0} of the disk; the diameter lies on the x axis.
inline TriMesh flat_half_disk(int rings, double radius = 1.0) {
    TriMesh m = sector_patch(rings, 3, std::numbers::pi);
    for (auto& v : m.vertices) v *= radius;
    return m;
}

// Cap of the sphere |x - c| = R around the north pole with polar angle up to
// theta_max; outward orientation.
inline TriMesh spherical_cap(int rings, double R, double theta_max, const Vec3& center = Vec3::Zero()) {
    TriMesh m = sector_patch(rings, 6, 2.0 * std::numbers::pi);
    for (auto& v : m.vertices) {
        const double rho = std::hypot(v.x(), v.y());
        const double phi = rho * theta_max;
        const double a = std::atan2(v.y(), v.x());
        v = center + R * Vec3(std::sin(phi) * std::cos(a), std::sin(phi) * std::sin(a), std::cos(phi));
    }
    return m;
}

// Graph of u over a disk of given radius, lifted from the polar patch.
inline TriMesh graph_disk_mesh(int rings, double radius, const std::function<double(double, double)>& u) {
    TriMesh m = flat_disk(rings, radius);
    for (auto& v : m.vertices) v.z() = u(v.x(), v.y());
    return m;
}

// Regular grid over [x0, x1] x [y0, y1] with heights u, each cell split into
// two triangles along alternating diagonals.
inline TriMesh grid_graph_mesh(int nx, int ny, double x0, double x1, double y0, double y1,
                               const std::function<double(double, double)>& u) {
    if (nx < 1 || ny < 1) throw InvalidInput("grid_graph_mesh: bad resolution");
    TriMesh m;
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i) {
            const double x = x0 + (x1 - x0) * i / nx, y = y0 + (y1 - y0) * j / ny;
            m.vertices.emplace_back(x, y, u(x, y));
        }
    auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
            if ((i + j) % 2 == 0) {
                m.faces.push_back({a, b, c});
                m.faces.push_back({a, c, d});
            } else {
                m.faces.push_back({a, b, d});
                m.faces.push_back({b, c, d});
            }
        }
    return m;
}

inline TriMesh plane_grid(int n, double half_width) {
    return grid_graph_mesh(n, n, -half_width, half_width, -half_width, half_width,
                           [](double, double) { return 0.0; });
}

// Catenoid r = c cosh(z / c), z in [z0, z1], nt angular and nz axial cells.
inline TriMesh catenoid_patch(int nt, int nz, double c, double z0, double z1) {
    if (nt < 3 || nz < 1) throw InvalidInput("catenoid_patch: bad resolution");
    TriMesh m;
    for (int j = 0; j <= nz; ++j) {
        const double z = z0 + (z1 - z0) * j / nz;
        const double r = c * std::cosh(z / c);
        for (int i = 0; i < nt; ++i) {
            const double a = 2.0 * std::numbers::pi * i / nt;
            m.vertices.emplace_back(r * std::cos(a), r * std::sin(a), z);
        }
    }
    auto id = [nt](int i, int j) { return j * nt + (i % nt); };
    for (int j = 0; j < nz; ++j)
        for (int i = 0; i < nt; ++i) {
            m.faces.push_back({id(i, j), id(i, j + 1), id(i + 1, j)});
            m.faces.push_back({id(i + 1, j), id(i, j + 1), id(i + 1, j + 1)});
        }
    return m;
}

// Apply a point map to every vertex.
inline TriMesh transform_mesh(const TriMesh& mesh, const std::function<Vec(const Vec&)>& map) {
    TriMesh out = mesh;
    for (auto& v : out.vertices) v = Vec3(map(Vec(v)));
    return out;
}

}  // namespace aniso
