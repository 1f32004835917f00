#pragma once

#include <Eigen/Dense>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "asmpose/assembly.hpp"
#include "asmpose/error.hpp"
#include "asmpose/rng.hpp"

namespace asmpose {

inline double triangle_area(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                            const Eigen::Vector3d& c) {
    return 0.5 * (b - a).cross(c - a).norm();
}

inline double surface_area(const TriangleMesh& mesh) {
    double total = 0;
    for (const auto& f : mesh.faces)
        total += triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
    return total;
}

inline std::pair<Eigen::Vector3d, Eigen::Vector3d> mesh_aabb(const TriangleMesh& mesh) {
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (const auto& v : mesh.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    return {lo, hi};
}

// Area-weighted uniform surface samples; deterministic for a fixed seed.
inline PointCloud3 sample_surface(const TriangleMesh& mesh, int count, std::uint64_t seed) {
    if (mesh.empty()) fail(ErrorCode::InvalidArgument, "cannot sample an empty mesh");
    std::vector<double> cumulative(mesh.faces.size());
    double total = 0;
    for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
        const auto& f = mesh.faces[i];
        total += triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
        cumulative[i] = total;
    }
    if (!(total > 0)) fail(ErrorCode::InvalidArgument, "mesh has zero surface area");

    Rng rng(seed);
    PointCloud3 cloud;
    cloud.points.reserve(count);
    for (int i = 0; i < count; ++i) {
        const double pick = rng.uniform() * total;
        const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), pick);
        const auto& f = mesh.faces[it - cumulative.begin()];
        const double r1 = std::sqrt(rng.uniform());
        const double r2 = rng.uniform();
        cloud.points.push_back((1 - r1) * mesh.vertices[f[0]] +
                               r1 * (1 - r2) * mesh.vertices[f[1]] +
                               r1 * r2 * mesh.vertices[f[2]]);
    }
    return cloud;
}

// Axis-aligned box mesh (12 triangles), centered.
inline TriangleMesh make_box(const Eigen::Vector3d& size,
                             const Eigen::Vector3d& center = Eigen::Vector3d::Zero()) {
    TriangleMesh mesh;
    const Eigen::Vector3d h = size / 2.0;
    for (int corner = 0; corner < 8; ++corner)
        mesh.vertices.push_back(center + Eigen::Vector3d((corner & 1) ? h.x() : -h.x(),
                                                         (corner & 2) ? h.y() : -h.y(),
                                                         (corner & 4) ? h.z() : -h.z()));
    // two triangles per face, outward winding
    const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                             {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
    for (const auto& q : quads) {
        mesh.faces.push_back({q[0], q[1], q[2]});
        mesh.faces.push_back({q[0], q[2], q[3]});
    }
    return mesh;
}

inline TriangleMesh merge_meshes(const TriangleMesh& a, const TriangleMesh& b) {
    TriangleMesh out = a;
    const int offset = static_cast<int>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), b.vertices.begin(), b.vertices.end());
    for (const auto& f : b.faces)
        out.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
    return out;
}

// Minimal OBJ support: v and f statements, polygon faces fan-triangulated.
inline TriangleMesh load_obj(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoFailure, "cannot open mesh " + path.string());
    TriangleMesh mesh;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag)) continue;
        if (tag == "v") {
            double x, y, z;
            if (!(ss >> x >> y >> z))
                fail(ErrorCode::SchemaViolation,
                     path.string() + ":" + std::to_string(line_no) + ": malformed vertex");
            mesh.vertices.push_back({x, y, z});
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string token;
            while (ss >> token) {
                const std::size_t slash = token.find('/');
                int v = 0;
                const char* begin = token.data();
                const char* end = begin + (slash == std::string::npos ? token.size() : slash);
                const auto [ptr, ec] = std::from_chars(begin, end, v);
                if (ec != std::errc() || ptr != end || v <= 0 ||
                    v > static_cast<int>(mesh.vertices.size()))
                    fail(ErrorCode::SchemaViolation,
                         path.string() + ":" + std::to_string(line_no) + ": bad face index");
                idx.push_back(v - 1);
            }
            if (idx.size() < 3)
                fail(ErrorCode::SchemaViolation,
                     path.string() + ":" + std::to_string(line_no) + ": face needs 3+ vertices");
            for (std::size_t k = 2; k < idx.size(); ++k)
                mesh.faces.push_back({idx[0], idx[static_cast<int>(k) - 1], idx[k]});
        }
    }
    if (mesh.empty())
        fail(ErrorCode::SchemaViolation, path.string() + ": no triangles");
    return mesh;
}

inline void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::IoFailure, "cannot write mesh " + path.string());
    out.precision(9);
    for (const auto& v : mesh.vertices) out << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
    for (const auto& f : mesh.faces)
        out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
    if (!out) fail(ErrorCode::IoFailure, "write failed for " + path.string());
}

}  // namespace asmpose
