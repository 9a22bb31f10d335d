#pragma once

// Conformal P1 triangulations of prefractal-bounded domains: exact lattice
// tiling of the snowflake interior, unstructured meshing of the surrounding
// square, longest-edge bisection refinement with Grisvard-type grading toward
// reentrant vertices, and the boundary trace indexing used by the assemblers.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "venttsel/geometry.hpp"

namespace venttsel {

enum class MeshRegion { interior, interior_plus_outer_square };
enum class MeshKind { quasi_uniform, graded };

struct MeshOptions {
    double kappa = 8.0;           // shape regularity bound h_S / rho_S
    double sigma_g = 1.0;         // grading constant in (G1)/(G2)
    double quasi_uniform_c = 0.25;
    double square_side = 4.0;     // two-region meshes only
    bool square_center_auto = true;
    Vec2 square_center;
    int max_refine_sweeps = 80;
    double angle_tol = 1e-12;
};

/// Mesh edge lying on the prefractal curve, oriented along the traversal.
struct CurveEdge {
    int a = -1, b = -1;   // node ids, a precedes b in traversal order
    int segment = -1;     // prefractal segment id
    double s0 = 0, s1 = 0;  // arc-length coordinates of a and b
};

struct Triangulation {
    std::vector<Vec2> nodes;
    std::vector<std::array<int, 3>> triangles;  // counterclockwise
    std::vector<int> subdomain;                 // 1 inside the curve, 2 outside
    std::vector<CurveEdge> curve_edges;         // sorted by arc length
    std::vector<std::array<int, 2>> outer_edges;  // square boundary (two-region)

    MeshKind kind = MeshKind::quasi_uniform;
    double target_h = 0.0;
    double grading_mu = 0.0;  // 0 for quasi-uniform
    double sigma_g = 1.0;
    double mesh_size = 0.0;   // h = max diameter

    int num_nodes() const { return static_cast<int>(nodes.size()); }
    int num_triangles() const { return static_cast<int>(triangles.size()); }
    double triangle_area(int t) const;
    double triangle_diameter(int t) const;
    double triangle_inradius(int t) const;
    Vec2 centroid(int t) const;

    /// Node ids on the outer square boundary (empty for interior meshes).
    std::vector<int> outer_boundary_nodes() const;
};

Triangulation build_quasi_uniform_mesh(const PrefractalCurve& curve, double target_h,
                                       MeshRegion region, const MeshOptions& opts = {});

/// Graded toward the reentrant vertices: triangles touching one satisfy
/// h_S <= sigma_g * target_h^{1/(1-mu)}, all others
/// h_S <= sigma_g * target_h * inf_S r^mu with r the distance to the
/// reentrant set (capped at the domain diameter when the set is empty).
/// Requires 1/4 < mu < 1/2.
Triangulation build_graded_mesh(const PrefractalCurve& curve, double target_h, double mu,
                                MeshRegion region, const MeshOptions& opts = {});

/// Quasi-uniform mesh of a plain axis-aligned square (no prefractal); used by
/// manufactured-solution sanity studies.
Triangulation build_square_mesh(const Vec2& center, double side, double target_h,
                                const MeshOptions& opts = {});

struct GradingReport {
    struct Entry {
        int triangle = -1;
        bool touches_reentrant = false;
        double h_S = 0.0;
        double bound = 0.0;  // admissible size for this triangle
        bool pass = false;
    };
    std::vector<Entry> entries;  // one per triangle
    double worst_corner_ratio = 0.0;    // max h_S/bound over corner triangles
    double worst_interior_ratio = 0.0;  // max h_S/bound over the rest
    bool all_pass = true;
};

GradingReport check_grading(const Triangulation& tri, const PrefractalCurve& curve, double mu);

/// Bijection between boundary mesh nodes and their arc-length coordinates,
/// in cyclic traversal order.
struct BoundaryTraceMap {
    std::vector<int> node;    // boundary node ids, traversal order
    std::vector<double> arc;  // strictly increasing arc-length positions
    std::unordered_map<int, int> index_of_node;

    int num_boundary_nodes() const { return static_cast<int>(node.size()); }
};

BoundaryTraceMap boundary_trace_map(const Triangulation& tri, const PrefractalCurve& curve,
                                    double tolerance = 1e-12);

/// Structural checks: conformity, positive orientation, shape regularity,
/// exact coverage of the prefractal segments by curve edges and the Euler
/// relation. Throws std::runtime_error naming the first violated property.
void verify_mesh(const Triangulation& tri, const PrefractalCurve& curve,
                 const MeshOptions& opts = {});

/// Plain-text mesh format: "NODES k" + coordinates, "TRIANGLES m" + index
/// triples with subdomain tag, "BOUNDARY b" + curve edge lines
/// "a b segment s0 s1".
void write_mesh(std::ostream& out, const Triangulation& tri);
Triangulation read_mesh(std::istream& in);

/// VTK legacy ASCII unstructured grid with subdomain cell data and optional
/// nodal scalar fields.
void write_vtk(std::ostream& out, const Triangulation& tri,
               const std::vector<std::pair<std::string, std::vector<double>>>& point_fields = {});

}  // namespace venttsel
