#pragma once

// Internal refinement engine shared by the lattice and unstructured mesh
// builders. Not installed.

#include <array>
#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "venttsel/geometry.hpp"
#include "venttsel/mesh.hpp"

namespace venttsel::detail {

inline constexpr int kOuterSegment = -2;  // square boundary constraint
inline constexpr int kCutSegment = -3;    // mirror cut line constraint

inline uint64_t edge_key(int a, int b) {
    const uint32_t lo = static_cast<uint32_t>(a < b ? a : b);
    const uint32_t hi = static_cast<uint32_t>(a < b ? b : a);
    return (static_cast<uint64_t>(lo) << 32) | hi;
}

/// Directed constraint attached to a mesh edge: either a piece of a prefractal
/// segment (segment >= 0, with arc-length coordinates at both endpoints) or a
/// synthetic constraint (outer square, mirror cut).
struct ConstraintRef {
    int na = -1, nb = -1;
    int segment = -1;
    double sa = 0.0, sb = 0.0;
};

struct MeshBuilder {
    struct Tri {
        std::array<int, 3> v{-1, -1, -1};
        int sub = 1;
        bool alive = false;
    };

    std::vector<Vec2> nodes;
    std::vector<Tri> tris;
    std::unordered_map<uint64_t, std::array<int, 2>> edge_tris;
    std::unordered_map<uint64_t, ConstraintRef> constraints;
    int alive_count = 0;

    int add_node(const Vec2& p);
    /// Adds a triangle, flipping the vertex order if needed to keep it
    /// counterclockwise. Throws on (near-)zero area.
    int add_tri(int a, int b, int c, int sub);
    void remove_tri(int t);
    int neighbor_across(int t, int a, int b) const;

    double length(int a, int b) const;
    /// Longest edge of triangle t as an ordered pair of local slots; ties are
    /// broken on the edge key so the choice is deterministic.
    std::array<int, 2> longest_edge_nodes(int t) const;

    void mark_constraint(int a, int b, const ConstraintRef& ref);
    bool is_constrained(int a, int b) const { return constraints.count(edge_key(a, b)) > 0; }

    /// Splits edge (a,b) and each adjacent triangle at `mid` (created at the
    /// midpoint when negative). Constraint refs are split alongside. Returns
    /// the midpoint node id.
    int split_edge(int a, int b, int mid = -1);

    /// Rivara longest-edge bisection with propagation: recursively splits
    /// neighbors until the shared edge is the longest edge on both sides, so
    /// conformity is preserved and no angle ever drops below half the initial
    /// minimum.
    void lepp_refine(int t);

    /// Lawson flip sweep restricted to unconstrained edges between triangles
    /// of subdomain `sub` (0 = any). Returns the number of flips performed.
    int lawson_pass(int sub = 0);
    bool flip_edge(int a, int b);

    int locate(const Vec2& p, int hint = 0) const;
    /// Inserts p by a 1->3 split of the containing triangle followed by local
    /// flips. Returns the new node id, or -1 if p sits too close to an
    /// existing node or edge (the point is skipped).
    int insert_point(const Vec2& p, int hint, int flip_sub);

    Triangulation finalize() const;

private:
    void register_tri(int t);
    void unregister_tri(int t);
};

/// Size bound for a triangle under either the quasi-uniform criterion or the
/// Grisvard-type graded criterion.
struct SizeCriterion {
    bool graded = false;
    double target_h = 0.0;
    double mu = 0.0;
    double sigma_g = 1.0;
    double diameter_cap = 1.0;           // caps r when the reentrant set is empty
    std::vector<Vec2> reentrant_points;  // empty for quasi-uniform

    double bound(const Vec2& a, const Vec2& b, const Vec2& c) const;
    bool touches_reentrant(const Vec2& a, const Vec2& b, const Vec2& c, double tol = 1e-12) const;
    double distance_to_reentrant(const Vec2& a, const Vec2& b, const Vec2& c) const;
};

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);
double point_triangle_distance(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c);

/// Refines until every alive triangle satisfies the size criterion and the
/// shape bound. Runs Lawson passes between sweeps when `flip_sub` >= 0.
void refine_to_criterion(MeshBuilder& mb, const SizeCriterion& crit, const MeshOptions& opts,
                         int flip_sub);

/// Ear-clipping triangulation of a simple polygon given as node ids into
/// `mb.nodes` (counterclockwise, no repeated or collinear consecutive
/// vertices). Emits triangles with the given subdomain tag.
void ear_clip_polygon(MeshBuilder& mb, const std::vector<int>& poly, int sub);

SizeCriterion make_criterion(const PrefractalCurve& curve, double target_h, double mu,
                             MeshKind kind, const MeshOptions& opts);

/// Triangular lattice frame anchored at the first curve vertex: every vertex
/// of a ratio-1/3 Koch prefractal on the unit triangle is a lattice point at
/// pitch 3^-n / 2^k.
struct LatticeFrame {
    double pitch = 0.0;
    double row_height = 0.0;  // pitch * sqrt(3)/2
    Vec2 origin;

    Vec2 point(int64_t i, int64_t j) const;
    std::pair<int64_t, int64_t> index_of(const Vec2& p, double tol) const;
};

struct LatticeMesh {
    LatticeFrame frame;
    std::unordered_map<uint64_t, int> node_of_lattice;  // lattice key -> node id
    std::vector<std::vector<int>> chain_nodes;          // per segment: node ids, 0..m
    int edges_per_segment = 1;
};

uint64_t lattice_node_key(int64_t i, int64_t j);
int lattice_node(MeshBuilder& mb, LatticeMesh& lm, int64_t i, int64_t j);

/// Tiles the region bounded by the (lattice-aligned, closed) curve with
/// equilateral triangles of pitch 3^-n / 2^k <= target_h, marking the curve
/// chain as constrained edges with arc coordinates.
LatticeMesh build_lattice_interior(MeshBuilder& mb, const PrefractalCurve& curve, double target_h,
                                   const MeshOptions& opts);

Triangulation build_two_region(const PrefractalCurve& curve, double target_h, double mu,
                               MeshKind kind, const MeshOptions& opts);

}  // namespace venttsel::detail
