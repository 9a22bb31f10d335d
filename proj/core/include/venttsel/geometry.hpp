#pragma once

// Koch-type prefractal curves: construction, vertex angle classification and
// distance queries used by mesh grading and weighted norms.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <vector>

namespace venttsel {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2 operator-() const { return {-x, -y}; }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }
inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }
double norm(const Vec2& v);
double distance(const Vec2& a, const Vec2& b);

/// Affine similitude of the plane with contraction ratio exactly 1/3:
/// x -> scale * R(angle) * x + shift.
struct ContractionMap {
    double scale = 1.0 / 3.0;
    double angle = 0.0;  // rotation, radians
    Vec2 shift;

    Vec2 operator()(const Vec2& p) const;
    /// Composition: (*this) after `inner`, i.e. this(inner(x)).
    ContractionMap compose(const ContractionMap& inner) const;
};

/// The four similitudes mapping the segment a->b onto the four pieces of its
/// level-1 Koch replacement. The bump apex lies to the right of the direction
/// a->b, so that a counterclockwise-oriented polygon grows outward bumps.
std::array<ContractionMap, 4> koch_contractions(const Vec2& a, const Vec2& b);

/// Ordered polygonal curve with per-vertex angle data and an arc-length table.
///
/// For a closed curve `segments[i] = {i, (i+1) % nv}`; for an open curve there
/// are nv-1 segments. `interior_angle` and `reentrant` are populated by
/// classify_angles (closed curves only). `arc_of_vertex[i]` is the cumulative
/// arc length at vertex i, starting at 0.
struct PrefractalCurve {
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 2>> segments;
    std::vector<double> interior_angle;  // eta_j, radians; empty until classified
    std::vector<int> reentrant;          // indices j with eta_j > pi, ascending
    std::vector<double> arc_of_vertex;
    double total_length = 0.0;
    int level = 0;
    bool closed = false;

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_segments() const { return static_cast<int>(segments.size()); }
    double segment_length(int s) const;
    Vec2 segment_point(int s, double t) const;  // t in [0,1] along segment s
    bool is_reentrant(int vertex) const;
};

/// Maximum supported generation; beyond this double precision coordinates get
/// too close to the angle-check tolerance.
inline constexpr int kMaxLevel = 8;

/// Open Koch polyline over the segment a->b. 4^level segments, each of length
/// |b-a| * 3^-level, bumps to the right of a->b.
PrefractalCurve koch_side(int level, const Vec2& a, const Vec2& b);

/// Closed Koch snowflake boundary built on the unit equilateral triangle
/// A1=(0,0), A3=(1,0), A5=(1/2, sqrt(3)/2), traversed counterclockwise with
/// outward bumps. 3*4^level segments of length 3^-level; angles classified.
PrefractalCurve snowflake(int level);

enum class InteriorSide { left_of_traversal, right_of_traversal };

/// Computes the interior angle at every vertex of a closed curve and fills
/// `interior_angle` and `reentrant`. Every angle of a Koch prefractal must be
/// pi/3 or 4*pi/3 within `tolerance`; any other value aborts with an error
/// since it signals a construction bug.
void classify_angles(PrefractalCurve& curve,
                     InteriorSide side = InteriorSide::left_of_traversal,
                     double tolerance = 1e-12);

enum class VertexSet { all, reentrant_only };

/// Sentinel returned when the selected vertex set is empty (e.g. a level-0
/// triangle has no reentrant vertices): grading then treats the weight as
/// "no refinement needed anywhere".
inline constexpr double kNoVertexDistance = std::numeric_limits<double>::infinity();

/// Euclidean distance from x to the nearest vertex in the selected set.
double dist_to_vertex_set(const Vec2& x, const PrefractalCurve& curve, VertexSet which);

/// True if no two non-adjacent segments intersect. O(n^2); intended for
/// verification at levels <= 4.
bool is_simple_curve(const PrefractalCurve& curve, double tolerance = 1e-14);

/// Plain-text export: header "KOCH n <level> <closed|open>" followed by one
/// "x y eta reentrant(0|1)" line per vertex in traversal order, 17 significant
/// digits. Unclassified curves write eta = 0.
void write_curve(std::ostream& out, const PrefractalCurve& curve);

}  // namespace venttsel
