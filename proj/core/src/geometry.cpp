#include "venttsel/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

namespace venttsel {

double norm(const Vec2& v) { return std::hypot(v.x, v.y); }
double distance(const Vec2& a, const Vec2& b) { return norm(a - b); }

Vec2 ContractionMap::operator()(const Vec2& p) const {
    const double c = std::cos(angle), s = std::sin(angle);
    return {scale * (c * p.x - s * p.y) + shift.x,
            scale * (s * p.x + c * p.y) + shift.y};
}

ContractionMap ContractionMap::compose(const ContractionMap& inner) const {
    ContractionMap out;
    out.scale = scale * inner.scale;
    out.angle = angle + inner.angle;
    out.shift = (*this)(inner.shift);
    return out;
}

std::array<ContractionMap, 4> koch_contractions(const Vec2& a, const Vec2& b) {
    if (distance(a, b) == 0.0)
        throw std::invalid_argument("koch_contractions: coincident endpoints");
    const Vec2 d = b - a;
    const double pi3 = std::acos(-1.0) / 3.0;
    const Vec2 p1 = a + d * (1.0 / 3.0);
    const Vec2 apex{a.x + d.x / 2.0 + d.y * (std::sqrt(3.0) / 6.0),
                    a.y + d.y / 2.0 - d.x * (std::sqrt(3.0) / 6.0)};
    const Vec2 p2 = a + d * (2.0 / 3.0);
    // Each map fixes ratio 1/3 and sends a onto the start of its piece. The
    // middle two rotate by -60/+60 degrees so the apex lies right of a->b.
    auto make = [&](const Vec2& from, double rot) {
        ContractionMap m;
        m.scale = 1.0 / 3.0;
        m.angle = rot;
        const double c = std::cos(rot), s = std::sin(rot);
        m.shift = {from.x - m.scale * (c * a.x - s * a.y),
                   from.y - m.scale * (s * a.x + c * a.y)};
        return m;
    };
    return {make(a, 0.0), make(p1, -pi3), make(apex, pi3), make(p2, 0.0)};
}

double PrefractalCurve::segment_length(int s) const {
    const auto& e = segments.at(static_cast<size_t>(s));
    return distance(vertices[static_cast<size_t>(e[0])], vertices[static_cast<size_t>(e[1])]);
}

Vec2 PrefractalCurve::segment_point(int s, double t) const {
    const auto& e = segments.at(static_cast<size_t>(s));
    const Vec2& p = vertices[static_cast<size_t>(e[0])];
    const Vec2& q = vertices[static_cast<size_t>(e[1])];
    return p + (q - p) * t;
}

bool PrefractalCurve::is_reentrant(int vertex) const {
    return std::binary_search(reentrant.begin(), reentrant.end(), vertex);
}

namespace {

void finalize_arc_table(PrefractalCurve& c) {
    c.arc_of_vertex.assign(c.vertices.size(), 0.0);
    double s = 0.0;
    for (size_t i = 1; i < c.vertices.size(); ++i) {
        s += distance(c.vertices[i - 1], c.vertices[i]);
        c.arc_of_vertex[i] = s;
    }
    if (c.closed) s += distance(c.vertices.back(), c.vertices.front());
    c.total_length = s;
}

void rebuild_segments(PrefractalCurve& c) {
    c.segments.clear();
    const int nv = c.num_vertices();
    const int ns = c.closed ? nv : nv - 1;
    c.segments.reserve(static_cast<size_t>(ns));
    for (int i = 0; i < ns; ++i) c.segments.push_back({i, (i + 1) % nv});
}

// One generation of the iterated-map construction: every segment is replaced
// by the images of itself under its four contractions.
std::vector<Vec2> subdivide_once(const std::vector<Vec2>& pts, bool closed) {
    std::vector<Vec2> out;
    const size_t n = pts.size();
    const size_t nseg = closed ? n : n - 1;
    out.reserve(nseg * 4 + (closed ? 0 : 1));
    const double s3over6 = std::sqrt(3.0) / 6.0;
    for (size_t i = 0; i < nseg; ++i) {
        const Vec2& a = pts[i];
        const Vec2& b = pts[(i + 1) % n];
        const Vec2 d = b - a;
        out.push_back(a);
        out.push_back(a + d * (1.0 / 3.0));
        out.push_back({a.x + d.x / 2.0 + d.y * s3over6, a.y + d.y / 2.0 - d.x * s3over6});
        out.push_back(a + d * (2.0 / 3.0));
    }
    if (!closed) out.push_back(pts.back());
    return out;
}

}  // namespace

PrefractalCurve koch_side(int level, const Vec2& a, const Vec2& b) {
    if (level < 0) throw std::invalid_argument("koch_side: level must be nonnegative");
    if (level > kMaxLevel) throw std::invalid_argument("koch_side: level exceeds supported maximum 8");
    if (a.x == b.x && a.y == b.y)
        throw std::invalid_argument("koch_side: endpoints must be distinct");

    PrefractalCurve c;
    c.level = level;
    c.closed = false;
    std::vector<Vec2> pts{a, b};
    for (int l = 0; l < level; ++l) pts = subdivide_once(pts, false);
    c.vertices = std::move(pts);
    rebuild_segments(c);
    finalize_arc_table(c);
    return c;
}

PrefractalCurve snowflake(int level) {
    if (level < 0) throw std::invalid_argument("snowflake: level must be nonnegative");
    if (level > kMaxLevel) throw std::invalid_argument("snowflake: level exceeds supported maximum 8");

    const Vec2 a1{0.0, 0.0}, a3{1.0, 0.0}, a5{0.5, std::sqrt(3.0) / 2.0};
    PrefractalCurve c;
    c.level = level;
    c.closed = true;
    std::vector<Vec2> pts{a1, a3, a5};
    for (int l = 0; l < level; ++l) pts = subdivide_once(pts, true);
    c.vertices = std::move(pts);
    rebuild_segments(c);
    finalize_arc_table(c);
    classify_angles(c);
    return c;
}

void classify_angles(PrefractalCurve& curve, InteriorSide side, double tolerance) {
    if (!curve.closed)
        throw std::invalid_argument("classify_angles: curve must be closed");
    const int nv = curve.num_vertices();
    curve.interior_angle.assign(static_cast<size_t>(nv), 0.0);
    curve.reentrant.clear();
    const double pi = std::acos(-1.0);
    for (int j = 0; j < nv; ++j) {
        const Vec2& prev = curve.vertices[static_cast<size_t>((j + nv - 1) % nv)];
        const Vec2& here = curve.vertices[static_cast<size_t>(j)];
        const Vec2& next = curve.vertices[static_cast<size_t>((j + 1) % nv)];
        const Vec2 u = here - prev;
        const Vec2 v = next - here;
        double turn = std::atan2(cross(u, v), dot(u, v));
        if (side == InteriorSide::right_of_traversal) turn = -turn;
        const double eta = pi - turn;  // interior on the left of traversal
        curve.interior_angle[static_cast<size_t>(j)] = eta;
        const double dev = std::min(std::abs(eta - pi / 3.0), std::abs(eta - 4.0 * pi / 3.0));
        if (dev > tolerance)
            throw std::runtime_error("classify_angles: interior angle off the {pi/3, 4pi/3} set at vertex " +
                                     std::to_string(j) + " (deviation " + std::to_string(dev) + ")");
        if (eta > pi) curve.reentrant.push_back(j);
    }
}

double dist_to_vertex_set(const Vec2& x, const PrefractalCurve& curve, VertexSet which) {
    double best = kNoVertexDistance;
    if (which == VertexSet::all) {
        for (const Vec2& p : curve.vertices) best = std::min(best, distance(x, p));
    } else {
        for (int j : curve.reentrant)
            best = std::min(best, distance(x, curve.vertices[static_cast<size_t>(j)]));
    }
    return best;
}

namespace {

bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2, double tol) {
    const double d1 = cross(q2 - q1, p1 - q1);
    const double d2 = cross(q2 - q1, p2 - q1);
    const double d3 = cross(p2 - p1, q1 - p1);
    const double d4 = cross(p2 - p1, q2 - p1);
    if (((d1 > tol && d2 < -tol) || (d1 < -tol && d2 > tol)) &&
        ((d3 > tol && d4 < -tol) || (d3 < -tol && d4 > tol)))
        return true;
    auto on_segment = [&](const Vec2& a, const Vec2& b, const Vec2& c) {
        if (std::abs(cross(b - a, c - a)) > tol) return false;
        return c.x >= std::min(a.x, b.x) - tol && c.x <= std::max(a.x, b.x) + tol &&
               c.y >= std::min(a.y, b.y) - tol && c.y <= std::max(a.y, b.y) + tol;
    };
    if (std::abs(d1) <= tol && on_segment(q1, q2, p1)) return true;
    if (std::abs(d2) <= tol && on_segment(q1, q2, p2)) return true;
    if (std::abs(d3) <= tol && on_segment(p1, p2, q1)) return true;
    if (std::abs(d4) <= tol && on_segment(p1, p2, q2)) return true;
    return false;
}

}  // namespace

bool is_simple_curve(const PrefractalCurve& curve, double tolerance) {
    const int ns = curve.num_segments();
    const int nv = curve.num_vertices();
    for (int i = 0; i < ns; ++i) {
        for (int j = i + 1; j < ns; ++j) {
            // Skip pairs sharing a vertex; adjacency wraps around for closed curves.
            const auto& si = curve.segments[static_cast<size_t>(i)];
            const auto& sj = curve.segments[static_cast<size_t>(j)];
            if (si[0] == sj[0] || si[0] == sj[1] || si[1] == sj[0] || si[1] == sj[1]) continue;
            (void)nv;
            if (segments_intersect(curve.vertices[static_cast<size_t>(si[0])],
                                   curve.vertices[static_cast<size_t>(si[1])],
                                   curve.vertices[static_cast<size_t>(sj[0])],
                                   curve.vertices[static_cast<size_t>(sj[1])], tolerance))
                return false;
        }
    }
    return true;
}

void write_curve(std::ostream& out, const PrefractalCurve& curve) {
    out << "KOCH n " << curve.level << ' ' << (curve.closed ? "closed" : "open") << '\n';
    out.precision(17);
    const bool classified = !curve.interior_angle.empty();
    for (int j = 0; j < curve.num_vertices(); ++j) {
        const Vec2& p = curve.vertices[static_cast<size_t>(j)];
        const double eta = classified ? curve.interior_angle[static_cast<size_t>(j)] : 0.0;
        out << p.x << ' ' << p.y << ' ' << eta << ' ' << (curve.is_reentrant(j) ? 1 : 0) << '\n';
    }
}

}  // namespace venttsel
