// Unstructured meshing of the region between the prefractal interface and the
// outer square. The upper half (above the horizontal line through the
// snowflake centroid) is meshed and then mirrored, so two-region meshes are
// exactly symmetric in connectivity; the transmission control experiment
// relies on that.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mesh_builder.hpp"
#include "venttsel/mesh.hpp"

namespace venttsel::detail {

namespace {

double polygon_area2(const MeshBuilder& mb, const std::vector<int>& poly) {
    double a = 0.0;
    const size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        const Vec2& p = mb.nodes[static_cast<size_t>(poly[i])];
        const Vec2& q = mb.nodes[static_cast<size_t>(poly[(i + 1) % n])];
        a += cross(p, q);
    }
    return a;
}

Vec2 region_centroid(const PrefractalCurve& curve) {
    double a2 = 0.0, cx = 0.0, cy = 0.0;
    const int n = curve.num_vertices();
    for (int i = 0; i < n; ++i) {
        const Vec2& p = curve.vertices[static_cast<size_t>(i)];
        const Vec2& q = curve.vertices[static_cast<size_t>((i + 1) % n)];
        const double w = cross(p, q);
        a2 += w;
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    return {cx / (3.0 * a2), cy / (3.0 * a2)};
}

bool point_in_curve(const PrefractalCurve& curve, const Vec2& p) {
    bool inside = false;
    const int n = curve.num_vertices();
    for (int i = 0; i < n; ++i) {
        const Vec2& a = curve.vertices[static_cast<size_t>(i)];
        const Vec2& b = curve.vertices[static_cast<size_t>((i + 1) % n)];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double xi = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if (p.x < xi) inside = !inside;
        }
    }
    return inside;
}

double distance_to_curve(const PrefractalCurve& curve, const Vec2& p) {
    double best = kNoVertexDistance;
    for (int s = 0; s < curve.num_segments(); ++s) {
        const auto& e = curve.segments[static_cast<size_t>(s)];
        best = std::min(best, point_segment_distance(p, curve.vertices[static_cast<size_t>(e[0])],
                                                     curve.vertices[static_cast<size_t>(e[1])]));
    }
    return best;
}

// (segment, t) of a point lying on the curve within tol; chooses by minimum
// distance with t clamped to the segment.
std::pair<int, double> locate_on_curve(const PrefractalCurve& curve, const Vec2& p, double tol) {
    int best_seg = -1;
    double best_d = tol, best_t = 0.0;
    for (int s = 0; s < curve.num_segments(); ++s) {
        const auto& e = curve.segments[static_cast<size_t>(s)];
        const Vec2& a = curve.vertices[static_cast<size_t>(e[0])];
        const Vec2& b = curve.vertices[static_cast<size_t>(e[1])];
        const Vec2 d = b - a;
        double t = dot(p - a, d) / dot(d, d);
        t = std::clamp(t, 0.0, 1.0);
        const double dist = distance(p, a + d * t);
        if (dist < best_d) {
            best_d = dist;
            best_seg = s;
            best_t = t;
        }
    }
    if (best_seg < 0) throw std::runtime_error("mesh: point does not lie on the curve");
    return {best_seg, best_t};
}

}  // namespace

// ---------------------------------------------------------------------------
// Ear clipping
// ---------------------------------------------------------------------------

void ear_clip_polygon(MeshBuilder& mb, const std::vector<int>& poly, int sub) {
    if (poly.size() < 3) throw std::invalid_argument("ear clip: polygon too small");
    if (polygon_area2(mb, poly) <= 0.0)
        throw std::invalid_argument("ear clip: polygon must be counterclockwise");

    std::vector<int> ring = poly;
    auto pt = [&](int id) -> const Vec2& { return mb.nodes[static_cast<size_t>(id)]; };

    auto is_convex = [&](size_t i) {
        const size_t n = ring.size();
        const Vec2& a = pt(ring[(i + n - 1) % n]);
        const Vec2& b = pt(ring[i]);
        const Vec2& c = pt(ring[(i + 1) % n]);
        const double scale = distance(a, b) * distance(b, c);
        return cross(b - a, c - b) > 1e-14 * scale;
    };
    auto blocked = [&](size_t i) {
        const size_t n = ring.size();
        const Vec2& a = pt(ring[(i + n - 1) % n]);
        const Vec2& b = pt(ring[i]);
        const Vec2& c = pt(ring[(i + 1) % n]);
        const double scale = std::max({distance(a, b), distance(b, c), distance(c, a)});
        const double eps = 1e-13 * scale * scale;
        for (size_t j = 0; j < n; ++j) {
            if (j == i || j == (i + n - 1) % n || j == (i + 1) % n) continue;
            const Vec2& p = pt(ring[j]);
            if (cross(b - a, p - a) >= -eps && cross(c - b, p - b) >= -eps &&
                cross(a - c, p - c) >= -eps)
                return true;
        }
        return false;
    };

    size_t start = 0;
    while (ring.size() > 3) {
        const size_t n = ring.size();
        bool clipped = false;
        for (size_t off = 0; off < n; ++off) {
            const size_t i = (start + off) % n;
            if (!is_convex(i) || blocked(i)) continue;
            mb.add_tri(ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n], sub);
            ring.erase(ring.begin() + static_cast<long>(i));
            start = i % ring.size();
            clipped = true;
            break;
        }
        if (!clipped) throw std::runtime_error("ear clip: no ear found (polygon not simple?)");
    }
    mb.add_tri(ring[0], ring[1], ring[2], sub);
}

// ---------------------------------------------------------------------------
// Interior point seeding
// ---------------------------------------------------------------------------

namespace {

// Inserts triangular-lattice points at pitch q into the axis-aligned box,
// skipping anything failing the keep predicate. Returns the number inserted.
template <typename Keep>
int seed_lattice_points(MeshBuilder& mb, const Vec2& lo, const Vec2& hi, double q, Keep&& keep,
                        int flip_sub) {
    const double rowh = q * std::sqrt(3.0) / 2.0;
    int inserted = 0;
    int hint = 0;
    for (int j = 0;; ++j) {
        const double y = lo.y + rowh * (j + 0.5);
        if (y > hi.y) break;
        const double offset = (j % 2 == 0) ? 0.5 : 0.0;
        for (int i = 0;; ++i) {
            const double x = lo.x + q * (i + offset);
            if (x > hi.x) break;
            const Vec2 p{x, y};
            if (!keep(p)) continue;
            const int nid = mb.insert_point(p, hint, flip_sub);
            if (nid >= 0) ++inserted;
        }
    }
    return inserted;
}

void dyadic_split_at_chain(MeshBuilder& mb, const std::vector<int>& chain, size_t lo, size_t hi) {
    if (hi - lo < 2) return;
    const size_t mid = (lo + hi) / 2;
    mb.split_edge(chain[lo], chain[hi], chain[mid]);
    dyadic_split_at_chain(mb, chain, lo, mid);
    dyadic_split_at_chain(mb, chain, mid, hi);
}

void mirror_lower_half(MeshBuilder& mb, const PrefractalCurve& curve, double y_cut) {
    const double on_cut_tol = 1e-12;
    std::vector<int> node_map(mb.nodes.size(), -1);
    const size_t num_nodes = mb.nodes.size();
    auto mapped = [&](int id) {
        int& m = node_map[static_cast<size_t>(id)];
        if (m >= 0) return m;
        const Vec2 p = mb.nodes[static_cast<size_t>(id)];
        if (std::abs(p.y - y_cut) <= on_cut_tol) {
            m = id;
        } else {
            m = mb.add_node({p.x, 2.0 * y_cut - p.y});
        }
        return m;
    };

    const size_t num_tris = mb.tris.size();
    for (size_t t = 0; t < num_tris; ++t) {
        if (!mb.tris[t].alive) continue;
        const auto v = mb.tris[t].v;
        const int sub = mb.tris[t].sub;
        mb.add_tri(mapped(v[0]), mapped(v[1]), mapped(v[2]), sub);
    }
    (void)num_nodes;

    std::vector<ConstraintRef> refs;
    refs.reserve(mb.constraints.size());
    for (const auto& [key, ref] : mb.constraints) {
        (void)key;
        refs.push_back(ref);
    }
    for (const ConstraintRef& ref : refs) {
        const int na = mapped(ref.na), nb = mapped(ref.nb);
        if (na == ref.na && nb == ref.nb) continue;  // lies on the cut
        if (ref.segment == kCutSegment) continue;
        ConstraintRef m;
        m.na = na;
        m.nb = nb;
        if (ref.segment == kOuterSegment) {
            m.segment = kOuterSegment;
        } else {
            const Vec2& pa = mb.nodes[static_cast<size_t>(na)];
            const Vec2& pb = mb.nodes[static_cast<size_t>(nb)];
            const Vec2 pm{0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y)};
            const auto [seg, tmid] = locate_on_curve(curve, pm, 1e-9);
            (void)tmid;
            const auto& e = curve.segments[static_cast<size_t>(seg)];
            const Vec2& sa = curve.vertices[static_cast<size_t>(e[0])];
            const Vec2& sb = curve.vertices[static_cast<size_t>(e[1])];
            const Vec2 d = sb - sa;
            const double L = norm(d);
            const double s_start = curve.arc_of_vertex[static_cast<size_t>(e[0])];
            const double ta = std::clamp(dot(pa - sa, d) / (L * L), 0.0, 1.0);
            const double tb = std::clamp(dot(pb - sa, d) / (L * L), 0.0, 1.0);
            m.segment = seg;
            m.sa = s_start + ta * L;
            m.sb = s_start + tb * L;
        }
        mb.mark_constraint(na, nb, m);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Two-region mesh: snowflake interface inside a square
// ---------------------------------------------------------------------------

Triangulation build_two_region(const PrefractalCurve& curve, double target_h, double mu,
                               MeshKind kind, const MeshOptions& opts) {
    if (!curve.closed) throw std::invalid_argument("mesh: two-region domain needs a closed curve");
    if (curve.level < 1)
        throw std::invalid_argument("mesh: two-region domain requires prefractal level >= 1");

    const Vec2 c = region_centroid(curve);
    const double y_cut = c.y;
    const Vec2 sc = opts.square_center_auto ? c : opts.square_center;
    const double half = opts.square_side / 2.0;
    for (const Vec2& p : curve.vertices) {
        if (std::abs(p.x - sc.x) > half - 2.0 * target_h || std::abs(p.y - sc.y) > half - 2.0 * target_h)
            throw std::invalid_argument("mesh: square too small for the prefractal interface");
    }

    // Axis vertices: the two curve vertices on the horizontal mirror line.
    int idx_w = -1, idx_e = -1;
    for (int v = 0; v < curve.num_vertices(); ++v) {
        if (std::abs(curve.vertices[static_cast<size_t>(v)].y - y_cut) <= 1e-12) {
            if (idx_e < 0)
                idx_e = v;
            else if (idx_w < 0)
                idx_w = v;
            else
                throw std::runtime_error("mesh: more than two vertices on the mirror axis");
        }
    }
    if (idx_w < 0) throw std::runtime_error("mesh: mirror axis vertices not found");
    if (curve.vertices[static_cast<size_t>(idx_e)].x < curve.vertices[static_cast<size_t>(idx_w)].x)
        std::swap(idx_e, idx_w);
    if (!(idx_e < idx_w))
        throw std::runtime_error("mesh: unexpected traversal order of axis vertices");

    MeshBuilder mb;
    LatticeMesh lm = build_lattice_interior(mb, curve, target_h, opts);

    // Keep only the upper half of the interior tiling; the rest is mirrored
    // back at the end so the final mesh is exactly symmetric.
    for (size_t t = 0; t < mb.tris.size(); ++t) {
        if (!mb.tris[t].alive) continue;
        const auto& v = mb.tris[t].v;
        const double yc3 = (mb.nodes[static_cast<size_t>(v[0])].y + mb.nodes[static_cast<size_t>(v[1])].y +
                            mb.nodes[static_cast<size_t>(v[2])].y) /
                           3.0;
        if (yc3 < y_cut) mb.remove_tri(static_cast<int>(t));
    }
    // Curve constraints of the dropped half would survive in the map; drop any
    // constraint whose edge no longer exists. (Constraint keys are edge keys.)
    for (auto it = mb.constraints.begin(); it != mb.constraints.end();) {
        if (!mb.edge_tris.count(it->first))
            it = mb.constraints.erase(it);
        else
            ++it;
    }

    // Upper outer region polygon: cut line east, square top half, cut line
    // west, then the upper prefractal arc walked clockwise from W to E.
    const int node_e = lm.chain_nodes[static_cast<size_t>(idx_e)][0];
    const int node_w = lm.chain_nodes[static_cast<size_t>(idx_w)][0];
    const int cr = mb.add_node({sc.x + half, y_cut});
    const int ne = mb.add_node({sc.x + half, sc.y + half});
    const int nw = mb.add_node({sc.x - half, sc.y + half});
    const int cl = mb.add_node({sc.x - half, y_cut});
    std::vector<int> poly{node_e, cr, ne, nw, cl, node_w};
    for (int v = idx_w - 1; v > idx_e; --v) poly.push_back(lm.chain_nodes[static_cast<size_t>(v)][0]);

    ear_clip_polygon(mb, poly, 2);

    mb.mark_constraint(node_e, cr, {node_e, cr, kCutSegment, 0, 0});
    mb.mark_constraint(cl, node_w, {cl, node_w, kCutSegment, 0, 0});
    mb.mark_constraint(cr, ne, {cr, ne, kOuterSegment, 0, 0});
    mb.mark_constraint(ne, nw, {ne, nw, kOuterSegment, 0, 0});
    mb.mark_constraint(nw, cl, {nw, cl, kOuterSegment, 0, 0});

    // Align the outer region with the pitch of the interface chain before any
    // flip can touch the coarse interface edges.
    if (lm.edges_per_segment > 1) {
        for (int s = idx_e; s < idx_w; ++s) {
            const auto& chain = lm.chain_nodes[static_cast<size_t>(s)];
            dyadic_split_at_chain(mb, chain, 0, chain.size() - 1);
        }
    }
    mb.lawson_pass(2);

    // Seed the outer region so refinement starts from locally uniform points.
    const double q = target_h;
    auto keep = [&](const Vec2& p) {
        if (p.y < y_cut + 0.45 * q) return false;
        if (std::abs(p.x - sc.x) > half - 0.45 * q || p.y > sc.y + half - 0.45 * q) return false;
        if (distance_to_curve(curve, p) < 0.6 * q) return false;
        if (point_in_curve(curve, p)) return false;
        return true;
    };
    seed_lattice_points(mb, {sc.x - half, y_cut}, {sc.x + half, sc.y + half}, q, keep, 2);
    mb.lawson_pass(2);

    const auto crit = make_criterion(curve, target_h, mu, kind, opts);
    refine_to_criterion(mb, crit, opts, /*flip_sub=*/2);

    mirror_lower_half(mb, curve, y_cut);

    Triangulation tri = mb.finalize();
    tri.kind = kind;
    tri.target_h = target_h;
    tri.grading_mu = (kind == MeshKind::graded) ? mu : 0.0;
    tri.sigma_g = opts.sigma_g;
    return tri;
}

// ---------------------------------------------------------------------------
// Plain square (no interface)
// ---------------------------------------------------------------------------

Triangulation build_square_mesh_impl(const Vec2& center, double side, double target_h,
                                     const MeshOptions& opts) {
    if (target_h <= 0 || side <= 0)
        throw std::invalid_argument("mesh: side and target_h must be positive");
    MeshBuilder mb;
    const double half = side / 2.0;
    const int a = mb.add_node({center.x - half, center.y - half});
    const int b = mb.add_node({center.x + half, center.y - half});
    const int c = mb.add_node({center.x + half, center.y + half});
    const int d = mb.add_node({center.x - half, center.y + half});
    ear_clip_polygon(mb, {a, b, c, d}, 1);
    mb.mark_constraint(a, b, {a, b, kOuterSegment, 0, 0});
    mb.mark_constraint(b, c, {b, c, kOuterSegment, 0, 0});
    mb.mark_constraint(c, d, {c, d, kOuterSegment, 0, 0});
    mb.mark_constraint(d, a, {d, a, kOuterSegment, 0, 0});

    const double q = target_h;
    auto keep = [&](const Vec2& p) {
        return std::abs(p.x - center.x) < half - 0.45 * q && std::abs(p.y - center.y) < half - 0.45 * q;
    };
    seed_lattice_points(mb, {center.x - half, center.y - half}, {center.x + half, center.y + half},
                        q, keep, 1);
    mb.lawson_pass(1);

    SizeCriterion crit;
    crit.target_h = target_h;
    refine_to_criterion(mb, crit, opts, /*flip_sub=*/1);

    Triangulation tri = mb.finalize();
    tri.kind = MeshKind::quasi_uniform;
    tri.target_h = target_h;
    tri.sigma_g = opts.sigma_g;
    return tri;
}

}  // namespace venttsel::detail

namespace venttsel {

Triangulation build_square_mesh(const Vec2& center, double side, double target_h,
                                const MeshOptions& opts) {
    return detail::build_square_mesh_impl(center, side, target_h, opts);
}

}  // namespace venttsel
