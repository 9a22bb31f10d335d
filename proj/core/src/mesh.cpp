#include "venttsel/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "mesh_builder.hpp"

namespace venttsel {

using detail::ConstraintRef;
using detail::edge_key;
using detail::MeshBuilder;
using detail::SizeCriterion;

// ---------------------------------------------------------------------------
// Triangulation accessors
// ---------------------------------------------------------------------------

double Triangulation::triangle_area(int t) const {
    const auto& tr = triangles[static_cast<size_t>(t)];
    const Vec2& a = nodes[static_cast<size_t>(tr[0])];
    const Vec2& b = nodes[static_cast<size_t>(tr[1])];
    const Vec2& c = nodes[static_cast<size_t>(tr[2])];
    return 0.5 * cross(b - a, c - a);
}

double Triangulation::triangle_diameter(int t) const {
    const auto& tr = triangles[static_cast<size_t>(t)];
    const Vec2& a = nodes[static_cast<size_t>(tr[0])];
    const Vec2& b = nodes[static_cast<size_t>(tr[1])];
    const Vec2& c = nodes[static_cast<size_t>(tr[2])];
    return std::max({distance(a, b), distance(b, c), distance(c, a)});
}

double Triangulation::triangle_inradius(int t) const {
    const auto& tr = triangles[static_cast<size_t>(t)];
    const Vec2& a = nodes[static_cast<size_t>(tr[0])];
    const Vec2& b = nodes[static_cast<size_t>(tr[1])];
    const Vec2& c = nodes[static_cast<size_t>(tr[2])];
    const double per = distance(a, b) + distance(b, c) + distance(c, a);
    return std::abs(triangle_area(t)) * 2.0 / per;
}

Vec2 Triangulation::centroid(int t) const {
    const auto& tr = triangles[static_cast<size_t>(t)];
    const Vec2& a = nodes[static_cast<size_t>(tr[0])];
    const Vec2& b = nodes[static_cast<size_t>(tr[1])];
    const Vec2& c = nodes[static_cast<size_t>(tr[2])];
    return {(a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0};
}

std::vector<int> Triangulation::outer_boundary_nodes() const {
    std::vector<int> ids;
    for (const auto& e : outer_edges) {
        ids.push_back(e[0]);
        ids.push_back(e[1]);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

namespace detail {

// ---------------------------------------------------------------------------
// MeshBuilder engine
// ---------------------------------------------------------------------------

int MeshBuilder::add_node(const Vec2& p) {
    nodes.push_back(p);
    return static_cast<int>(nodes.size()) - 1;
}

int MeshBuilder::add_tri(int a, int b, int c, int sub) {
    const Vec2& pa = nodes[static_cast<size_t>(a)];
    const Vec2& pb = nodes[static_cast<size_t>(b)];
    const Vec2& pc = nodes[static_cast<size_t>(c)];
    double ar = 0.5 * cross(pb - pa, pc - pa);
    if (ar < 0) {
        std::swap(b, c);
        ar = -ar;
    }
    if (!(ar > 1e-16 * (1.0 + distance(pa, pb) * distance(pa, pc))))
        throw std::runtime_error("mesh builder: degenerate triangle");
    Tri t;
    t.v = {a, b, c};
    t.sub = sub;
    t.alive = true;
    tris.push_back(t);
    const int id = static_cast<int>(tris.size()) - 1;
    register_tri(id);
    ++alive_count;
    return id;
}

void MeshBuilder::remove_tri(int t) {
    if (!tris[static_cast<size_t>(t)].alive) return;
    unregister_tri(t);
    tris[static_cast<size_t>(t)].alive = false;
    --alive_count;
}

// Edge slots store triangle ids offset by +1 so a value-initialized entry
// ({0,0}) reads as empty.
void MeshBuilder::register_tri(int t) {
    const auto& v = tris[static_cast<size_t>(t)].v;
    for (int e = 0; e < 3; ++e) {
        auto& slots = edge_tris[edge_key(v[static_cast<size_t>(e)], v[(e + 1) % 3])];
        if (slots[0] == 0)
            slots[0] = t + 1;
        else if (slots[1] == 0)
            slots[1] = t + 1;
        else
            throw std::runtime_error("mesh builder: edge shared by more than two triangles");
    }
}

void MeshBuilder::unregister_tri(int t) {
    const auto& v = tris[static_cast<size_t>(t)].v;
    for (int e = 0; e < 3; ++e) {
        const uint64_t key = edge_key(v[static_cast<size_t>(e)], v[(e + 1) % 3]);
        auto it = edge_tris.find(key);
        if (it == edge_tris.end()) continue;
        auto& slots = it->second;
        if (slots[0] == t + 1) slots[0] = 0;
        if (slots[1] == t + 1) slots[1] = 0;
        if (slots[0] == 0 && slots[1] == 0) edge_tris.erase(it);
    }
}

int MeshBuilder::neighbor_across(int t, int a, int b) const {
    auto it = edge_tris.find(edge_key(a, b));
    if (it == edge_tris.end()) return -1;
    for (int s = 0; s < 2; ++s) {
        const int id = it->second[static_cast<size_t>(s)] - 1;
        if (id >= 0 && id != t && tris[static_cast<size_t>(id)].alive) return id;
    }
    return -1;
}

double MeshBuilder::length(int a, int b) const {
    return distance(nodes[static_cast<size_t>(a)], nodes[static_cast<size_t>(b)]);
}

std::array<int, 2> MeshBuilder::longest_edge_nodes(int t) const {
    const auto& v = tris[static_cast<size_t>(t)].v;
    std::array<int, 2> best{v[0], v[1]};
    double best_len = -1.0;
    uint64_t best_key = 0;
    for (int e = 0; e < 3; ++e) {
        const int a = v[static_cast<size_t>(e)], b = v[(e + 1) % 3];
        const double len = length(a, b);
        const uint64_t key = edge_key(a, b);
        if (len > best_len || (len == best_len && key > best_key)) {
            best_len = len;
            best_key = key;
            best = {a, b};
        }
    }
    return best;
}

void MeshBuilder::mark_constraint(int a, int b, const ConstraintRef& ref) {
    constraints[edge_key(a, b)] = ref;
}

int MeshBuilder::split_edge(int a, int b, int mid) {
    if (mid < 0) {
        const Vec2& pa = nodes[static_cast<size_t>(a)];
        const Vec2& pb = nodes[static_cast<size_t>(b)];
        mid = add_node({(pa.x + pb.x) / 2.0, (pa.y + pb.y) / 2.0});
    }
    const uint64_t key = edge_key(a, b);

    auto cit = constraints.find(key);
    if (cit != constraints.end()) {
        ConstraintRef ref = cit->second;
        constraints.erase(cit);
        const double sm = 0.5 * (ref.sa + ref.sb);
        ConstraintRef left{ref.na, mid, ref.segment, ref.sa, sm};
        ConstraintRef right{mid, ref.nb, ref.segment, sm, ref.sb};
        mark_constraint(ref.na, mid, left);
        mark_constraint(mid, ref.nb, right);
    }

    std::vector<int> adjacent;
    auto it = edge_tris.find(key);
    if (it != edge_tris.end()) {
        for (int s = 0; s < 2; ++s) {
            const int id = it->second[static_cast<size_t>(s)] - 1;
            if (id >= 0 && tris[static_cast<size_t>(id)].alive) adjacent.push_back(id);
        }
    }
    for (int t : adjacent) {
        const auto v = tris[static_cast<size_t>(t)].v;
        const int sub = tris[static_cast<size_t>(t)].sub;
        int w = -1, p = -1, q = -1;
        for (int e = 0; e < 3; ++e) {
            const int x = v[static_cast<size_t>(e)];
            if (x != a && x != b) {
                w = x;
                p = v[(e + 1) % 3];
                q = v[(e + 2) % 3];
            }
        }
        remove_tri(t);
        add_tri(w, p, mid, sub);
        add_tri(w, mid, q, sub);
    }
    return mid;
}

void MeshBuilder::lepp_refine(int t) {
    std::vector<int> stack{t};
    size_t guard = 0;
    const size_t max_ops = 4 * tris.size() + 1000000;
    while (!stack.empty()) {
        if (++guard > max_ops)
            throw std::runtime_error("mesh builder: longest-edge propagation did not terminate");
        const int cur = stack.back();
        if (!tris[static_cast<size_t>(cur)].alive) {
            stack.pop_back();
            continue;
        }
        const auto e = longest_edge_nodes(cur);
        const int nb = neighbor_across(cur, e[0], e[1]);
        if (nb >= 0) {
            const auto en = longest_edge_nodes(nb);
            if (edge_key(en[0], en[1]) != edge_key(e[0], e[1])) {
                stack.push_back(nb);
                continue;
            }
        }
        split_edge(e[0], e[1]);
    }
}

namespace {

// > 0 when d lies strictly inside the circumcircle of ccw triangle (a,b,c).
double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const double adx = a.x - d.x, ady = a.y - d.y;
    const double bdx = b.x - d.x, bdy = b.y - d.y;
    const double cdx = c.x - d.x, cdy = c.y - d.y;
    const double ad = adx * adx + ady * ady;
    const double bd = bdx * bdx + bdy * bdy;
    const double cd = cdx * cdx + cdy * cdy;
    return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

}  // namespace

bool MeshBuilder::flip_edge(int a, int b) {
    if (is_constrained(a, b)) return false;
    auto it = edge_tris.find(edge_key(a, b));
    if (it == edge_tris.end()) return false;
    int t1 = it->second[0] - 1, t2 = it->second[1] - 1;
    if (t1 < 0 || t2 < 0) return false;
    if (!tris[static_cast<size_t>(t1)].alive || !tris[static_cast<size_t>(t2)].alive) return false;
    const int sub1 = tris[static_cast<size_t>(t1)].sub;
    const int sub2 = tris[static_cast<size_t>(t2)].sub;
    if (sub1 != sub2) return false;
    int w1 = -1, w2 = -1;
    for (int x : tris[static_cast<size_t>(t1)].v)
        if (x != a && x != b) w1 = x;
    for (int x : tris[static_cast<size_t>(t2)].v)
        if (x != a && x != b) w2 = x;
    if (w1 < 0 || w2 < 0 || w1 == w2) return false;

    const Vec2& pa = nodes[static_cast<size_t>(a)];
    const Vec2& pb = nodes[static_cast<size_t>(b)];
    const Vec2& p1 = nodes[static_cast<size_t>(w1)];
    const Vec2& p2 = nodes[static_cast<size_t>(w2)];
    // Quad must be strictly convex for the flip to be valid.
    const double a1 = cross(pb - pa, p1 - pa);
    const double a2 = cross(pb - pa, p2 - pa);
    if (a1 * a2 >= 0) return false;
    const double b1 = cross(p2 - p1, pa - p1);
    const double b2 = cross(p2 - p1, pb - p1);
    if (b1 * b2 >= 0) return false;

    // Delaunay criterion with a relative threshold.
    Vec2 ta = pa, tb = pb, tc = p1;
    if (cross(tb - ta, tc - ta) < 0) std::swap(tb, tc);
    const double scale = std::pow(std::max({distance(pa, pb), distance(pa, p1), distance(pa, p2)}), 4);
    if (incircle(ta, tb, tc, p2) <= 1e-12 * scale) return false;

    remove_tri(t1);
    remove_tri(t2);
    add_tri(w1, w2, a, sub1);
    add_tri(w1, w2, b, sub1);
    return true;
}

int MeshBuilder::lawson_pass(int sub) {
    int flips = 0;
    bool changed = true;
    int rounds = 0;
    while (changed && rounds < 100) {
        changed = false;
        ++rounds;
        std::vector<std::array<int, 2>> edges;
        edges.reserve(edge_tris.size());
        for (const auto& [key, slots] : edge_tris) {
            if (slots[0] == 0 || slots[1] == 0) continue;
            const int t1 = slots[0] - 1;
            if (sub != 0 && tris[static_cast<size_t>(t1)].sub != sub) continue;
            edges.push_back({static_cast<int>(key >> 32), static_cast<int>(key & 0xffffffffu)});
        }
        std::sort(edges.begin(), edges.end());
        for (const auto& e : edges) {
            if (flip_edge(e[0], e[1])) {
                ++flips;
                changed = true;
            }
        }
    }
    return flips;
}

int MeshBuilder::locate(const Vec2& p, int hint) const {
    int t = hint;
    if (t < 0 || t >= static_cast<int>(tris.size()) || !tris[static_cast<size_t>(t)].alive) {
        t = -1;
        for (int i = 0; i < static_cast<int>(tris.size()); ++i)
            if (tris[static_cast<size_t>(i)].alive) {
                t = i;
                break;
            }
        if (t < 0) return -1;
    }
    const int max_steps = static_cast<int>(tris.size()) + 64;
    int prev = -1;
    for (int step = 0; step < max_steps; ++step) {
        const auto& v = tris[static_cast<size_t>(t)].v;
        int next = -1;
        for (int e = 0; e < 3; ++e) {
            const int a = v[static_cast<size_t>(e)], b = v[(e + 1) % 3];
            const Vec2& pa = nodes[static_cast<size_t>(a)];
            const Vec2& pb = nodes[static_cast<size_t>(b)];
            if (cross(pb - pa, p - pa) < -1e-14) {
                const int nb = neighbor_across(t, a, b);
                if (nb >= 0 && nb != prev) {
                    next = nb;
                    break;
                }
                if (nb < 0) return -1;  // walked out of the domain
            }
        }
        if (next < 0) return t;
        prev = t;
        t = next;
    }
    // Fallback: exhaustive scan (the walk can cycle on non-Delaunay meshes).
    for (int i = 0; i < static_cast<int>(tris.size()); ++i) {
        if (!tris[static_cast<size_t>(i)].alive) continue;
        const auto& v = tris[static_cast<size_t>(i)].v;
        bool inside = true;
        for (int e = 0; e < 3 && inside; ++e) {
            const Vec2& pa = nodes[static_cast<size_t>(v[static_cast<size_t>(e)])];
            const Vec2& pb = nodes[static_cast<size_t>(v[(e + 1) % 3])];
            if (cross(pb - pa, p - pa) < -1e-14) inside = false;
        }
        if (inside) return i;
    }
    return -1;
}

int MeshBuilder::insert_point(const Vec2& p, int hint, int flip_sub) {
    const int t = locate(p, hint);
    if (t < 0) return -1;
    const auto v = tris[static_cast<size_t>(t)].v;
    const int sub = tris[static_cast<size_t>(t)].sub;
    const Vec2& pa = nodes[static_cast<size_t>(v[0])];
    const Vec2& pb = nodes[static_cast<size_t>(v[1])];
    const Vec2& pc = nodes[static_cast<size_t>(v[2])];
    const double area2 = cross(pb - pa, pc - pa);
    // Reject points within a sliver of an edge or vertex.
    const double la = cross(pc - pb, p - pb) / area2;
    const double lb = cross(pa - pc, p - pc) / area2;
    const double lc = cross(pb - pa, p - pa) / area2;
    if (la < 0.02 || lb < 0.02 || lc < 0.02) return -1;

    const int nid = add_node(p);
    remove_tri(t);
    add_tri(v[0], v[1], nid, sub);
    add_tri(v[1], v[2], nid, sub);
    add_tri(v[2], v[0], nid, sub);
    // Local Delaunay restoration: walk the edges opposite the new node.
    std::vector<std::array<int, 2>> queue{{v[0], v[1]}, {v[1], v[2]}, {v[2], v[0]}};
    size_t guard = 0;
    while (!queue.empty() && ++guard < 10000) {
        const auto e = queue.back();
        queue.pop_back();
        auto it = edge_tris.find(edge_key(e[0], e[1]));
        if (it == edge_tris.end()) continue;
        // Vertex across the edge from the new node, needed to continue the walk.
        int w = -1;
        for (int s = 0; s < 2; ++s) {
            const int t2 = it->second[static_cast<size_t>(s)] - 1;
            if (t2 < 0 || !tris[static_cast<size_t>(t2)].alive) continue;
            if (flip_sub != 0 && tris[static_cast<size_t>(t2)].sub != flip_sub) {
                w = -2;
                break;
            }
            for (int x : tris[static_cast<size_t>(t2)].v)
                if (x != e[0] && x != e[1] && x != nid) w = x;
        }
        if (w < 0) continue;
        if (flip_edge(e[0], e[1])) {
            queue.push_back({e[0], w});
            queue.push_back({e[1], w});
        }
    }
    return nid;
}

Triangulation MeshBuilder::finalize() const {
    // Compact node ids: refinement and half-domain construction can leave
    // unreferenced nodes, which must not become degrees of freedom.
    std::vector<int> remap(nodes.size(), -1);
    Triangulation out;
    out.triangles.reserve(static_cast<size_t>(alive_count));
    out.subdomain.reserve(static_cast<size_t>(alive_count));
    for (const auto& t : tris) {
        if (!t.alive) continue;
        std::array<int, 3> v;
        for (int e = 0; e < 3; ++e) {
            int& id = remap[static_cast<size_t>(t.v[static_cast<size_t>(e)])];
            if (id < 0) {
                id = static_cast<int>(out.nodes.size());
                out.nodes.push_back(nodes[static_cast<size_t>(t.v[static_cast<size_t>(e)])]);
            }
            v[static_cast<size_t>(e)] = id;
        }
        out.triangles.push_back(v);
        out.subdomain.push_back(t.sub);
    }
    for (const auto& [key, ref] : constraints) {
        if (!edge_tris.count(key)) continue;  // constraint on a dropped edge
        const int na = remap[static_cast<size_t>(ref.na)];
        const int nb = remap[static_cast<size_t>(ref.nb)];
        if (na < 0 || nb < 0) continue;
        if (ref.segment >= 0) {
            CurveEdge ce;
            if (ref.sa <= ref.sb) {
                ce = {na, nb, ref.segment, ref.sa, ref.sb};
            } else {
                ce = {nb, na, ref.segment, ref.sb, ref.sa};
            }
            out.curve_edges.push_back(ce);
        } else if (ref.segment == kOuterSegment) {
            out.outer_edges.push_back({na, nb});
        }
    }
    std::sort(out.curve_edges.begin(), out.curve_edges.end(),
              [](const CurveEdge& x, const CurveEdge& y) { return x.s0 < y.s0; });
    std::sort(out.outer_edges.begin(), out.outer_edges.end());
    double h = 0.0;
    for (int t = 0; t < out.num_triangles(); ++t) h = std::max(h, out.triangle_diameter(t));
    out.mesh_size = h;
    return out;
}

// ---------------------------------------------------------------------------
// Size criteria
// ---------------------------------------------------------------------------

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 d = b - a;
    const double len2 = dot(d, d);
    if (len2 == 0.0) return distance(p, a);
    double t = dot(p - a, d) / len2;
    t = std::clamp(t, 0.0, 1.0);
    return distance(p, a + d * t);
}

double point_triangle_distance(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
    const double s1 = cross(b - a, p - a);
    const double s2 = cross(c - b, p - b);
    const double s3 = cross(a - c, p - c);
    if ((s1 >= 0 && s2 >= 0 && s3 >= 0) || (s1 <= 0 && s2 <= 0 && s3 <= 0)) return 0.0;
    return std::min({point_segment_distance(p, a, b), point_segment_distance(p, b, c),
                     point_segment_distance(p, c, a)});
}

bool SizeCriterion::touches_reentrant(const Vec2& a, const Vec2& b, const Vec2& c, double tol) const {
    for (const Vec2& r : reentrant_points) {
        if (distance(r, a) <= tol || distance(r, b) <= tol || distance(r, c) <= tol) return true;
    }
    return false;
}

double SizeCriterion::distance_to_reentrant(const Vec2& a, const Vec2& b, const Vec2& c) const {
    double best = kNoVertexDistance;
    for (const Vec2& r : reentrant_points)
        best = std::min(best, point_triangle_distance(r, a, b, c));
    return best;
}

double SizeCriterion::bound(const Vec2& a, const Vec2& b, const Vec2& c) const {
    if (!graded) return target_h;
    if (touches_reentrant(a, b, c)) return sigma_g * std::pow(target_h, 1.0 / (1.0 - mu));
    const double r = std::min(distance_to_reentrant(a, b, c), diameter_cap);
    return sigma_g * target_h * std::pow(r, mu);
}

void refine_to_criterion(MeshBuilder& mb, const SizeCriterion& crit, const MeshOptions& opts,
                         int flip_sub) {
    for (int sweep = 0; sweep < opts.max_refine_sweeps; ++sweep) {
        std::vector<int> marked;
        for (int t = 0; t < static_cast<int>(mb.tris.size()); ++t) {
            const auto& tr = mb.tris[static_cast<size_t>(t)];
            if (!tr.alive) continue;
            const Vec2& a = mb.nodes[static_cast<size_t>(tr.v[0])];
            const Vec2& b = mb.nodes[static_cast<size_t>(tr.v[1])];
            const Vec2& c = mb.nodes[static_cast<size_t>(tr.v[2])];
            const double h_s = std::max({distance(a, b), distance(b, c), distance(c, a)});
            bool bad = h_s > crit.bound(a, b, c);
            if (!bad && flip_sub >= 0) {
                const double per = distance(a, b) + distance(b, c) + distance(c, a);
                const double rho = std::abs(cross(b - a, c - a)) / per;  // = area*2/per
                if (h_s / rho > opts.kappa) bad = true;
            }
            if (bad) marked.push_back(t);
        }
        if (marked.empty()) return;
        for (int t : marked) {
            if (mb.tris[static_cast<size_t>(t)].alive) mb.lepp_refine(t);
        }
        if (flip_sub >= 0) mb.lawson_pass(flip_sub);
        if (mb.tris.size() > 30u * 1000u * 1000u)
            throw std::runtime_error("mesh refinement: triangle budget exceeded");
    }
    throw std::runtime_error("mesh refinement: criterion not met within sweep limit");
}

SizeCriterion make_criterion(const PrefractalCurve& curve, double target_h, double mu,
                             MeshKind kind, const MeshOptions& opts) {
    SizeCriterion crit;
    crit.target_h = target_h;
    crit.sigma_g = opts.sigma_g;
    if (kind == MeshKind::graded) {
        crit.graded = true;
        crit.mu = mu;
        for (int j : curve.reentrant)
            crit.reentrant_points.push_back(curve.vertices[static_cast<size_t>(j)]);
        const size_t nv = curve.vertices.size();
        if (nv <= 3000) {
            double diam = 0.0;
            for (size_t i = 0; i < nv; ++i)
                for (size_t j = i + 1; j < nv; ++j)
                    diam = std::max(diam, distance(curve.vertices[i], curve.vertices[j]));
            crit.diameter_cap = diam;
        } else {
            Vec2 lo = curve.vertices.front(), hi = lo;
            for (const Vec2& p : curve.vertices) {
                lo.x = std::min(lo.x, p.x);
                lo.y = std::min(lo.y, p.y);
                hi.x = std::max(hi.x, p.x);
                hi.y = std::max(hi.y, p.y);
            }
            crit.diameter_cap = distance(lo, hi);
        }
    }
    return crit;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Lattice tiling of the snowflake interior
// ---------------------------------------------------------------------------

namespace {

uint64_t cell_key(int64_t i, int64_t j, bool up) {
    const uint64_t a = static_cast<uint64_t>(i + (1 << 28));
    const uint64_t b = static_cast<uint64_t>(j + (1 << 28));
    return (a << 33) | (b << 1) | (up ? 1 : 0);
}

}  // namespace

namespace detail {

Vec2 LatticeFrame::point(int64_t i, int64_t j) const {
    return {origin.x + pitch * (static_cast<double>(i) + 0.5 * static_cast<double>(j)),
            origin.y + row_height * static_cast<double>(j)};
}

std::pair<int64_t, int64_t> LatticeFrame::index_of(const Vec2& p, double tol) const {
    const int64_t j = llround((p.y - origin.y) / row_height);
    const int64_t i = llround((p.x - origin.x) / pitch - 0.5 * static_cast<double>(j));
    const Vec2 q = point(i, j);
    if (distance(p, q) > tol)
        throw std::runtime_error("lattice mesh: curve vertex is not lattice-aligned");
    return {i, j};
}

uint64_t lattice_node_key(int64_t i, int64_t j) {
    const uint64_t a = static_cast<uint64_t>(i + (1 << 28));
    const uint64_t b = static_cast<uint64_t>(j + (1 << 28));
    return (a << 32) | b;
}

int lattice_node(MeshBuilder& mb, LatticeMesh& lm, int64_t i, int64_t j) {
    const uint64_t key = lattice_node_key(i, j);
    auto it = lm.node_of_lattice.find(key);
    if (it != lm.node_of_lattice.end()) return it->second;
    const int id = mb.add_node(lm.frame.point(i, j));
    lm.node_of_lattice.emplace(key, id);
    return id;
}

LatticeMesh build_lattice_interior(MeshBuilder& mb, const PrefractalCurve& curve, double target_h,
                                   const MeshOptions& opts) {
    if (!curve.closed) throw std::invalid_argument("lattice mesh: curve must be closed");
    if (target_h <= 0) throw std::invalid_argument("mesh: target_h must be positive");

    LatticeMesh lm;
    const double seg_len = curve.segment_length(0);
    int k = 0;
    while (seg_len / std::pow(2.0, k) > target_h * (1.0 + 1e-12)) {
        ++k;
        if (k > 40) throw std::invalid_argument("mesh: target_h too small");
    }
    const int m = 1 << k;  // boundary edges per prefractal segment
    lm.edges_per_segment = m;
    lm.frame.pitch = seg_len / m;
    lm.frame.row_height = lm.frame.pitch * std::sqrt(3.0) / 2.0;
    lm.frame.origin = curve.vertices.front();

    // Index every curve vertex on the lattice and build the boundary chain.
    const int nv = curve.num_vertices();
    std::vector<std::pair<int64_t, int64_t>> vidx(static_cast<size_t>(nv));
    for (int v = 0; v < nv; ++v)
        vidx[static_cast<size_t>(v)] =
            lm.frame.index_of(curve.vertices[static_cast<size_t>(v)], 1e-9 * lm.frame.pitch + 1e-13);

    std::unordered_map<uint64_t, char> blocked;  // curve edges, keyed by node ids
    lm.chain_nodes.resize(static_cast<size_t>(curve.num_segments()));
    for (int s = 0; s < curve.num_segments(); ++s) {
        const auto [i0, j0] = vidx[static_cast<size_t>(curve.segments[static_cast<size_t>(s)][0])];
        const auto [i1, j1] = vidx[static_cast<size_t>(curve.segments[static_cast<size_t>(s)][1])];
        const int64_t di = i1 - i0, dj = j1 - j0;
        if (di % m != 0 || dj % m != 0)
            throw std::runtime_error("lattice mesh: segment is not an integer chain");
        const int64_t si = di / m, sj = dj / m;
        if (std::abs(si) > 1 || std::abs(sj) > 1 || (si != 0 && sj != 0 && si + sj != 0))
            throw std::runtime_error("lattice mesh: segment direction off the lattice");
        const double L = curve.segment_length(s);
        const double s_start = curve.arc_of_vertex[static_cast<size_t>(
            curve.segments[static_cast<size_t>(s)][0])];
        auto& chain = lm.chain_nodes[static_cast<size_t>(s)];
        int prev_node = -1;
        for (int t = 0; t <= m; ++t) {
            const int nid = lattice_node(mb, lm, i0 + si * t, j0 + sj * t);
            chain.push_back(nid);
            if (t > 0) {
                blocked[edge_key(prev_node, nid)] = 1;
                ConstraintRef ref;
                ref.na = prev_node;
                ref.nb = nid;
                ref.segment = s;
                ref.sa = s_start + L * (t - 1) / m;
                ref.sb = s_start + L * t / m;
                mb.mark_constraint(prev_node, nid, ref);
            }
            prev_node = nid;
        }
    }

    auto edge_blocked = [&](int64_t ai, int64_t aj, int64_t bi, int64_t bj) {
        auto a = lm.node_of_lattice.find(lattice_node_key(ai, aj));
        if (a == lm.node_of_lattice.end()) return false;
        auto b = lm.node_of_lattice.find(lattice_node_key(bi, bj));
        if (b == lm.node_of_lattice.end()) return false;
        return blocked.count(edge_key(a->second, b->second)) > 0;
    };

    // Flood fill the interior cells. The first segment leaves vertex 0 along
    // +x, with the interior above it, so the up-cell at its base is inside.
    const auto [i00, j00] = vidx[0];
    std::vector<std::array<int64_t, 3>> stack{{i00, j00, 1}};
    std::unordered_map<uint64_t, char> seen;
    seen[cell_key(i00, j00, true)] = 1;
    std::vector<std::array<int64_t, 3>> cells;
    const double area = [&] {
        double a = 0;
        for (int s = 0; s < curve.num_segments(); ++s) {
            const Vec2& p = curve.vertices[static_cast<size_t>(curve.segments[static_cast<size_t>(s)][0])];
            const Vec2& q = curve.vertices[static_cast<size_t>(curve.segments[static_cast<size_t>(s)][1])];
            a += cross(p, q);
        }
        return 0.5 * a;
    }();
    const double cell_area = std::sqrt(3.0) / 4.0 * lm.frame.pitch * lm.frame.pitch;
    const size_t expected = static_cast<size_t>(std::llround(std::abs(area) / cell_area));
    while (!stack.empty()) {
        const auto [i, j, up] = stack.back();
        stack.pop_back();
        cells.push_back({i, j, up});
        if (cells.size() > expected + 16)
            throw std::runtime_error("lattice mesh: flood fill escaped the boundary");
        // Each cell has three neighbors across its three edges.
        struct Nb {
            int64_t ei0, ej0, ei1, ej1;  // separating lattice edge
            int64_t ni, nj;
            bool nup;
        };
        std::array<Nb, 3> nbs;
        if (up) {
            nbs = {Nb{i, j, i + 1, j, i, j - 1, false}, Nb{i, j, i, j + 1, i - 1, j, false},
                   Nb{i + 1, j, i, j + 1, i, j, false}};
        } else {
            nbs = {Nb{i + 1, j, i + 1, j + 1, i + 1, j, true}, Nb{i + 1, j + 1, i, j + 1, i, j + 1, true},
                   Nb{i + 1, j, i, j + 1, i, j, true}};
        }
        for (const auto& nb : nbs) {
            if (edge_blocked(nb.ei0, nb.ej0, nb.ei1, nb.ej1)) continue;
            const uint64_t key = cell_key(nb.ni, nb.nj, nb.nup);
            if (seen.count(key)) continue;
            seen[key] = 1;
            stack.push_back({nb.ni, nb.nj, nb.nup ? int64_t{1} : int64_t{0}});
        }
    }
    if (cells.size() != expected)
        throw std::runtime_error("lattice mesh: tiling covers " + std::to_string(cells.size()) +
                                 " cells, expected " + std::to_string(expected));

    for (const auto& [i, j, up] : cells) {
        if (up) {
            mb.add_tri(lattice_node(mb, lm, i, j), lattice_node(mb, lm, i + 1, j),
                       lattice_node(mb, lm, i, j + 1), 1);
        } else {
            mb.add_tri(lattice_node(mb, lm, i + 1, j), lattice_node(mb, lm, i + 1, j + 1),
                       lattice_node(mb, lm, i, j + 1), 1);
        }
    }
    (void)opts;
    return lm;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public builders (interior region; the two-region pipeline lives in
// mesh_unstructured.cpp)
// ---------------------------------------------------------------------------

static void validate_mu(double mu) {
    if (!(mu > 0.25 && mu < 0.5))
        throw std::invalid_argument("mesh: grading exponent mu must lie in (1/4, 1/2)");
}

Triangulation build_quasi_uniform_mesh(const PrefractalCurve& curve, double target_h,
                                       MeshRegion region, const MeshOptions& opts) {
    if (target_h <= 0) throw std::invalid_argument("mesh: target_h must be positive");
    if (region == MeshRegion::interior_plus_outer_square)
        return detail::build_two_region(curve, target_h, 0.0, MeshKind::quasi_uniform, opts);
    detail::MeshBuilder mb;
    detail::build_lattice_interior(mb, curve, target_h, opts);
    Triangulation tri = mb.finalize();
    tri.kind = MeshKind::quasi_uniform;
    tri.target_h = target_h;
    tri.sigma_g = opts.sigma_g;
    return tri;
}

Triangulation build_graded_mesh(const PrefractalCurve& curve, double target_h, double mu,
                                MeshRegion region, const MeshOptions& opts) {
    if (target_h <= 0) throw std::invalid_argument("mesh: target_h must be positive");
    validate_mu(mu);
    if (region == MeshRegion::interior_plus_outer_square)
        return detail::build_two_region(curve, target_h, mu, MeshKind::graded, opts);
    detail::MeshBuilder mb;
    detail::build_lattice_interior(mb, curve, target_h, opts);
    const auto crit = detail::make_criterion(curve, target_h, mu, MeshKind::graded, opts);
    detail::refine_to_criterion(mb, crit, opts, /*flip_sub=*/-1);
    Triangulation tri = mb.finalize();
    tri.kind = MeshKind::graded;
    tri.target_h = target_h;
    tri.grading_mu = mu;
    tri.sigma_g = opts.sigma_g;
    return tri;
}

// ---------------------------------------------------------------------------
// Grading report
// ---------------------------------------------------------------------------

GradingReport check_grading(const Triangulation& tri, const PrefractalCurve& curve, double mu) {
    validate_mu(mu);
    MeshOptions opts;
    opts.sigma_g = tri.sigma_g;
    const auto crit =
        detail::make_criterion(curve, tri.target_h, mu, MeshKind::graded, opts);
    GradingReport rep;
    rep.entries.reserve(static_cast<size_t>(tri.num_triangles()));
    for (int t = 0; t < tri.num_triangles(); ++t) {
        const auto& v = tri.triangles[static_cast<size_t>(t)];
        const Vec2& a = tri.nodes[static_cast<size_t>(v[0])];
        const Vec2& b = tri.nodes[static_cast<size_t>(v[1])];
        const Vec2& c = tri.nodes[static_cast<size_t>(v[2])];
        GradingReport::Entry e;
        e.triangle = t;
        e.touches_reentrant = crit.touches_reentrant(a, b, c);
        e.h_S = tri.triangle_diameter(t);
        e.bound = crit.bound(a, b, c);
        e.pass = e.h_S <= e.bound * (1.0 + 1e-12);
        if (!e.pass) rep.all_pass = false;
        const double ratio = e.h_S / e.bound;
        if (e.touches_reentrant)
            rep.worst_corner_ratio = std::max(rep.worst_corner_ratio, ratio);
        else
            rep.worst_interior_ratio = std::max(rep.worst_interior_ratio, ratio);
        rep.entries.push_back(e);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Boundary trace map
// ---------------------------------------------------------------------------

BoundaryTraceMap boundary_trace_map(const Triangulation& tri, const PrefractalCurve& curve,
                                    double tolerance) {
    BoundaryTraceMap map;
    if (tri.curve_edges.empty()) return map;
    map.node.reserve(tri.curve_edges.size());
    map.arc.reserve(tri.curve_edges.size());
    double prev_end = 0.0;
    for (size_t i = 0; i < tri.curve_edges.size(); ++i) {
        const CurveEdge& e = tri.curve_edges[i];
        if (i > 0 && std::abs(e.s0 - prev_end) > 1e-10)
            throw std::runtime_error("boundary trace: curve edges do not chain contiguously");
        prev_end = e.s1;
        map.node.push_back(e.a);
        map.arc.push_back(e.s0);
        const Vec2& p = tri.nodes[static_cast<size_t>(e.a)];
        // Verify node a sits on its curve segment.
        const auto& seg = curve.segments[static_cast<size_t>(e.segment)];
        const double d = detail::point_segment_distance(
            p, curve.vertices[static_cast<size_t>(seg[0])], curve.vertices[static_cast<size_t>(seg[1])]);
        if (d > tolerance)
            throw std::runtime_error("boundary trace: node off the curve by " + std::to_string(d));
    }
    if (std::abs(prev_end - curve.total_length) > 1e-10)
        throw std::runtime_error("boundary trace: edges do not cover the curve");
    for (size_t i = 1; i < map.arc.size(); ++i)
        if (!(map.arc[i] > map.arc[i - 1]))
            throw std::runtime_error("boundary trace: arc positions not strictly increasing");
    for (size_t i = 0; i < map.node.size(); ++i) {
        if (!map.index_of_node.emplace(map.node[i], static_cast<int>(i)).second)
            throw std::runtime_error("boundary trace: node appears twice on the curve");
    }
    return map;
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

void verify_mesh(const Triangulation& tri, const PrefractalCurve& curve, const MeshOptions& opts) {
    std::unordered_map<uint64_t, int> edge_count;
    for (int t = 0; t < tri.num_triangles(); ++t) {
        if (tri.triangle_area(t) <= 0)
            throw std::runtime_error("verify_mesh: non-positive triangle orientation at " +
                                     std::to_string(t));
        const auto& v = tri.triangles[static_cast<size_t>(t)];
        for (int e = 0; e < 3; ++e) ++edge_count[edge_key(v[static_cast<size_t>(e)], v[(e + 1) % 3])];
        const double kappa = tri.triangle_diameter(t) / tri.triangle_inradius(t);
        if (kappa > opts.kappa * (1.0 + 1e-12))
            throw std::runtime_error("verify_mesh: shape regularity violated, h/rho = " +
                                     std::to_string(kappa));
    }
    std::unordered_map<uint64_t, char> curve_edge_set;
    for (const auto& e : tri.curve_edges) curve_edge_set[edge_key(e.a, e.b)] = 1;
    std::unordered_map<uint64_t, char> outer_edge_set;
    for (const auto& e : tri.outer_edges) outer_edge_set[edge_key(e[0], e[1])] = 1;
    const bool two_region = !tri.outer_edges.empty();
    for (const auto& [key, count] : edge_count) {
        if (count > 2) throw std::runtime_error("verify_mesh: edge shared by more than two triangles");
        if (count == 1) {
            // Free edges must be domain boundary: curve edges for interior
            // meshes, outer square edges for two-region meshes.
            if (two_region) {
                if (!outer_edge_set.count(key))
                    throw std::runtime_error("verify_mesh: hanging boundary edge off the square");
            } else {
                if (!curve_edge_set.count(key))
                    throw std::runtime_error("verify_mesh: hanging boundary edge off the curve");
            }
        }
        if (count == 2 && !two_region && curve_edge_set.count(key))
            throw std::runtime_error("verify_mesh: interior-mesh curve edge has two triangles");
    }
    // Prefractal coverage: chained arcs, each edge on its segment.
    double covered = 0.0;
    for (const auto& e : tri.curve_edges) {
        covered += e.s1 - e.s0;
        const Vec2& a = tri.nodes[static_cast<size_t>(e.a)];
        const Vec2& b = tri.nodes[static_cast<size_t>(e.b)];
        const double len = distance(a, b);
        if (std::abs(len - (e.s1 - e.s0)) > 1e-9)
            throw std::runtime_error("verify_mesh: curve edge arc span mismatches its length");
    }
    if (!tri.curve_edges.empty() && std::abs(covered - curve.total_length) > 1e-8)
        throw std::runtime_error("verify_mesh: curve edges cover " + std::to_string(covered) +
                                 " of " + std::to_string(curve.total_length));
    // Euler relation V - E + F = 1 for a triangulated disk.
    const long long V = tri.num_nodes();
    const long long E = static_cast<long long>(edge_count.size());
    const long long F = tri.num_triangles();
    if (V - E + F != 1)
        throw std::runtime_error("verify_mesh: Euler relation violated (V-E+F = " +
                                 std::to_string(V - E + F) + ")");
}

// ---------------------------------------------------------------------------
// Text and VTK output
// ---------------------------------------------------------------------------

void write_mesh(std::ostream& out, const Triangulation& tri) {
    out.precision(17);
    out << "NODES " << tri.num_nodes() << '\n';
    for (const Vec2& p : tri.nodes) out << p.x << ' ' << p.y << '\n';
    out << "TRIANGLES " << tri.num_triangles() << '\n';
    for (int t = 0; t < tri.num_triangles(); ++t) {
        const auto& v = tri.triangles[static_cast<size_t>(t)];
        out << v[0] << ' ' << v[1] << ' ' << v[2] << ' ' << tri.subdomain[static_cast<size_t>(t)]
            << '\n';
    }
    out << "BOUNDARY " << tri.curve_edges.size() << '\n';
    for (const auto& e : tri.curve_edges)
        out << e.a << ' ' << e.b << ' ' << e.segment << ' ' << e.s0 << ' ' << e.s1 << '\n';
}

Triangulation read_mesh(std::istream& in) {
    Triangulation tri;
    std::string tag;
    int n = 0;
    if (!(in >> tag >> n) || tag != "NODES") throw std::runtime_error("read_mesh: expected NODES");
    tri.nodes.resize(static_cast<size_t>(n));
    for (auto& p : tri.nodes) in >> p.x >> p.y;
    if (!(in >> tag >> n) || tag != "TRIANGLES")
        throw std::runtime_error("read_mesh: expected TRIANGLES");
    tri.triangles.resize(static_cast<size_t>(n));
    tri.subdomain.resize(static_cast<size_t>(n));
    for (int t = 0; t < n; ++t) {
        auto& v = tri.triangles[static_cast<size_t>(t)];
        in >> v[0] >> v[1] >> v[2] >> tri.subdomain[static_cast<size_t>(t)];
    }
    if (!(in >> tag >> n) || tag != "BOUNDARY")
        throw std::runtime_error("read_mesh: expected BOUNDARY");
    tri.curve_edges.resize(static_cast<size_t>(n));
    for (auto& e : tri.curve_edges) in >> e.a >> e.b >> e.segment >> e.s0 >> e.s1;
    if (!in) throw std::runtime_error("read_mesh: truncated file");
    double h = 0.0;
    for (int t = 0; t < tri.num_triangles(); ++t) h = std::max(h, tri.triangle_diameter(t));
    tri.mesh_size = h;
    return tri;
}

void write_vtk(std::ostream& out, const Triangulation& tri,
               const std::vector<std::pair<std::string, std::vector<double>>>& point_fields) {
    out << "# vtk DataFile Version 3.0\n";
    out << "venttsel mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    out.precision(17);
    out << "POINTS " << tri.num_nodes() << " double\n";
    for (const Vec2& p : tri.nodes) out << p.x << ' ' << p.y << " 0\n";
    out << "CELLS " << tri.num_triangles() << ' ' << 4 * tri.num_triangles() << '\n';
    for (const auto& v : tri.triangles) out << "3 " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
    out << "CELL_TYPES " << tri.num_triangles() << '\n';
    for (int t = 0; t < tri.num_triangles(); ++t) out << "5\n";
    out << "CELL_DATA " << tri.num_triangles() << '\n';
    out << "SCALARS subdomain int 1\nLOOKUP_TABLE default\n";
    for (int s : tri.subdomain) out << s << '\n';
    if (!point_fields.empty()) {
        out << "POINT_DATA " << tri.num_nodes() << '\n';
        for (const auto& [name, values] : point_fields) {
            if (static_cast<int>(values.size()) != tri.num_nodes())
                throw std::invalid_argument("write_vtk: field size mismatch for " + name);
            out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
            for (double v : values) out << v << '\n';
        }
    }
}

}  // namespace venttsel
