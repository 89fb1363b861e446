#include "kp/film.hh"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <map>
#include <set>

namespace kp {

namespace {

double bbox_squared(const std::vector<Vec3> &pts) {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const Vec3 &p : pts) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return (hi - lo).squaredNorm();
}

double raw_area(const FilmMesh &film) {
    double a = 0.0;
    for (const Triangle &t : film.triangles)
        a += triangle_area(film.vertices[t[0]], film.vertices[t[1]], film.vertices[t[2]]);
    return a;
}

using EdgeKey = std::pair<int, int>;
EdgeKey edge_key(int a, int b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

std::map<EdgeKey, std::vector<int>> build_edge_map(const FilmMesh &film) {
    std::map<EdgeKey, std::vector<int>> edges;
    for (int ti = 0; ti < film.triangle_count(); ++ti) {
        const Triangle &t = film.triangles[ti];
        for (int k = 0; k < 3; ++k) edges[edge_key(t[k], t[(k + 1) % 3])].push_back(ti);
    }
    return edges;
}

// Midline proxy and reach used for the interior-point prefilter.
struct TubeProxy {
    std::vector<Vec3> ring_centers;
    double reach = 0.0;
};

TubeProxy make_tube_proxy(const TubeMesh &tube) {
    TubeProxy proxy;
    proxy.ring_centers.resize(tube.rings, Vec3::Zero());
    for (int i = 0; i < tube.rings; ++i) {
        for (int j = 0; j < tube.ring_size; ++j)
            proxy.ring_centers[i] += tube.vertices[tube.vertex_index(i, j)];
        proxy.ring_centers[i] /= tube.ring_size;
    }
    double r = 0.0;
    for (int i = 0; i < tube.rings; ++i)
        for (int j = 0; j < tube.ring_size; ++j)
            r = std::max(r, (tube.vertices[tube.vertex_index(i, j)] - proxy.ring_centers[i]).norm());
    double h = 0.0;
    for (int i = 0; i < tube.rings; ++i)
        h = std::max(h, (proxy.ring_centers[(i + 1) % tube.rings] - proxy.ring_centers[i]).norm());
    proxy.reach = r + h;
    return proxy;
}

bool loop_intersects_film(const FilmMesh &film, const TestLoop &loop, double eps, int &hint) {
    const size_t k = loop.points.size();
    const int nt = film.triangle_count();
    auto test_triangle = [&](int ti) {
        const Triangle &t = film.triangles[ti];
        for (size_t i = 0; i < k; ++i) {
            if (segment_triangle_intersect(loop.points[i], loop.points[(i + 1) % k],
                                           film.vertices[t[0]], film.vertices[t[1]],
                                           film.vertices[t[2]], eps))
                return true;
        }
        return false;
    };
    if (hint >= 0 && hint < nt && test_triangle(hint)) return true;
    for (int ti = 0; ti < nt; ++ti) {
        if (test_triangle(ti)) {
            hint = ti;
            return true;
        }
    }
    return false;
}

void apply_projection(FilmMesh &film, const TubeMesh &tube, const TubeProxy &proxy,
                      bool interior_checks = true) {
    for (int vi = 0; vi < film.vertex_count(); ++vi) {
        if (film.boundary_tags[vi]) {
            auto [q, tag] = project_to_tube(tube, film.vertices[vi], film.boundary_tags[vi]->segment);
            film.vertices[vi] = q;
            film.boundary_tags[vi] = tag;
        } else if (interior_checks &&
                   inside_tube(tube, proxy.ring_centers, proxy.reach, film.vertices[vi])) {
            auto [q, tag] = project_to_tube(tube, film.vertices[vi], -1);
            (void)tag;
            film.vertices[vi] = q;
        }
    }
}

double min_triangle_angle_deg(const FilmMesh &film) {
    double worst = 180.0;
    for (const Triangle &t : film.triangles) {
        for (int k = 0; k < 3; ++k) {
            const Vec3 &a = film.vertices[t[k]];
            const Vec3 &b = film.vertices[t[(k + 1) % 3]];
            const Vec3 &c = film.vertices[t[(k + 2) % 3]];
            const Vec3 u = (b - a).normalized(), v = (c - a).normalized();
            worst = std::min(worst, std::acos(std::clamp(u.dot(v), -1.0, 1.0)) * 180.0 / M_PI);
        }
    }
    return worst;
}

// One sweep of area-non-increasing edge flips. Returns the number applied.
int flip_pass(FilmMesh &film, double area_eps) {
    auto edges = build_edge_map(film);
    std::set<EdgeKey> existing;
    for (const auto &[key, tris] : edges) existing.insert(key);
    std::vector<bool> dirty(film.triangle_count(), false);

    int flips = 0;
    for (const auto &[key, tris] : edges) {
        if (tris.size() != 2) continue;
        const int t1i = tris[0], t2i = tris[1];
        if (dirty[t1i] || dirty[t2i]) continue;
        Triangle &t1 = film.triangles[t1i];
        Triangle &t2 = film.triangles[t2i];

        // Orient so t1 = (a, b, c) and t2 = (b, a, d).
        int a = -1, b = -1, c = -1, d = -1;
        for (int k = 0; k < 3; ++k) {
            const int u = t1[k], v = t1[(k + 1) % 3];
            if (edge_key(u, v) == key) {
                a = u;
                b = v;
                c = t1[(k + 2) % 3];
                break;
            }
        }
        for (int k = 0; k < 3; ++k) {
            const int u = t2[k], v = t2[(k + 1) % 3];
            if (u == b && v == a) {
                d = t2[(k + 2) % 3];
                break;
            }
        }
        if (a < 0 || d < 0 || c == d) continue;
        if (existing.count(edge_key(c, d))) continue;

        const Vec3 &pa = film.vertices[a], &pb = film.vertices[b];
        const Vec3 &pc = film.vertices[c], &pd = film.vertices[d];
        const double old_area = triangle_area(pa, pb, pc) + triangle_area(pb, pa, pd);
        const double new_a1 = triangle_area(pa, pd, pc);
        const double new_a2 = triangle_area(pd, pb, pc);
        if (new_a1 <= area_eps || new_a2 <= area_eps) continue;
        if (new_a1 + new_a2 >= old_area - area_eps) continue;

        t1 = {a, d, c};
        t2 = {d, b, c};
        dirty[t1i] = dirty[t2i] = true;
        existing.erase(key);
        existing.insert(edge_key(c, d));
        ++flips;
    }
    return flips;
}

void split_long_edges(FilmMesh &film, const TubeMesh &tube, double length_max) {
    auto edges = build_edge_map(film);
    std::vector<bool> dirty(film.triangle_count(), false);

    for (const auto &[key, tris] : edges) {
        const auto [a, b] = key;
        if ((film.vertices[a] - film.vertices[b]).norm() <= length_max) continue;
        bool skip = false;
        for (int ti : tris)
            if (ti < static_cast<int>(dirty.size()) && dirty[ti]) skip = true;
        if (skip) continue;

        Vec3 mid = 0.5 * (film.vertices[a] + film.vertices[b]);
        std::optional<BoundaryTag> tag;
        if (tris.size() == 1 && film.boundary_tags[a] && film.boundary_tags[b]) {
            auto [q, t] = project_to_tube(tube, mid, film.boundary_tags[a]->segment);
            mid = q;
            tag = t;
        }
        const int mi = film.vertex_count();
        film.vertices.push_back(mid);
        film.boundary_tags.push_back(tag);

        for (int ti : tris) {
            Triangle t = film.triangles[ti];
            int k = 0;
            while (!(edge_key(t[k], t[(k + 1) % 3]) == key)) ++k;
            const int u = t[k], v = t[(k + 1) % 3], w = t[(k + 2) % 3];
            film.triangles[ti] = {u, mi, w};
            film.triangles.push_back({mi, v, w});
            dirty[ti] = true;
        }
    }
}

// Collapses at most `max_ops` short edges, never along the boundary and never
// increasing the area. Returns true if anything changed.
bool collapse_short_edges(FilmMesh &film, double length_min, double area_eps, int max_ops) {
    bool changed = false;
    for (int op = 0; op < max_ops; ++op) {
        auto edges = build_edge_map(film);

        // Vertex -> incident triangles.
        std::vector<std::vector<int>> star(film.vertex_count());
        for (int ti = 0; ti < film.triangle_count(); ++ti)
            for (int v : film.triangles[ti]) star[v].push_back(ti);

        bool applied = false;
        for (const auto &[key, tris] : edges) {
            auto [a, b] = key;
            if ((film.vertices[a] - film.vertices[b]).norm() >= length_min) continue;
            if (film.boundary_tags[a] && film.boundary_tags[b]) continue;
            int keep = a, drop = b;
            if (film.boundary_tags[b]) std::swap(keep, drop);

            // Link condition: shared neighbors must be exactly the vertices
            // opposite the collapsing edge.
            std::set<int> opposite;
            for (int ti : tris)
                for (int v : film.triangles[ti])
                    if (v != a && v != b) opposite.insert(v);
            std::set<int> na, nb;
            for (int ti : star[a])
                for (int v : film.triangles[ti])
                    if (v != a) na.insert(v);
            for (int ti : star[b])
                for (int v : film.triangles[ti])
                    if (v != b) nb.insert(v);
            std::set<int> shared;
            std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(),
                                  std::inserter(shared, shared.end()));
            if (shared != opposite) continue;

            double area_before = 0.0, area_after = 0.0;
            bool degenerate = false;
            for (int ti : star[drop]) {
                Triangle t = film.triangles[ti];
                area_before += triangle_area(film.vertices[t[0]], film.vertices[t[1]],
                                             film.vertices[t[2]]);
                bool dies = false;
                for (int &v : t) {
                    if (v == drop) v = keep;
                }
                if (t[0] == t[1] || t[1] == t[2] || t[2] == t[0]) dies = true;
                if (!dies) {
                    const double na2 = triangle_area(film.vertices[t[0]], film.vertices[t[1]],
                                                     film.vertices[t[2]]);
                    if (na2 <= area_eps) degenerate = true;
                    area_after += na2;
                }
            }
            if (degenerate || area_after > area_before + area_eps) continue;

            for (int ti : star[drop])
                for (int &v : film.triangles[ti])
                    if (v == drop) v = keep;
            // Remove collapsed (degenerate) triangles.
            std::vector<Triangle> kept;
            kept.reserve(film.triangles.size());
            for (const Triangle &t : film.triangles)
                if (!(t[0] == t[1] || t[1] == t[2] || t[2] == t[0])) kept.push_back(t);
            film.triangles = std::move(kept);
            // Drop the orphaned vertex, remapping indices.
            film.vertices.erase(film.vertices.begin() + drop);
            film.boundary_tags.erase(film.boundary_tags.begin() + drop);
            for (Triangle &t : film.triangles)
                for (int &v : t)
                    if (v > drop) --v;
            applied = true;
            changed = true;
            break;
        }
        if (!applied) break;
    }
    return changed;
}

// Merges `drop` into `keep` if the link condition holds and no surviving
// incident triangle becomes degenerate. Unlike collapse_short_edges this
// permits merging two boundary vertices (the boundary chain stays tagged);
// merging a boundary vertex into an interior one is still forbidden.
bool collapse_edge(FilmMesh &film, int keep, int drop, double area_tol) {
    if (film.boundary_tags[drop] && !film.boundary_tags[keep]) return false;

    std::vector<std::vector<int>> star(film.vertex_count());
    for (int ti = 0; ti < film.triangle_count(); ++ti)
        for (int v : film.triangles[ti]) star[v].push_back(ti);

    std::set<int> opposite, na, nb;
    for (int ti : star[keep]) {
        bool has_drop = false;
        for (int v : film.triangles[ti]) has_drop |= v == drop;
        for (int v : film.triangles[ti])
            if (v != keep) {
                na.insert(v);
                if (has_drop && v != drop) opposite.insert(v);
            }
    }
    for (int ti : star[drop])
        for (int v : film.triangles[ti])
            if (v != drop) nb.insert(v);
    std::set<int> shared;
    std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(),
                          std::inserter(shared, shared.end()));
    if (shared != opposite) return false;

    for (int ti : star[drop]) {
        Triangle t = film.triangles[ti];
        for (int &v : t)
            if (v == drop) v = keep;
        if (t[0] == t[1] || t[1] == t[2] || t[2] == t[0]) continue;  // dies
        if (triangle_area(film.vertices[t[0]], film.vertices[t[1]], film.vertices[t[2]]) <=
            area_tol)
            return false;
    }

    for (int ti : star[drop])
        for (int &v : film.triangles[ti])
            if (v == drop) v = keep;
    std::vector<Triangle> kept;
    kept.reserve(film.triangles.size());
    for (const Triangle &t : film.triangles)
        if (!(t[0] == t[1] || t[1] == t[2] || t[2] == t[0])) kept.push_back(t);
    film.triangles = std::move(kept);
    film.vertices.erase(film.vertices.begin() + drop);
    film.boundary_tags.erase(film.boundary_tags.begin() + drop);
    for (Triangle &t : film.triangles)
        for (int &v : t)
            if (v > drop) --v;
    return true;
}

// Removes zero-area triangles that survive projection and maintenance (a
// collinear boundary corner, for instance): collapse one of the sliver's
// edges, or failing that flip its longest edge into the neighbour. The area
// change is on the order of the sliver area itself.
void strip_slivers(FilmMesh &film, double area_tol) {
    for (int pass = 0; pass < 256; ++pass) {
        int bad = -1;
        for (int ti = 0; ti < film.triangle_count() && bad < 0; ++ti) {
            const Triangle &t = film.triangles[ti];
            if (triangle_area(film.vertices[t[0]], film.vertices[t[1]], film.vertices[t[2]]) <=
                area_tol)
                bad = ti;
        }
        if (bad < 0) return;

        const Triangle t = film.triangles[bad];
        std::array<std::pair<double, int>, 3> order;
        for (int k = 0; k < 3; ++k)
            order[k] = {(film.vertices[t[k]] - film.vertices[(t[(k + 1) % 3])]).norm(), k};
        std::sort(order.begin(), order.end());

        bool fixed = false;
        for (const auto &[len, k] : order) {
            const int u = t[k], v = t[(k + 1) % 3];
            if (collapse_edge(film, u, v, area_tol) || collapse_edge(film, v, u, area_tol)) {
                fixed = true;
                break;
            }
        }
        if (!fixed) {
            // Flip the longest edge of the sliver.
            const int k = order[2].second;
            const int a = t[k], b = t[(k + 1) % 3], c = t[(k + 2) % 3];
            auto edges = build_edge_map(film);
            const auto it = edges.find(edge_key(a, b));
            if (it != edges.end() && it->second.size() == 2) {
                const int other = it->second[0] == bad ? it->second[1] : it->second[0];
                int d = -1;
                for (int v : film.triangles[other])
                    if (v != a && v != b) d = v;
                if (d >= 0 && d != c && !edges.count(edge_key(c, d)) &&
                    triangle_area(film.vertices[a], film.vertices[d], film.vertices[c]) >
                        area_tol &&
                    triangle_area(film.vertices[d], film.vertices[b], film.vertices[c]) >
                        area_tol) {
                    film.triangles[bad] = {a, d, c};
                    film.triangles[other] = {d, b, c};
                    fixed = true;
                }
            }
        }
        if (!fixed) return;  // leave it; better a sliver than a broken mesh
    }
}

}  // namespace

double film_area(const FilmMesh &film) {
    const double eps = 1e-14 * bbox_squared(film.vertices);
    double a = 0.0;
    for (const Triangle &t : film.triangles) {
        const double ta = triangle_area(film.vertices[t[0]], film.vertices[t[1]],
                                        film.vertices[t[2]]);
        if (ta <= eps) throw InvalidInput("film_area: degenerate triangle");
        a += ta;
    }
    return a;
}

double film_boundary_length(const FilmMesh &film) {
    auto edges = build_edge_map(film);
    double len = 0.0;
    for (const auto &[key, tris] : edges)
        if (tris.size() == 1) len += (film.vertices[key.first] - film.vertices[key.second]).norm();
    return len;
}

std::vector<Vec3> film_area_gradient(const FilmMesh &film) {
    std::vector<Vec3> grad(film.vertex_count(), Vec3::Zero());
    for (const Triangle &t : film.triangles) {
        const Vec3 &a = film.vertices[t[0]], &b = film.vertices[t[1]], &c = film.vertices[t[2]];
        const Vec3 n = (b - a).cross(c - a);
        const double nn = n.norm();
        if (nn < 1e-300) continue;
        const Vec3 nhat = n / nn;
        grad[t[0]] += 0.5 * nhat.cross(c - b);
        grad[t[1]] += 0.5 * nhat.cross(a - c);
        grad[t[2]] += 0.5 * nhat.cross(b - a);
    }
    return grad;
}

void validate_film(const FilmMesh &film) {
    if (film.boundary_tags.size() != film.vertices.size())
        throw InvalidInput("FilmMesh: one boundary tag slot per vertex required");
    auto edges = build_edge_map(film);
    for (const auto &[key, tris] : edges) {
        if (tris.size() > 2) throw InvalidInput("FilmMesh: non-manifold edge");
        if (tris.size() == 1) {
            if (!film.boundary_tags[key.first] || !film.boundary_tags[key.second])
                throw InvalidInput("FilmMesh: boundary vertex without tube tag");
        }
    }
    film_area(film);  // degenerate-triangle check
}

std::pair<Vec3, BoundaryTag> project_to_tube(const TubeMesh &tube, const Vec3 &p, int ring_hint) {
    const int n = tube.rings, m = tube.ring_size;
    double best = std::numeric_limits<double>::infinity();
    Vec3 best_q = Vec3::Zero();
    int best_tri = -1;

    auto scan_ring = [&](int i) {
        const int ring = ((i % n) + n) % n;
        for (int j = 0; j < m; ++j) {
            for (int k = 0; k < 2; ++k) {
                const int ti = 2 * (ring * m + j) + k;
                const Triangle &t = tube.triangles[ti];
                const Vec3 q = closest_point_on_triangle(p, tube.vertices[t[0]],
                                                         tube.vertices[t[1]], tube.vertices[t[2]]);
                const double d = (p - q).squaredNorm();
                if (d < best) {
                    best = d;
                    best_q = q;
                    best_tri = ti;
                }
            }
        }
    };

    if (ring_hint >= 0) {
        for (int di = -3; di <= 3; ++di) scan_ring(ring_hint + di);
    } else {
        for (int i = 0; i < n; ++i) scan_ring(i);
    }

    const int quad = best_tri / 2;
    BoundaryTag tag;
    tag.segment = quad / m;
    tag.angular = quad % m;
    const Vec3 &e0 = tube.vertices[tube.vertex_index(tag.segment, tag.angular)];
    const Vec3 &e1 = tube.vertices[tube.vertex_index(tag.segment + 1, tag.angular)];
    const Vec3 e = e1 - e0;
    const double l2 = e.squaredNorm();
    tag.offset = l2 > 0.0 ? std::clamp((best_q - e0).dot(e) / l2, 0.0, 1.0) : 0.0;
    return {best_q, tag};
}

void project_film_to_tube(FilmMesh &film, const TubeMesh &tube, bool interior_checks) {
    apply_projection(film, tube, make_tube_proxy(tube), interior_checks);
}

bool inside_tube(const TubeMesh &tube, const std::vector<Vec3> &midline, double reach,
                 const Vec3 &p) {
    if (point_to_closed_polyline_distance(p, midline) > reach) return false;
    return std::abs(mesh_winding_number(p, tube.vertices, tube.triangles)) >= 0.5;
}

FilmMesh init_film(const FramedCurve &curve, const TubeMesh &tube) {
    const int n = tube.rings, m = tube.ring_size;
    if ((curve.nodes[curve.segment_count()] - curve.nodes[0]).norm() > 1e-3 * curve.length)
        throw InvalidInput("init_film: midline not closed");

    Vec3 centroid = Vec3::Zero();
    for (int i = 0; i < n; ++i) centroid += curve.nodes[i];
    centroid /= n;

    // Ring (fixed angular index) facing the centroid.
    int jstar = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i)
            acc += (tube.vertices[tube.vertex_index(i, j)] - centroid).norm();
        if (acc < best) {
            best = acc;
            jstar = j;
        }
    }

    FilmMesh film;
    film.vertices.push_back(centroid);
    film.boundary_tags.push_back(std::nullopt);
    for (int i = 0; i < n; ++i) {
        film.vertices.push_back(tube.vertices[tube.vertex_index(i, jstar)]);
        film.boundary_tags.push_back(BoundaryTag{i, jstar, 0.0});
    }
    for (int i = 0; i < n; ++i) film.triangles.push_back({0, 1 + i, 1 + (i + 1) % n});

    // Two rounds of uniform 1-to-4 refinement; boundary midpoints are put
    // back on the tube surface.
    for (int round = 0; round < 2; ++round) {
        auto edges = build_edge_map(film);
        std::map<EdgeKey, int> midpoint;
        for (const auto &[key, tris] : edges) {
            Vec3 mid = 0.5 * (film.vertices[key.first] + film.vertices[key.second]);
            std::optional<BoundaryTag> tag;
            if (tris.size() == 1 && film.boundary_tags[key.first] &&
                film.boundary_tags[key.second]) {
                auto [q, t] = project_to_tube(tube, mid, film.boundary_tags[key.first]->segment);
                mid = q;
                tag = t;
            }
            midpoint[key] = film.vertex_count();
            film.vertices.push_back(mid);
            film.boundary_tags.push_back(tag);
        }
        std::vector<Triangle> refined;
        refined.reserve(film.triangles.size() * 4);
        for (const Triangle &t : film.triangles) {
            const int ab = midpoint[edge_key(t[0], t[1])];
            const int bc = midpoint[edge_key(t[1], t[2])];
            const int ca = midpoint[edge_key(t[2], t[0])];
            refined.push_back({t[0], ab, ca});
            refined.push_back({ab, t[1], bc});
            refined.push_back({ca, bc, t[2]});
            refined.push_back({ab, bc, ca});
        }
        film.triangles = std::move(refined);
    }
    validate_film(film);
    return film;
}

TestLoop canonical_threading_loop(const FramedCurve &curve, const CrossSection &section,
                                  int points, double radius_factor) {
    TestLoop loop;
    loop.label = "threading";
    loop.declared_class = "meridian of the rod at node 0";
    const double r = radius_factor * section.bound;
    const Vec3 &x = curve.nodes[0];
    const Vec3 &d = curve.directors[0];
    const Vec3 b = curve.tangents[0].cross(d);
    for (int k = 0; k < points; ++k) {
        const double th = 2.0 * M_PI * k / points;
        loop.points.push_back(x + r * (std::cos(th) * d + std::sin(th) * b));
    }
    return loop;
}

std::pair<FilmMesh, RelaxReport> relax_film(FilmMesh film, const TubeMesh &tube,
                                            const std::vector<TestLoop> &loops,
                                            const RelaxOptions &opts) {
    validate_film(film);
    const TubeProxy proxy = make_tube_proxy(tube);
    const auto box = tube.bounding_box();
    const double scale = std::max(1e-30, (box[1] - box[0]).norm());
    const double eps_geom = 1e-12 * std::max(1.0, scale);
    const double area_eps = 1e-14 * scale * scale;

    // Loop-vs-tube validity is established once up front (spanning_check
    // throws on a touching loop); afterwards only the film moves.
    {
        const std::vector<bool> initial = spanning_check(film, loops, tube);
        for (size_t i = 0; i < initial.size(); ++i)
            if (!initial[i])
                throw InvalidInput("relax_film: initial film does not span loop '" +
                                   loops[i].label + "'");
    }
    std::vector<int> hints(loops.size(), -1);
    auto spanning_ok_fast = [&]() {
        for (size_t i = 0; i < loops.size(); ++i) {
            int h = hints[i];
            if (!loop_intersects_film(film, loops[i], eps_geom, h)) return false;
            hints[i] = h;
        }
        return true;
    };

    double mean_edge = 0.0;
    {
        auto edges = build_edge_map(film);
        for (const auto &[key, tris] : edges)
            mean_edge += (film.vertices[key.first] - film.vertices[key.second]).norm();
        mean_edge /= std::max<size_t>(1, edges.size());
    }
    const double length_max = opts.length_max_factor * mean_edge;
    const double length_min = opts.length_min_factor * mean_edge;

    RelaxReport report;
    double area = raw_area(film);
    report.area_trace.push_back(area);

    FilmMesh checkpoint = film;  // last state known to span all loops
    double checkpoint_area = area;
    double step = opts.initial_step;
    bool step_underflow = false;

    int iter = 0;
    for (iter = 1; iter <= opts.max_iters; ++iter) {
        const std::vector<Vec3> grad = film_area_gradient(film);

        bool accepted = false;
        while (step >= opts.min_step) {
            FilmMesh trial = film;
            for (int vi = 0; vi < trial.vertex_count(); ++vi)
                trial.vertices[vi] -= step * grad[vi];
            apply_projection(trial, tube, proxy, opts.interior_checks);
            const double trial_area = raw_area(trial);
            if (trial_area < std::min(area, report.area_trace.back())) {
                film = std::move(trial);
                area = trial_area;
                report.area_trace.push_back(area);
                step = std::min(step * 1.2, 1.0);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            step_underflow = true;
            break;
        }

        if (iter % opts.maintenance_period == 0) {
            FilmMesh before = film;
            const double area_before = area;
            flip_pass(film, area_eps);
            split_long_edges(film, tube, length_max);
            collapse_short_edges(film, length_min, area_eps, 50);
            area = raw_area(film);

            if (spanning_ok_fast()) {
                report.spanning_ok.push_back(true);
                checkpoint = film;
                checkpoint_area = area;
            } else {
                // Roll the whole batch back to the last spanning state.
                film = checkpoint;
                area = checkpoint_area;
                step *= 0.5;
                report.spanning_ok.push_back(false);
                (void)before;
                (void)area_before;
                if (step < opts.min_step) {
                    step_underflow = true;
                    break;
                }
            }
        }

        const int w = opts.window;
        const size_t tn = report.area_trace.size();
        if (static_cast<int>(tn) > w) {
            const double drop = report.area_trace[tn - 1 - w] - report.area_trace[tn - 1];
            if (drop < opts.tol_rel * std::max(report.area_trace[tn - 1], 1e-300)) {
                report.converged = true;
                break;
            }
        }
    }

    // Final state must span; fall back to the last checkpoint otherwise.
    if (!spanning_ok_fast()) {
        film = checkpoint;
        area = checkpoint_area;
    }

    // The returned mesh must pass the strict degenerate-triangle check even
    // when a projected boundary corner went collinear during the last steps.
    {
        FilmMesh cleaned = film;
        strip_slivers(cleaned, 10.0 * area_eps);
        std::swap(film, cleaned);  // spanning_ok_fast reads `film`
        if (spanning_ok_fast())
            area = raw_area(film);
        else
            std::swap(film, cleaned);
    }

    report.iterations = iter;
    report.final_area = area;
    report.vertex_count = film.vertex_count();
    report.triangle_count = film.triangle_count();
    report.min_angle = min_triangle_angle_deg(film);
    if (step_underflow && !report.converged)
        report.message = "step size underflow before the area tolerance was met";
    else if (!report.converged && iter > opts.max_iters)
        report.message = "iteration budget exhausted";
    return {std::move(film), report};
}

}  // namespace kp
