#include "kp/geometry.hh"

#include <algorithm>
#include <cmath>

namespace kp {

Vec3 closest_point_on_triangle(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c) {
    // Ericson, "Real-Time Collision Detection", 5.1.5.
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);

    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

double point_triangle_distance(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c) {
    return (p - closest_point_on_triangle(p, a, b, c)).norm();
}

double segment_segment_distance(const Vec3 &p0, const Vec3 &p1,
                                const Vec3 &q0, const Vec3 &q1) {
    // Ericson, 5.1.9: closest points of two segments.
    const Vec3 d1 = p1 - p0, d2 = q1 - q0, r = p0 - q0;
    const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
    const double kEps = 1e-30;
    double s = 0.0, t = 0.0;

    if (a <= kEps && e <= kEps) return r.norm();
    if (a <= kEps) {
        t = std::clamp(f / e, 0.0, 1.0);
    } else {
        const double c = d1.dot(r);
        if (e <= kEps) {
            s = std::clamp(-c / a, 0.0, 1.0);
        } else {
            const double b = d1.dot(d2);
            const double denom = a * e - b * b;
            s = denom > kEps ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
            t = (b * s + f) / e;
            if (t < 0.0) {
                t = 0.0;
                s = std::clamp(-c / a, 0.0, 1.0);
            } else if (t > 1.0) {
                t = 1.0;
                s = std::clamp((b - c) / a, 0.0, 1.0);
            }
        }
    }
    return (p0 + d1 * s - (q0 + d2 * t)).norm();
}

double segment_triangle_distance(const Vec3 &p0, const Vec3 &p1,
                                 const Vec3 &a, const Vec3 &b, const Vec3 &c) {
    // Proper crossing: endpoints on opposite sides of the plane and the
    // crossing point inside the triangle.
    const Vec3 n = (b - a).cross(c - a);
    const double n2 = n.squaredNorm();
    if (n2 > 0.0) {
        const double h0 = n.dot(p0 - a), h1 = n.dot(p1 - a);
        if ((h0 > 0.0 && h1 < 0.0) || (h0 < 0.0 && h1 > 0.0)) {
            const double t = h0 / (h0 - h1);
            const Vec3 q = p0 + t * (p1 - p0);
            // Inside test via barycentric signs.
            const Vec3 w0 = (b - a).cross(q - a);
            const Vec3 w1 = (c - b).cross(q - b);
            const Vec3 w2 = (a - c).cross(q - c);
            if (w0.dot(n) >= 0.0 && w1.dot(n) >= 0.0 && w2.dot(n) >= 0.0) return 0.0;
        }
    }
    double d = std::min(point_triangle_distance(p0, a, b, c),
                        point_triangle_distance(p1, a, b, c));
    d = std::min(d, segment_segment_distance(p0, p1, a, b));
    d = std::min(d, segment_segment_distance(p0, p1, b, c));
    d = std::min(d, segment_segment_distance(p0, p1, c, a));
    return d;
}

double triangle_solid_angle(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c) {
    const Vec3 ra = a - p, rb = b - p, rc = c - p;
    const double la = ra.norm(), lb = rb.norm(), lc = rc.norm();
    const double num = ra.dot(rb.cross(rc));
    const double den = la * lb * lc + ra.dot(rb) * lc + rb.dot(rc) * la + rc.dot(ra) * lb;
    return 2.0 * std::atan2(num, den);
}

double mesh_winding_number(const Vec3 &p, const std::vector<Vec3> &vertices,
                           const std::vector<Triangle> &triangles) {
    double omega = 0.0;
    for (const Triangle &t : triangles)
        omega += triangle_solid_angle(p, vertices[t[0]], vertices[t[1]], vertices[t[2]]);
    return omega / (4.0 * M_PI);
}

double gauss_pair_solid_angle(const Vec3 &p1, const Vec3 &p2,
                              const Vec3 &p3, const Vec3 &p4) {
    // Klenin & Langowski (2000), method 1a.
    const Vec3 r12 = p2 - p1, r34 = p4 - p3;
    const Vec3 r13 = p3 - p1, r14 = p4 - p1, r23 = p3 - p2, r24 = p4 - p2;

    Vec3 n1 = r13.cross(r14), n2 = r14.cross(r24), n3 = r24.cross(r23), n4 = r23.cross(r13);
    const double l1 = n1.norm(), l2 = n2.norm(), l3 = n3.norm(), l4 = n4.norm();
    const double kTiny = 1e-300;
    if (l1 < kTiny || l2 < kTiny || l3 < kTiny || l4 < kTiny) return 0.0;
    n1 /= l1;
    n2 /= l2;
    n3 /= l3;
    n4 /= l4;

    auto asin_clamped = [](double x) { return std::asin(std::clamp(x, -1.0, 1.0)); };
    const double omega = asin_clamped(n1.dot(n2)) + asin_clamped(n2.dot(n3)) +
                         asin_clamped(n3.dot(n4)) + asin_clamped(n4.dot(n1));
    const double sgn = r34.cross(r12).dot(r13);
    if (sgn > 0.0) return omega;
    if (sgn < 0.0) return -omega;
    return 0.0;
}

double point_to_closed_polyline_distance(const Vec3 &p, const std::vector<Vec3> &points) {
    const size_t n = points.size();
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < n; ++i) {
        const Vec3 &a = points[i];
        const Vec3 &b = points[(i + 1) % n];
        const Vec3 ab = b - a;
        const double len2 = ab.squaredNorm();
        const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        best = std::min(best, (p - (a + t * ab)).norm());
    }
    return best;
}

}  // namespace kp
