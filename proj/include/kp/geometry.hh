////////////////////////////////////////////////////////////////////////////////
// geometry.hh
////////////////////////////////////////////////////////////////////////////////
/*! @file
//  Low-level geometric primitives shared by the rod, film, and topology
//  modules: closest-point queries, segment/triangle distances, and the
//  signed solid-angle kernels used by the Gauss linking sums and the
//  point-in-mesh winding number.
*/
////////////////////////////////////////////////////////////////////////////////
#ifndef KP_GEOMETRY_HH
#define KP_GEOMETRY_HH

#include <Eigen/Dense>
#include <array>
#include <vector>

namespace kp {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Mat3 = Eigen::Matrix3d;
using Triangle = std::array<int, 3>;

// Closest point on triangle (a, b, c) to p.
Vec3 closest_point_on_triangle(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c);

double point_triangle_distance(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c);

// Minimum distance between segments [p0, p1] and [q0, q1].
double segment_segment_distance(const Vec3 &p0, const Vec3 &p1,
                                const Vec3 &q0, const Vec3 &q1);

// Minimum distance between segment [p0, p1] and triangle (a, b, c);
// zero iff the segment properly crosses the triangle.
double segment_triangle_distance(const Vec3 &p0, const Vec3 &p1,
                                 const Vec3 &a, const Vec3 &b, const Vec3 &c);

// Predicate with an absolute thickening tolerance.
inline bool segment_triangle_intersect(const Vec3 &p0, const Vec3 &p1,
                                       const Vec3 &a, const Vec3 &b, const Vec3 &c,
                                       double eps) {
    return segment_triangle_distance(p0, p1, a, b, c) <= eps;
}

// Signed solid angle subtended at p by triangle (a, b, c)
// (van Oosterom & Strackee).
double triangle_solid_angle(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c);

// Winding number of a closed triangle mesh around p; near-integer for
// points away from the surface, k for points covered k times.
double mesh_winding_number(const Vec3 &p, const std::vector<Vec3> &vertices,
                           const std::vector<Triangle> &triangles);

// Signed contribution of the ordered segment pair ([p1,p2], [p3,p4]) to the
// Gauss double integral: the mutual solid angle Omega with its sign, so that
// summing omega/(4*pi) over all pairs yields the linking number.
double gauss_pair_solid_angle(const Vec3 &p1, const Vec3 &p2,
                              const Vec3 &p3, const Vec3 &p4);

// Distance from p to the closed polyline through `points` (segment i runs
// from points[i] to points[(i+1) % n]).
double point_to_closed_polyline_distance(const Vec3 &p, const std::vector<Vec3> &points);

// Triangle area by the cross-product formula.
inline double triangle_area(const Vec3 &a, const Vec3 &b, const Vec3 &c) {
    return 0.5 * (b - a).cross(c - a).norm();
}

}  // namespace kp

#endif  // KP_GEOMETRY_HH
