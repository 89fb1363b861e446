////////////////////////////////////////////////////////////////////////////////
// rod_core.hh
////////////////////////////////////////////////////////////////////////////////
/*! @file
//  Kirchhoff rod kinematics: the loop is described by piecewise-constant
//  flexural densities (kappa1, kappa2) and a twist density (omega) on a
//  uniform grid of [0, L], plus clamping parameters (x0, t0, d0). The frame
//  ODE
//      x' = t,  t' = kappa1 d + kappa2 (t x d),  d' = omega (t x d) - kappa1 t
//  is integrated exactly per segment (the Darboux vector is constant in the
//  body frame, so the frame advance is a closed-form rotation and the
//  midline advance an exact helical arc). The thick rod is the image of the
//  cross-section swept along the frame, meshed as a closed tube.
*/
////////////////////////////////////////////////////////////////////////////////
#ifndef KP_ROD_CORE_HH
#define KP_ROD_CORE_HH

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kp/geometry.hh"

namespace kp {

struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Piecewise-constant densities on a uniform grid: entry i holds the value on
// the segment [i*h, (i+1)*h), h = L/N.
struct RodDensities {
    std::vector<double> kappa1;
    std::vector<double> kappa2;
    std::vector<double> omega;
    double length = 0.0;

    int segment_count() const { return static_cast<int>(kappa1.size()); }
    double h() const { return length / segment_count(); }
    void validate() const;

    static RodDensities constant(int n, double length, double k1, double k2, double om);
};

struct ClampingParams {
    Vec3 x0 = Vec3::Zero();
    Vec3 t0 = Vec3::UnitX();
    Vec3 d0 = Vec3::UnitY();

    void validate() const;
};

// The degrees of freedom of the loop: w = ((kappa1, kappa2, omega), x0, t0, d0).
struct RodState {
    RodDensities densities;
    ClampingParams clamp;

    void validate() const {
        densities.validate();
        clamp.validate();
    }

    // Circle of circumference L in the plane spanned by t0 and d0.
    static RodState circle(int n, double length, const ClampingParams &clamp = {});
};

// Discretized midline with its orthonormal frame (t, d, t x d) at the N+1
// grid nodes.
struct FramedCurve {
    std::vector<Vec3> nodes;
    std::vector<Vec3> tangents;
    std::vector<Vec3> directors;
    double length = 0.0;

    int segment_count() const { return static_cast<int>(nodes.size()) - 1; }
    double h() const { return length / segment_count(); }
    Vec3 binormal(int i) const { return tangents[i].cross(directors[i]); }
};

// Convex polygonal cross-section, fixed along the rod. The origin must lie
// strictly inside; `bound` is the thickness bound R of the reference domain.
struct CrossSection {
    std::vector<Vec2> boundary;   // CCW convex polygon
    double bound = 0.0;           // R: max |zeta| over the polygon
    double inradius = 0.0;        // distance from the origin to the nearest edge
    double area = 0.0;
    Vec2 first_moments = Vec2::Zero();  // (c1, c2) = integral of (zeta1, zeta2)

    static CrossSection from_polygon(std::vector<Vec2> vertices);
    static CrossSection regular_polygon(int sides, double circumradius);

    bool contains(const Vec2 &zeta) const;
};

// Triangulated lateral surface of the thick loop. Ring i (i = 0..rings-1)
// holds the `ring_size` section-boundary vertices at midline node i; ring N
// is identified with ring 0, which closes the surface.
struct TubeMesh {
    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;
    int rings = 0;
    int ring_size = 0;
    // (segment index, boundary-polygon index) per vertex.
    std::vector<std::pair<int, int>> vertex_tags;

    int vertex_index(int ring, int j) const {
        return ((ring % rings + rings) % rings) * ring_size + (j % ring_size + ring_size) % ring_size;
    }
    std::array<Vec3, 2> bounding_box() const;
};

struct ClosureResiduals {
    double position = 0.0;  // |x(L) - x0|
    double tangent = 0.0;   // |t(L) - t0|
    double director = 0.0;  // |angle(d0 -> d(L) about t0) - glue_angle|, in [0, pi]
};

FramedCurve integrate_frame(const RodState &state);

// Frame at arc length s, interpolated inside a segment by the exact
// fractional rotation, then renormalized.
struct FrameSample {
    Vec3 x, t, d;
};
FrameSample frame_at(const FramedCurve &curve, double s);

// p(s, z1, z2) = x(s) + z1 d(s) + z2 t(s) x d(s).
Vec3 configuration_map(const FramedCurve &curve, double s, double z1, double z2);

TubeMesh build_tube(const FramedCurve &curve, const CrossSection &section,
                    double closure_tol_rel = 1e-6);

ClosureResiduals closure_residuals(const FramedCurve &curve, const ClampingParams &clamp,
                                   double glue_angle);

}  // namespace kp

#endif  // KP_ROD_CORE_HH
