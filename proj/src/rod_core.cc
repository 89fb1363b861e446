#include "kp/rod_core.hh"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kp {

namespace {

bool all_finite(const std::vector<double> &v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

Mat3 crossMat(const Vec3 &u) {
    Mat3 m;
    m << 0, -u.z(), u.y(), u.z(), 0, -u.x(), -u.y(), u.x(), 0;
    return m;
}

// Exact advance over an arc of length h with constant Darboux vector u:
// rotates the frame by |u| h about u and moves the node along the helical
// primitive of the rotating tangent.
struct SegmentStep {
    Vec3 dx;
    Mat3 rotation;
};

SegmentStep helix_step(const Vec3 &u, const Vec3 &t, double h) {
    SegmentStep step;
    const double rate = u.norm();
    const double angle = rate * h;
    if (angle < 1e-12) {
        const Mat3 c = crossMat(u);
        step.rotation = Mat3::Identity() + h * c + 0.5 * h * h * c * c;
        step.dx = h * t + 0.5 * h * h * u.cross(t);
        return step;
    }
    const Vec3 axis = u / rate;
    step.rotation = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
    const double s1 = std::sin(angle) / rate;
    const double s2 = (1.0 - std::cos(angle)) / rate;
    const Vec3 t_par = axis.dot(t) * axis;
    step.dx = h * t_par + s1 * (t - t_par) + s2 * axis.cross(t);
    return step;
}

}  // namespace

void RodDensities::validate() const {
    const size_t n = kappa1.size();
    if (n < 3) throw InvalidInput("RodDensities: need at least 3 segments");
    if (kappa2.size() != n || omega.size() != n)
        throw InvalidInput("RodDensities: density arrays must have equal length");
    if (!(length > 0.0) || !std::isfinite(length))
        throw InvalidInput("RodDensities: length must be positive and finite");
    if (!all_finite(kappa1) || !all_finite(kappa2) || !all_finite(omega))
        throw InvalidInput("RodDensities: non-finite density entry");
}

RodDensities RodDensities::constant(int n, double length, double k1, double k2, double om) {
    RodDensities d;
    d.kappa1.assign(n, k1);
    d.kappa2.assign(n, k2);
    d.omega.assign(n, om);
    d.length = length;
    return d;
}

void ClampingParams::validate() const {
    const double tol = 1e-12;
    if (std::abs(t0.norm() - 1.0) > tol) throw InvalidInput("ClampingParams: |t0| != 1");
    if (std::abs(d0.norm() - 1.0) > tol) throw InvalidInput("ClampingParams: |d0| != 1");
    if (std::abs(t0.dot(d0)) > tol) throw InvalidInput("ClampingParams: t0 not orthogonal to d0");
}

RodState RodState::circle(int n, double length, const ClampingParams &clamp) {
    RodState s;
    s.densities = RodDensities::constant(n, length, 2.0 * M_PI / length, 0.0, 0.0);
    s.clamp = clamp;
    return s;
}

CrossSection CrossSection::from_polygon(std::vector<Vec2> vertices) {
    if (vertices.size() < 3) throw InvalidInput("CrossSection: need at least 3 vertices");
    const int m = static_cast<int>(vertices.size());

    double twice_area = 0.0;
    for (int i = 0; i < m; ++i) {
        const Vec2 &a = vertices[i];
        const Vec2 &b = vertices[(i + 1) % m];
        twice_area += a.x() * b.y() - b.x() * a.y();
    }
    if (twice_area < 0.0) {  // enforce CCW
        std::reverse(vertices.begin(), vertices.end());
        twice_area = -twice_area;
    }
    if (twice_area <= 0.0) throw InvalidInput("CrossSection: degenerate polygon");

    CrossSection s;
    s.boundary = std::move(vertices);
    s.area = 0.5 * twice_area;

    double scale = 0.0;
    for (const Vec2 &v : s.boundary) scale = std::max({scale, std::abs(v.x()), std::abs(v.y())});
    s.bound = scale;

    s.inradius = std::numeric_limits<double>::infinity();
    Vec2 moments = Vec2::Zero();
    for (int i = 0; i < m; ++i) {
        const Vec2 &a = s.boundary[i];
        const Vec2 &b = s.boundary[(i + 1) % m];
        const Vec2 &c = s.boundary[(i + 2) % m];
        const Vec2 e1 = b - a, e2 = c - b;
        if (e1.x() * e2.y() - e1.y() * e2.x() < -1e-12 * scale * scale)
            throw InvalidInput("CrossSection: polygon is not convex");
        // Origin strictly on the left of every (CCW) edge.
        const double side = e1.x() * (-a.y()) - e1.y() * (-a.x());
        if (side <= 0.0) throw InvalidInput("CrossSection: origin not strictly inside");
        s.inradius = std::min(s.inradius, side / e1.norm());

        const double cross = a.x() * b.y() - b.x() * a.y();
        moments.x() += (a.x() + b.x()) * cross;
        moments.y() += (a.y() + b.y()) * cross;
    }
    s.first_moments = moments / 6.0;
    return s;
}

CrossSection CrossSection::regular_polygon(int sides, double circumradius) {
    if (sides < 3) throw InvalidInput("CrossSection: need at least 3 sides");
    if (!(circumradius > 0.0)) throw InvalidInput("CrossSection: circumradius must be positive");
    std::vector<Vec2> v(sides);
    for (int i = 0; i < sides; ++i) {
        const double th = 2.0 * M_PI * i / sides;
        v[i] = circumradius * Vec2(std::cos(th), std::sin(th));
    }
    return from_polygon(std::move(v));
}

bool CrossSection::contains(const Vec2 &zeta) const {
    const int m = static_cast<int>(boundary.size());
    for (int i = 0; i < m; ++i) {
        const Vec2 &a = boundary[i];
        const Vec2 &b = boundary[(i + 1) % m];
        const Vec2 e = b - a;
        if (e.x() * (zeta.y() - a.y()) - e.y() * (zeta.x() - a.x()) < 0.0) return false;
    }
    return true;
}

std::array<Vec3, 2> TubeMesh::bounding_box() const {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const Vec3 &v : vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    return {lo, hi};
}

FramedCurve integrate_frame(const RodState &state) {
    state.validate();
    const RodDensities &den = state.densities;
    const int n = den.segment_count();
    const double h = den.h();

    FramedCurve curve;
    curve.length = den.length;
    curve.nodes.resize(n + 1);
    curve.tangents.resize(n + 1);
    curve.directors.resize(n + 1);

    Vec3 x = state.clamp.x0;
    Vec3 t = state.clamp.t0;
    Vec3 d = state.clamp.d0;
    curve.nodes[0] = x;
    curve.tangents[0] = t;
    curve.directors[0] = d;

    for (int i = 0; i < n; ++i) {
        const Vec3 b = t.cross(d);
        const Vec3 u = den.omega[i] * t - den.kappa2[i] * d + den.kappa1[i] * b;
        const SegmentStep step = helix_step(u, t, h);
        x += step.dx;
        t = step.rotation * t;
        d = step.rotation * d;
        // Round-off cleanup; the rotation itself is orthonormal.
        t.normalize();
        d = (d - d.dot(t) * t).normalized();
        curve.nodes[i + 1] = x;
        curve.tangents[i + 1] = t;
        curve.directors[i + 1] = d;
    }
    return curve;
}

FrameSample frame_at(const FramedCurve &curve, double s) {
    const double L = curve.length;
    if (s < 0.0 || s > L) throw InvalidInput("frame_at: arc length out of range");
    const int n = curve.segment_count();
    const double h = curve.h();
    int i = std::min(static_cast<int>(s / h), n - 1);
    const double tau = s - i * h;

    FrameSample f{curve.nodes[i], curve.tangents[i], curve.directors[i]};
    if (tau <= 0.0) return f;

    // Per-segment Darboux vector recovered from the relative rotation of the
    // node frames; exact for curves produced by integrate_frame.
    Mat3 f0, f1;
    f0.col(0) = curve.tangents[i];
    f0.col(1) = curve.directors[i];
    f0.col(2) = curve.tangents[i].cross(curve.directors[i]);
    f1.col(0) = curve.tangents[i + 1];
    f1.col(1) = curve.directors[i + 1];
    f1.col(2) = curve.tangents[i + 1].cross(curve.directors[i + 1]);
    const Eigen::AngleAxisd rel(f1 * f0.transpose());
    const Vec3 u = (rel.angle() / h) * rel.axis();

    const SegmentStep step = helix_step(u, f.t, tau);
    f.x += step.dx;
    f.t = (step.rotation * f.t).normalized();
    f.d = step.rotation * f.d;
    f.d = (f.d - f.d.dot(f.t) * f.t).normalized();
    return f;
}

Vec3 configuration_map(const FramedCurve &curve, double s, double z1, double z2) {
    const FrameSample f = frame_at(curve, s);
    return f.x + z1 * f.d + z2 * f.t.cross(f.d);
}

TubeMesh build_tube(const FramedCurve &curve, const CrossSection &section,
                    double closure_tol_rel) {
    const int n = curve.segment_count();
    const double gap = (curve.nodes[n] - curve.nodes[0]).norm();
    if (gap > closure_tol_rel * curve.length)
        throw InvalidInput("build_tube: midline not closed within tolerance");

    const int m = static_cast<int>(section.boundary.size());
    TubeMesh tube;
    tube.rings = n;
    tube.ring_size = m;
    tube.vertices.resize(static_cast<size_t>(n) * m);
    tube.vertex_tags.resize(tube.vertices.size());
    for (int i = 0; i < n; ++i) {
        const Vec3 &x = curve.nodes[i];
        const Vec3 &t = curve.tangents[i];
        const Vec3 &d = curve.directors[i];
        const Vec3 b = t.cross(d);
        for (int j = 0; j < m; ++j) {
            const Vec2 &z = section.boundary[j];
            tube.vertices[static_cast<size_t>(i) * m + j] = x + z.x() * d + z.y() * b;
            tube.vertex_tags[static_cast<size_t>(i) * m + j] = {i, j};
        }
    }
    tube.triangles.reserve(static_cast<size_t>(2) * n * m);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            const int a = tube.vertex_index(i, j);
            const int b = tube.vertex_index(i + 1, j);
            const int c = tube.vertex_index(i + 1, j + 1);
            const int e = tube.vertex_index(i, j + 1);
            tube.triangles.push_back({a, b, c});
            tube.triangles.push_back({a, c, e});
        }
    }
    return tube;
}

ClosureResiduals closure_residuals(const FramedCurve &curve, const ClampingParams &clamp,
                                   double glue_angle) {
    const int n = curve.segment_count();
    ClosureResiduals r;
    r.position = (curve.nodes[n] - clamp.x0).norm();
    r.tangent = (curve.tangents[n] - clamp.t0).norm();

    const Vec3 &dL = curve.directors[n];
    const double angle = std::atan2(clamp.t0.dot(clamp.d0.cross(dL)), clamp.d0.dot(dL));
    double diff = std::fmod(angle - glue_angle, 2.0 * M_PI);
    if (diff > M_PI) diff -= 2.0 * M_PI;
    if (diff < -M_PI) diff += 2.0 * M_PI;
    r.director = std::abs(diff);
    return r;
}

}  // namespace kp
