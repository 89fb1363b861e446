#include "kp/rod_energy.hh"

#include <cmath>
#include <limits>

namespace kp {

void MaterialParams::validate() const {
    if (!(a1 > 0.0 && a2 > 0.0 && a3 > 0.0))
        throw InvalidInput("MaterialParams: stiffnesses must be positive");
    if (rho < 0.0) throw InvalidInput("MaterialParams: rho must be nonnegative");
    if (sigma < 0.0) throw InvalidInput("MaterialParams: sigma must be nonnegative");
}

double shape_energy(const RodState &state, const MaterialParams &mat) {
    const RodDensities &d = state.densities;
    const int n = d.segment_count();
    const double h = d.h();
    double e = 0.0;
    for (int i = 0; i < n; ++i) {
        const double dk1 = d.kappa1[i] - mat.kappa1_ref;
        const double dk2 = d.kappa2[i] - mat.kappa2_ref;
        const double dw = d.omega[i] - mat.omega_ref;
        e += 0.5 * h * (mat.a1 * dk1 * dk1 + mat.a2 * dk2 * dk2 + mat.a3 * dw * dw);
    }
    return e;
}

std::vector<double> local_injectivity_margin(const RodState &state, const CrossSection &section) {
    const RodDensities &d = state.densities;
    const int n = d.segment_count();
    std::vector<double> margins(n);
    for (int i = 0; i < n; ++i) {
        double worst = -std::numeric_limits<double>::infinity();
        for (const Vec2 &z : section.boundary)
            worst = std::max(worst, z.x() * d.kappa2[i] - z.y() * d.kappa1[i]);
        margins[i] = 1.0 - worst;
    }
    return margins;
}

double ni_energy(const RodState &state, const CrossSection &section) {
    for (double m : local_injectivity_margin(state, section))
        if (m < 0.0) return std::numeric_limits<double>::infinity();
    return 0.0;
}

double ni_barrier(const std::vector<double> &margins, double h, double beta) {
    double e = 0.0;
    for (double m : margins) {
        if (m <= 0.0) throw InfeasibleState("ni_barrier: nonpositive injectivity margin");
        e -= beta * h * std::log(m);
    }
    return e;
}

double ni_barrier(const RodState &state, const CrossSection &section, double beta) {
    return ni_barrier(local_injectivity_margin(state, section), state.densities.h(), beta);
}

double gravity_energy(const FramedCurve &curve, const CrossSection &section,
                      const MaterialParams &mat) {
    if (mat.rho == 0.0 || mat.gravity.isZero()) return 0.0;
    const int n = curve.segment_count();
    const double h = curve.h();
    const Vec3 &g = mat.gravity;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const FrameSample f = frame_at(curve, (i + 0.5) * h);
        acc += h * (section.area * g.dot(f.x) + section.first_moments.x() * g.dot(f.d) +
                    section.first_moments.y() * g.dot(f.t.cross(f.d)));
    }
    return -mat.rho * acc;
}

double gravity_energy(const RodState &state, const CrossSection &section,
                      const MaterialParams &mat) {
    if (mat.rho == 0.0 || mat.gravity.isZero()) return 0.0;
    return gravity_energy(integrate_frame(state), section, mat);
}

GlobalInjectivityResult global_injectivity_check(const RodState &state,
                                                 const CrossSection &section,
                                                 double voxel_h) {
    if (voxel_h >= section.bound)
        throw InvalidInput("global_injectivity_check: voxel size must be smaller than the section bound");
    if (!(voxel_h > 0.0)) throw InvalidInput("global_injectivity_check: voxel size must be positive");

    const RodDensities &den = state.densities;
    const int n = den.segment_count();
    const double h = den.h();

    GlobalInjectivityResult res;
    for (int i = 0; i < n; ++i)
        res.lhs += h * (section.area - section.first_moments.x() * den.kappa2[i] +
                        section.first_moments.y() * den.kappa1[i]);

    const FramedCurve curve = integrate_frame(state);
    const TubeMesh tube = build_tube(curve, section);

    std::vector<Vec3> midline(curve.nodes.begin(), curve.nodes.end() - 1);
    const double reach = section.bound + curve.h() + 2.0 * voxel_h;

    const auto box = tube.bounding_box();
    const Vec3 lo = box[0] - Vec3::Constant(voxel_h);
    const Vec3 hi = box[1] + Vec3::Constant(voxel_h);
    const Eigen::Vector3i cells = ((hi - lo) / voxel_h).array().ceil().cast<int>();

    long inside = 0;
    for (int ix = 0; ix < cells.x(); ++ix) {
        for (int iy = 0; iy < cells.y(); ++iy) {
            for (int iz = 0; iz < cells.z(); ++iz) {
                const Vec3 p = lo + voxel_h * Vec3(ix + 0.5, iy + 0.5, iz + 0.5);
                if (point_to_closed_polyline_distance(p, midline) > reach) continue;
                if (std::abs(mesh_winding_number(p, tube.vertices, tube.triangles)) >= 0.5)
                    ++inside;
            }
        }
    }
    res.rhs = static_cast<double>(inside) * voxel_h * voxel_h * voxel_h;
    res.voxel_tol = 3.0 * voxel_h / section.bound;
    res.ok = res.lhs <= res.rhs * (1.0 + res.voxel_tol);
    return res;
}

double self_contact_penalty(const FramedCurve &curve, const CrossSection &section,
                            double stiffness) {
    const int n = curve.segment_count();
    const double gap = 2.0 * section.inradius;

    // Arc-length positions of the segment midpoints. Pairs closer along the
    // rod than half the circumference of the tightest feasible bend (radius
    // R_in) are the margin condition's business, not a distant contact: on a
    // feasible curve they cannot interpenetrate, yet on any discretized loop
    // near-neighbours sit closer in space than 2 R_in.
    std::vector<double> mid(n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double len = (curve.nodes[i + 1] - curve.nodes[i]).norm();
        mid[i] = total + 0.5 * len;
        total += len;
    }
    const double window = M_PI * section.inradius;

    double e = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 2; j < n; ++j) {
            if (i == 0 && j == n - 1) continue;  // cyclically adjacent
            const double along = std::abs(mid[j] - mid[i]);
            if (std::min(along, total - along) <= window) continue;
            const double dist = segment_segment_distance(curve.nodes[i], curve.nodes[i + 1],
                                                         curve.nodes[j], curve.nodes[j + 1]);
            const double pen = gap - dist;
            if (pen > 0.0) e += stiffness * pen * pen;
        }
    }
    return e;
}

}  // namespace kp
