////////////////////////////////////////////////////////////////////////////////
// oracles.hh
////////////////////////////////////////////////////////////////////////////////
/*! @file
//  Independent reference computations used only by the tests: brute-force
//  quadratures, dense sampling oracles, randomized closed-rod generators, and
//  geometric fits. Deliberately slower and structurally different from the
//  library code they validate.
*/
////////////////////////////////////////////////////////////////////////////////
#ifndef KP_TESTS_ORACLES_HH
#define KP_TESTS_ORACLES_HH

#include <cmath>
#include <random>

#include "kp/rod_energy.hh"

namespace oracle {

using kp::Vec2;
using kp::Vec3;

// Dense uniform sampling of the section boundary polygon (per-edge points).
inline std::vector<Vec2> sample_boundary(const kp::CrossSection &section, int per_edge) {
    std::vector<Vec2> pts;
    const int m = static_cast<int>(section.boundary.size());
    for (int i = 0; i < m; ++i) {
        const Vec2 &a = section.boundary[i];
        const Vec2 &b = section.boundary[(i + 1) % m];
        for (int k = 0; k < per_edge; ++k)
            pts.push_back(a + (b - a) * (static_cast<double>(k) / per_edge));
    }
    return pts;
}

// Margin via dense boundary sampling instead of the vertex argument.
inline double sampled_margin(double k1, double k2, const kp::CrossSection &section,
                             int per_edge = 200) {
    double worst = -std::numeric_limits<double>::infinity();
    for (const Vec2 &z : sample_boundary(section, per_edge))
        worst = std::max(worst, z.x() * k2 - z.y() * k1);
    return 1.0 - worst;
}

// Midpoint-rule Gauss double integral for the writhe of a closed polyline,
// after uniform chordal refinement by `refine` points per segment.
inline double writhe_quadrature(const std::vector<Vec3> &closed, int refine) {
    std::vector<Vec3> fine;
    const int n = static_cast<int>(closed.size());
    for (int i = 0; i < n; ++i) {
        const Vec3 &a = closed[i];
        const Vec3 &b = closed[(i + 1) % n];
        for (int k = 0; k < refine; ++k)
            fine.push_back(a + (b - a) * (static_cast<double>(k) / refine));
    }
    const int m = static_cast<int>(fine.size());
    double acc = 0.0;
    for (int i = 0; i < m; ++i) {
        const Vec3 ri = 0.5 * (fine[i] + fine[(i + 1) % m]);
        const Vec3 dti = fine[(i + 1) % m] - fine[i];
        for (int j = 0; j < m; ++j) {
            if (j == i || j == (i + 1) % m || (j + 1) % m == i) continue;
            const Vec3 rj = 0.5 * (fine[j] + fine[(j + 1) % m]);
            const Vec3 dtj = fine[(j + 1) % m] - fine[j];
            const Vec3 r = ri - rj;
            const double rn = r.norm();
            acc += dti.cross(dtj).dot(r) / (rn * rn * rn);
        }
    }
    return acc / (4.0 * M_PI);
}

// Direct 3D quadrature of the gravity integral over the reference domain:
// fan-triangulate the section from the origin, subdivide each fan triangle,
// midpoint rule in arc length.
inline double gravity_quadrature(const kp::RodState &state, const kp::CrossSection &section,
                                 const kp::MaterialParams &mat, int s_sub, int z_sub) {
    const kp::FramedCurve curve = kp::integrate_frame(state);
    const int n = state.densities.segment_count();
    const double h = state.densities.h();
    const int m = static_cast<int>(section.boundary.size());

    // Section quadrature points and weights (centroid rule on subtriangles).
    std::vector<std::pair<Vec2, double>> zq;
    for (int e = 0; e < m; ++e) {
        const Vec2 a = Vec2::Zero();
        const Vec2 b = section.boundary[e];
        const Vec2 c = section.boundary[(e + 1) % m];
        for (int i = 0; i < z_sub; ++i) {
            for (int j = 0; j + i < z_sub; ++j) {
                auto bary = [&](double u, double v) { return a + u * (b - a) + v * (c - a); };
                const double u0 = static_cast<double>(i) / z_sub;
                const double v0 = static_cast<double>(j) / z_sub;
                const double d = 1.0 / z_sub;
                const double tri_area =
                    0.5 * std::abs((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x()) /
                    (z_sub * z_sub);
                zq.emplace_back((bary(u0, v0) + bary(u0 + d, v0) + bary(u0, v0 + d)) / 3.0,
                                tri_area);
                if (j + i + 1 < z_sub)
                    zq.emplace_back((bary(u0 + d, v0) + bary(u0, v0 + d) +
                                     bary(u0 + d, v0 + d)) /
                                        3.0,
                                    tri_area);
            }
        }
    }

    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < s_sub; ++k) {
            const double s = (i + (k + 0.5) / s_sub) * h;
            const kp::FrameSample f = kp::frame_at(curve, s);
            const Vec3 bn = f.t.cross(f.d);
            for (const auto &[z, w] : zq) {
                const Vec3 p = f.x + z.x() * f.d + z.y() * bn;
                acc += mat.gravity.dot(p) * w * (h / s_sub);
            }
        }
    }
    return -mat.rho * acc;
}

// Random smooth closed curve from a low-frequency Fourier series, resampled
// by arc length; densities extracted from the relative node-frame rotations
// of a parallel-transport frame with a constant added twist.
inline kp::RodState random_closed_rod(int n, unsigned seed, double twist_turns = 0.0) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<Vec3> a(4), b(4);
    for (int m = 1; m <= 3; ++m) {
        for (int c = 0; c < 3; ++c) {
            a[m][c] = gauss(rng) / (m * m);
            b[m][c] = gauss(rng) / (m * m);
        }
    }
    auto curve_at = [&](double u) {
        Vec3 p = Vec3::Zero();
        for (int m = 1; m <= 3; ++m)
            p += a[m] * std::cos(2.0 * M_PI * m * u) + b[m] * std::sin(2.0 * M_PI * m * u);
        return p;
    };

    // Dense polyline, then arc-length resampling to n nodes.
    const int dense = 40 * n;
    std::vector<Vec3> dp(dense);
    for (int i = 0; i < dense; ++i) dp[i] = curve_at(static_cast<double>(i) / dense);
    std::vector<double> cum(dense + 1, 0.0);
    for (int i = 0; i < dense; ++i)
        cum[i + 1] = cum[i] + (dp[(i + 1) % dense] - dp[i]).norm();
    const double L = cum[dense];

    std::vector<Vec3> nodes(n);
    for (int i = 0, j = 0; i < n; ++i) {
        const double target = L * i / n;
        while (cum[j + 1] < target) ++j;
        const double t = (target - cum[j]) / (cum[j + 1] - cum[j]);
        nodes[i] = dp[j] + t * (dp[(j + 1) % dense] - dp[j]);
    }

    const double twist_rate = 2.0 * M_PI * twist_turns / L;
    const double h = L / n;

    // Density extraction from a closed polyline: unit tangents by central
    // differences (the node tangent bisects the adjacent chords), a
    // parallel-transport director plus the constant added twist, then the
    // axis-angle of each relative node-frame rotation.
    auto extract = [&](const std::vector<Vec3> &p) {
        std::vector<Vec3> tang(n), dir(n);
        for (int i = 0; i < n; ++i)
            tang[i] = (p[(i + 1) % n] - p[(i + n - 1) % n]).normalized();
        Vec3 d0 = tang[0].cross(Vec3::UnitZ());
        if (d0.norm() < 1e-6) d0 = tang[0].cross(Vec3::UnitX());
        dir[0] = (d0 - d0.dot(tang[0]) * tang[0]).normalized();
        for (int i = 1; i < n; ++i) {
            Vec3 d = dir[i - 1];
            const Vec3 axis = tang[i - 1].cross(tang[i]);
            const double sa = axis.norm();
            const double ca = std::clamp(tang[i - 1].dot(tang[i]), -1.0, 1.0);
            if (sa > 1e-15) d = Eigen::AngleAxisd(std::atan2(sa, ca), axis / sa) * d;
            dir[i] = (d - d.dot(tang[i]) * tang[i]).normalized();
        }

        kp::RodState s;
        s.densities.length = L;
        s.densities.kappa1.resize(n);
        s.densities.kappa2.resize(n);
        s.densities.omega.resize(n);
        for (int i = 0; i < n; ++i) {
            const int j = (i + 1) % n;
            Eigen::Matrix3d f0, f1;
            const double phi0 = twist_rate * i * h, phi1 = twist_rate * (i + 1) * h;
            const Vec3 di = std::cos(phi0) * dir[i] + std::sin(phi0) * tang[i].cross(dir[i]);
            const Vec3 dj = std::cos(phi1) * dir[j] + std::sin(phi1) * tang[j].cross(dir[j]);
            f0.col(0) = tang[i];
            f0.col(1) = di;
            f0.col(2) = tang[i].cross(di);
            f1.col(0) = tang[j];
            f1.col(1) = dj;
            f1.col(2) = tang[j].cross(dj);
            const Eigen::AngleAxisd rel(f1 * f0.transpose());
            const Vec3 u = rel.angle() / h * rel.axis();
            s.densities.omega[i] = u.dot(tang[i]);
            s.densities.kappa2[i] = -u.dot(di);
            s.densities.kappa1[i] = u.dot(tang[i].cross(di));
        }
        s.clamp.x0 = p[0];
        s.clamp.t0 = tang[0];
        s.clamp.d0 = dir[0];
        return s;
    };

    // Projection to closure: the segment-wise helix reconstruction drifts
    // slightly off the sampled closed polyline, so polish the densities with
    // a few minimal-norm Gauss-Newton steps on the nine closure residuals
    // (position, tangent, and director gaps of the reconstructed rod).
    kp::RodState s = extract(nodes);
    auto residual = [&](const kp::RodState &state) {
        const kp::FramedCurve rec = kp::integrate_frame(state);
        Eigen::Matrix<double, 9, 1> r;
        r.segment<3>(0) = (rec.nodes[n] - rec.nodes[0]) / L;
        r.segment<3>(3) = rec.tangents[n] - rec.tangents[0];
        r.segment<3>(6) = rec.directors[n] - rec.directors[0];
        return r;
    };
    auto density = [&](kp::RodState &state, int k) -> double & {
        if (k < n) return state.densities.kappa1[k];
        if (k < 2 * n) return state.densities.kappa2[k - n];
        return state.densities.omega[k - 2 * n];
    };
    for (int pass = 0; pass < 6; ++pass) {
        const Eigen::Matrix<double, 9, 1> r0 = residual(s);
        if (r0.norm() <= 1e-10) break;
        Eigen::MatrixXd jac(9, 3 * n);
        const double fd = 1e-6;
        for (int k = 0; k < 3 * n; ++k) {
            kp::RodState probe = s;
            density(probe, k) += fd;
            jac.col(k) = (residual(probe) - r0) / fd;
        }
        const Eigen::MatrixXd jjt =
            jac * jac.transpose() + 1e-12 * Eigen::MatrixXd::Identity(9, 9);
        const Eigen::VectorXd step = jac.transpose() * jjt.ldlt().solve(-r0);
        for (int k = 0; k < 3 * n; ++k) density(s, k) += step[k];
    }
    return s;
}

// Closed circle carrying a uniform twist: the midline curvature vector spins
// in the material frame at the twist rate (constant kappa1 with nonzero omega
// would integrate to a helix, not a closed curve). Midpoint sampling keeps
// the closure defect at O(1/n^2).
inline kp::RodState twisted_circle(int n, double L, int turns) {
    const double k = 2.0 * M_PI / L;
    kp::RodState s;
    s.densities.length = L;
    s.densities.kappa1.resize(n);
    s.densities.kappa2.resize(n);
    s.densities.omega.assign(n, 2.0 * M_PI * turns / L);
    for (int i = 0; i < n; ++i) {
        const double phi = 2.0 * M_PI * turns * (i + 0.5) / n;
        s.densities.kappa1[i] = k * std::cos(phi);
        s.densities.kappa2[i] = -k * std::sin(phi);
    }
    return s;
}

// Least-squares circle fit (plane through the centroid, then radius), and the
// worst distance from the points to the fitted circle.
inline double circle_fit_residual(const std::vector<Vec3> &pts, double *radius_out = nullptr) {
    Vec3 centroid = Vec3::Zero();
    for (const Vec3 &p : pts) centroid += p;
    centroid /= static_cast<double>(pts.size());

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const Vec3 &p : pts) cov += (p - centroid) * (p - centroid).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    const Vec3 normal = eig.eigenvectors().col(0);

    double radius = 0.0;
    for (const Vec3 &p : pts) {
        const Vec3 q = p - centroid;
        radius += (q - q.dot(normal) * normal).norm();
    }
    radius /= static_cast<double>(pts.size());
    if (radius_out) *radius_out = radius;

    double worst = 0.0;
    for (const Vec3 &p : pts) {
        const Vec3 q = p - centroid;
        const double in_plane = (q - q.dot(normal) * normal).norm();
        const double off_plane = q.dot(normal);
        worst = std::max(worst,
                         std::hypot(in_plane - radius, off_plane));
    }
    return worst;
}

// Brute-force collision scan of the configuration map: random parameter
// pairs, optional pattern-search refinement toward an actual collision.
struct CollisionScan {
    bool found = false;
    double closest = std::numeric_limits<double>::infinity();
};

inline CollisionScan collision_scan(const kp::FramedCurve &curve, const kp::CrossSection &section,
                                    int pairs, unsigned seed, bool refine = false,
                                    double min_sep = 1e-3) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> us(0.0, curve.length);
    std::uniform_real_distribution<double> uz(-section.bound, section.bound);
    const double L = curve.length;

    auto sample_zeta = [&]() {
        for (;;) {
            const Vec2 z(uz(rng), uz(rng));
            if (section.contains(z)) return z;
        }
    };
    auto param_dist = [&](double s1, const Vec2 &z1, double s2, const Vec2 &z2) {
        const double ds = std::min(std::abs(s1 - s2), L - std::abs(s1 - s2));
        return std::sqrt(ds * ds + (z1 - z2).squaredNorm());
    };
    auto image = [&](double s, const Vec2 &z) {
        return kp::configuration_map(curve, s, z.x(), z.y());
    };

    CollisionScan result;
    double bs1 = 0, bs2 = 0;
    Vec2 bz1 = Vec2::Zero(), bz2 = Vec2::Zero();
    for (int k = 0; k < pairs; ++k) {
        const double s1 = us(rng), s2 = us(rng);
        const Vec2 z1 = sample_zeta(), z2 = sample_zeta();
        if (param_dist(s1, z1, s2, z2) <= min_sep) continue;
        const double d = (image(s1, z1) - image(s2, z2)).norm();
        if (d < result.closest) {
            result.closest = d;
            bs1 = s1;
            bz1 = z1;
            bs2 = s2;
            bz2 = z2;
        }
        if (d < 1e-9) result.found = true;
    }

    if (refine && !result.found) {
        // Coordinate pattern search on (s1, z1, s2, z2) from the best pair.
        double step = 0.05 * L;
        for (int round = 0; round < 200 && step > 1e-14; ++round) {
            bool improved = false;
            for (int c = 0; c < 6; ++c) {
                for (double sgn : {-1.0, 1.0}) {
                    double s1 = bs1, s2 = bs2;
                    Vec2 z1 = bz1, z2 = bz2;
                    if (c == 0) s1 = std::fmod(s1 + sgn * step + L, L);
                    if (c == 1) s2 = std::fmod(s2 + sgn * step + L, L);
                    if (c == 2) z1.x() += sgn * step;
                    if (c == 3) z1.y() += sgn * step;
                    if (c == 4) z2.x() += sgn * step;
                    if (c == 5) z2.y() += sgn * step;
                    if (!section.contains(z1) || !section.contains(z2)) continue;
                    if (param_dist(s1, z1, s2, z2) <= 1.1 * min_sep) continue;
                    const double d = (image(s1, z1) - image(s2, z2)).norm();
                    if (d < result.closest) {
                        result.closest = d;
                        bs1 = s1;
                        bz1 = z1;
                        bs2 = s2;
                        bz2 = z2;
                        improved = true;
                    }
                }
            }
            if (!improved) step *= 0.5;
            if (result.closest < 1e-9) {
                result.found = true;
                break;
            }
        }
    }
    return result;
}

}  // namespace oracle

#endif  // KP_TESTS_ORACLES_HH
