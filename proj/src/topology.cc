#include "kp/topology.hh"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "kp/film.hh"

namespace kp {

void TestLoop::validate() const {
    if (points.size() < 3) throw InvalidInput("TestLoop '" + label + "': need at least 3 points");
    const size_t k = points.size();
    for (size_t i = 0; i < k; ++i)
        if ((points[i] - points[(i + 1) % k]).norm() == 0.0)
            throw InvalidInput("TestLoop '" + label + "': consecutive points coincide");
}

double total_twist(const RodState &state) {
    const RodDensities &d = state.densities;
    double s = 0.0;
    for (double w : d.omega) s += w;
    return s * d.h() / (2.0 * M_PI);
}

double writhe(const std::vector<Vec3> &closed_polyline) {
    const int n = static_cast<int>(closed_polyline.size());
    if (n < 3) throw InvalidInput("writhe: need at least 3 points");
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 2; j < n; ++j) {
            if (i == 0 && j == n - 1) continue;
            acc += gauss_pair_solid_angle(closed_polyline[i], closed_polyline[(i + 1) % n],
                                          closed_polyline[j], closed_polyline[(j + 1) % n]);
        }
    }
    return acc / (2.0 * M_PI);
}

double writhe(const FramedCurve &curve) {
    const int n = curve.segment_count();
    if ((curve.nodes[n] - curve.nodes[0]).norm() > 1e-3 * curve.length)
        throw InvalidInput("writhe: curve is not closed");
    return writhe(std::vector<Vec3>(curve.nodes.begin(), curve.nodes.end() - 1));
}

LinkingResult linking_number_detail(const std::vector<Vec3> &c1, const std::vector<Vec3> &c2) {
    const int n1 = static_cast<int>(c1.size());
    const int n2 = static_cast<int>(c2.size());
    if (n1 < 3 || n2 < 3) throw InvalidInput("linking_number: need at least 3 points per curve");

    double scale = 0.0;
    for (const Vec3 &p : c1) scale = std::max(scale, p.cwiseAbs().maxCoeff());
    for (const Vec3 &p : c2) scale = std::max(scale, p.cwiseAbs().maxCoeff());

    double acc = 0.0;
    double min_dist = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n1; ++i) {
        const Vec3 &a0 = c1[i];
        const Vec3 &a1 = c1[(i + 1) % n1];
        for (int j = 0; j < n2; ++j) {
            const Vec3 &b0 = c2[j];
            const Vec3 &b1 = c2[(j + 1) % n2];
            min_dist = std::min(min_dist, segment_segment_distance(a0, a1, b0, b1));
            acc += gauss_pair_solid_angle(a0, a1, b0, b1);
        }
    }
    if (min_dist <= 1e-14 * scale)
        throw InvalidInput("linking_number: curves intersect");

    LinkingResult r;
    const double lk = acc / (4.0 * M_PI);
    r.value = static_cast<int>(std::lround(lk));
    r.residual = std::abs(lk - r.value);
    if (r.residual >= 0.2)
        throw ResolutionFailure("linking_number: rounding residual " + std::to_string(r.residual));
    return r;
}

int linking_number(const std::vector<Vec3> &c1, const std::vector<Vec3> &c2) {
    return linking_number_detail(c1, c2).value;
}

int rod_link_number(const RodState &state, const FramedCurve &curve, double epsilon) {
    if (!(epsilon > 0.0)) throw InvalidInput("rod_link_number: offset epsilon must be positive");
    const int n = curve.segment_count();
    if ((curve.nodes[n] - curve.nodes[0]).norm() > 0.05 * curve.length)
        throw InvalidInput("rod_link_number: midline is not closed");

    std::vector<Vec3> midline(curve.nodes.begin(), curve.nodes.end() - 1);

    std::vector<Vec3> offset;
    offset.reserve(n + 40);
    for (int i = 0; i < n; ++i) offset.push_back(curve.nodes[i] + epsilon * curve.directors[i]);

    // Close the offset through the minimal rotation taking d(L) back to d0.
    const Vec3 &t0 = state.clamp.t0;
    const Vec3 &d0 = state.clamp.d0;
    const Vec3 &dL = curve.directors[n];
    const double angle = std::atan2(t0.dot(dL.cross(d0)), dL.dot(d0));
    if (std::abs(angle) > 1e-9) {
        const int arc_pts = std::max(2, static_cast<int>(std::ceil(std::abs(angle) / 0.2)));
        for (int k = 0; k < arc_pts; ++k) {
            const double a = angle * k / arc_pts;
            const Vec3 d = Eigen::AngleAxisd(a, t0) * dL;
            offset.push_back(curve.nodes[n] + epsilon * d);
        }
    }
    return linking_number(midline, offset);
}

int rod_link_number(const RodState &state, double epsilon) {
    return rod_link_number(state, integrate_frame(state), epsilon);
}

double calugareanu_residual(const RodState &state, double epsilon) {
    const FramedCurve curve = integrate_frame(state);
    const double lk = rod_link_number(state, curve, epsilon);
    return std::abs(lk - total_twist(state) - writhe(curve));
}

std::vector<bool> spanning_check(const FilmMesh &film, const std::vector<TestLoop> &loops,
                                 const TubeMesh &tube) {
    const auto box = tube.bounding_box();
    const double eps = 1e-12 * std::max(1.0, (box[1] - box[0]).norm());

    std::vector<bool> result;
    result.reserve(loops.size());
    for (const TestLoop &loop : loops) {
        loop.validate();
        const size_t k = loop.points.size();
        for (size_t i = 0; i < k; ++i) {
            const Vec3 &p0 = loop.points[i];
            const Vec3 &p1 = loop.points[(i + 1) % k];
            for (const Triangle &t : tube.triangles) {
                if (segment_triangle_distance(p0, p1, tube.vertices[t[0]], tube.vertices[t[1]],
                                              tube.vertices[t[2]]) <= eps)
                    throw InvalidInput("spanning_check: loop '" + loop.label +
                                       "' touches the tube");
            }
        }
        bool hit = false;
        for (size_t i = 0; i < k && !hit; ++i) {
            const Vec3 &p0 = loop.points[i];
            const Vec3 &p1 = loop.points[(i + 1) % k];
            for (const Triangle &t : film.triangles) {
                if (segment_triangle_intersect(p0, p1, film.vertices[t[0]], film.vertices[t[1]],
                                               film.vertices[t[2]], eps)) {
                    hit = true;
                    break;
                }
            }
        }
        result.push_back(hit);
    }
    return result;
}

double hausdorff_distance(const std::vector<Vec3> &a, const std::vector<Vec3> &b) {
    if (a.empty() || b.empty()) throw InvalidInput("hausdorff_distance: empty point set");
    auto directed = [](const std::vector<Vec3> &from, const std::vector<Vec3> &to) {
        double worst = 0.0;
        for (const Vec3 &p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec3 &q : to) best = std::min(best, (p - q).norm());
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(directed(a, b), directed(b, a));
}

std::vector<TestLoop> read_loops(std::istream &in) {
    std::vector<TestLoop> loops;
    TestLoop current;
    std::string pending_label;
    std::string line;
    int anon = 0;

    auto flush = [&]() {
        if (current.points.empty()) return;
        if (current.label.empty()) current.label = "loop" + std::to_string(anon++);
        current.validate();
        loops.push_back(std::move(current));
        current = TestLoop{};
    };

    while (std::getline(in, line)) {
        const size_t hash = line.find('#');
        std::string comment;
        if (hash != std::string::npos) {
            comment = line.substr(hash + 1);
            line.erase(hash);
        }
        const size_t lbl = comment.find("label:");
        if (lbl != std::string::npos) {
            std::string name = comment.substr(lbl + 6);
            const size_t b = name.find_first_not_of(" \t");
            const size_t e = name.find_last_not_of(" \t\r");
            pending_label = b == std::string::npos ? "" : name.substr(b, e - b + 1);
        }
        std::istringstream ls(line);
        double x, y, z;
        if (ls >> x >> y >> z) {
            if (current.points.empty() && !pending_label.empty()) {
                current.label = pending_label;
                pending_label.clear();
            }
            current.points.emplace_back(x, y, z);
        } else if (line.find_first_not_of(" \t\r") == std::string::npos) {
            flush();
        } else if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos) {
            throw InvalidInput("read_loops: cannot parse line '" + line + "'");
        }
    }
    flush();
    return loops;
}

std::vector<TestLoop> load_loops(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("load_loops: cannot open '" + path + "'");
    return read_loops(in);
}

void write_loops(std::ostream &out, const std::vector<TestLoop> &loops) {
    char buf[96];
    bool first = true;
    for (const TestLoop &loop : loops) {
        if (!first) out << "\n";
        first = false;
        out << "# label: " << loop.label << "\n";
        for (const Vec3 &p : loop.points) {
            std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
            out << buf;
        }
    }
}

}  // namespace kp
