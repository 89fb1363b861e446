#include "kp/solver.hh"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

namespace kp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Eigen::VectorXd;

VectorXd pack(const RodDensities &d) {
    const int n = d.segment_count();
    VectorXd v(3 * n);
    for (int i = 0; i < n; ++i) {
        v[i] = d.kappa1[i];
        v[n + i] = d.kappa2[i];
        v[2 * n + i] = d.omega[i];
    }
    return v;
}

RodState unpack(const VectorXd &v, const RodState &proto) {
    const int n = proto.densities.segment_count();
    RodState s = proto;
    for (int i = 0; i < n; ++i) {
        s.densities.kappa1[i] = v[i];
        s.densities.kappa2[i] = v[n + i];
        s.densities.omega[i] = v[2 * n + i];
    }
    return s;
}

// Rod-side evaluation shared by both solvers: true energies, barrier,
// contact penalty, closure penalties.
struct RodEval {
    double penalized = kInf;  // everything except the film term
    double shape = 0.0, gravity = 0.0, barrier = 0.0, contact = 0.0;
    ClosureResiduals res;
    double min_margin = -kInf;
    bool feasible = false;
    FramedCurve curve;
};

struct Penalties {
    double mu_x, mu_t, mu_d, beta;
};

class LoopProblem {
  public:
    LoopProblem(const RodState &proto, const CrossSection &section, const MaterialParams &mat,
                const ConstraintSpec &cons, const SolveOptions &opts)
        : proto_(proto), section_(section), mat_(mat), cons_(cons), opts_(opts) {}

    RodEval evaluate(const VectorXd &v, const Penalties &pen) const {
        RodEval e;
        const RodState state = unpack(v, proto_);
        const std::vector<double> margins = local_injectivity_margin(state, section_);
        e.min_margin = *std::min_element(margins.begin(), margins.end());
        if (!(e.min_margin > 0.0)) return e;  // penalized stays +inf
        e.feasible = true;

        e.curve = integrate_frame(state);
        e.shape = shape_energy(state, mat_);
        e.barrier = ni_barrier(margins, state.densities.h(), pen.beta);
        e.gravity = gravity_energy(e.curve, section_, mat_);
        e.contact = self_contact_penalty(e.curve, section_, opts_.contact_stiffness);
        e.res = closure_residuals(e.curve, proto_.clamp, cons_.link.glue_angle);
        e.penalized = e.shape + e.barrier + e.gravity + e.contact +
                      pen.mu_x * e.res.position * e.res.position +
                      pen.mu_t * e.res.tangent * e.res.tangent +
                      pen.mu_d * e.res.director * e.res.director;
        return e;
    }

    // Central differences; one-sided next to the feasibility boundary.
    VectorXd gradient(const VectorXd &v, const Penalties &pen, double f0) const {
        VectorXd g(v.size());
        for (int i = 0; i < v.size(); ++i) {
            const double d = opts_.fd_step * (1.0 + std::abs(v[i]));
            VectorXd vp = v, vm = v;
            vp[i] += d;
            vm[i] -= d;
            const double fp = evaluate(vp, pen).penalized;
            const double fm = evaluate(vm, pen).penalized;
            if (std::isfinite(fp) && std::isfinite(fm))
                g[i] = (fp - fm) / (2.0 * d);
            else if (std::isfinite(fp))
                g[i] = (fp - f0) / d;
            else if (std::isfinite(fm))
                g[i] = (f0 - fm) / d;
            else
                g[i] = 0.0;
        }
        return g;
    }

    const RodState &proto() const { return proto_; }
    const CrossSection &section() const { return section_; }
    const MaterialParams &material() const { return mat_; }
    const ConstraintSpec &constraints() const { return cons_; }
    const SolveOptions &options() const { return opts_; }

  private:
    RodState proto_;
    const CrossSection &section_;
    const MaterialParams &mat_;
    const ConstraintSpec &cons_;
    SolveOptions opts_;
};

// Link of the current iterate's midline and director offset; nullopt when the
// curve is too open for the link to be defined.
std::optional<int> safe_link(const RodState &state, const FramedCurve &curve, double min_margin,
                             const CrossSection &section, const SolveOptions &opts) {
    const double eps =
        opts.link_epsilon_factor * std::min(1.0, std::max(min_margin, 0.1)) * section.bound;
    try {
        return rod_link_number(state, curve, eps);
    } catch (const InvalidInput &) {
        return std::nullopt;
    } catch (const ResolutionFailure &) {
        return std::nullopt;
    }
}

struct LbfgsMemory {
    std::deque<VectorXd> s, y;
    std::deque<double> rho;
    int cap = 8;

    void push(const VectorXd &si, const VectorXd &yi) {
        const double sy = si.dot(yi);
        if (!(sy > 1e-14 * si.norm() * yi.norm())) return;  // curvature guard
        s.push_back(si);
        y.push_back(yi);
        rho.push_back(1.0 / sy);
        if (static_cast<int>(s.size()) > cap) {
            s.pop_front();
            y.pop_front();
            rho.pop_front();
        }
    }

    void clear() {
        s.clear();
        y.clear();
        rho.clear();
    }

    VectorXd direction(const VectorXd &g) const {
        VectorXd q = g;
        const int m = static_cast<int>(s.size());
        std::vector<double> alpha(m);
        for (int i = m - 1; i >= 0; --i) {
            alpha[i] = rho[i] * s[i].dot(q);
            q -= alpha[i] * y[i];
        }
        if (m > 0) q *= s[m - 1].dot(y[m - 1]) / y[m - 1].squaredNorm();
        for (int i = 0; i < m; ++i) {
            const double beta = rho[i] * y[i].dot(q);
            q += (alpha[i] - beta) * s[i];
        }
        return -q;
    }
};

TraceRow make_row(int iteration, const RodEval &e, double film) {
    TraceRow row;
    row.iteration = iteration;
    row.energy.shape = e.shape;
    row.energy.gravity = e.gravity;
    row.energy.film = film;
    row.energy.total = e.shape + e.gravity + film;
    row.energy.ni_feasible = e.feasible;
    row.residuals = e.res;
    row.min_margin = e.min_margin;
    return row;
}

bool residuals_met(const ClosureResiduals &r, double tol, double L) {
    return r.position <= tol * L && r.tangent <= 100.0 * tol && r.director <= 100.0 * tol;
}

std::vector<Vec3> tube_cloud(const TubeMesh &tube) { return tube.vertices; }

// Film area restricted to the eps-neighborhood of a loop (triangle centroids).
double loop_neighborhood_area(const FilmMesh &film, const TestLoop &loop, double eps) {
    double acc = 0.0;
    for (const Triangle &t : film.triangles) {
        const Vec3 c =
            (film.vertices[t[0]] + film.vertices[t[1]] + film.vertices[t[2]]) / 3.0;
        if (point_to_closed_polyline_distance(c, loop.points) <= eps)
            acc += triangle_area(film.vertices[t[0]], film.vertices[t[1]], film.vertices[t[2]]);
    }
    return acc;
}

}  // namespace

std::pair<RodState, KPReport> minimize_loop(const RodState &init, const CrossSection &section,
                                            const MaterialParams &mat, const ConstraintSpec &cons,
                                            const SolveOptions &opts) {
    init.validate();
    mat.validate();
    cons.clamp.validate();

    LoopProblem prob(init, section, mat, cons, opts);
    const double L = init.densities.length;

    Penalties pen{opts.mu_closure, opts.mu_frame, opts.mu_glue, opts.barrier_beta};
    VectorXd v = pack(init.densities);
    RodEval cur = prob.evaluate(v, pen);
    if (!cur.feasible)
        throw SolverFailure("minimize_loop: initial state violates local injectivity");

    const std::optional<int> lk0 =
        safe_link(unpack(v, init), cur.curve, cur.min_margin, section, opts);
    if (lk0 && *lk0 != cons.link.link_number)
        throw SolverFailure("minimize_loop: initial link " + std::to_string(*lk0) +
                            " differs from the prescribed " +
                            std::to_string(cons.link.link_number));

    KPReport report;
    report.trace.push_back(make_row(0, cur, 0.0));

    LbfgsMemory mem;
    int accepted_total = 0;

    for (int phase = 0; phase < opts.max_penalty_phases; ++phase) {
        mem.clear();
        cur = prob.evaluate(v, pen);  // penalties changed between phases
        VectorXd g = prob.gradient(v, pen, cur.penalized);

        for (int it = 0; it < opts.outer_iters; ++it) {
            if (g.lpNorm<Eigen::Infinity>() <
                opts.grad_tol * std::max(1.0, std::abs(cur.penalized)))
                break;

            VectorXd dir = mem.direction(g);
            if (!(dir.dot(g) < 0.0)) dir = -g;

            double t = 1.0;
            bool accepted = false;
            RodEval trial_eval;
            VectorXd trial;
            while (t >= 1e-12) {
                trial = v + t * dir;
                trial_eval = prob.evaluate(trial, pen);
                if (trial_eval.penalized <= cur.penalized + 1e-4 * t * dir.dot(g)) {
                    const std::optional<int> lk = safe_link(
                        unpack(trial, init), trial_eval.curve, trial_eval.min_margin, section,
                        opts);
                    if (lk && *lk != cons.link.link_number) {
                        t *= 0.5;  // a step that jumps the link class is never taken
                        continue;
                    }
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if (!accepted) break;

            const VectorXd g_new = prob.gradient(trial, pen, trial_eval.penalized);
            mem.push(trial - v, g_new - g);
            v = trial;
            cur = trial_eval;
            g = g_new;
            ++accepted_total;
            report.trace.push_back(make_row(accepted_total, cur, 0.0));
        }

        if (residuals_met(cur.res, opts.closure_tol_rel, L)) break;
        pen.mu_x *= opts.mu_escalation;
        pen.mu_t *= opts.mu_escalation;
        pen.mu_d *= opts.mu_escalation;
        pen.beta = std::max(pen.beta * opts.barrier_shrink, opts.barrier_beta_min);
    }

    const RodState final_state = unpack(v, init);
    report.outer_iterations = accepted_total;
    report.converged = residuals_met(cur.res, opts.closure_tol_rel, L);
    report.twist = total_twist(final_state);
    const std::optional<int> lk =
        safe_link(final_state, cur.curve, cur.min_margin, section, opts);
    report.link_number = lk.value_or(cons.link.link_number);
    try {
        report.writhe_value = writhe(cur.curve);
    } catch (const InvalidInput &) {
        report.writhe_value = 0.0;
    }
    if (!report.converged)
        report.message = "closure residuals above target after all penalty phases";
    return {final_state, report};
}

KPSolution minimize_kp(const RodState &init, const CrossSection &section,
                       const MaterialParams &mat, const ConstraintSpec &cons,
                       const std::vector<TestLoop> &loops, const SolveOptions &opts) {
    init.validate();
    mat.validate();

    RelaxOptions film_full;
    film_full.max_iters = opts.film_max_iters;
    film_full.tol_rel = opts.film_tol_rel;

    // sigma = 0 decouples the film: the rod problem is exactly the loop
    // problem, the film a single relaxation over the final tube.
    if (mat.sigma == 0.0) {
        auto [state, report] = minimize_loop(init, section, mat, cons, opts);
        const FramedCurve curve = integrate_frame(state);
        TubeMesh tube;
        try {
            tube = build_tube(curve, section, opts.closure_tol_rel);
        } catch (const InvalidInput &) {
            tube = build_tube(curve, section, 1e-2);
        }
        FilmMesh film = init_film(curve, tube);
        auto [relaxed, film_report] = relax_film(std::move(film), tube, loops, film_full);
        report.film_report = film_report;
        return KPSolution{state, std::move(relaxed), std::move(report)};
    }

    LoopProblem prob(init, section, mat, cons, opts);
    const double L = init.densities.length;
    const double loose_tube_tol = 1e-2;  // FD perturbations open the closure

    Penalties pen{opts.mu_closure, opts.mu_frame, opts.mu_glue, opts.barrier_beta};
    VectorXd v = pack(init.densities);
    RodEval cur = prob.evaluate(v, pen);
    if (!cur.feasible)
        throw SolverFailure("minimize_kp: initial state violates local injectivity");

    TubeMesh tube = build_tube(cur.curve, section, loose_tube_tol);
    FilmMesh film = init_film(cur.curve, tube);
    {
        auto [relaxed, rep] = relax_film(std::move(film), tube, loops, film_full);
        film = std::move(relaxed);
    }
    double area = film_area(film);

    RelaxOptions film_fd;  // short warm-started relaxation inside FD evals
    film_fd.max_iters = opts.inner_fd_iters;
    film_fd.window = opts.inner_fd_iters + 1;
    film_fd.maintenance_period = opts.inner_fd_iters + 1;  // topology frozen
    film_fd.interior_checks = false;
    film_fd.tol_rel = opts.film_tol_rel;

    RelaxOptions film_ls = film_full;  // line-search trials: full checks, capped
    film_ls.max_iters = std::min(opts.film_max_iters, 800);

    // Film term as a function of the densities: rebuild the tube, re-attach
    // the warm film, relax briefly.
    auto film_term = [&](const RodEval &e, const RelaxOptions &fo,
                         FilmMesh *keep) -> double {
        TubeMesh t;
        try {
            t = build_tube(e.curve, section, loose_tube_tol);
        } catch (const InvalidInput &) {
            return kInf;
        }
        FilmMesh warm = film;
        project_film_to_tube(warm, t, fo.interior_checks);
        try {
            auto [relaxed, rep] =
                relax_film(std::move(warm), t, fo.interior_checks ? loops : std::vector<TestLoop>{},
                           fo);
            const double a = rep.final_area;
            if (keep) *keep = std::move(relaxed);
            return 2.0 * mat.sigma * a;
        } catch (const InvalidInput &) {
            return kInf;
        }
    };

    double e_film = 2.0 * mat.sigma * area;
    double F = cur.penalized + e_film;
    double E_true = cur.shape + cur.gravity + e_film;

    KPReport report;
    report.trace.push_back(make_row(0, cur, e_film));

    const std::optional<int> lk0 =
        safe_link(unpack(v, init), cur.curve, cur.min_margin, section, opts);
    if (lk0 && *lk0 != cons.link.link_number)
        throw SolverFailure("minimize_kp: initial link " + std::to_string(*lk0) +
                            " differs from the prescribed " +
                            std::to_string(cons.link.link_number));

    std::vector<Vec3> prev_cloud = tube_cloud(tube);
    std::vector<double> accepted_E{E_true};
    int phase = 0;
    int outer = 0;
    bool converged = false;
    std::string message;

    for (outer = 1; outer <= opts.kp_outer_iters; ++outer) {
        // (a) full film relaxation at the current tube.
        {
            FilmMesh warm = film;
            project_film_to_tube(warm, tube);
            auto [relaxed, rep] = relax_film(std::move(warm), tube, loops, film_full);
            film = std::move(relaxed);
            area = rep.final_area;
            report.film_report = rep;
        }
        e_film = 2.0 * mat.sigma * area;
        F = cur.penalized + e_film;
        E_true = cur.shape + cur.gravity + e_film;

        // (b) one finite-difference gradient step on the reduced objective.
        VectorXd g(v.size());
        for (int i = 0; i < v.size(); ++i) {
            const double d = opts.fd_step * (1.0 + std::abs(v[i]));
            VectorXd vp = v, vm = v;
            vp[i] += d;
            vm[i] -= d;
            const RodEval ep = prob.evaluate(vp, pen);
            const RodEval em = prob.evaluate(vm, pen);
            const double fp =
                ep.feasible ? ep.penalized + film_term(ep, film_fd, nullptr) : kInf;
            const double fm =
                em.feasible ? em.penalized + film_term(em, film_fd, nullptr) : kInf;
            if (std::isfinite(fp) && std::isfinite(fm))
                g[i] = (fp - fm) / (2.0 * d);
            else if (std::isfinite(fp))
                g[i] = (fp - F) / d;
            else if (std::isfinite(fm))
                g[i] = (F - fm) / d;
            else
                g[i] = 0.0;
        }

        const double gn = g.norm();
        bool accepted = false;
        if (gn > 0.0) {
            double t = 1.0 / std::max(gn, 1.0);
            while (t * gn >= 1e-10) {
                const VectorXd trial = v - t * g;
                const RodEval te = prob.evaluate(trial, pen);
                if (!te.feasible) {
                    t *= 0.5;
                    continue;
                }
                FilmMesh trial_film;
                const double tf = film_term(te, film_ls, &trial_film);
                if (!std::isfinite(tf)) {
                    t *= 0.5;
                    continue;
                }
                const double trial_F = te.penalized + tf;
                const double trial_E = te.shape + te.gravity + tf;
                // Both the working objective and the true energy must drop:
                // the reported energy trace is monotone by construction.
                if (trial_F < F && trial_E < E_true) {
                    const std::optional<int> lk = safe_link(unpack(trial, init), te.curve,
                                                            te.min_margin, section, opts);
                    if (lk && *lk != cons.link.link_number) {
                        t *= 0.5;
                        continue;
                    }
                    v = trial;
                    cur = te;
                    film = std::move(trial_film);
                    area = tf / (2.0 * mat.sigma);
                    e_film = tf;
                    F = trial_F;
                    E_true = trial_E;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
        }

        if (accepted) {
            try {
                tube = build_tube(cur.curve, section, loose_tube_tol);
            } catch (const InvalidInput &) {
            }
            const std::vector<Vec3> cloud = tube_cloud(tube);
            report.tube_hausdorff.push_back(hausdorff_distance(prev_cloud, cloud));
            prev_cloud = cloud;
            accepted_E.push_back(E_true);
            report.trace.push_back(make_row(outer, cur, e_film));

            const size_t k = accepted_E.size();
            if (k >= 6 && residuals_met(cur.res, opts.closure_tol_rel, L)) {
                const double drop = accepted_E[k - 6] - accepted_E[k - 1];
                if (drop < 1e-6 * std::max(1.0, std::abs(accepted_E[k - 1]))) {
                    converged = true;
                    break;
                }
            }
        } else {
            if (!residuals_met(cur.res, opts.closure_tol_rel, L) &&
                phase + 1 < opts.max_penalty_phases) {
                ++phase;
                pen.mu_x *= opts.mu_escalation;
                pen.mu_t *= opts.mu_escalation;
                pen.mu_d *= opts.mu_escalation;
                pen.beta = std::max(pen.beta * opts.barrier_shrink, opts.barrier_beta_min);
                cur = prob.evaluate(v, pen);
                F = cur.penalized + e_film;
                continue;
            }
            converged = residuals_met(cur.res, opts.closure_tol_rel, L);
            message = converged ? "" : "no descent step before closure target was met";
            break;
        }
    }

    // Final film on the final tube at the tight closure tolerance if it holds.
    const RodState final_state = unpack(v, init);
    const FramedCurve final_curve = integrate_frame(final_state);
    try {
        tube = build_tube(final_curve, section, opts.closure_tol_rel);
    } catch (const InvalidInput &) {
        tube = build_tube(final_curve, section, loose_tube_tol);
    }
    {
        FilmMesh warm = film;
        project_film_to_tube(warm, tube);
        auto [relaxed, rep] = relax_film(std::move(warm), tube, loops, film_full);
        film = std::move(relaxed);
        report.film_report = rep;
    }

    report.outer_iterations = outer;
    report.converged = converged;
    report.message = message;
    report.twist = total_twist(final_state);
    const std::optional<int> lk =
        safe_link(final_state, final_curve, cur.min_margin, section, opts);
    report.link_number = lk.value_or(cons.link.link_number);
    try {
        report.writhe_value = writhe(final_curve);
    } catch (const InvalidInput &) {
        report.writhe_value = 0.0;
    }
    return KPSolution{final_state, std::move(film), std::move(report)};
}

std::vector<LscRow> lsc_diagnostic(const std::vector<RodState> &states,
                                   const CrossSection &section,
                                   const std::vector<TestLoop> &loops,
                                   const SolveOptions &opts) {
    if (states.empty()) throw InvalidInput("lsc_diagnostic: empty state sequence");

    RelaxOptions film_opts;
    film_opts.max_iters = opts.film_max_iters;
    film_opts.tol_rel = opts.film_tol_rel;

    std::vector<FramedCurve> curves;
    std::vector<TubeMesh> tubes;
    std::optional<int> common_link;
    for (const RodState &s : states) {
        s.validate();
        const std::vector<double> margins = local_injectivity_margin(s, section);
        const double mm = *std::min_element(margins.begin(), margins.end());
        if (!(mm > 0.0)) throw InvalidInput("lsc_diagnostic: state violates local injectivity");
        curves.push_back(integrate_frame(s));
        const std::optional<int> lk = safe_link(s, curves.back(), mm, section, opts);
        if (lk) {
            if (common_link && *common_link != *lk)
                throw InvalidInput("lsc_diagnostic: states carry different link numbers");
            common_link = lk;
        }
        tubes.push_back(build_tube(curves.back(), section, 1e-2));
    }

    const std::vector<Vec3> limit_cloud = tube_cloud(tubes.back());
    const double eps = opts.lsc_epsilon > 0.0 ? opts.lsc_epsilon : 3.0 * section.bound;

    std::vector<LscRow> rows;
    for (size_t k = 0; k < states.size(); ++k) {
        LscRow row;
        row.tube_hausdorff = hausdorff_distance(tube_cloud(tubes[k]), limit_cloud);
        FilmMesh film = init_film(curves[k], tubes[k]);
        auto [relaxed, rep] = relax_film(std::move(film), tubes[k], loops, film_opts);
        row.film_area = rep.final_area;
        for (const TestLoop &loop : loops)
            row.loop_neighborhood_area.push_back(loop_neighborhood_area(relaxed, loop, eps));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace kp
