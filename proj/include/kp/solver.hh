////////////////////////////////////////////////////////////////////////////////
// solver.hh
////////////////////////////////////////////////////////////////////////////////
/*! @file
//  Minimization of the loop energy and of the full Kirchhoff-Plateau energy
//  over the rod densities (clamping parameters stay fixed). Closure and
//  gluing are enforced by quadratic penalties with escalation, local
//  non-interpenetration by a log-barrier, global non-interpenetration by the
//  midline self-contact penalty; the integer link is checked on every
//  accepted step and never allowed to change. The film term is the inner
//  minimum returned by relax_film, warm-started across finite-difference
//  perturbations (dimensional reduction: the coupled energy is a functional
//  of the rod densities only).
*/
////////////////////////////////////////////////////////////////////////////////
#ifndef KP_SOLVER_HH
#define KP_SOLVER_HH

#include <optional>

#include "kp/film.hh"
#include "kp/rod_energy.hh"

namespace kp {

struct ConstraintSpec {
    ClampingParams clamp;
    LinkSpec link;
    std::vector<Vec3> knot_template;  // closed template curve; empty = unspecified
    std::optional<double> energy_bound;
};

struct SolveOptions {
    // Penalty weights (closure, frame clamping, gluing) and their escalation.
    double mu_closure = 1e4;
    double mu_frame = 1e4;
    double mu_glue = 1e3;
    double mu_escalation = 10.0;
    int max_penalty_phases = 8;

    // Log-barrier schedule: beta shrinks at each penalty escalation.
    double barrier_beta = 1e-6;
    double barrier_shrink = 0.1;
    double barrier_beta_min = 1e-12;

    double contact_stiffness = 1e3;

    int outer_iters = 300;       // descent iterations per penalty phase
    int kp_outer_iters = 60;     // outer steps of the alternating scheme
    double fd_step = 1e-6;       // finite-difference step (relative)
    double grad_tol = 1e-8;
    double closure_tol_rel = 1e-6;  // residual target, relative to L

    bool film_warm_start = true;
    int inner_fd_iters = 30;     // film iterations per FD perturbation
    int film_max_iters = 4000;
    double film_tol_rel = 1e-7;

    double link_epsilon_factor = 0.4;  // offset = factor * min(1, margin) * R
    double lsc_epsilon = 0.0;          // 0 = 3 * section bound
    unsigned seed = 0;
};

struct TraceRow {
    int iteration = 0;
    EnergyBreakdown energy;
    ClosureResiduals residuals;
    double min_margin = 0.0;
};

struct KPReport {
    std::vector<TraceRow> trace;   // accepted steps (row 0 = initial state)
    int link_number = 0;
    double twist = 0.0;
    double writhe_value = 0.0;
    std::vector<double> tube_hausdorff;  // between successive accepted tubes
    RelaxReport film_report;
    int outer_iterations = 0;
    bool converged = false;
    std::string message;
};

struct SolverFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::pair<RodState, KPReport> minimize_loop(const RodState &init, const CrossSection &section,
                                            const MaterialParams &mat, const ConstraintSpec &cons,
                                            const SolveOptions &opts = {});

struct KPSolution {
    RodState state;
    FilmMesh film;
    KPReport report;
};

KPSolution minimize_kp(const RodState &init, const CrossSection &section,
                       const MaterialParams &mat, const ConstraintSpec &cons,
                       const std::vector<TestLoop> &loops, const SolveOptions &opts = {});

struct LscRow {
    double tube_hausdorff = 0.0;       // to the last state's tube
    double film_area = 0.0;            // relaxed area alpha_k
    std::vector<double> loop_neighborhood_area;  // film area inside U_eps(loop)
};

// Lower-semicontinuity diagnostic: relaxed areas along a converging tube
// sequence and the film mass retained near each test loop.
std::vector<LscRow> lsc_diagnostic(const std::vector<RodState> &states,
                                   const CrossSection &section,
                                   const std::vector<TestLoop> &loops,
                                   const SolveOptions &opts = {});

}  // namespace kp

#endif  // KP_SOLVER_HH
