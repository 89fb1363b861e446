////////////////////////////////////////////////////////////////////////////////
// rod_energy.hh
////////////////////////////////////////////////////////////////////////////////
/*! @file
//  Loop energy E_loop = E_sh + E_ni + E_g and the injectivity machinery.
//
//  The stored-energy density is the diagonal quadratic
//      f = 1/2 [a1 (k1 - k1_ref)^2 + a2 (k2 - k2_ref)^2 + a3 (w - w_ref)^2],
//  which is convex, bounded below, and has quadratic growth. The local
//  non-interpenetration condition max_{A} (zeta1 k2 - zeta2 k1) <= 1 is
//  evaluated exactly: the max of a linear functional over a convex polygon
//  is attained at a vertex. A log-barrier on the margins and a midline
//  self-contact penalty provide the differentiable surrogates used by the
//  solver; the hard checks stay exact.
*/
////////////////////////////////////////////////////////////////////////////////
#ifndef KP_ROD_ENERGY_HH
#define KP_ROD_ENERGY_HH

#include "kp/rod_core.hh"

namespace kp {

struct MaterialParams {
    double a1 = 1.0, a2 = 1.0, a3 = 1.0;            // stiffnesses
    double kappa1_ref = 0.0, kappa2_ref = 0.0, omega_ref = 0.0;  // intrinsic densities
    double rho = 0.0;                                // mass density
    Vec3 gravity = Vec3::Zero();
    double sigma = 0.0;                              // surface tension

    void validate() const;
};

struct EnergyBreakdown {
    double shape = 0.0;
    double gravity = 0.0;
    double film = 0.0;
    double total = 0.0;   // shape + gravity + film, or +inf when infeasible
    bool ni_feasible = true;
    std::vector<double> margins;
};

double shape_energy(const RodState &state, const MaterialParams &mat);

// Per-segment margins 1 - max over section vertices of (zeta1 k2 - zeta2 k1);
// the state is E_ni-feasible iff all margins are >= 0.
std::vector<double> local_injectivity_margin(const RodState &state, const CrossSection &section);

// 0 when feasible, +inf otherwise.
double ni_energy(const RodState &state, const CrossSection &section);

struct InfeasibleState : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// -beta * sum_i h * log(margin_i); requires strictly positive margins.
double ni_barrier(const RodState &state, const CrossSection &section, double beta);
double ni_barrier(const std::vector<double> &margins, double h, double beta);

// Exact reduction of -int_Omega rho g . p for a constant-density rod with an
// s-independent section, midpoint quadrature in s.
double gravity_energy(const RodState &state, const CrossSection &section,
                      const MaterialParams &mat);
double gravity_energy(const FramedCurve &curve, const CrossSection &section,
                      const MaterialParams &mat);

struct GlobalInjectivityResult {
    double lhs = 0.0;        // exact reduction of the Jacobian integral
    double rhs = 0.0;        // voxel estimate of the volume of the image
    double voxel_tol = 0.0;  // 3 * voxel_h / R
    bool ok = false;         // lhs <= rhs * (1 + voxel_tol)
};

GlobalInjectivityResult global_injectivity_check(const RodState &state,
                                                 const CrossSection &section,
                                                 double voxel_h);

// Differentiable interpenetration proxy: penalizes midline segment pairs
// closer in space than twice the section inradius, excluding pairs whose
// arc-length separation is within pi * inradius (near-neighbour proximity is
// governed by the local margins, and antipodal points of the tightest
// feasible bend graze at exactly 2 * inradius). Grazing contact contributes
// nothing.
double self_contact_penalty(const FramedCurve &curve, const CrossSection &section,
                            double stiffness);

}  // namespace kp

#endif  // KP_ROD_ENERGY_HH
