////////////////////////////////////////////////////////////////////////////////
// topology.hh
////////////////////////////////////////////////////////////////////////////////
/*! @file
//  Topological diagnostics of the closed rod and the film: twist, writhe,
//  linking number (Gauss double sums with the exact per-segment-pair solid
//  angle), the Calugareanu cross-check Lk = Tw + Wr, the homotopic spanning
//  test against a finite family of user-supplied loops, and the Hausdorff
//  distance between point sets.
*/
////////////////////////////////////////////////////////////////////////////////
#ifndef KP_TOPOLOGY_HH
#define KP_TOPOLOGY_HH

#include <iosfwd>

#include "kp/rod_core.hh"

namespace kp {

struct FilmMesh;  // film.hh

// Closed polyline representing one homotopy class of the tube complement.
// The finite family of test loops is the computable stand-in for the full
// set of non-contractible loops: passing the check certifies necessity for
// the chosen classes, not the full spanning condition.
struct TestLoop {
    std::vector<Vec3> points;  // closed: segment K-1 runs back to point 0
    std::string label;
    std::string declared_class;

    void validate() const;
};

struct LinkSpec {
    double glue_angle = 0.0;
    int link_number = 0;
};

// (1/2pi) * integral of omega.
double total_twist(const RodState &state);

// Gauss double sum over non-adjacent segment pairs of the closed polyline.
double writhe(const std::vector<Vec3> &closed_polyline);
double writhe(const FramedCurve &curve);

struct ResolutionFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LinkingResult {
    int value = 0;
    double residual = 0.0;  // |gauss sum - value|
};

// Gauss double sum rounded to the nearest integer; throws ResolutionFailure
// when the rounding residual reaches 0.2 and InvalidInput when the curves
// touch.
LinkingResult linking_number_detail(const std::vector<Vec3> &c1, const std::vector<Vec3> &c2);
int linking_number(const std::vector<Vec3> &c1, const std::vector<Vec3> &c2);

// Linking number of the midline and its offset x + epsilon d; the offset is
// closed through the minimal director rotation arc when the glued frame does
// not match d0.
int rod_link_number(const RodState &state, double epsilon);
int rod_link_number(const RodState &state, const FramedCurve &curve, double epsilon);

// |Lk - Tw - Wr|; a resolution diagnostic, small on well-resolved rods.
double calugareanu_residual(const RodState &state, double epsilon);

// Per-loop: true iff some loop segment crosses some film triangle. Loops
// touching the tube are rejected with InvalidInput naming the loop.
std::vector<bool> spanning_check(const FilmMesh &film, const std::vector<TestLoop> &loops,
                                 const TubeMesh &tube);

double hausdorff_distance(const std::vector<Vec3> &a, const std::vector<Vec3> &b);

// Plain-text polyline format: one "x y z" triple per line, blank lines
// separate loops, '#' starts a comment (a "# label: ..." comment names the
// loop that follows).
std::vector<TestLoop> read_loops(std::istream &in);
std::vector<TestLoop> load_loops(const std::string &path);
void write_loops(std::ostream &out, const std::vector<TestLoop> &loops);

}  // namespace kp

#endif  // KP_TOPOLOGY_HH
