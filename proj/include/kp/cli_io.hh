////////////////////////////////////////////////////////////////////////////////
// cli_io.hh
////////////////////////////////////////////////////////////////////////////////
/*! @file
//  Batch front end: strict sectioned key-value configs, run orchestration for
//  the five modes (rod-relax, film-relax, kp-solve, check, lsc-diagnostic),
//  and deterministic exports (OBJ meshes with boundary-tag comments, plain
//  midline/loop polylines, CSV traces, sorted-key JSON reports). All numeric
//  output uses 17 significant digits so load-save-load round-trips are exact.
*/
////////////////////////////////////////////////////////////////////////////////
#ifndef KP_CLI_IO_HH
#define KP_CLI_IO_HH

#include <iosfwd>

#include "kp/solver.hh"

namespace kp {

struct RunConfig {
    std::string mode;  // rod-relax | film-relax | kp-solve | check | lsc-diagnostic

    // [rod]
    int n = 100;
    double length = 1.0;
    std::string rod_preset = "circle";  // circle | perturbed-circle | file
    std::string rod_file;
    double perturbation = 0.05;  // relative density noise of perturbed-circle

    // [section]
    std::string section_kind = "regular";  // regular | file
    int section_sides = 8;
    double section_radius = 0.05;
    std::string section_file;

    MaterialParams material;

    // [constraints]
    double glue_angle = 0.0;
    int link = 0;
    std::string template_file;

    // [loops]
    std::vector<std::string> loop_files;
    bool auto_threading_loop = true;

    SolveOptions solve;

    // [check]
    double voxel_h = 0.0;  // 0 = section bound / 4

    // [lsc]
    int lsc_count = 8;

    // [output]
    std::string out_dir = ".";
};

// Strict parse: unknown sections/keys and malformed values are all collected
// and reported together in one InvalidInput.
RunConfig parse_config(const std::string &path);
RunConfig parse_config_stream(std::istream &in, const std::string &origin = "<stream>");

// Exit code 0 on convergence, 2 on non-convergence (outputs still written);
// input problems throw InvalidInput (mapped to exit 1 by the CLI).
int run(const RunConfig &config);

// Rod and section construction from the config (shared with `run`).
RodState make_rod_state(const RunConfig &config);
CrossSection make_section(const RunConfig &config);

// Serialization helpers. OBJ: "v x y z" / "f a b c" (1-based); film boundary
// vertices are followed by a "# tube i j u" comment line.
void write_film_obj(std::ostream &out, const FilmMesh &film);
FilmMesh read_film_obj(std::istream &in);
void write_tube_obj(std::ostream &out, const TubeMesh &tube);
void write_midline(std::ostream &out, const FramedCurve &curve);
std::vector<Vec3> read_midline(std::istream &in);
void write_trace_csv(std::ostream &out, const std::vector<TraceRow> &trace);

std::string format_g17(double x);

// temp file + rename in the target directory.
void atomic_write(const std::string &path, const std::string &content);

}  // namespace kp

#endif  // KP_CLI_IO_HH
