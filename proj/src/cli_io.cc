#include "kp/cli_io.hh"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"

namespace kp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Entry {
    std::string value;
    int line = 0;
    bool used = false;
};

using RawConfig = std::map<std::string, std::vector<std::pair<std::string, Entry>>>;

std::string trim(const std::string &s) {
    const size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

RawConfig read_raw(std::istream &in, const std::string &origin, std::vector<std::string> &errors) {
    RawConfig raw;
    std::string line;
    std::string section;
    int ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                errors.push_back(origin + ":" + std::to_string(ln) + ": malformed section header");
                continue;
            }
            section = trim(line.substr(1, line.size() - 2));
            raw[section];
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            errors.push_back(origin + ":" + std::to_string(ln) + ": expected 'key = value'");
            continue;
        }
        raw[section].push_back({trim(line.substr(0, eq)), Entry{trim(line.substr(eq + 1)), ln}});
    }
    return raw;
}

// Single-valued lookup marking the entry as used; repeated keys are errors.
class SectionReader {
  public:
    SectionReader(RawConfig &raw, const std::string &name, const std::string &origin,
                  std::vector<std::string> &errors)
        : raw_(raw), name_(name), origin_(origin), errors_(errors) {}

    std::optional<std::string> get(const std::string &key) {
        auto it = raw_.find(name_);
        if (it == raw_.end()) return std::nullopt;
        std::optional<std::string> found;
        for (auto &[k, e] : it->second) {
            if (k != key) continue;
            if (found)
                errors_.push_back(origin_ + ":" + std::to_string(e.line) + ": duplicate key '" +
                                  key + "' in [" + name_ + "]");
            e.used = true;
            found = e.value;
        }
        return found;
    }

    std::vector<std::string> get_all(const std::string &key) {
        std::vector<std::string> out;
        auto it = raw_.find(name_);
        if (it == raw_.end()) return out;
        for (auto &[k, e] : it->second) {
            if (k != key) continue;
            e.used = true;
            out.push_back(e.value);
        }
        return out;
    }

    void number(const std::string &key, double &target) {
        if (auto v = get(key)) {
            try {
                size_t pos = 0;
                target = std::stod(*v, &pos);
                if (pos != v->size()) throw std::invalid_argument("");
            } catch (const std::exception &) {
                errors_.push_back(origin_ + ": [" + name_ + "] " + key + ": not a number: '" +
                                  *v + "'");
            }
        }
    }

    void integer(const std::string &key, int &target) {
        if (auto v = get(key)) {
            try {
                size_t pos = 0;
                target = std::stoi(*v, &pos);
                if (pos != v->size()) throw std::invalid_argument("");
            } catch (const std::exception &) {
                errors_.push_back(origin_ + ": [" + name_ + "] " + key + ": not an integer: '" +
                                  *v + "'");
            }
        }
    }

    void boolean(const std::string &key, bool &target) {
        if (auto v = get(key)) {
            if (*v == "true" || *v == "1")
                target = true;
            else if (*v == "false" || *v == "0")
                target = false;
            else
                errors_.push_back(origin_ + ": [" + name_ + "] " + key + ": not a boolean: '" +
                                  *v + "'");
        }
    }

    void text(const std::string &key, std::string &target) {
        if (auto v = get(key)) target = *v;
    }

  private:
    RawConfig &raw_;
    std::string name_;
    std::string origin_;
    std::vector<std::string> &errors_;
};

const std::vector<std::string> kModes = {"rod-relax", "film-relax", "kp-solve", "check",
                                         "lsc-diagnostic"};

bool known_mode(const std::string &m) {
    return std::find(kModes.begin(), kModes.end(), m) != kModes.end();
}

void require_file(const std::string &path, const std::string &key,
                  std::vector<std::string> &errors) {
    if (!path.empty() && !fs::exists(path))
        errors.push_back(key + ": file not found: '" + path + "'");
}

TubeMesh tube_for_output(const FramedCurve &curve, const CrossSection &section, double tight) {
    try {
        return build_tube(curve, section, tight);
    } catch (const InvalidInput &) {
        return build_tube(curve, section, 1e-2);
    }
}

std::vector<TestLoop> assemble_loops(const RunConfig &cfg, const FramedCurve &curve,
                                     const CrossSection &section) {
    std::vector<TestLoop> loops;
    for (const std::string &f : cfg.loop_files) {
        auto more = load_loops(f);
        loops.insert(loops.end(), more.begin(), more.end());
    }
    if (cfg.auto_threading_loop) loops.push_back(canonical_threading_loop(curve, section));
    return loops;
}

json residuals_json(const ClosureResiduals &r) {
    return json{{"position", r.position}, {"tangent", r.tangent}, {"director", r.director}};
}

json config_echo(const RunConfig &c) {
    json j;
    j["mode"] = c.mode;
    j["rod"] = {{"n", c.n},
                {"length", c.length},
                {"preset", c.rod_preset},
                {"file", c.rod_file},
                {"perturbation", c.perturbation}};
    j["section"] = {{"kind", c.section_kind},
                    {"sides", c.section_sides},
                    {"radius", c.section_radius},
                    {"file", c.section_file}};
    j["material"] = {{"a1", c.material.a1},
                     {"a2", c.material.a2},
                     {"a3", c.material.a3},
                     {"kappa1_ref", c.material.kappa1_ref},
                     {"kappa2_ref", c.material.kappa2_ref},
                     {"omega_ref", c.material.omega_ref},
                     {"rho", c.material.rho},
                     {"gravity", {c.material.gravity.x(), c.material.gravity.y(),
                                  c.material.gravity.z()}},
                     {"sigma", c.material.sigma}};
    j["constraints"] = {{"glue_angle", c.glue_angle},
                        {"link", c.link},
                        {"template_file", c.template_file}};
    j["loops"] = {{"files", c.loop_files}, {"auto_threading", c.auto_threading_loop}};
    j["solve"] = {{"mu_closure", c.solve.mu_closure},
                  {"mu_frame", c.solve.mu_frame},
                  {"mu_glue", c.solve.mu_glue},
                  {"outer_iters", c.solve.outer_iters},
                  {"kp_outer_iters", c.solve.kp_outer_iters},
                  {"fd_step", c.solve.fd_step},
                  {"grad_tol", c.solve.grad_tol},
                  {"closure_tol_rel", c.solve.closure_tol_rel},
                  {"inner_fd_iters", c.solve.inner_fd_iters},
                  {"film_max_iters", c.solve.film_max_iters},
                  {"film_tol_rel", c.solve.film_tol_rel},
                  {"contact_stiffness", c.solve.contact_stiffness},
                  {"barrier_beta", c.solve.barrier_beta},
                  {"max_penalty_phases", c.solve.max_penalty_phases},
                  {"seed", c.solve.seed}};
    j["check"] = {{"voxel_h", c.voxel_h}};
    j["lsc"] = {{"count", c.lsc_count}};
    j["output"] = {{"dir", c.out_dir}};
    return j;
}

void write_report(const fs::path &dir, const json &report) {
    atomic_write((dir / "report.json").string(), report.dump(2) + "\n");
}

std::string stream_to_string(const std::function<void(std::ostream &)> &writer) {
    std::ostringstream ss;
    writer(ss);
    return ss.str();
}

}  // namespace

std::string format_g17(double x) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

void atomic_write(const std::string &path, const std::string &content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InvalidInput("atomic_write: cannot open '" + tmp + "'");
        out << content;
        if (!out) throw InvalidInput("atomic_write: short write to '" + tmp + "'");
    }
    fs::rename(tmp, path);
}

RunConfig parse_config_stream(std::istream &in, const std::string &origin) {
    std::vector<std::string> errors;
    RawConfig raw = read_raw(in, origin, errors);
    RunConfig c;

    {
        SectionReader g(raw, "", origin, errors);
        g.text("mode", c.mode);
    }
    {
        SectionReader s(raw, "rod", origin, errors);
        s.integer("n", c.n);
        s.number("length", c.length);
        s.text("preset", c.rod_preset);
        s.text("file", c.rod_file);
        s.number("perturbation", c.perturbation);
    }
    {
        SectionReader s(raw, "section", origin, errors);
        s.text("kind", c.section_kind);
        s.integer("sides", c.section_sides);
        s.number("radius", c.section_radius);
        s.text("file", c.section_file);
    }
    {
        SectionReader s(raw, "material", origin, errors);
        s.number("a1", c.material.a1);
        s.number("a2", c.material.a2);
        s.number("a3", c.material.a3);
        s.number("kappa1_ref", c.material.kappa1_ref);
        s.number("kappa2_ref", c.material.kappa2_ref);
        s.number("omega_ref", c.material.omega_ref);
        s.number("rho", c.material.rho);
        double gx = c.material.gravity.x(), gy = c.material.gravity.y(),
               gz = c.material.gravity.z();
        s.number("gravity_x", gx);
        s.number("gravity_y", gy);
        s.number("gravity_z", gz);
        c.material.gravity = Vec3(gx, gy, gz);
        s.number("sigma", c.material.sigma);
    }
    {
        SectionReader s(raw, "constraints", origin, errors);
        s.number("glue_angle", c.glue_angle);
        s.integer("link", c.link);
        s.text("template_file", c.template_file);
    }
    {
        SectionReader s(raw, "loops", origin, errors);
        c.loop_files = s.get_all("file");
        s.boolean("auto_threading", c.auto_threading_loop);
    }
    {
        SectionReader s(raw, "solve", origin, errors);
        s.number("mu_closure", c.solve.mu_closure);
        s.number("mu_frame", c.solve.mu_frame);
        s.number("mu_glue", c.solve.mu_glue);
        s.integer("outer_iters", c.solve.outer_iters);
        s.integer("kp_outer_iters", c.solve.kp_outer_iters);
        s.number("fd_step", c.solve.fd_step);
        s.number("grad_tol", c.solve.grad_tol);
        s.number("closure_tol_rel", c.solve.closure_tol_rel);
        s.integer("inner_fd_iters", c.solve.inner_fd_iters);
        s.integer("film_max_iters", c.solve.film_max_iters);
        s.number("film_tol_rel", c.solve.film_tol_rel);
        s.number("contact_stiffness", c.solve.contact_stiffness);
        s.number("barrier_beta", c.solve.barrier_beta);
        s.integer("max_penalty_phases", c.solve.max_penalty_phases);
        int seed = static_cast<int>(c.solve.seed);
        s.integer("seed", seed);
        if (seed < 0)
            errors.push_back(origin + ": [solve] seed: must be nonnegative");
        else
            c.solve.seed = static_cast<unsigned>(seed);
    }
    {
        SectionReader s(raw, "check", origin, errors);
        s.number("voxel_h", c.voxel_h);
    }
    {
        SectionReader s(raw, "lsc", origin, errors);
        s.integer("count", c.lsc_count);
    }
    {
        SectionReader s(raw, "output", origin, errors);
        s.text("dir", c.out_dir);
    }

    // Everything not consumed above is a typo (strict mode).
    for (const auto &[sec, entries] : raw)
        for (const auto &[key, e] : entries)
            if (!e.used)
                errors.push_back(origin + ":" + std::to_string(e.line) + ": unknown key '" + key +
                                 "' in [" + sec + "]");

    if (!c.mode.empty() && !known_mode(c.mode))
        errors.push_back("mode: unrecognized '" + c.mode + "'");
    if (c.n < 3) errors.push_back("[rod] n: need at least 3 segments");
    if (!(c.length > 0.0)) errors.push_back("[rod] length: must be positive");
    if (c.rod_preset != "circle" && c.rod_preset != "perturbed-circle" && c.rod_preset != "file")
        errors.push_back("[rod] preset: unrecognized '" + c.rod_preset + "'");
    if (c.rod_preset == "file" && c.rod_file.empty())
        errors.push_back("[rod] file: required for preset 'file'");
    if (!(c.perturbation >= 0.0)) errors.push_back("[rod] perturbation: must be nonnegative");
    if (c.section_kind != "regular" && c.section_kind != "file")
        errors.push_back("[section] kind: unrecognized '" + c.section_kind + "'");
    if (c.section_kind == "regular") {
        if (c.section_sides < 3) errors.push_back("[section] sides: need at least 3");
        if (!(c.section_radius > 0.0)) errors.push_back("[section] radius: must be positive");
    } else if (c.section_file.empty()) {
        errors.push_back("[section] file: required for kind 'file'");
    }
    if (!(c.material.a1 > 0.0)) errors.push_back("[material] a1: must be positive");
    if (!(c.material.a2 > 0.0)) errors.push_back("[material] a2: must be positive");
    if (!(c.material.a3 > 0.0)) errors.push_back("[material] a3: must be positive");
    if (!(c.material.rho >= 0.0)) errors.push_back("[material] rho: must be nonnegative");
    if (!(c.material.sigma >= 0.0)) errors.push_back("[material] sigma: must be nonnegative");
    if (!(c.voxel_h >= 0.0)) errors.push_back("[check] voxel_h: must be nonnegative");
    if (c.lsc_count < 1 || c.lsc_count > 50) errors.push_back("[lsc] count: expected 1..50");
    require_file(c.rod_file, "[rod] file", errors);
    require_file(c.section_file, "[section] file", errors);
    require_file(c.template_file, "[constraints] template_file", errors);
    for (const std::string &f : c.loop_files) require_file(f, "[loops] file", errors);
    if (c.mode == "kp-solve" && c.loop_files.empty() && !c.auto_threading_loop)
        errors.push_back("kp-solve needs at least one loop (file or auto_threading)");

    if (!errors.empty()) {
        std::string msg = "config errors:";
        for (const std::string &e : errors) msg += "\n  " + e;
        throw InvalidInput(msg);
    }
    return c;
}

RunConfig parse_config(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("parse_config: cannot open '" + path + "'");
    return parse_config_stream(in, path);
}

CrossSection make_section(const RunConfig &config) {
    if (config.section_kind == "regular")
        return CrossSection::regular_polygon(config.section_sides, config.section_radius);
    std::ifstream in(config.section_file);
    if (!in) throw InvalidInput("make_section: cannot open '" + config.section_file + "'");
    std::vector<Vec2> poly;
    std::string line;
    while (std::getline(in, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        double z1, z2;
        if (ls >> z1 >> z2) poly.emplace_back(z1, z2);
    }
    return CrossSection::from_polygon(std::move(poly));
}

RodState make_rod_state(const RunConfig &config) {
    if (config.rod_preset == "file") {
        std::ifstream in(config.rod_file);
        if (!in) throw InvalidInput("make_rod_state: cannot open '" + config.rod_file + "'");
        RodState s;
        s.densities.length = config.length;
        std::string line;
        while (std::getline(in, line)) {
            const size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::istringstream ls(line);
            double k1, k2, w;
            if (ls >> k1 >> k2 >> w) {
                s.densities.kappa1.push_back(k1);
                s.densities.kappa2.push_back(k2);
                s.densities.omega.push_back(w);
            }
        }
        s.validate();
        return s;
    }
    RodState s = RodState::circle(config.n, config.length);
    if (config.rod_preset == "perturbed-circle") {
        std::mt19937 rng(config.solve.seed);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        const double amp = config.perturbation * 2.0 * M_PI / config.length;
        for (int i = 0; i < config.n; ++i) {
            s.densities.kappa1[i] += amp * u(rng);
            s.densities.kappa2[i] += amp * u(rng);
            s.densities.omega[i] += amp * u(rng);
        }
    }
    return s;
}

void write_tube_obj(std::ostream &out, const TubeMesh &tube) {
    out << "# tube rings " << tube.rings << " ring_size " << tube.ring_size << "\n";
    for (const Vec3 &v : tube.vertices)
        out << "v " << format_g17(v.x()) << " " << format_g17(v.y()) << " " << format_g17(v.z())
            << "\n";
    for (const Triangle &t : tube.triangles)
        out << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
}

void write_film_obj(std::ostream &out, const FilmMesh &film) {
    for (int i = 0; i < film.vertex_count(); ++i) {
        const Vec3 &v = film.vertices[i];
        out << "v " << format_g17(v.x()) << " " << format_g17(v.y()) << " " << format_g17(v.z())
            << "\n";
        if (film.boundary_tags[i]) {
            const BoundaryTag &tag = *film.boundary_tags[i];
            out << "# tube " << tag.segment << " " << tag.angular << " "
                << format_g17(tag.offset) << "\n";
        }
    }
    for (const Triangle &t : film.triangles)
        out << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
}

FilmMesh read_film_obj(std::istream &in) {
    FilmMesh film;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string head;
        if (!(ls >> head)) continue;
        if (head == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z)) throw InvalidInput("read_film_obj: bad vertex: " + line);
            film.vertices.emplace_back(x, y, z);
            film.boundary_tags.push_back(std::nullopt);
        } else if (head == "#") {
            std::string word;
            if (ls >> word && word == "tube") {
                if (film.vertices.empty())
                    throw InvalidInput("read_film_obj: tag before any vertex");
                BoundaryTag tag;
                if (!(ls >> tag.segment >> tag.angular >> tag.offset))
                    throw InvalidInput("read_film_obj: bad tube tag: " + line);
                film.boundary_tags.back() = tag;
            }
        } else if (head == "f") {
            int a, b, c;
            if (!(ls >> a >> b >> c)) throw InvalidInput("read_film_obj: bad face: " + line);
            film.triangles.push_back({a - 1, b - 1, c - 1});
        }
    }
    return film;
}

void write_midline(std::ostream &out, const FramedCurve &curve) {
    for (const Vec3 &p : curve.nodes)
        out << format_g17(p.x()) << " " << format_g17(p.y()) << " " << format_g17(p.z()) << "\n";
}

std::vector<Vec3> read_midline(std::istream &in) {
    std::vector<Vec3> pts;
    std::string line;
    while (std::getline(in, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        double x, y, z;
        if (ls >> x >> y >> z) pts.emplace_back(x, y, z);
    }
    return pts;
}

void write_trace_csv(std::ostream &out, const std::vector<TraceRow> &trace) {
    out << "iteration,e_shape,e_gravity,e_film,e_total,r_x,r_t,r_d,min_margin\n";
    for (const TraceRow &r : trace) {
        out << r.iteration << "," << format_g17(r.energy.shape) << ","
            << format_g17(r.energy.gravity) << "," << format_g17(r.energy.film) << ","
            << format_g17(r.energy.total) << "," << format_g17(r.residuals.position) << ","
            << format_g17(r.residuals.tangent) << "," << format_g17(r.residuals.director) << ","
            << format_g17(r.min_margin) << "\n";
    }
}

int run(const RunConfig &config) {
    if (!known_mode(config.mode))
        throw InvalidInput("run: unrecognized mode '" + config.mode + "'");

    const fs::path dir = config.out_dir;
    fs::create_directories(dir);

    const CrossSection section = make_section(config);
    const RodState init = make_rod_state(config);
    const MaterialParams &mat = config.material;

    ConstraintSpec cons;
    cons.clamp = init.clamp;
    cons.link.glue_angle = config.glue_angle;
    cons.link.link_number = config.link;
    if (!config.template_file.empty()) {
        std::ifstream in(config.template_file);
        cons.knot_template = read_midline(in);
    }

    json report;
    report["mode"] = config.mode;
    report["version"] = "1.0.0";
    report["config"] = config_echo(config);

    bool converged = true;
    std::vector<TraceRow> trace;
    RodState final_state = init;
    std::optional<FilmMesh> film;
    std::vector<TestLoop> loops;

    if (config.mode == "rod-relax") {
        loops = assemble_loops(config, integrate_frame(init), section);
        auto [state, rep] = minimize_loop(init, section, mat, cons, config.solve);
        final_state = state;
        trace = rep.trace;
        converged = rep.converged;
        report["solver"] = {{"converged", rep.converged},
                            {"message", rep.message},
                            {"iterations", rep.outer_iterations},
                            {"link", rep.link_number},
                            {"twist", rep.twist},
                            {"writhe", rep.writhe_value}};
    } else if (config.mode == "film-relax") {
        const FramedCurve curve = integrate_frame(init);
        const TubeMesh tube = tube_for_output(curve, section, config.solve.closure_tol_rel);
        loops = assemble_loops(config, curve, section);
        RelaxOptions ro;
        ro.max_iters = config.solve.film_max_iters;
        ro.tol_rel = config.solve.film_tol_rel;
        auto [relaxed, rep] = relax_film(init_film(curve, tube), tube, loops, ro);
        film = std::move(relaxed);
        converged = rep.converged;

        const double e_sh = shape_energy(init, mat);
        const double e_g = gravity_energy(curve, section, mat);
        const ClosureResiduals res = closure_residuals(curve, init.clamp, config.glue_angle);
        const auto margins = local_injectivity_margin(init, section);
        const double mm = *std::min_element(margins.begin(), margins.end());
        for (size_t k = 0; k < rep.area_trace.size(); ++k) {
            TraceRow row;
            row.iteration = static_cast<int>(k);
            row.energy.shape = e_sh;
            row.energy.gravity = e_g;
            row.energy.film = 2.0 * mat.sigma * rep.area_trace[k];
            row.energy.total = e_sh + e_g + row.energy.film;
            row.residuals = res;
            row.min_margin = mm;
            trace.push_back(row);
        }
        report["film"] = {{"final_area", rep.final_area},
                          {"iterations", rep.iterations},
                          {"converged", rep.converged},
                          {"message", rep.message},
                          {"vertices", rep.vertex_count},
                          {"triangles", rep.triangle_count},
                          {"min_angle_deg", rep.min_angle}};
    } else if (config.mode == "kp-solve") {
        loops = assemble_loops(config, integrate_frame(init), section);
        KPSolution sol = minimize_kp(init, section, mat, cons, loops, config.solve);
        final_state = sol.state;
        film = std::move(sol.film);
        trace = sol.report.trace;
        converged = sol.report.converged;
        report["solver"] = {{"converged", sol.report.converged},
                            {"message", sol.report.message},
                            {"iterations", sol.report.outer_iterations},
                            {"link", sol.report.link_number},
                            {"twist", sol.report.twist},
                            {"writhe", sol.report.writhe_value}};
        report["film"] = {{"final_area", sol.report.film_report.final_area},
                          {"converged", sol.report.film_report.converged},
                          {"vertices", sol.report.film_report.vertex_count},
                          {"triangles", sol.report.film_report.triangle_count}};
    } else if (config.mode == "check") {
        const FramedCurve curve = integrate_frame(init);
        loops = assemble_loops(config, curve, section);
        const ClosureResiduals res = closure_residuals(curve, init.clamp, config.glue_angle);
        const auto margins = local_injectivity_margin(init, section);
        const double mm = *std::min_element(margins.begin(), margins.end());
        const double voxel = config.voxel_h > 0.0 ? config.voxel_h : section.bound / 4.0;
        const GlobalInjectivityResult gi = global_injectivity_check(init, section, voxel);
        const double contact = self_contact_penalty(curve, section, 1.0);

        TraceRow row;
        row.energy.shape = shape_energy(init, mat);
        row.energy.gravity = gravity_energy(curve, section, mat);
        row.energy.total = row.energy.shape + row.energy.gravity;
        row.residuals = res;
        row.min_margin = mm;
        trace.push_back(row);

        json checks;
        checks["closure"] = res.position <= config.solve.closure_tol_rel * init.densities.length;
        checks["local_injectivity"] = mm >= 0.0;
        checks["global_injectivity"] = gi.ok;
        checks["self_contact_free"] = contact == 0.0;
        report["checks"] = checks;
        report["global_injectivity"] = {{"lhs", gi.lhs},
                                        {"rhs", gi.rhs},
                                        {"voxel_h", voxel},
                                        {"voxel_tol", gi.voxel_tol}};
        report["min_margin"] = mm;
        report["residuals"] = residuals_json(res);
        report["twist"] = total_twist(init);
    } else {  // lsc-diagnostic
        const double r = config.length / (2.0 * M_PI);
        std::vector<RodState> states;
        for (int k = 1; k <= config.lsc_count; ++k)
            states.push_back(
                RodState::circle(config.n, 2.0 * M_PI * r * (1.0 + 1.0 / k), init.clamp));
        states.push_back(RodState::circle(config.n, config.length, init.clamp));
        final_state = states.back();
        loops = assemble_loops(config, integrate_frame(states.back()), section);
        const std::vector<LscRow> rows = lsc_diagnostic(states, section, loops, config.solve);

        json jrows = json::array();
        for (size_t k = 0; k < rows.size(); ++k) {
            jrows.push_back({{"k", k + 1},
                             {"tube_hausdorff", rows[k].tube_hausdorff},
                             {"film_area", rows[k].film_area},
                             {"loop_neighborhood_area", rows[k].loop_neighborhood_area}});
            TraceRow row;
            row.iteration = static_cast<int>(k + 1);
            row.energy.film = rows[k].film_area;
            row.energy.total = rows[k].film_area;
            row.residuals.position = rows[k].tube_hausdorff;
            trace.push_back(row);
        }
        const double alpha_limit = rows.back().film_area;
        bool tail_ok = true;
        for (const LscRow &rw : rows)
            if (rw.film_area < alpha_limit - 1e-3 * alpha_limit) tail_ok = false;
        report["lsc"] = {{"rows", jrows}, {"tail_ok", tail_ok}};
    }

    // Final-state summary common to all modes.
    {
        const FramedCurve curve = integrate_frame(final_state);
        const ClosureResiduals res =
            closure_residuals(curve, final_state.clamp, config.glue_angle);
        const EnergyBreakdown eb = [&] {
            EnergyBreakdown e;
            e.shape = shape_energy(final_state, mat);
            e.gravity = gravity_energy(curve, section, mat);
            e.film = film ? film_energy(*film, mat.sigma) : 0.0;
            e.total = e.shape + e.gravity + e.film;
            const auto margins = local_injectivity_margin(final_state, section);
            e.ni_feasible = *std::min_element(margins.begin(), margins.end()) >= 0.0;
            return e;
        }();
        report["energy"] = {{"e_shape", eb.shape},
                            {"e_gravity", eb.gravity},
                            {"e_film", eb.film},
                            {"e_total", eb.total},
                            {"ni_feasible", eb.ni_feasible}};
        report["final_residuals"] = residuals_json(res);
        report["converged"] = converged;

        const TubeMesh tube = tube_for_output(curve, section, config.solve.closure_tol_rel);
        atomic_write((dir / "rod.obj").string(),
                     stream_to_string([&](std::ostream &o) { write_tube_obj(o, tube); }));
        atomic_write((dir / "midline.txt").string(),
                     stream_to_string([&](std::ostream &o) { write_midline(o, curve); }));
    }
    if (film)
        atomic_write((dir / "film.obj").string(),
                     stream_to_string([&](std::ostream &o) { write_film_obj(o, *film); }));
    atomic_write((dir / "trace.csv").string(),
                 stream_to_string([&](std::ostream &o) { write_trace_csv(o, trace); }));
    atomic_write((dir / "loops.txt").string(),
                 stream_to_string([&](std::ostream &o) { write_loops(o, loops); }));
    write_report(dir, report);

    return converged ? 0 : 2;
}

}  // namespace kp
