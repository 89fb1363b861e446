#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "kp/cli_io.hh"

using namespace kp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               fs::path("kp_test_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int &counter() {
        static int c = 0;
        return c;
    }
};

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path &p, const std::string &content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

RunConfig parse_text(const std::string &text) {
    std::istringstream in(text);
    return parse_config_stream(in, "test.ini");
}

}  // namespace

TEST_CASE("config parsing") {
    SUBCASE("minimal config with defaults") {
        const RunConfig c = parse_text("mode = rod-relax\n");
        CHECK(c.mode == "rod-relax");
        CHECK(c.n == 100);
        CHECK(c.length == 1.0);
        CHECK(c.rod_preset == "circle");
        CHECK(c.section_sides == 8);
        CHECK(c.material.sigma == 0.0);
        CHECK(c.auto_threading_loop);
    }
    SUBCASE("sections and values are picked up") {
        const RunConfig c = parse_text(
            "mode = kp-solve\n"
            "[rod]\nn = 24\nlength = 6.28\npreset = perturbed-circle\nperturbation = 0.02\n"
            "[section]\nsides = 6\nradius = 0.04\n"
            "[material]\nsigma = 0.01\na1 = 2.5\n"
            "[constraints]\nlink = 1\nglue_angle = 0.5\n"
            "[solve]\nseed = 7\nkp_outer_iters = 3\n"
            "[output]\ndir = /tmp/somewhere\n");
        CHECK(c.n == 24);
        CHECK(c.length == doctest::Approx(6.28));
        CHECK(c.rod_preset == "perturbed-circle");
        CHECK(c.perturbation == doctest::Approx(0.02));
        CHECK(c.section_sides == 6);
        CHECK(c.material.sigma == doctest::Approx(0.01));
        CHECK(c.material.a1 == doctest::Approx(2.5));
        CHECK(c.link == 1);
        CHECK(c.glue_angle == doctest::Approx(0.5));
        CHECK(c.solve.seed == 7);
        CHECK(c.solve.kp_outer_iters == 3);
        CHECK(c.out_dir == "/tmp/somewhere");
    }
    SUBCASE("negative sigma is rejected with the key named") {
        try {
            parse_text("mode = rod-relax\n[material]\nsigma = -1\n");
            FAIL("expected InvalidInput");
        } catch (const InvalidInput &e) {
            CHECK(std::string(e.what()).find("sigma") != std::string::npos);
        }
    }
    SUBCASE("unknown key is rejected with the key named") {
        try {
            parse_text("mode = rod-relax\n[rod]\nspeling = 3\n");
            FAIL("expected InvalidInput");
        } catch (const InvalidInput &e) {
            CHECK(std::string(e.what()).find("speling") != std::string::npos);
        }
    }
    SUBCASE("duplicate key is rejected") {
        CHECK_THROWS_AS(parse_text("mode = rod-relax\n[rod]\nn = 4\nn = 5\n"), InvalidInput);
    }
    SUBCASE("all problems are reported together") {
        try {
            parse_text("mode = bogus\n[rod]\nn = 1\n[material]\na1 = -2\n");
            FAIL("expected InvalidInput");
        } catch (const InvalidInput &e) {
            const std::string msg = e.what();
            CHECK(msg.find("mode") != std::string::npos);
            CHECK(msg.find("n") != std::string::npos);
            CHECK(msg.find("a1") != std::string::npos);
        }
    }
    SUBCASE("missing loop file is rejected") {
        CHECK_THROWS_AS(
            parse_text("mode = kp-solve\n[loops]\nfile = /nonexistent/loops.txt\n"),
            InvalidInput);
    }
    SUBCASE("kp-solve with no loops at all is rejected") {
        CHECK_THROWS_AS(parse_text("mode = kp-solve\n[loops]\nauto_threading = false\n"),
                        InvalidInput);
    }
}

TEST_CASE("g17 formatting round-trips doubles exactly") {
    for (double x : {0.0, 1.0, M_PI, 1.0 / 3.0, 6.02e23, -7.25e-12}) {
        CHECK(std::stod(format_g17(x)) == x);
    }
}

TEST_CASE("film OBJ round trip is exact") {
    FilmMesh film;
    film.vertices = {Vec3(0, 0, 0), Vec3(1.0 / 3.0, 0, M_PI), Vec3(0, 0.1, -2e-17)};
    film.boundary_tags = {std::nullopt, BoundaryTag{3, 1, 0.625}, BoundaryTag{0, 7, 1.0 / 7.0}};
    film.triangles = {{0, 1, 2}};

    std::ostringstream out;
    write_film_obj(out, film);
    std::istringstream in(out.str());
    const FilmMesh back = read_film_obj(in);

    REQUIRE(back.vertex_count() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK((back.vertices[i] - film.vertices[i]).norm() == 0.0);
        CHECK(back.boundary_tags[i].has_value() == film.boundary_tags[i].has_value());
        if (film.boundary_tags[i]) {
            CHECK(back.boundary_tags[i]->segment == film.boundary_tags[i]->segment);
            CHECK(back.boundary_tags[i]->angular == film.boundary_tags[i]->angular);
            CHECK(back.boundary_tags[i]->offset == film.boundary_tags[i]->offset);
        }
    }
    REQUIRE(back.triangles.size() == 1);
    CHECK(back.triangles[0] == film.triangles[0]);

    std::istringstream bad("v 1 2\n");
    CHECK_THROWS_AS(read_film_obj(bad), InvalidInput);
}

TEST_CASE("midline round trip is exact") {
    const FramedCurve curve = integrate_frame(RodState::circle(16, 1.0));
    std::ostringstream out;
    write_midline(out, curve);
    std::istringstream in(out.str());
    const std::vector<Vec3> back = read_midline(in);
    REQUIRE(back.size() == curve.nodes.size());
    for (size_t i = 0; i < back.size(); ++i) CHECK((back[i] - curve.nodes[i]).norm() == 0.0);
}

TEST_CASE("rod-relax run writes outputs and converges on the rest circle") {
    TempDir dir;
    RunConfig c = parse_text(
        "mode = rod-relax\n"
        "[rod]\nn = 24\n"
        "[material]\nkappa1_ref = 6.283185307179586\n");
    c.out_dir = dir.path.string();

    CHECK(run(c) == 0);
    for (const char *name : {"report.json", "trace.csv", "rod.obj", "midline.txt"})
        CHECK(fs::exists(dir.path / name));

    const json report = json::parse(slurp(dir.path / "report.json"));
    CHECK(report.at("mode") == "rod-relax");
    CHECK(report.at("converged") == true);
    CHECK(report.at("energy").at("e_shape").get<double>() <= 1e-8);

    const std::string trace = slurp(dir.path / "trace.csv");
    CHECK(trace.rfind("iteration,e_shape,e_gravity,e_film,e_total,r_x,r_t,r_d,min_margin\n",
                      0) == 0);
    int lines = 0;
    for (char ch : trace)
        if (ch == '\n') ++lines;
    CHECK(lines >= 2);  // header + at least the initial row
}

TEST_CASE("kp-solve with zero tension reports zero film energy") {
    TempDir dir;
    RunConfig c = parse_text(
        "mode = kp-solve\n"
        "[rod]\nn = 16\n"
        "[material]\nkappa1_ref = 6.283185307179586\n"
        "[solve]\nkp_outer_iters = 2\n");
    c.out_dir = dir.path.string();

    CHECK(run(c) == 0);
    const json report = json::parse(slurp(dir.path / "report.json"));
    CHECK(report.at("energy").at("e_film").get<double>() == 0.0);
    CHECK(fs::exists(dir.path / "film.obj"));
    CHECK(fs::exists(dir.path / "loops.txt"));
}

TEST_CASE("check mode flags the doubly covered circle and still exits 0") {
    TempDir dir;
    std::string rod_lines;
    const int n = 64;
    for (int i = 0; i < n; ++i) rod_lines += format_g17(4.0 * M_PI) + " 0 0\n";
    spit(dir.path / "rod.txt", rod_lines);

    RunConfig c = parse_text(
        "mode = check\n"
        "[rod]\npreset = circle\n");
    c.rod_preset = "file";
    c.rod_file = (dir.path / "rod.txt").string();
    c.n = n;
    c.out_dir = dir.path.string();

    CHECK(run(c) == 0);
    const json report = json::parse(slurp(dir.path / "report.json"));
    CHECK(report.at("checks").at("closure") == true);
    CHECK(report.at("checks").at("local_injectivity") == true);
    CHECK(report.at("checks").at("global_injectivity") == false);
    // The two covers coincide, so the midline proximity test fires as well.
    CHECK(report.at("checks").at("self_contact_free") == false);
    const double lhs = report.at("global_injectivity").at("lhs").get<double>();
    const double rhs = report.at("global_injectivity").at("rhs").get<double>();
    CHECK(lhs > rhs);
}

TEST_CASE("check mode passes the plain circle") {
    TempDir dir;
    RunConfig c = parse_text("mode = check\n[rod]\nn = 48\n");
    c.out_dir = dir.path.string();
    CHECK(run(c) == 0);
    const json report = json::parse(slurp(dir.path / "report.json"));
    for (const char *k :
         {"closure", "local_injectivity", "global_injectivity", "self_contact_free"})
        CHECK(report.at("checks").at(k) == true);
}

TEST_CASE("identical config and seed give byte-identical outputs") {
    auto one_run = [](const fs::path &out) {
        RunConfig c = parse_text(
            "mode = rod-relax\n"
            "[rod]\nn = 20\npreset = perturbed-circle\nperturbation = 0.03\n"
            "[solve]\nseed = 11\n");
        c.out_dir = out.string();
        return run(c);
    };
    TempDir a, b;
    CHECK(one_run(a.path) == one_run(b.path));
    CHECK(slurp(a.path / "trace.csv") == slurp(b.path / "trace.csv"));
    CHECK(slurp(a.path / "rod.obj") == slurp(b.path / "rod.obj"));
    // Reports agree except for the echoed output directory itself.
    json ra = json::parse(slurp(a.path / "report.json"));
    json rb = json::parse(slurp(b.path / "report.json"));
    ra["config"].erase("output");
    rb["config"].erase("output");
    CHECK(ra == rb);
}

TEST_CASE("lsc-diagnostic run produces a monotone area column") {
    TempDir dir;
    RunConfig c = parse_text(
        "mode = lsc-diagnostic\n"
        "[rod]\nn = 24\nlength = 6.283185307179586\n"
        "[section]\nradius = 0.05\n"
        "[lsc]\ncount = 3\n"
        "[solve]\nfilm_max_iters = 2000\n");
    c.out_dir = dir.path.string();

    CHECK(run(c) == 0);
    const json report = json::parse(slurp(dir.path / "report.json"));
    const auto &rows = report.at("lsc").at("rows");
    REQUIRE(rows.size() == 4);  // count circles + the limit circle
    for (size_t k = 0; k + 1 < rows.size(); ++k)
        CHECK(rows[k].at("film_area").get<double>() >=
              rows[k + 1].at("film_area").get<double>() - 1e-9);
    CHECK(report.at("lsc").at("tail_ok") == true);
}

TEST_CASE("run rejects an unknown mode") {
    RunConfig c;
    c.mode = "explode";
    CHECK_THROWS_AS(run(c), InvalidInput);
}
