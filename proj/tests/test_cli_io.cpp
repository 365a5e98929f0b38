#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixtures.hpp"
#include "mfgc/cli_io.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace mfgc;
namespace fs = std::filesystem;
using fixtures::kPi;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mfgc_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << bytes;
}

struct Run {
    std::ostringstream out, err;
    CommandStreams io{out, err, false};
};

RunConfig config_in(const fs::path& dir) {
    RunConfig c;
    c.output.directory = dir.string();
    return c;
}

// One reference solve shared by the command tests.
struct Solved {
    fs::path dir = scratch("reference");
    RunConfig config = config_in(dir);
    int code = 0;
    std::string out, err;
    Solved() {
        Run r;
        code = cmd_solve(config, r.io);
        out = r.out.str();
        err = r.err.str();
    }
};

const Solved& solved() {
    static const Solved s;
    return s;
}

}  // namespace

TEST_CASE("fourier specs") {
    const auto s = FourierSpec::parse("1 + 0.2*cos(1) - 0.1*sin(2,1) + cos(3)");
    REQUIRE(s.terms.size() == 4);
    CHECK(s.terms[2].coefficient == -0.1);
    CHECK(s.terms[2].kind == FourierSpec::Kind::Sin);
    CHECK(s.terms[2].k == std::array<int, 2>{2, 1});
    CHECK(s.terms[3].coefficient == 1.0);
    CHECK(FourierSpec::parse(s.to_string()) == s);
    CHECK(FourierSpec::parse("-1e-3*cos(4)").terms[0].coefficient == -1e-3);
    CHECK(FourierSpec::parse("zero").preset == "zero");

    const PeriodicGrid g(1, 16);
    const Field f = FourierSpec::parse("1 + 0.2*cos(1)").sample(g);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(f[i] == doctest::Approx(1 + 0.2 * std::cos(2 * kPi * i / 16.0)));
    CHECK(FourierSpec::parse("uniform").sample(g).values.minCoeff() == 1.0);
    CHECK(FourierSpec::parse("zero").sample(g).values.cwiseAbs().maxCoeff() == 0.0);
    const Field g2 = FourierSpec::parse("sin(1,1)").sample(PeriodicGrid(2, 8));
    CHECK(g2[1 * 8 + 1] == doctest::Approx(std::sin(2 * kPi * 0.25)));

    for (const char* bad : {"", "1 +", "cos(1", "2*tan(1)", "1 1", "cos(a)"})
        CHECK_THROWS_AS(FourierSpec::parse(bad), std::invalid_argument);
}

TEST_CASE("config round trip is lossless") {
    const RunConfig d;
    CHECK(write_config(parse_config(write_config(d))) == write_config(d));

    RunConfig c;
    c.problem.dim = 2;
    c.problem.points = 16;
    c.problem.horizon = 1.0 / 3.0;
    c.problem.gamma = 1.2345678901234567;
    c.problem.drift_y = FourierSpec::parse("1e-300*sin(0,2) - 0.7*cos(1,1)");
    c.problem.coupling = "power";
    c.problem.coupling_parameter = 2.5;
    c.solver.adaptive = false;
    c.solver.dlambda_min = 0.1;
    c.solver.dlambda_init = 0.1;
    c.solver.lambda_target = 0.3;
    c.solver.linear.method = LinearMethod::Krylov;
    c.solver.linear.memory_budget = 123456789012ull;
    c.output.formats = {"json"};
    c.check.refine = false;
    c.mc.sde.seed = 18446744073709551615ull;
    c.mc.sde.paths = 7;
    c.legendre.a = 0.1;
    const RunConfig back = parse_config(write_config(c));
    CHECK(write_config(back) == write_config(c));
    CHECK(back.problem.horizon == c.problem.horizon);
    CHECK(back.problem.gamma == c.problem.gamma);
    CHECK(back.problem.drift_y == c.problem.drift_y);
    CHECK(back.problem.drift_y.terms[0].coefficient == 1e-300);
    CHECK_FALSE(back.solver.adaptive);
    CHECK(back.solver.lambda_target == 0.3);
    CHECK(back.solver.linear.method == LinearMethod::Krylov);
    CHECK(back.solver.linear.memory_budget == 123456789012ull);
    CHECK(back.mc.sde.seed == c.mc.sde.seed);
    CHECK(back.output.formats == c.output.formats);
    CHECK_FALSE(back.check.refine);

    // Missing keys keep their defaults.
    const RunConfig partial = parse_config("[problem]\nalpha = 0.25\n");
    CHECK(partial.problem.alpha == 0.25);
    CHECK(partial.problem.points == 64);
}

TEST_CASE("config errors name the field") {
    auto message = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message("[problem]\nalpha = -1\n").rfind("problem.alpha:", 0) == 0);
    CHECK(message("[problem]\ngamma = 2\n").rfind("problem.gamma:", 0) == 0);
    CHECK(message("[problem]\npoints = 48\n").rfind("problem.points:", 0) == 0);
    CHECK(message("[problem]\nalpah = 1\n").rfind("problem.alpah: unknown key", 0) == 0);
    CHECK(message("[problem]\nsteps = 1.5\n").rfind("problem.steps:", 0) == 0);
    CHECK(message("[problem]\ndrift_y = cos(1)\n").rfind("problem.drift_y:", 0) == 0);
    CHECK(message("[problem]\nterminal = cos(1,1)\n").rfind("problem.terminal:", 0) == 0);
    CHECK(message("[problem]\nterminal = cos(\n").rfind("problem.terminal:", 0) == 0);
    CHECK(message("[solver]\ndlambda_min = 0.9\n").rfind("solver:", 0) == 0);
    CHECK(message("[solver]\nschedule = sometimes\n").rfind("solver.schedule:", 0) == 0);
    CHECK(message("[mc]\npaths = 0\n").rfind("mc:", 0) == 0);
    CHECK(message("[output]\nformats = field,pdf\n").rfind("output.formats:", 0) == 0);
    CHECK(message("[legendre]\ngamma_prime = 1.5\n").rfind("legendre.gamma_prime:", 0) == 0);
    CHECK(message("alpha = 1\n").find("section") != std::string::npos);
    CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), ConfigError);

    ProblemBlock b;
    b.initial_density = FourierSpec::parse("0.5 + cos(1)");
    CHECK_THROWS_WITH_AS(build_problem(b), doctest::Contains("initial_density"), ConfigError);
}

TEST_CASE("default problem block is the reference problem") {
    const MFGProblem a = build_problem(ProblemBlock{});
    const MFGProblem b = fixtures::reference_problem();
    CHECK(a.grid == b.grid);
    CHECK(a.time == b.time);
    CHECK(a.alpha == b.alpha);
    CHECK((a.initial_density.values - b.initial_density.values).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((a.terminal.values - b.terminal.values).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((a.drift[0].values - b.drift[0].values).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((a.potential.spatial_part().values - b.potential.spatial_part().values).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(a.hamiltonian.base() == b.hamiltonian.base());
}

TEST_CASE("field files round trip bit-exactly") {
    const fs::path dir = scratch("fields");
    std::mt19937_64 rng(9);
    for (int dim : {1, 2}) {
        const PeriodicGrid g(dim, 8);
        SpaceTimeField f(g, TimeGrid(0.1, 5));
        for (auto& s : f.slices) s = fixtures::smooth_random(g, rng, 1.0);
        f[2][3] = -0.0;
        f[4][1] = 1e-310;
        const fs::path p = dir / ("f" + std::to_string(dim) + ".mfgf");
        write_field_file(p, "density", f);
        const FieldFile back = read_field_file(p);
        CHECK(back.name == "density");
        CHECK(back.field.grid() == g);
        CHECK(back.field.time == f.time);
        for (int n = 0; n <= 5; ++n)
            CHECK(std::memcmp(back.field[n].values.data(), f[n].values.data(), g.size() * sizeof(double)) == 0);
        CHECK(fs::file_size(p) == 80 + 6 * g.size() * 8 + 8);
    }
    for (const auto& e : fs::directory_iterator(dir)) CHECK(e.path().extension() == ".mfgf");

    const std::string good = slurp(dir / "f1.mfgf");
    auto rejects = [&](std::string bytes, const char* what) {
        spit(dir / "bad.mfgf", bytes);
        CHECK_THROWS_WITH_AS(read_field_file(dir / "bad.mfgf"), doctest::Contains(what), ConfigError);
    };
    std::string flipped = good;
    flipped[100] ^= 0x10;
    rejects(flipped, "payload checksum");
    std::string header = good;
    header[20] ^= 0x01;
    rejects(header, "header checksum");
    rejects(good.substr(0, good.size() - 8), "payload has");
    rejects(good.substr(0, 40), "truncated");
    std::string swapped = good;
    std::swap(swapped[12], swapped[15]);
    std::swap(swapped[13], swapped[14]);
    rejects(swapped, "endianness");
    rejects("not a field file at all, just some text padding it out past eighty bytes.........................", "not a field file");
    CHECK_THROWS_WITH_AS(read_field_file(dir / "missing.mfgf"), doctest::Contains("cannot open"), ConfigError);
}

TEST_CASE("solve on the reference config") {
    const auto& s = solved();
    INFO(s.out << s.err);
    CHECK(s.code == kExitOk);
    for (const char* f : {"u.mfgf", "m.mfgf", "u.txt", "m.txt", "path.log", "report.txt", "report.json"})
        CHECK(fs::exists(s.dir / f));
    for (const auto& e : fs::directory_iterator(s.dir)) CHECK(e.path().string().find(".tmp-") == std::string::npos);

    // One parseable record per accepted state, then a status line.
    std::istringstream log(slurp(s.dir / "path.log"));
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(log, line)) lines.push_back(line);
    REQUIRE(lines.size() >= 3);
    CHECK(lines.front().rfind("lambda=1 ", 0) == 0);
    CHECK(lines[lines.size() - 2].rfind("lambda=0 ", 0) == 0);
    CHECK(lines.back().rfind("status=completed last_lambda=0 ", 0) == 0);

    const auto report = nlohmann::json::parse(slurp(s.dir / "report.json"));
    CHECK(report["all_passed"] == true);
    CHECK(report["lambda"] == 0.0);
    CHECK(report["residual"].get<double>() <= 1e-8);
    bool has_refinement = false;
    for (const auto& r : report["records"]) has_refinement |= r["name"] == "refinement";
    CHECK(has_refinement);
    CHECK(slurp(s.dir / "report.txt").find("all_passed=true") != std::string::npos);

    const FieldFile m = read_field_file(s.dir / "m.mfgf");
    CHECK(m.name == "m");
    for (const auto& slice : m.field.slices) CHECK(std::abs(integrate(slice) - 1.0) <= 1e-10);
}

TEST_CASE("check on stored solutions") {
    const auto& s = solved();
    RunConfig c = s.config;
    c.output.directory = scratch("check").string();
    {
        Run r;
        CHECK(cmd_check(s.dir / "u.mfgf", s.dir / "m.mfgf", c, r.io) == kExitOk);
        CHECK(r.out.str().find("all_passed=true") != std::string::npos);
        CHECK(fs::exists(fs::path(c.output.directory) / "check_report.json"));
    }
    {
        // A density with 1% extra mass: the mass record fails (and so does the residual).
        FieldFile m = read_field_file(s.dir / "m.mfgf");
        for (auto& slice : m.field.slices) slice *= 1.01;
        const fs::path bad = fs::path(c.output.directory) / "m_bad.mfgf";
        write_field_file(bad, "m", m.field);
        RunConfig quick = c;
        quick.check.refine = false;
        Run r;
        CHECK(cmd_check(s.dir / "u.mfgf", bad, quick, r.io) == kExitCheckFailed);
        CHECK(r.out.str().find("mass.passed=false") != std::string::npos);
        CHECK(r.err.str().find("check failed: mass") != std::string::npos);
    }
    {
        Run r;
        CHECK(cmd_check(s.dir / "u.mfgf", s.dir / "nope.mfgf", c, r.io) == kExitUsage);
        CHECK(r.err.str().find("nope.mfgf") != std::string::npos);
    }
    {
        RunConfig other = c;
        other.problem.points = 32;
        Run r;
        CHECK(cmd_check(s.dir / "u.mfgf", s.dir / "m.mfgf", other, r.io) == kExitUsage);
        CHECK(r.err.str().find("grid mismatch") != std::string::npos);
    }
}

TEST_CASE("long horizon exits with a solver failure") {
    RunConfig c = config_in(scratch("long"));
    c.problem.horizon *= 100.0;
    c.check.refine = false;
    Run r;
    CHECK(cmd_solve(c, r.io) == kExitSolverFailed);
    const std::string log = slurp(fs::path(c.output.directory) / "path.log");
    CHECK(log.find("last_lambda=1 ") != std::string::npos);
    CHECK(r.err.str().find("last good lambda=1") != std::string::npos);
    CHECK_FALSE(fs::exists(fs::path(c.output.directory) / "u.mfgf"));
}

TEST_CASE("malformed config exits with a usage error") {
    RunConfig c = config_in(scratch("bad"));
    c.problem.alpha = -0.5;
    Run r;
    CHECK(cmd_solve(c, r.io) == kExitUsage);
    CHECK(r.err.str().find("problem.alpha") != std::string::npos);
}

TEST_CASE("monte carlo on lambda = 1 artifacts") {
    RunConfig c = config_in(scratch("top"));
    c.problem.steps = 16;
    c.solver.lambda_target = 1.0;
    c.check.refine = false;
    Run solve;
    cmd_solve(c, solve.io);
    const fs::path dir = c.output.directory;
    REQUIRE(fs::exists(dir / "m.mfgf"));
    Run r;
    CHECK(cmd_mc(dir / "u.mfgf", dir / "m.mfgf", c, r.io) == kExitOk);
    CHECK(r.out.str().find("passed=true") != std::string::npos);
    CHECK(fs::exists(dir / "mc.txt"));
    CHECK(fs::exists(dir / "mc_density.mfgf"));

    Run missing;
    CHECK(cmd_mc(dir / "u.mfgf", dir / "absent.mfgf", c, missing.io) == kExitUsage);
}

TEST_CASE("legendre table") {
    RunConfig c = config_in(scratch("legendre"));
    {
        Run r;
        CHECK(cmd_legendre(c, r.io) == kExitOk);
        const std::string out = r.out.str();
        CHECK(out.find("legendre passed=true") != std::string::npos);
        const auto pos = out.find("duality max_deviation=");
        REQUIRE(pos != std::string::npos);
        CHECK(std::stod(out.substr(pos + 22)) <= 1e-6);
    }
    {
        c.legendre.v_radius = 50.0;
        Run r;
        CHECK(cmd_legendre(c, r.io) == kExitCheckFailed);
        CHECK(r.err.str().find("warning: legendre.v_radius") != std::string::npos);
    }
}
