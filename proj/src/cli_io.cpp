#include "mfgc/cli_io.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <unistd.h>

namespace mfgc {

namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::string format_double(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& field, const std::string& what) { throw ConfigError(field + ": " + what); }

double parse_double(const std::string& field, const std::string& text) {
    const std::string t = trim(text);
    double v = 0.0;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    if (!t.empty() && *first == '+') ++first;
    const auto r = std::from_chars(first, last, v);
    if (t.empty() || r.ec != std::errc{} || r.ptr != last) fail(field, "expected a number, got '" + text + "'");
    return v;
}

template <typename Int>
Int parse_int(const std::string& field, const std::string& text) {
    const std::string t = trim(text);
    Int v{};
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || r.ec != std::errc{} || r.ptr != t.data() + t.size())
        fail(field, "expected an integer, got '" + text + "'");
    return v;
}

bool parse_bool(const std::string& field, const std::string& text) {
    const std::string t = trim(text);
    if (t == "true") return true;
    if (t == "false") return false;
    fail(field, "expected true or false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string join_list(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
    return out;
}

const char* linear_method_name(LinearMethod m) {
    switch (m) {
        case LinearMethod::Auto: return "auto";
        case LinearMethod::Direct: return "direct";
        case LinearMethod::Krylov: return "krylov";
    }
    return "auto";
}

LinearMethod parse_linear_method(const std::string& field, const std::string& text) {
    const std::string t = trim(text);
    if (t == "auto") return LinearMethod::Auto;
    if (t == "direct") return LinearMethod::Direct;
    if (t == "krylov") return LinearMethod::Krylov;
    fail(field, "expected auto, direct or krylov, got '" + text + "'");
}

// One config key: how to read it from text into a RunConfig and how to print it back.
struct Entry {
    const char* section;
    const char* key;
    std::function<void(RunConfig&, const std::string& field, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename Member>
Entry real(const char* section, const char* key, Member member) {
    return {section, key,
            [member](RunConfig& c, const std::string& f, const std::string& t) { member(c) = parse_double(f, t); },
            [member](const RunConfig& c) { return format_double(member(c)); }};
}

template <typename Int, typename Member>
Entry integer(const char* section, const char* key, Member member) {
    return {section, key,
            [member](RunConfig& c, const std::string& f, const std::string& t) {
                member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(parse_int<Int>(f, t));
            },
            [member](const RunConfig& c) { return std::to_string(member(c)); }};
}

template <typename Member>
Entry text(const char* section, const char* key, Member member) {
    return {section, key, [member](RunConfig& c, const std::string&, const std::string& t) { member(c) = trim(t); },
            [member](const RunConfig& c) { return member(c); }};
}

template <typename Member>
Entry fourier(const char* section, const char* key, Member member) {
    return {section, key,
            [member](RunConfig& c, const std::string& f, const std::string& t) {
                try {
                    member(c) = FourierSpec::parse(t);
                } catch (const std::invalid_argument& e) {
                    fail(f, e.what());
                }
            },
            [member](const RunConfig& c) { return member(c).to_string(); }};
}

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = {
        integer<int>("problem", "dim", [](auto& c) -> auto& { return c.problem.dim; }),
        integer<int>("problem", "points", [](auto& c) -> auto& { return c.problem.points; }),
        integer<int>("problem", "steps", [](auto& c) -> auto& { return c.problem.steps; }),
        real("problem", "horizon", [](auto& c) -> auto& { return c.problem.horizon; }),
        real("problem", "gamma", [](auto& c) -> auto& { return c.problem.gamma; }),
        real("problem", "alpha", [](auto& c) -> auto& { return c.problem.alpha; }),
        text("problem", "hamiltonian", [](auto& c) -> auto& { return c.problem.hamiltonian; }),
        fourier("problem", "weight", [](auto& c) -> auto& { return c.problem.weight; }),
        text("problem", "coupling", [](auto& c) -> auto& { return c.problem.coupling; }),
        real("problem", "coupling_parameter", [](auto& c) -> auto& { return c.problem.coupling_parameter; }),
        fourier("problem", "potential", [](auto& c) -> auto& { return c.problem.potential; }),
        fourier("problem", "drift_x", [](auto& c) -> auto& { return c.problem.drift_x; }),
        fourier("problem", "drift_y", [](auto& c) -> auto& { return c.problem.drift_y; }),
        fourier("problem", "terminal", [](auto& c) -> auto& { return c.problem.terminal; }),
        fourier("problem", "initial_density", [](auto& c) -> auto& { return c.problem.initial_density; }),

        real("solver", "newton_tol", [](auto& c) -> auto& { return c.solver.newton_tol; }),
        integer<int>("solver", "newton_max_iters", [](auto& c) -> auto& { return c.solver.newton_max_iters; }),
        real("solver", "dlambda_init", [](auto& c) -> auto& { return c.solver.dlambda_init; }),
        real("solver", "dlambda_min", [](auto& c) -> auto& { return c.solver.dlambda_min; }),
        real("solver", "dlambda_max", [](auto& c) -> auto& { return c.solver.dlambda_max; }),
        real("solver", "m_positivity_margin", [](auto& c) -> auto& { return c.solver.m_positivity_margin; }),
        real("solver", "max_horizon", [](auto& c) -> auto& { return c.solver.max_horizon; }),
        {"solver", "schedule",
         [](RunConfig& c, const std::string& f, const std::string& t) {
             const std::string v = trim(t);
             if (v != "adaptive" && v != "fixed") fail(f, "expected adaptive or fixed, got '" + t + "'");
             c.solver.adaptive = v == "adaptive";
         },
         [](const RunConfig& c) { return std::string(c.solver.adaptive ? "adaptive" : "fixed"); }},
        real("solver", "min_damping", [](auto& c) -> auto& { return c.solver.min_damping; }),
        real("solver", "lambda_target", [](auto& c) -> auto& { return c.solver.lambda_target; }),
        {"solver", "linear_method",
         [](RunConfig& c, const std::string& f, const std::string& t) {
             c.solver.linear.method = parse_linear_method(f, t);
         },
         [](const RunConfig& c) { return std::string(linear_method_name(c.solver.linear.method)); }},
        integer<long long>("solver", "direct_block_limit",
                           [](auto& c) -> auto& { return c.solver.linear.direct_block_limit; }),
        integer<unsigned long long>("solver", "memory_budget",
                                    [](auto& c) -> auto& { return c.solver.linear.memory_budget; }),
        integer<int>("solver", "gmres_restart", [](auto& c) -> auto& { return c.solver.linear.gmres.restart; }),
        integer<int>("solver", "gmres_max_iterations",
                     [](auto& c) -> auto& { return c.solver.linear.gmres.max_iterations; }),
        real("solver", "gmres_tolerance",
             [](auto& c) -> auto& { return c.solver.linear.gmres.relative_tolerance; }),

        text("output", "directory", [](auto& c) -> auto& { return c.output.directory; }),
        {"output", "formats",
         [](RunConfig& c, const std::string&, const std::string& t) { c.output.formats = split_list(t); },
         [](const RunConfig& c) { return join_list(c.output.formats); }},

        {"check", "refine",
         [](RunConfig& c, const std::string& f, const std::string& t) { c.check.refine = parse_bool(f, t); },
         [](const RunConfig& c) { return std::string(c.check.refine ? "true" : "false"); }},
        real("check", "residual_tol", [](auto& c) -> auto& { return c.check.residual_tol; }),

        integer<long long>("mc", "paths", [](auto& c) -> auto& { return c.mc.sde.paths; }),
        integer<unsigned long long>("mc", "seed", [](auto& c) -> auto& { return c.mc.sde.seed; }),
        integer<int>("mc", "substeps", [](auto& c) -> auto& { return c.mc.sde.substeps; }),
        integer<int>("mc", "batches", [](auto& c) -> auto& { return c.mc.sde.batches; }),
        integer<int>("mc", "threads", [](auto& c) -> auto& { return c.mc.sde.threads; }),
        real("mc", "l1_tolerance", [](auto& c) -> auto& { return c.mc.l1_tolerance; }),

        real("legendre", "gamma_prime", [](auto& c) -> auto& { return c.legendre.gamma_prime; }),
        real("legendre", "a", [](auto& c) -> auto& { return c.legendre.a; }),
        integer<int>("legendre", "dim", [](auto& c) -> auto& { return c.legendre.dim; }),
        integer<int>("legendre", "points", [](auto& c) -> auto& { return c.legendre.points; }),
        real("legendre", "v_radius", [](auto& c) -> auto& { return c.legendre.v_radius; }),
        integer<int>("legendre", "samples", [](auto& c) -> auto& { return c.legendre.samples; }),
        real("legendre", "p_min", [](auto& c) -> auto& { return c.legendre.p_min; }),
        real("legendre", "p_max", [](auto& c) -> auto& { return c.legendre.p_max; }),
        integer<unsigned long long>("legendre", "seed", [](auto& c) -> auto& { return c.legendre.seed; }),
        real("legendre", "tolerance", [](auto& c) -> auto& { return c.legendre.tolerance; }),
        real("legendre", "max_spacing", [](auto& c) -> auto& { return c.legendre.max_spacing; }),
    };
    return table;
}

void check_spec_dim(const std::string& field, const FourierSpec& spec, int dim) {
    if (dim == 2) return;
    for (const auto& t : spec.terms)
        if (t.k[1] != 0) fail(field, "second wavenumber requires dim = 2");
}

std::uint64_t fnv1a(const unsigned char* data, std::size_t n, std::uint64_t h = 14695981039346656037ull) {
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 1099511628211ull;
    }
    return h;
}

constexpr char kMagic[8] = {'M', 'F', 'G', 'C', 'F', 'L', 'D', '\0'};
constexpr std::uint32_t kEndianTag = 0x01020304u;
constexpr std::size_t kNameBytes = 32;
// magic, 6 x u32, T, name, header checksum
constexpr std::size_t kHeaderBytes = 8 + 6 * 4 + 8 + kNameBytes + 8;

template <typename T>
void put(std::vector<unsigned char>& buf, const T& v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    buf.insert(buf.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<unsigned char>& buf, std::size_t& pos) {
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

fs::path temp_sibling(const fs::path& path) {
    static std::atomic<unsigned> counter{0};
    fs::path tmp = path;
    tmp += ".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
    return tmp;
}

void write_bytes_atomic(const fs::path& path, const char* data, std::size_t n) {
    const fs::path tmp = temp_sibling(path);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(data, static_cast<std::streamsize>(n));
        if (!out) throw std::runtime_error("write to " + tmp.string() + " failed");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw std::runtime_error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

bool wants(const RunConfig& c, const char* format) {
    return std::find(c.output.formats.begin(), c.output.formats.end(), format) != c.output.formats.end();
}

std::string describe(const PeriodicGrid& g, const TimeGrid& t) {
    std::ostringstream s;
    s << "dim=" << g.dim() << " N=" << g.points_per_dim() << " Nt=" << t.steps() << " T=" << format_double(t.horizon());
    return s.str();
}

void require_matching(const FieldFile& f, const MFGProblem& p, const std::string& path) {
    if (!(f.field.grid() == p.grid) || !(f.field.time == p.time))
        throw GridMismatch("grid mismatch: " + path + " has " + describe(f.field.grid(), f.field.time) +
                           ", config has " + describe(p.grid, p.time));
}

CheckRecord residual_record(double residual, double tol) {
    CheckRecord r;
    r.name = "residual";
    r.anchor = "discrete system M_lambda(u, m) = 0 (residual certificate)";
    r.values = {{"sup_norm", residual}, {"tolerance", tol}};
    r.policy = "sup-norm of the full residual <= check.residual_tol";
    r.passed = std::isfinite(residual) && residual <= tol;
    if (!r.passed) r.location = "full residual";
    return r;
}

double certificate(const MFGProblem& p, double lambda, const SolutionPair& pair) {
    try {
        return residual_full(p, lambda_data(p, lambda), pair).sup_norm();
    } catch (const PositivityError&) {
        return std::numeric_limits<double>::infinity();
    }
}

// Residual certificate, optional refinement solve and the estimate suite.
EstimateReport full_report(const RunConfig& config, const MFGProblem& problem, const SolutionPair& pair, double residual,
                           const CommandStreams& io) {
    const double lambda = config.solver.lambda_target;
    EstimateReport report;
    report.records.push_back(residual_record(residual, config.check.residual_tol));

    MFGProblem fine;
    SolutionPair fine_pair;
    Refinement refined;
    if (config.check.refine) {
        ProblemBlock block = config.problem;
        block.points *= 2;
        fine = build_problem(block);
        const PathResult path = solve_path(fine, config.solver);
        CheckRecord r;
        r.name = "refinement";
        r.anchor = "same problem on a grid with twice the points";
        r.values = {{"points", block.points}, {"lambda", path.last().lambda}};
        r.policy = "refined continuation reaches the same lambda";
        r.passed = path.completed();
        if (r.passed) {
            fine_pair = path.last().pair;
            refined = {&fine, &fine_pair};
        } else {
            r.location = path.message;
        }
        if (io.verbose) io.out << "refinement: " << path_status_name(path.status) << "\n";
        report.records.push_back(std::move(r));
    }
    const EstimateReport est = run_estimates(pair, problem, lambda_data(problem, lambda), refined);
    report.records.insert(report.records.end(), est.records.begin(), est.records.end());
    return report;
}

void store_report(const RunConfig& config, const fs::path& dir, const std::string& stem, const EstimateReport& report,
                  double lambda, double residual) {
    write_text_atomic(dir / (stem + ".txt"), report.to_text());
    if (wants(config, "json")) write_text_atomic(dir / (stem + ".json"), report_json(report, lambda, residual));
}

fs::path prepare_output(const RunConfig& config) {
    const fs::path dir = config.output.directory;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("output.directory: cannot create '" + dir.string() + "': " + ec.message());
    return dir;
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// FourierSpec

FourierSpec FourierSpec::parse(const std::string& input) {
    const std::string s = trim(input);
    FourierSpec spec;
    if (s == "zero" || s == "uniform") {
        spec.preset = s;
        return spec;
    }
    if (s.empty()) throw std::invalid_argument("empty function spec (use zero for 0)");
    std::size_t i = 0;
    auto skip = [&] {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    };
    auto bad = [&](const std::string& what) -> std::invalid_argument {
        return std::invalid_argument(what + " at position " + std::to_string(i) + " in '" + s + "'");
    };
    auto read_int = [&] {
        skip();
        int v = 0;
        const auto r = std::from_chars(s.data() + i, s.data() + s.size(), v);
        if (r.ec != std::errc{}) throw bad("expected a wavenumber");
        i = static_cast<std::size_t>(r.ptr - s.data());
        skip();
        return v;
    };
    bool first = true;
    while (true) {
        skip();
        if (i >= s.size()) break;
        double sign = 1.0;
        if (s[i] == '+' || s[i] == '-') {
            sign = s[i] == '-' ? -1.0 : 1.0;
            ++i;
            skip();
        } else if (!first) {
            throw bad("expected + or -");
        }
        Term t;
        t.coefficient = 1.0;
        bool have_number = false;
        if (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.')) {
            const auto r = std::from_chars(s.data() + i, s.data() + s.size(), t.coefficient);
            if (r.ec != std::errc{}) throw bad("bad coefficient");
            i = static_cast<std::size_t>(r.ptr - s.data());
            have_number = true;
            skip();
            if (i < s.size() && s[i] == '*') {
                ++i;
                skip();
                have_number = false;
            } else {
                t.kind = Kind::Constant;
            }
        }
        if (!have_number) {
            if (s.compare(i, 3, "cos") == 0) {
                t.kind = Kind::Cos;
            } else if (s.compare(i, 3, "sin") == 0) {
                t.kind = Kind::Sin;
            } else {
                throw bad("expected a number, cos(...) or sin(...)");
            }
            i += 3;
            skip();
            if (i >= s.size() || s[i] != '(') throw bad("expected (");
            ++i;
            t.k[0] = read_int();
            if (i < s.size() && s[i] == ',') {
                ++i;
                t.k[1] = read_int();
            }
            if (i >= s.size() || s[i] != ')') throw bad("expected )");
            ++i;
        }
        t.coefficient *= sign;
        spec.terms.push_back(t);
        first = false;
    }
    return spec;
}

std::string FourierSpec::to_string() const {
    if (!preset.empty()) return preset;
    std::string out;
    for (std::size_t j = 0; j < terms.size(); ++j) {
        const Term& t = terms[j];
        const bool negative = std::signbit(t.coefficient);
        if (j == 0) {
            if (negative) out += "-";
        } else {
            out += negative ? " - " : " + ";
        }
        out += format_double(std::abs(t.coefficient));
        if (t.kind == Kind::Constant) continue;
        out += t.kind == Kind::Cos ? "*cos(" : "*sin(";
        out += std::to_string(t.k[0]);
        if (t.k[1] != 0) out += "," + std::to_string(t.k[1]);
        out += ")";
    }
    return out;
}

Field FourierSpec::sample(const PeriodicGrid& grid) const {
    if (preset == "uniform") return Field::constant(grid, 1.0);
    return mfgc::sample(grid, [&](const Eigen::VectorXd& x) {
        double v = 0.0;
        for (const Term& t : terms) {
            const double phase = kTwoPi * (t.k[0] * x[0] + (grid.dim() == 2 ? t.k[1] * x[1] : 0.0));
            switch (t.kind) {
                case Kind::Constant: v += t.coefficient; break;
                case Kind::Cos: v += t.coefficient * std::cos(phase); break;
                case Kind::Sin: v += t.coefficient * std::sin(phase); break;
            }
        }
        return v;
    });
}

// ---------------------------------------------------------------------------------------------
// RunConfig

void RunConfig::validate() const {
    const auto& p = problem;
    if (p.dim != 1 && p.dim != 2) fail("problem.dim", "must be 1 or 2 (got " + std::to_string(p.dim) + ")");
    if (p.points < 4 || !std::has_single_bit(static_cast<unsigned>(p.points)))
        fail("problem.points", "must be a power of two >= 4 (got " + std::to_string(p.points) + ")");
    if (p.steps < 1) fail("problem.steps", "must be >= 1 (got " + std::to_string(p.steps) + ")");
    if (!(p.horizon > 0.0) || !std::isfinite(p.horizon))
        fail("problem.horizon", "must be positive and finite (got " + format_double(p.horizon) + ")");
    if (!(p.gamma > 1.0 && p.gamma < 2.0)) fail("problem.gamma", "must lie in (1, 2) (got " + format_double(p.gamma) + ")");
    if (!(p.alpha >= 0.0) || !std::isfinite(p.alpha))
        fail("problem.alpha", "must be >= 0 (got " + format_double(p.alpha) + ")");
    try {
        HamiltonianModel::parse_base(p.hamiltonian);
    } catch (const std::invalid_argument& e) {
        fail("problem.hamiltonian", e.what());
    }
    try {
        Potential::parse_kind(p.coupling);
    } catch (const std::invalid_argument& e) {
        fail("problem.coupling", e.what());
    }
    if (!(p.coupling_parameter > 0.0) || !std::isfinite(p.coupling_parameter))
        fail("problem.coupling_parameter", "must be positive (got " + format_double(p.coupling_parameter) + ")");
    check_spec_dim("problem.weight", p.weight, p.dim);
    check_spec_dim("problem.potential", p.potential, p.dim);
    check_spec_dim("problem.drift_x", p.drift_x, p.dim);
    check_spec_dim("problem.drift_y", p.drift_y, p.dim);
    check_spec_dim("problem.terminal", p.terminal, p.dim);
    check_spec_dim("problem.initial_density", p.initial_density, p.dim);
    if (p.dim == 1 && p.drift_y.preset != "zero") fail("problem.drift_y", "must be zero when dim = 1");

    try {
        solver.validate();
    } catch (const std::invalid_argument& e) {
        fail("solver", e.what());
    }
    if (solver.linear.direct_block_limit < 1) fail("solver.direct_block_limit", "must be >= 1");
    if (solver.linear.memory_budget < 1) fail("solver.memory_budget", "must be >= 1");
    if (solver.linear.gmres.restart < 1) fail("solver.gmres_restart", "must be >= 1");
    if (solver.linear.gmres.max_iterations < 1) fail("solver.gmres_max_iterations", "must be >= 1");
    if (!(solver.linear.gmres.relative_tolerance > 0.0)) fail("solver.gmres_tolerance", "must be positive");

    if (output.directory.empty()) fail("output.directory", "must not be empty");
    for (const auto& f : output.formats)
        if (f != "field" && f != "text" && f != "json")
            fail("output.formats", "unknown format '" + f + "' (expected field, text or json)");

    if (!(check.residual_tol > 0.0)) fail("check.residual_tol", "must be positive");

    try {
        mc.sde.validate();
    } catch (const std::invalid_argument& e) {
        fail("mc", e.what());
    }
    if (!(mc.l1_tolerance > 0.0)) fail("mc.l1_tolerance", "must be positive");

    const auto& l = legendre;
    if (!(l.gamma_prime > 2.0) || !std::isfinite(l.gamma_prime))
        fail("legendre.gamma_prime", "must exceed 2 so that the dual exponent lies in (1, 2) (got " +
                                         format_double(l.gamma_prime) + ")");
    if (!(l.a > 0.0) || !std::isfinite(l.a)) fail("legendre.a", "must be positive (got " + format_double(l.a) + ")");
    if (l.dim != 1 && l.dim != 2) fail("legendre.dim", "must be 1 or 2");
    if (l.points < 1) fail("legendre.points", "must be >= 1");
    if (!(l.v_radius > 0.0) || !std::isfinite(l.v_radius)) fail("legendre.v_radius", "must be positive");
    if (l.samples < 3) fail("legendre.samples", "must be >= 3");
    if (!(l.p_min > 0.0 && l.p_min < l.p_max) || !std::isfinite(l.p_max))
        fail("legendre.p_min", "need 0 < p_min < p_max");
    if (!(l.tolerance > 0.0)) fail("legendre.tolerance", "must be positive");
    if (!(l.max_spacing > 0.0)) fail("legendre.max_spacing", "must be positive");
}

RunConfig parse_config(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config syntax: " + std::string(e.what()));
    }
    std::map<std::string, const Entry*> index;
    for (const auto& e : entries()) index[std::string(e.section) + "." + e.key] = &e;

    RunConfig config;
    for (const auto& [section, body] : tree) {
        if (!body.data().empty()) fail(section, "keys must live inside a [section]");
        for (const auto& [key, value] : body) {
            const std::string field = section + "." + key;
            const auto it = index.find(field);
            if (it == index.end()) fail(field, "unknown key");
            it->second->set(config, field, value.data());
        }
    }
    config.validate();
    return config;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string write_config(const RunConfig& config) {
    std::string out;
    std::string section;
    for (const auto& e : entries()) {
        if (section != e.section) {
            section = e.section;
            out += (out.empty() ? "[" : "\n[") + section + "]\n";
        }
        out += std::string(e.key) + " = " + e.get(config) + "\n";
    }
    return out;
}

MFGProblem build_problem(const ProblemBlock& b) {
    try {
        const PeriodicGrid grid(b.dim, b.points);
        MFGProblem p;
        p.grid = grid;
        p.time = TimeGrid(b.horizon, b.steps);
        p.alpha = b.alpha;
        const Field weight = b.weight.sample(grid);
        if (!(weight.values.minCoeff() > 0.0)) fail("problem.weight", "must be positive on the grid");
        p.hamiltonian = HamiltonianModel(HamiltonianModel::parse_base(b.hamiltonian), b.gamma, weight);
        p.drift = {b.drift_x.sample(grid)};
        if (b.dim == 2) p.drift.push_back(b.drift_y.sample(grid));
        p.potential = Potential(b.potential.sample(grid), Potential::parse_kind(b.coupling), b.coupling_parameter);
        p.terminal = b.terminal.sample(grid);
        Field m0 = b.initial_density.sample(grid);
        if (!(m0.values.minCoeff() > 0.0))
            fail("problem.initial_density", "must be positive on the grid (min " + format_double(m0.values.minCoeff()) + ")");
        m0 *= 1.0 / integrate(m0);
        p.initial_density = m0;
        p.validate();
        return p;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("problem: ") + e.what());
    }
}

// ---------------------------------------------------------------------------------------------
// Files

void write_field_file(const fs::path& path, const std::string& name, const SpaceTimeField& field) {
    if (name.size() >= kNameBytes) throw std::invalid_argument("field name longer than 31 bytes");
    const PeriodicGrid& g = field.grid();
    std::vector<unsigned char> buf;
    buf.insert(buf.end(), kMagic, kMagic + 8);
    put(buf, kFieldFileVersion);
    put(buf, kEndianTag);
    put(buf, static_cast<std::uint32_t>(g.dim()));
    put(buf, static_cast<std::uint32_t>(g.points_per_dim()));
    put(buf, static_cast<std::uint32_t>(field.steps()));
    put(buf, std::uint32_t{0});
    put(buf, field.time.horizon());
    char padded[kNameBytes] = {};
    std::memcpy(padded, name.data(), name.size());
    buf.insert(buf.end(), padded, padded + kNameBytes);
    put(buf, fnv1a(buf.data(), buf.size()));

    const std::size_t start = buf.size();
    for (const Field& slice : field.slices) {
        const auto* p = reinterpret_cast<const unsigned char*>(slice.values.data());
        buf.insert(buf.end(), p, p + slice.size() * sizeof(double));
    }
    put(buf, fnv1a(buf.data() + start, buf.size() - start));
    write_bytes_atomic(path, reinterpret_cast<const char*>(buf.data()), buf.size());
}

FieldFile read_field_file(const fs::path& path) {
    const std::string where = "field file '" + path.string() + "'";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(where + ": cannot open");
    const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < kHeaderBytes) throw ConfigError(where + ": truncated header");
    if (std::memcmp(buf.data(), kMagic, 8) != 0) throw ConfigError(where + ": not a field file");
    std::size_t pos = 8;
    const auto version = take<std::uint32_t>(buf, pos);
    const auto tag = take<std::uint32_t>(buf, pos);
    if (tag == __builtin_bswap32(kEndianTag)) throw ConfigError(where + ": written on a machine of the other endianness");
    if (tag != kEndianTag) throw ConfigError(where + ": bad endianness tag");
    if (version != kFieldFileVersion) throw ConfigError(where + ": unsupported version " + std::to_string(version));
    const auto dim = take<std::uint32_t>(buf, pos);
    const auto n = take<std::uint32_t>(buf, pos);
    const auto nt = take<std::uint32_t>(buf, pos);
    take<std::uint32_t>(buf, pos);
    const auto horizon = take<double>(buf, pos);
    char name[kNameBytes + 1] = {};
    std::memcpy(name, buf.data() + pos, kNameBytes);
    pos += kNameBytes;
    const std::uint64_t header_sum = fnv1a(buf.data(), pos);
    if (take<std::uint64_t>(buf, pos) != header_sum) throw ConfigError(where + ": header checksum mismatch");

    FieldFile f;
    f.name = name;
    try {
        f.field = SpaceTimeField(PeriodicGrid(static_cast<int>(dim), static_cast<int>(n)),
                                 TimeGrid(horizon, static_cast<int>(nt)));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ": " + e.what());
    }
    const std::size_t per_slice = f.field.grid().size();
    const std::size_t payload = (static_cast<std::size_t>(nt) + 1) * per_slice * sizeof(double);
    if (buf.size() != kHeaderBytes + payload + 8)
        throw ConfigError(where + ": payload has " + std::to_string(buf.size() - kHeaderBytes) + " bytes, expected " +
                          std::to_string(payload + 8));
    const std::uint64_t payload_sum = fnv1a(buf.data() + pos, payload);
    for (auto& slice : f.field.slices) {
        std::memcpy(slice.values.data(), buf.data() + pos, per_slice * sizeof(double));
        pos += per_slice * sizeof(double);
    }
    if (take<std::uint64_t>(buf, pos) != payload_sum) throw ConfigError(where + ": payload checksum mismatch");
    return f;
}

void write_columns(const fs::path& path, const SpaceTimeField& field) {
    const PeriodicGrid& g = field.grid();
    std::ostringstream out;
    out << std::setprecision(17);
    out << (g.dim() == 1 ? "# t x value\n" : "# t x y value\n");
    for (int n = 0; n <= field.steps(); ++n) {
        if (n > 0) out << "\n";
        const double t = field.time.time(n);
        for (std::size_t i = 0; i < g.size(); ++i) {
            out << t << ' ' << g.coordinate(i, 0);
            if (g.dim() == 2) out << ' ' << g.coordinate(i, 1);
            out << ' ' << field[n][i] << '\n';
        }
    }
    write_text_atomic(path, out.str());
}

void write_text_atomic(const fs::path& path, const std::string& text) { write_bytes_atomic(path, text.data(), text.size()); }

std::string report_json(const EstimateReport& report, double lambda, double residual) {
    nlohmann::json j;
    j["lambda"] = lambda;
    j["residual"] = residual;
    j["all_passed"] = report.all_passed();
    j["records"] = nlohmann::json::array();
    for (const auto& r : report.records) {
        nlohmann::json rec{{"name", r.name}, {"anchor", r.anchor}, {"policy", r.policy}, {"passed", r.passed},
                           {"location", r.location}};
        nlohmann::json values = nlohmann::json::object();
        // JSON has no infinity; non-finite values become null.
        for (const auto& [k, v] : r.values) values[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json();
        rec["values"] = values;
        j["records"].push_back(rec);
    }
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------------------------
// Commands

int cmd_solve(const RunConfig& config, const CommandStreams& io) {
    MFGProblem problem;
    fs::path dir;
    try {
        config.validate();
        problem = build_problem(config.problem);
        dir = prepare_output(config);
    } catch (const ConfigError& e) {
        io.err << "config error: " << e.what() << "\n";
        return kExitUsage;
    }

    std::string log;
    const PathResult path = solve_path(problem, config.solver, [&](const ContinuationState& s) {
        const std::string line = progress_line(s);
        log += line + "\n";
        if (io.verbose) io.out << line << "\n" << std::flush;
    });
    const ContinuationState& last = path.last();
    std::ostringstream status;
    status << "status=" << path_status_name(path.status) << " last_lambda=" << format_double(last.lambda)
           << " states=" << path.states.size();
    if (!path.completed()) status << " failed_lambda=" << format_double(path.failed_lambda);
    log += status.str() + "\n";
    if (!path.message.empty()) log += "message=" + path.message + "\n";
    write_text_atomic(dir / "path.log", log);

    if (!path.completed()) {
        io.err << "solver failure: " << path.message << "\n"
               << "last good lambda=" << format_double(last.lambda) << "\n";
        return kExitSolverFailed;
    }
    const double residual = certificate(problem, last.lambda, last.pair);
    if (!(residual <= config.check.residual_tol)) {
        io.err << "solver failure: final residual " << residual << " exceeds check.residual_tol\n";
        return kExitSolverFailed;
    }

    if (wants(config, "field")) {
        write_field_file(dir / "u.mfgf", "u", last.pair.u);
        write_field_file(dir / "m.mfgf", "m", last.pair.m);
    }
    if (wants(config, "text")) {
        write_columns(dir / "u.txt", last.pair.u);
        write_columns(dir / "m.txt", last.pair.m);
    }
    const EstimateReport report = full_report(config, problem, last.pair, residual, io);
    store_report(config, dir, "report", report, last.lambda, residual);
    io.out << "solved lambda=" << format_double(last.lambda) << " residual=" << residual
           << " states=" << path.states.size() << "\n";
    for (const auto& r : report.records)
        if (!r.passed) io.out << "FAILED " << r.name << " at " << r.location << "\n";
    io.out << "all_passed=" << (report.all_passed() ? "true" : "false") << "\n";
    return report.all_passed() ? kExitOk : kExitCheckFailed;
}

int cmd_check(const fs::path& u_file, const fs::path& m_file, const RunConfig& config, const CommandStreams& io) {
    MFGProblem problem;
    SolutionPair pair;
    fs::path dir;
    try {
        config.validate();
        problem = build_problem(config.problem);
        FieldFile u = read_field_file(u_file);
        FieldFile m = read_field_file(m_file);
        require_matching(u, problem, u_file.string());
        require_matching(m, problem, m_file.string());
        pair = {std::move(u.field), std::move(m.field)};
        dir = prepare_output(config);
    } catch (const std::invalid_argument& e) {  // GridMismatch
        io.err << "input error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        io.err << "input error: " << e.what() << "\n";
        return kExitUsage;
    }
    const double lambda = config.solver.lambda_target;
    const double residual = certificate(problem, lambda, pair);
    const EstimateReport report = full_report(config, problem, pair, residual, io);
    store_report(config, dir, "check_report", report, lambda, residual);
    io.out << report.to_text();
    for (const auto& r : report.records)
        if (!r.passed) io.err << "check failed: " << r.name << " (" << r.policy << ") at " << r.location << "\n";
    return report.all_passed() ? kExitOk : kExitCheckFailed;
}

int cmd_mc(const fs::path& u_file, const fs::path& m_file, const RunConfig& config, const CommandStreams& io) {
    MFGProblem problem;
    SolutionPair pair;
    fs::path dir;
    try {
        config.validate();
        problem = build_problem(config.problem);
        FieldFile u = read_field_file(u_file);
        FieldFile m = read_field_file(m_file);
        require_matching(u, problem, u_file.string());
        require_matching(m, problem, m_file.string());
        pair = {std::move(u.field), std::move(m.field)};
        dir = prepare_output(config);
    } catch (const std::invalid_argument& e) {
        io.err << "input error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        io.err << "input error: " << e.what() << "\n";
        return kExitUsage;
    }
    const double lambda = config.solver.lambda_target;
    const MCEstimate mc = simulate(problem, lambda_data(problem, lambda), pair, config.mc.sde);
    const std::vector<double> l1 = l1_distance(mc.density, pair.m);

    std::ostringstream table;
    table << std::setprecision(10) << "# t l1 noise_floor\n";
    double worst = 0.0, floor_at_worst = 0.0;
    int worst_slice = 0;
    for (int n = 0; n <= problem.time.steps(); ++n) {
        const auto k = static_cast<std::size_t>(n);
        table << problem.time.time(n) << ' ' << l1[k] << ' ' << mc.noise_floor[k] << '\n';
        if (l1[k] > worst) {
            worst = l1[k];
            floor_at_worst = mc.noise_floor[k];
            worst_slice = n;
        }
    }
    write_text_atomic(dir / "mc.txt", table.str());
    if (wants(config, "field")) write_field_file(dir / "mc_density.mfgf", "m_mc", mc.density);
    if (io.verbose) io.out << table.str();
    const bool passed = worst <= config.mc.l1_tolerance;
    io.out << "mc paths=" << config.mc.sde.paths << " seed=" << config.mc.sde.seed << " lambda=" << format_double(lambda)
           << " max_l1=" << worst << " at slice " << worst_slice << " noise_floor=" << floor_at_worst
           << " tolerance=" << config.mc.l1_tolerance << " passed=" << (passed ? "true" : "false") << "\n";
    return passed ? kExitOk : kExitCheckFailed;
}

int cmd_legendre(const RunConfig& config, const CommandStreams& io) {
    try {
        config.validate();
    } catch (const ConfigError& e) {
        io.err << "config error: " << e.what() << "\n";
        return kExitUsage;
    }
    const LegendreBlock& c = config.legendre;
    const double spacing = 2.0 * c.v_radius / (c.samples - 1);
    if (spacing > c.max_spacing) {
        io.err << "warning: legendre.v_radius=" << c.v_radius << " with " << c.samples << " samples gives spacing "
               << spacing << " > max_spacing " << c.max_spacing << "; table skipped\n";
        return kExitCheckFailed;
    }
    const LagrangianModel lag(c.gamma_prime, Field::constant(PeriodicGrid(c.dim, 2), c.a));
    const double gamma = c.gamma_prime / (c.gamma_prime - 1.0);
    std::mt19937_64 rng(c.seed);
    std::uniform_real_distribution<double> uni(-c.v_radius, c.v_radius);

    io.out << std::setprecision(12) << "# duality: L0(v) against sup_p [-p.v - sup_w(-w.p - L0(w))]\n"
           << "# i |v| L0 double_transform deviation\n";
    double worst = 0.0;
    bool ok = true;
    for (int i = 0; i < c.points; ++i) {
        PVec v(c.dim);
        for (int a = 0; a < c.dim; ++a) v[a] = uni(rng);
        const double exact = lag.eval(0, v);
        double back = std::numeric_limits<double>::quiet_NaN();
        try {
            back = double_legendre_transform(lag, 0, v, c.v_radius, c.samples);
        } catch (const std::domain_error& e) {
            io.err << "duality point " << i << ": " << e.what() << "\n";
        }
        const double dev = std::abs(back - exact);
        if (!(dev <= c.tolerance)) ok = false;
        if (std::isfinite(dev)) worst = std::max(worst, dev);
        io.out << i << ' ' << v.norm() << ' ' << exact << ' ' << back << ' ' << dev << '\n';
    }
    io.out << "duality max_deviation=" << worst << " tolerance=" << c.tolerance << "\n";

    const GrowthConstants gc = transform_growth_constants(lag, gamma);
    const double lower = gc.lower_slope * gamma / 2.0;
    const double upper = 2.0 * gc.upper_slope * gamma;
    io.out << "# growth: H0(p) / (|p|^gamma / gamma) in [" << lower << ", " << upper << "]\n# |p| H0 ratio ok\n";
    constexpr int kGrowthRows = 10;
    for (int j = 0; j < kGrowthRows; ++j) {
        const double r = c.p_min * std::pow(c.p_max / c.p_min, static_cast<double>(j) / (kGrowthRows - 1));
        PVec p = PVec::Zero(c.dim);
        p[0] = r;
        const double speed = legendre_dual_speed(c.a, c.gamma_prime, r);
        double h = std::numeric_limits<double>::quiet_NaN();
        try {
            h = legendre_transform(lag, 0, p, 2.0 * speed + 2.0, 201);
        } catch (const std::domain_error& e) {
            io.err << "growth row " << j << ": " << e.what() << "\n";
        }
        const double ratio = h / (std::pow(r, gamma) / gamma);
        const bool row_ok = ratio >= lower && ratio <= upper;
        ok = ok && row_ok;
        io.out << r << ' ' << h << ' ' << ratio << ' ' << (row_ok ? "yes" : "no") << '\n';
    }
    io.out << "legendre passed=" << (ok ? "true" : "false") << "\n";
    return ok ? kExitOk : kExitCheckFailed;
}

}  // namespace mfgc
