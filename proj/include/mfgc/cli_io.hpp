#pragma once

#include "mfgc/continuation.hpp"
#include "mfgc/estimates.hpp"
#include "mfgc/mc_validate.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfgc {

/// Invalid configuration or input file; the message names the offending field.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitSolverFailed = 2, kExitUsage = 3 };

/// Truncated Fourier series on the unit torus, written as e.g. "1 + 0.2*cos(1) - 0.1*sin(2,1)".
/// A term "c*cos(k)" is c cos(2 pi k x); in 2-D "cos(k0,k1)" is c cos(2 pi (k0 x + k1 y)).
/// The presets "zero" and "uniform" stand for 0 and 1.
struct FourierSpec {
    enum class Kind { Constant, Cos, Sin };
    struct Term {
        double coefficient = 0.0;
        Kind kind = Kind::Constant;
        std::array<int, 2> k{0, 0};
        bool operator==(const Term&) const = default;
    };
    std::string preset;
    std::vector<Term> terms;

    static FourierSpec parse(const std::string& text);
    std::string to_string() const;
    Field sample(const PeriodicGrid& grid) const;
    bool operator==(const FourierSpec&) const = default;
};

struct ProblemBlock {
    int dim = 1;
    int points = 64;
    int steps = 64;
    double horizon = 0.05;
    double gamma = 1.5;
    double alpha = 0.5;
    std::string hamiltonian = "legendre";
    FourierSpec weight = FourierSpec::parse("uniform");
    std::string coupling = "arctan";
    double coupling_parameter = 1.0;
    FourierSpec potential = FourierSpec::parse("0.1*cos(1)");
    FourierSpec drift_x = FourierSpec::parse("0.1*sin(1)");
    FourierSpec drift_y = FourierSpec::parse("zero");
    FourierSpec terminal = FourierSpec::parse("0.05*cos(1)");
    /// Rescaled to unit mass when the problem is built.
    FourierSpec initial_density = FourierSpec::parse("1 + 0.2*cos(1)");
};

struct OutputBlock {
    std::string directory = "out";
    /// Any of "field" (binary FieldFiles), "text" (columnar plot data), "json" (report).
    std::vector<std::string> formats{"field", "text", "json"};
};

struct CheckBlock {
    /// Re-solve on a grid with twice the points for the refinement-stability criteria.
    bool refine = true;
    /// Largest residual sup-norm accepted as a certificate for stored solutions.
    double residual_tol = 1e-8;
};

struct McBlock {
    SDEConfig sde;
    /// Per-slice L1 distance accepted between the simulated and the PDE density.
    double l1_tolerance = 5e-2;
};

struct LegendreBlock {
    double gamma_prime = 3.0;
    double a = 1.0;
    int dim = 1;
    int points = 100;
    /// Half-width of the velocity cube searched by the double transform.
    double v_radius = 2.0;
    int samples = 41;
    double p_min = 10.0;
    double p_max = 100.0;
    std::uint64_t seed = 5;
    double tolerance = 1e-6;
    /// Warning threshold for the brute-force grid spacing 2 v_radius / (samples - 1).
    double max_spacing = 0.25;
};

struct RunConfig {
    ProblemBlock problem;
    SolverConfig solver;
    OutputBlock output;
    CheckBlock check;
    McBlock mc;
    LegendreBlock legendre;

    /// Every numeric constraint of the referenced types; throws ConfigError("section.key: ...").
    void validate() const;
};

/// INI text with sections [problem], [solver], [output], [check], [mc], [legendre].
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Inverse of parse_config: parse_config(write_config(c)) reproduces c exactly.
std::string write_config(const RunConfig& config);

MFGProblem build_problem(const ProblemBlock& block);

/// Binary space-time field: fixed header (magic, version, endianness tag, dim, N, N_t, T,
/// name, header checksum), then (N_t + 1) N^d native doubles, slice by slice, and an
/// FNV-1a checksum of the payload.
struct FieldFile {
    std::string name;
    SpaceTimeField field;
};

inline constexpr std::uint32_t kFieldFileVersion = 1;

/// Writes to a temporary sibling and renames it into place.
void write_field_file(const std::filesystem::path& path, const std::string& name, const SpaceTimeField& field);
/// Throws ConfigError on a missing, truncated, foreign-endian or corrupted file.
FieldFile read_field_file(const std::filesystem::path& path);

/// Columnar text: one "t x [y] value" row per node, slices separated by a blank line.
void write_columns(const std::filesystem::path& path, const SpaceTimeField& field);

/// Text written atomically (temporary sibling and rename).
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

std::string report_json(const EstimateReport& report, double lambda, double residual);

struct CommandStreams {
    std::ostream& out;
    std::ostream& err;
    bool verbose = false;
};

/// Continuation to solver.lambda_target; writes u/m fields, path.log and the estimate report.
int cmd_solve(const RunConfig& config, const CommandStreams& io);
/// Estimate suite plus residual certificate on stored fields at solver.lambda_target.
int cmd_check(const std::filesystem::path& u_file, const std::filesystem::path& m_file, const RunConfig& config,
              const CommandStreams& io);
/// SDE particle density against the stored m.
int cmd_mc(const std::filesystem::path& u_file, const std::filesystem::path& m_file, const RunConfig& config,
           const CommandStreams& io);
/// Duality and growth table of the brute-force transform for L0 = a (1 + |v|^2)^{gamma'/2}.
int cmd_legendre(const RunConfig& config, const CommandStreams& io);

}  // namespace mfgc
