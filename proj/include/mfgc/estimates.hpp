#pragma once

#include "mfgc/mfg_system.hpp"

#include <string>
#include <utility>
#include <vector>

namespace mfgc {

/// One runtime check. `anchor` is the mathematical statement being tested; `values` always
/// carries the computed quantities, not just the verdict.
struct CheckRecord {
    std::string name;
    std::string anchor;
    std::vector<std::pair<std::string, double>> values;
    std::string policy;
    bool passed = false;
    /// Where the worst violation sits (empty when passed).
    std::string location;

    double value(const std::string& key) const;
};

struct EstimateReport {
    std::vector<CheckRecord> records;

    bool all_passed() const;
    const CheckRecord& find(const std::string& name) const;
    /// "check.key=value" lines followed by "check.passed=true|false".
    std::string to_text() const;
};

/// alpha_bar = (gamma - 1) alpha and q(r) = r + 2 alpha_bar / (2 - gamma).
struct DerivedExponents {
    double alpha_bar = 0.0;
    double gamma = 1.5;

    double q_of_r(double r) const { return r + 2.0 * alpha_bar / (2.0 - gamma); }
    bool alpha_bar_below_one() const { return alpha_bar < 1.0; }
};

DerivedExponents derived_exponents(double gamma, double alpha);

/// A second solve of the same problem on a refined grid, used by the stability criteria.
struct Refinement {
    const MFGProblem* problem = nullptr;
    const SolutionPair* pair = nullptr;
};

/// max_n |int m^n - 1|, pass at <= 1e-10.
CheckRecord check_mass(const SolutionPair& pair);

/// u >= -[(T - t)(sup|V_lambda| + max(0, sup_x m^alpha H_lambda(x, 0))) + sup|Psi_lambda|] - 1e-8 on every slice.
/// The H term vanishes whenever H(x, 0) <= 0 and keeps the bound valid along the blend.
CheckRecord check_value_bounds(const SolutionPair& pair, const MFGProblem& problem, const LambdaData& data);

/// int int |Du|^gamma / m^abar, int int |Du|^gamma m^{1-abar}, max_t int |u|,
/// max_t int m^{1+alpha} + int int m^{alpha-1}|Dm|^2. Pass: finite and, with a refinement,
/// every ratio in [0.5, 2].
CheckRecord check_integral_estimates(const SolutionPair& pair, const MFGProblem& problem,
                                     const Refinement& refined = {});

/// ||1/m||_inf and max_t int m^{-r} for r in r_list. Pass: finite and no blow-up trend
/// (last-slice value <= 10x first-slice value). Throws PositivityError on m <= 0.
CheckRecord check_inverse_m(const SolutionPair& pair, const std::vector<double>& r_list);

/// Pointwise structure behind uniqueness, at every node/slice of the candidate and on sampled
/// momenta |Q| in [1e-3, q_radius] at every node:
///  (i)   Q.DpH - H - (alpha/4) Q.D2H.Q >= 0 for Q != 0,
///  (ii)  smallest eigenvalue of D2H > 0,
///  (iii) dV/dm > 0.
/// Also reports the combined f^2 weight alpha m^{alpha-1} (i) + dV/dm at the candidate and the margin 4/gamma - alpha.
CheckRecord check_uniqueness_integrand(const SolutionPair& pair, const MFGProblem& problem, const LambdaData& data,
                                       double q_radius = 100.0);

/// ||Du||_inf, ||m||_inf, ||Dm||_inf. Pass: finite and, with a refinement, each changes by < 5%.
CheckRecord check_gradient_bound(const SolutionPair& pair, const Refinement& refined = {});

/// min m > 0, congestion floor never active, ||1/m||_inf changes by < 5% under refinement.
CheckRecord check_positivity(const SolutionPair& pair, const MFGProblem& problem, const Refinement& refined = {});

/// Every check above on one candidate.
EstimateReport run_estimates(const SolutionPair& pair, const MFGProblem& problem, const LambdaData& data,
                             const Refinement& refined = {});

}  // namespace mfgc
