#include "mfgc/estimates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mfgc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Trapezoidal rule over the time slices of a per-slice quantity.
double time_integral(const std::vector<double>& per_slice, double dt) {
    double acc = 0.0;
    for (std::size_t n = 0; n + 1 < per_slice.size(); ++n) acc += 0.5 * dt * (per_slice[n] + per_slice[n + 1]);
    return acc;
}

double grad_norm(const VectorField& g, std::size_t i) {
    double s = 0.0;
    for (const auto& c : g) s += c[i] * c[i];
    return std::sqrt(s);
}

bool finite_all(const CheckRecord& r) {
    return std::all_of(r.values.begin(), r.values.end(), [](const auto& kv) { return std::isfinite(kv.second); });
}

// Relative change between a value and its refined counterpart; values both below `floor` count as equal.
double relative_change(double a, double b, double floor = 1e-12) {
    if (std::abs(a) < floor && std::abs(b) < floor) return 0.0;
    return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
}

double ratio_or_one(double a, double b, double floor = 1e-14) {
    if (std::abs(a) < floor && std::abs(b) < floor) return 1.0;
    return b != 0.0 ? a / b : kInf;
}

struct IntegralQuantities {
    double du_over_m = 0.0;
    double du_times_m = 0.0;
    double abs_u = 0.0;
    double energy = 0.0;
};

IntegralQuantities integral_quantities(const SolutionPair& pair, const MFGProblem& problem) {
    const double gamma = problem.hamiltonian.gamma();
    const double alpha = problem.alpha;
    const double abar = derived_exponents(gamma, alpha).alpha_bar;
    const int nt = pair.u.steps();
    std::vector<double> a(static_cast<std::size_t>(nt + 1)), b(a.size()), dm(a.size());
    IntegralQuantities q;
    for (int n = 0; n <= nt; ++n) {
        const Field& m = pair.m[n];
        const VectorField du = gradient(pair.u[n]);
        const VectorField dmg = gradient(m);
        Field fa(m.grid), fb(m.grid), fd(m.grid), fm(m.grid), fu(m.grid);
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double g = std::pow(grad_norm(du, i), gamma);
            fa[i] = g / std::pow(m[i], abar);
            fb[i] = g * std::pow(m[i], 1.0 - abar);
            const double dmi = grad_norm(dmg, i);
            fd[i] = std::pow(m[i], alpha - 1.0) * dmi * dmi;
            fm[i] = std::pow(m[i], 1.0 + alpha);
            fu[i] = std::abs(pair.u[n][i]);
        }
        a[static_cast<std::size_t>(n)] = integrate(fa);
        b[static_cast<std::size_t>(n)] = integrate(fb);
        dm[static_cast<std::size_t>(n)] = integrate(fd);
        q.abs_u = std::max(q.abs_u, integrate(fu));
        // int m^{1+alpha}(t) + int_0^t int m^{alpha-1}|Dm|^2
        std::vector<double> head(dm.begin(), dm.begin() + n + 1);
        q.energy = std::max(q.energy, integrate(fm) + time_integral(head, pair.u.time.dt()));
    }
    q.du_over_m = time_integral(a, pair.u.time.dt());
    q.du_times_m = time_integral(b, pair.u.time.dt());
    return q;
}

struct GradientQuantities {
    double du = 0.0;
    double m = 0.0;
    double dm = 0.0;
};

GradientQuantities gradient_quantities(const SolutionPair& pair) {
    GradientQuantities g;
    for (int n = 0; n <= pair.u.steps(); ++n) {
        const VectorField du = gradient(pair.u[n]);
        const VectorField dm = gradient(pair.m[n]);
        for (std::size_t i = 0; i < pair.m[n].size(); ++i) {
            g.du = std::max(g.du, grad_norm(du, i));
            g.dm = std::max(g.dm, grad_norm(dm, i));
            g.m = std::max(g.m, std::abs(pair.m[n][i]));
        }
    }
    return g;
}

double inverse_sup(const SolutionPair& pair) {
    const double lo = min_density(pair);
    return lo > 0.0 ? 1.0 / lo : kInf;
}

}  // namespace

double CheckRecord::value(const std::string& key) const {
    for (const auto& kv : values)
        if (kv.first == key) return kv.second;
    throw std::out_of_range("CheckRecord " + name + ": no value " + key);
}

bool EstimateReport::all_passed() const {
    return std::all_of(records.begin(), records.end(), [](const CheckRecord& r) { return r.passed; });
}

const CheckRecord& EstimateReport::find(const std::string& name) const {
    for (const auto& r : records)
        if (r.name == name) return r;
    throw std::out_of_range("EstimateReport: no check " + name);
}

std::string EstimateReport::to_text() const {
    std::ostringstream out;
    out.precision(10);
    for (const auto& r : records) {
        for (const auto& kv : r.values) out << r.name << '.' << kv.first << '=' << kv.second << '\n';
        if (!r.location.empty()) out << r.name << ".location=" << r.location << '\n';
        out << r.name << ".passed=" << (r.passed ? "true" : "false") << '\n';
    }
    out << "all_passed=" << (all_passed() ? "true" : "false") << '\n';
    return out.str();
}

DerivedExponents derived_exponents(double gamma, double alpha) {
    if (!(gamma > 1.0 && gamma < 2.0)) throw std::invalid_argument("derived_exponents: gamma must lie in (1, 2)");
    if (!(alpha >= 0.0)) throw std::invalid_argument("derived_exponents: alpha must be nonnegative");
    return DerivedExponents{(gamma - 1.0) * alpha, gamma};
}

CheckRecord check_mass(const SolutionPair& pair) {
    CheckRecord r{"mass", "int m(x,t) dx = 1 for every t", {}, "max_t |int m - 1| <= 1e-10", false, ""};
    double worst = 0.0;
    int where = 0;
    for (int n = 0; n <= pair.m.steps(); ++n) {
        const double dev = std::abs(integrate(pair.m[n]) - 1.0);
        if (!(dev <= worst)) {
            worst = dev;
            where = n;
        }
    }
    r.values = {{"max_deviation", worst}};
    r.passed = worst <= 1e-10;
    if (!r.passed) r.location = "slice " + std::to_string(where);
    return r;
}

CheckRecord check_value_bounds(const SolutionPair& pair, const MFGProblem& problem, const LambdaData& data) {
    CheckRecord r{"value_bounds",
                  "-u(x,t) <= (T-t) sup|V| + sup|Psi| (lower bound), sup|u| <= C (upper bound)",
                  {},
                  "u >= explicit lower bound - 1e-8 on every slice; sup|u| finite",
                  false,
                  ""};
    double m_lo = kInf, m_hi = 0.0;
    for (const auto& s : pair.m.slices) {
        m_lo = std::min(m_lo, s.values.minCoeff());
        m_hi = std::max(m_hi, s.values.maxCoeff());
    }
    const double v_sup = data.potential.sup_abs(std::max(m_lo, 0.0), m_hi);
    const double psi_sup = data.terminal.values.cwiseAbs().maxCoeff();
    double h_sup = 0.0;
    const PVec zero = PVec::Zero(problem.grid.dim());
    for (std::size_t i = 0; i < problem.grid.size(); ++i)
        h_sup = std::max(h_sup, data.hamiltonian.eval(i, zero));
    const double running = v_sup + std::pow(std::max(m_hi, 0.0), problem.alpha) * h_sup;

    double margin = kInf, u_min = kInf, u_max = -kInf;
    std::string where;
    const double horizon = problem.time.horizon();
    for (int n = 0; n <= pair.u.steps(); ++n) {
        const double bound = -((horizon - pair.u.time.time(n)) * running + psi_sup);
        for (std::size_t i = 0; i < pair.u[n].size(); ++i) {
            const double u = pair.u[n][i];
            u_min = std::min(u_min, u);
            u_max = std::max(u_max, u);
            if (u - bound < margin) {
                margin = u - bound;
                where = "slice " + std::to_string(n) + " node " + std::to_string(i);
            }
        }
    }
    r.values = {{"u_min", u_min}, {"u_max", u_max},         {"sup_abs_u", std::max(-u_min, u_max)},
                {"lower_bound_margin", margin}, {"sup_abs_V", v_sup}, {"sup_H_at_zero", h_sup}};
    r.passed = margin >= -1e-8 && finite_all(r);
    if (!r.passed) r.location = where;
    return r;
}

CheckRecord check_integral_estimates(const SolutionPair& pair, const MFGProblem& problem, const Refinement& refined) {
    const DerivedExponents ex = derived_exponents(problem.hamiltonian.gamma(), problem.alpha);
    CheckRecord r{"integral_estimates",
                  "int int |Du|^gamma / m^abar <= C, int int |Du|^gamma m^{1-abar} <= C, int |u| dx <= C, "
                  "int m^{1+alpha} + int int m^{alpha-1} |Dm|^2 <= C",
                  {},
                  refined.pair ? "finite; ratio to the refined solve in [0.5, 2]" : "finite (no refinement supplied)",
                  false,
                  ""};
    const IntegralQuantities q = integral_quantities(pair, problem);
    r.values = {{"alpha_bar", ex.alpha_bar},
                {"du_gamma_over_m_abar", q.du_over_m},
                {"du_gamma_m_one_minus_abar", q.du_times_m},
                {"max_int_abs_u", q.abs_u},
                {"max_m_energy", q.energy}};
    r.passed = finite_all(r);
    if (refined.pair && refined.problem) {
        const IntegralQuantities f = integral_quantities(*refined.pair, *refined.problem);
        const std::pair<const char*, std::pair<double, double>> pairs[] = {
            {"ratio_du_gamma_over_m_abar", {q.du_over_m, f.du_over_m}},
            {"ratio_du_gamma_m_one_minus_abar", {q.du_times_m, f.du_times_m}},
            {"ratio_max_int_abs_u", {q.abs_u, f.abs_u}},
            {"ratio_max_m_energy", {q.energy, f.energy}}};
        for (const auto& [key, ab] : pairs) {
            const double ratio = ratio_or_one(ab.first, ab.second);
            r.values.emplace_back(key, ratio);
            if (!(ratio >= 0.5 && ratio <= 2.0)) {
                r.passed = false;
                r.location = key;
            }
        }
    }
    if (!finite_all(r)) r.location = "non-finite value";
    return r;
}

CheckRecord check_inverse_m(const SolutionPair& pair, const std::vector<double>& r_list) {
    CheckRecord r{"inverse_m",
                  "int m^{-r} dx <= C [1 + (t1 - t)^{-delta}] and ||1/m||_inf <= C on the short horizon",
                  {},
                  "finite; no blow-up trend: last-slice value <= 10x first-slice value (surrogate for the "
                  "unextracted blow-up time)",
                  true,
                  ""};
    const int nt = pair.m.steps();
    for (int n = 0; n <= nt; ++n)
        for (std::size_t i = 0; i < pair.m[n].size(); ++i)
            if (!(pair.m[n][i] > 0.0)) throw PositivityError(i, n, pair.m[n][i]);
    auto slice_inv = [&](int n) { return 1.0 / pair.m[n].values.minCoeff(); };
    r.values.emplace_back("inv_m_sup", inverse_sup(pair));
    r.values.emplace_back("inv_m_first", slice_inv(0));
    r.values.emplace_back("inv_m_last", slice_inv(nt));
    if (slice_inv(nt) > 10.0 * slice_inv(0)) {
        r.passed = false;
        r.location = "||1/m|| growth";
    }
    for (double p : r_list) {
        auto slice_int = [&](int n) {
            Field f = pair.m[n];
            f.values = f.values.array().pow(-p).matrix();
            return integrate(f);
        };
        double worst = 0.0;
        for (int n = 0; n <= nt; ++n) worst = std::max(worst, slice_int(n));
        std::ostringstream key;
        key << "int_m_pow_neg_" << p;
        r.values.emplace_back(key.str() + "_max", worst);
        r.values.emplace_back(key.str() + "_first", slice_int(0));
        r.values.emplace_back(key.str() + "_last", slice_int(nt));
        if (slice_int(nt) > 10.0 * slice_int(0)) {
            r.passed = false;
            r.location = key.str() + " growth";
        }
    }
    if (!finite_all(r)) {
        r.passed = false;
        r.location = "non-finite value";
    }
    return r;
}

CheckRecord check_uniqueness_integrand(const SolutionPair& pair, const MFGProblem& problem, const LambdaData& data,
                                       double q_radius) {
    const double alpha = problem.alpha;
    const double gamma = problem.hamiltonian.gamma();
    CheckRecord r{"uniqueness_integrand",
                  "(i) Q.DpH - H - (alpha/4) Q.D2H.Q >= 0 for Q != 0, (ii) D2H > 0, (iii) dV/dm > 0",
                  {},
                  "all three hold at every candidate node/slice and on sampled |Q| in [1e-3, q_radius]; "
                  "(i) with round-off slack 1e-12 (1 + |H|)",
                  true,
                  ""};
    const HamiltonianModel& h = data.hamiltonian;
    const int dim = problem.grid.dim();
    double term_i_cand = kInf, term_i_samp = kInf, eig = kInf, dv = kInf, f2 = kInf;
    std::string loc_i, loc_eig, loc_dv;
    bool fail_i = false;

    auto term_i = [&](const HamiltonianJet& j, const PVec& q) {
        return q.dot(j.grad) - j.value - 0.25 * alpha * q.dot(j.hess * q);
    };
    for (int n = 0; n <= pair.u.steps(); ++n) {
        const SliceCoefficients c = slice_coefficients(problem, data, pair.u[n], pair.m[n], n);
        for (std::size_t i = 0; i < c.m.size(); ++i) {
            PVec q(dim);
            for (int a = 0; a < dim; ++a) q[a] = c.q[static_cast<std::size_t>(a)][i];
            HamiltonianJet j;
            j.value = c.h[i];
            j.grad = PVec(dim);
            for (int a = 0; a < dim; ++a) j.grad[a] = c.dph[static_cast<std::size_t>(a)][i];
            j.hess = c.hess[i];
            const double ti = term_i(j, q);
            const double slope = data.potential.slope(c.m[i]);
            f2 = std::min(f2, alpha * std::pow(c.m_eff[i], alpha - 1.0) * ti + slope);
            if (q.norm() > 1e-12) {
                term_i_cand = std::min(term_i_cand, ti);
                if (ti < -1e-12 * (1.0 + std::abs(j.value)) && !fail_i) {
                    fail_i = true;
                    loc_i = "(i) at slice " + std::to_string(n) + " node " + std::to_string(i) +
                            " |Q|=" + std::to_string(q.norm());
                }
            }
            const double e = Eigen::SelfAdjointEigenSolver<PMat>(j.hess).eigenvalues().minCoeff();
            if (e < eig) {
                eig = e;
                loc_eig = "(ii) at slice " + std::to_string(n) + " node " + std::to_string(i);
            }
            if (slope < dv) {
                dv = slope;
                loc_dv = "(iii) at slice " + std::to_string(n) + " node " + std::to_string(i);
            }
        }
    }
    // Radial models: one direction per radius covers every momentum of that size.
    const int samples = 25;
    for (std::size_t i = 0; i < problem.grid.size(); ++i) {
        for (int s = 0; s < samples; ++s) {
            const double rad = 1e-3 * std::pow(q_radius / 1e-3, static_cast<double>(s) / (samples - 1));
            PVec q = PVec::Zero(dim);
            q[0] = rad;
            const HamiltonianJet j = h.jet(i, q);
            const double ti = term_i(j, q);
            term_i_samp = std::min(term_i_samp, ti);
            if (ti < -1e-12 * (1.0 + std::abs(j.value)) && !fail_i) {
                fail_i = true;
                loc_i = "(i) at sampled node " + std::to_string(i) + " |Q|=" + std::to_string(rad);
            }
            const double e = Eigen::SelfAdjointEigenSolver<PMat>(j.hess).eigenvalues().minCoeff();
            if (e < eig) {
                eig = e;
                loc_eig = "(ii) at sampled node " + std::to_string(i) + " |Q|=" + std::to_string(rad);
            }
        }
    }
    r.values = {{"min_term_i_candidate", term_i_cand},
                {"min_term_i_sampled", term_i_samp},
                {"min_hessian_eigenvalue", eig},
                {"min_dv_dm", dv},
                {"min_f2_weight", f2},
                {"alpha_margin", 4.0 / gamma - alpha}};
    std::vector<std::string> where;
    if (fail_i) where.push_back(loc_i);
    if (!(eig > 0.0)) where.push_back(loc_eig);
    if (!(dv > 0.0)) where.push_back(loc_dv);
    r.passed = where.empty();
    for (std::size_t k = 0; k < where.size(); ++k) r.location += (k ? "; " : "") + where[k];
    return r;
}

CheckRecord check_gradient_bound(const SolutionPair& pair, const Refinement& refined) {
    CheckRecord r{"gradient_bound",
                  "||Du||_inf <= C, ||m||_inf <= C, ||Dm||_inf <= C on the short horizon",
                  {},
                  refined.pair ? "finite; each sup-norm changes by < 5% under refinement" : "finite (no refinement supplied)",
                  false,
                  ""};
    const GradientQuantities g = gradient_quantities(pair);
    r.values = {{"sup_du", g.du}, {"sup_m", g.m}, {"sup_dm", g.dm}};
    r.passed = finite_all(r);
    if (refined.pair) {
        const GradientQuantities f = gradient_quantities(*refined.pair);
        const std::pair<const char*, std::pair<double, double>> pairs[] = {
            {"change_sup_du", {g.du, f.du}}, {"change_sup_m", {g.m, f.m}}, {"change_sup_dm", {g.dm, f.dm}}};
        for (const auto& [key, ab] : pairs) {
            const double c = relative_change(ab.first, ab.second);
            r.values.emplace_back(key, c);
            if (!(c < 0.05)) {
                r.passed = false;
                r.location = key;
            }
        }
    }
    if (!finite_all(r)) r.location = "non-finite value";
    return r;
}

CheckRecord check_positivity(const SolutionPair& pair, const MFGProblem& problem, const Refinement& refined) {
    CheckRecord r{"positivity",
                  "m > 0 with ||1/m||_inf <= C on the short horizon",
                  {},
                  refined.pair ? "min m > 0, min m > congestion floor, ||1/m||_inf changes by < 5% under refinement"
                               : "min m > 0, min m > congestion floor",
                  false,
                  ""};
    const double lo = min_density(pair);
    r.values = {{"min_m", lo}, {"m_floor", problem.m_floor}, {"inv_m_sup", inverse_sup(pair)}};
    r.passed = lo > 0.0 && lo > problem.m_floor;
    if (!r.passed) r.location = lo > 0.0 ? "congestion floor active" : "nonpositive density";
    if (refined.pair) {
        const double c = relative_change(inverse_sup(pair), inverse_sup(*refined.pair));
        r.values.emplace_back("change_inv_m_sup", c);
        if (!(c < 0.05)) {
            r.passed = false;
            r.location = "||1/m|| refinement";
        }
    }
    return r;
}

EstimateReport run_estimates(const SolutionPair& pair, const MFGProblem& problem, const LambdaData& data,
                             const Refinement& refined) {
    EstimateReport rep;
    const DerivedExponents ex = derived_exponents(problem.hamiltonian.gamma(), problem.alpha);
    CheckRecord exps{"derived_exponents",
                     "abar = (gamma - 1) alpha < 1 and q(r) = r + 2 abar / (2 - gamma) > r",
                     {{"alpha_bar", ex.alpha_bar}, {"q_of_1", ex.q_of_r(1.0)}, {"q_of_2", ex.q_of_r(2.0)}},
                     "abar < 1",
                     ex.alpha_bar_below_one() && ex.q_of_r(1.0) >= 1.0,
                     ""};
    rep.records.push_back(exps);
    rep.records.push_back(check_mass(pair));
    rep.records.push_back(check_positivity(pair, problem, refined));
    rep.records.push_back(check_value_bounds(pair, problem, data));
    rep.records.push_back(check_integral_estimates(pair, problem, refined));
    // Both need m > 0; the positivity record already reports the failure otherwise.
    if (min_density(pair) > 0.0) {
        rep.records.push_back(check_inverse_m(pair, {1.0, 2.0, 4.0}));
        rep.records.push_back(check_uniqueness_integrand(pair, problem, data));
    }
    rep.records.push_back(check_gradient_bound(pair, refined));
    return rep;
}

}  // namespace mfgc
