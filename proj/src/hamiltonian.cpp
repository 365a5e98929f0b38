#include "mfgc/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace mfgc {

LagrangianModel::LagrangianModel(double gamma_prime, Field weight) : gamma_prime_(gamma_prime), weight_(std::move(weight)) {
    if (!(gamma_prime > 1.0)) throw std::invalid_argument("LagrangianModel: gamma' must exceed 1");
    if (!(weight_.values.minCoeff() > 0.0)) throw std::invalid_argument("LagrangianModel: weight a(x) must be positive");
}

double LagrangianModel::eval(std::size_t node, const PVec& v) const {
    return weight_[node] * std::pow(1.0 + v.squaredNorm(), 0.5 * gamma_prime_);
}

double legendre_dual_speed(double c, double gamma_prime, double r) {
    if (r == 0.0) return 0.0;
    const double k = c * gamma_prime;
    const double e = 0.5 * gamma_prime - 1.0;
    // phi(rho) = k rho (1+rho^2)^e is increasing and convex for gamma' >= 2, and
    // phi(rho) >= max(k rho, k rho^{gamma'-1}); start at the implied upper bound and let
    // Newton descend monotonically onto the root.
    double rho = std::min(r / k, std::pow(r / k, 1.0 / (gamma_prime - 1.0)));
    for (int it = 0; it < 200; ++it) {
        const double base = 1.0 + rho * rho;
        const double phi = k * rho * std::pow(base, e);
        const double dphi = k * std::pow(base, e - 1.0) * (1.0 + (gamma_prime - 1.0) * rho * rho);
        const double step = (phi - r) / dphi;
        double next = rho - step;
        if (next < 0.0) next = 0.5 * rho;
        if (std::abs(next - rho) <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + rho)) {
            rho = next;
            break;
        }
        rho = next;
    }
    return rho;
}

HamiltonianModel::HamiltonianModel(Base base, double gamma, Field weight, double lambda)
    : base_(base), gamma_(gamma), weight_(std::move(weight)), lambda_(lambda) {
    if (!(gamma > 1.0 && gamma < 2.0)) throw std::invalid_argument("HamiltonianModel: gamma must lie in (1,2)");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("HamiltonianModel: lambda must lie in [0,1]");
    if (!weight_.all_finite() || !(weight_.values.minCoeff() > 0.0))
        throw std::invalid_argument("HamiltonianModel: weight must be finite and positive");
}

HamiltonianModel HamiltonianModel::with_lambda(double lambda) const {
    return HamiltonianModel(base_, gamma_, weight_, lambda);
}

HamiltonianModel::Radial HamiltonianModel::base_radial(std::size_t node, double r) const {
    const double c = weight_[node];
    Radial out;
    if (base_ == Base::IsoPower) {
        const double s = 1.0 + r * r;
        const double g = gamma_;
        out.f = c * std::pow(s, 0.5 * g);
        out.fr_over_r = c * g * std::pow(s, 0.5 * g - 1.0);
        out.fr = out.fr_over_r * r;
        out.frr = c * g * std::pow(s, 0.5 * g - 2.0) * (1.0 + (g - 1.0) * r * r);
        return out;
    }
    const double gp = gamma_prime();
    const double rho = legendre_dual_speed(c, gp, r);
    const double s = 1.0 + rho * rho;
    out.f = rho * r - c * std::pow(s, 0.5 * gp);
    out.fr = rho;
    // F'(r)/r = rho / phi(rho) = 1 / (c gamma' (1+rho^2)^{gamma'/2-1}).
    out.fr_over_r = 1.0 / (c * gp * std::pow(s, 0.5 * gp - 1.0));
    out.frr = 1.0 / (c * gp * std::pow(s, 0.5 * gp - 2.0) * (1.0 + (gp - 1.0) * rho * rho));
    return out;
}

HamiltonianModel::Radial HamiltonianModel::blend_radial(std::size_t node, double r) const {
    Radial out;
    if (lambda_ < 1.0) {
        out = base_radial(node, r);
        out.f *= 1.0 - lambda_;
        out.fr *= 1.0 - lambda_;
        out.fr_over_r *= 1.0 - lambda_;
        out.frr *= 1.0 - lambda_;
    }
    if (lambda_ > 0.0) {
        const double s = 1.0 + r * r;
        const double g = gamma_;
        const double q = g * std::pow(s, 0.5 * g - 1.0);
        out.f += lambda_ * std::pow(s, 0.5 * g);
        out.fr_over_r += lambda_ * q;
        out.fr += lambda_ * q * r;
        out.frr += lambda_ * g * std::pow(s, 0.5 * g - 2.0) * (1.0 + (g - 1.0) * r * r);
    }
    return out;
}

double HamiltonianModel::eval(std::size_t node, const PVec& p) const { return blend_radial(node, p.norm()).f; }

PVec HamiltonianModel::grad(std::size_t node, const PVec& p) const { return jet(node, p).grad; }

PMat HamiltonianModel::hess(std::size_t node, const PVec& p) const { return jet(node, p).hess; }

HamiltonianJet HamiltonianModel::jet(std::size_t node, const PVec& p) const {
    const auto d = p.size();
    const double r = p.norm();
    const Radial rad = blend_radial(node, r);
    HamiltonianJet j;
    j.value = rad.f;
    j.grad = rad.fr_over_r * p;
    // hess = F'' phat phat^T + (F'/r)(I - phat phat^T)
    j.hess = rad.fr_over_r * PMat::Identity(d, d);
    if (r > 0.0) {
        const PVec u = p / r;
        j.hess += (rad.frr - rad.fr_over_r) * (u * u.transpose());
    }
    return j;
}

LagrangianModel HamiltonianModel::dual_lagrangian() const { return LagrangianModel(gamma_prime(), weight_); }

HamiltonianModel::Base HamiltonianModel::parse_base(const std::string& name) {
    if (name == "isopower") return Base::IsoPower;
    if (name == "legendre") return Base::LegendreDual;
    throw std::invalid_argument("unknown hamiltonian '" + name + "' (expected isopower or legendre)");
}

std::string HamiltonianModel::base_name(Base base) { return base == Base::IsoPower ? "isopower" : "legendre"; }

namespace {

// Grid point k of `samples` equispaced points in [-radius, radius].
double grid_coordinate(int k, int samples, double radius) {
    return -radius + 2.0 * radius * static_cast<double>(k) / static_cast<double>(samples - 1);
}

}  // namespace

SupResult brute_force_sup(const std::function<double(const PVec&)>& objective, int dim, double radius, int samples) {
    if (dim < 1 || dim > 2) throw std::invalid_argument("brute_force_sup: dimension must be 1 or 2");
    if (samples < 3 || !(radius > 0.0)) throw std::invalid_argument("brute_force_sup: need samples >= 3 and radius > 0");

    PVec best(dim);
    double best_value = -std::numeric_limits<double>::infinity();
    std::vector<int> best_index(static_cast<std::size_t>(dim), 0);
    PVec v(dim);
    const int outer = dim == 2 ? samples : 1;
    for (int i = 0; i < samples; ++i) {
        for (int j = 0; j < outer; ++j) {
            v[0] = grid_coordinate(i, samples, radius);
            if (dim == 2) v[1] = grid_coordinate(j, samples, radius);
            const double val = objective(v);
            if (val > best_value) {
                best_value = val;
                best = v;
                best_index[0] = i;
                if (dim == 2) best_index[1] = j;
            }
        }
    }
    for (int idx : best_index) {
        if (idx == 0 || idx == samples - 1)
            throw std::domain_error("brute_force_sup: maximizer on the sample boundary; increase the search radius");
    }

    // Finite-difference Newton ascent from the grid maximizer.
    const double spacing = 2.0 * radius / (samples - 1);
    PVec x = best;
    double fx = best_value;
    for (int it = 0; it < 60; ++it) {
        const double h = 1e-4 * std::max(1.0, x.norm());
        PVec g(dim);
        PMat hm(dim, dim);
        for (int a = 0; a < dim; ++a) {
            PVec e = PVec::Zero(dim);
            e[a] = h;
            const double fp = objective(x + e);
            const double fm = objective(x - e);
            g[a] = (fp - fm) / (2.0 * h);
            hm(a, a) = (fp - 2.0 * fx + fm) / (h * h);
        }
        if (dim == 2) {
            PVec e0 = PVec::Zero(2), e1 = PVec::Zero(2);
            e0[0] = h;
            e1[1] = h;
            const double cross = (objective(x + e0 + e1) - objective(x + e0 - e1) - objective(x - e0 + e1) +
                                  objective(x - e0 - e1)) /
                                 (4.0 * h * h);
            hm(0, 1) = hm(1, 0) = cross;
        }
        PVec step;
        const Eigen::SelfAdjointEigenSolver<PMat> eig(hm);
        if (eig.eigenvalues().maxCoeff() < 0.0) {
            step = -hm.ldlt().solve(g);
        } else {
            step = spacing * g / std::max(g.norm(), 1e-300);
        }
        double t = 1.0;
        bool improved = false;
        for (int ls = 0; ls < 40; ++ls) {
            const PVec trial = x + t * step;
            const double ft = objective(trial);
            if (ft >= fx) {
                improved = ft > fx || step.norm() * t < 1e-14;
                x = trial;
                fx = ft;
                break;
            }
            t *= 0.5;
        }
        if (!improved || (t * step).norm() < 1e-13 * std::max(1.0, x.norm())) break;
    }
    return {fx, x};
}

double legendre_transform(const LagrangianModel& lagrangian, std::size_t node, const PVec& p, double v_radius,
                          int v_samples) {
    const auto objective = [&](const PVec& v) { return -v.dot(p) - lagrangian.eval(node, v); };
    return brute_force_sup(objective, static_cast<int>(p.size()), v_radius, v_samples).value;
}

double double_legendre_transform(const LagrangianModel& lagrangian, std::size_t node, const PVec& v, double radius,
                                 int samples) {
    // The p-maximizer is -DL0(v); the inner v-search must contain every visited v.
    const auto objective = [&](const PVec& p) {
        return -p.dot(v) - legendre_transform(lagrangian, node, p, 2.0 * radius + 2.0, samples);
    };
    const double gp = lagrangian.gamma_prime();
    const double a = lagrangian.weight().values.maxCoeff();
    const double p_radius = 2.0 * a * gp * std::pow(1.0 + radius * radius, 0.5 * gp - 0.5) + 1.0;
    return brute_force_sup(objective, static_cast<int>(v.size()), p_radius, samples).value;
}

GrowthConstants transform_growth_constants(const LagrangianModel& lagrangian, double gamma) {
    const double gp = lagrangian.gamma_prime();
    const double a_min = lagrangian.weight().values.minCoeff();
    const double a_max = lagrangian.weight().values.maxCoeff();
    const double factor = std::pow(2.0, 0.5 * gp - 1.0);
    const double c1 = gp * a_min;
    const double c2 = gp * a_max * factor;
    GrowthConstants out;
    out.lower_slope = std::pow(c2, 1.0 - gamma);
    out.upper_slope = std::pow(c1, 1.0 - gamma);
    out.lower_offset = a_max * factor;
    return out;
}

bool AssumptionReport::all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const AssumptionCheck& c) { return c.passed || !c.mandatory; });
}

const AssumptionCheck& AssumptionReport::find(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return c;
    throw std::out_of_range("AssumptionReport: no check named " + name);
}

namespace {

struct Tracker {
    double margin = std::numeric_limits<double>::infinity();
    std::size_t node = 0;
    PVec p;

    void offer(double m, std::size_t n, const PVec& q) {
        if (m < margin) {
            margin = m;
            node = n;
            p = q;
        }
    }
};

AssumptionCheck make_check(std::string name, std::string statement, const Tracker& t, bool strict_positive,
                           bool mandatory = true) {
    AssumptionCheck c;
    c.name = std::move(name);
    c.statement = std::move(statement);
    c.margin = t.margin;
    c.worst_node = t.node;
    c.worst_p = t.p;
    c.passed = strict_positive ? t.margin > 0.0 : t.margin >= 0.0;
    c.mandatory = mandatory;
    return c;
}

}  // namespace

AssumptionReport check_assumptions(const HamiltonianModel& model, double alpha, int dim, const SampleSpec& spec) {
    if (spec.momenta_per_node < 1 || model.weight().size() == 0)
        throw std::invalid_argument("check_assumptions: empty sample set");
    if (dim != model.dim()) throw std::invalid_argument("check_assumptions: dimension differs from the model grid");

    const double gamma = model.gamma();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    // Radii spread log-uniformly over [1e-3, R] with a few deterministic probes, directions uniform.
    std::vector<PVec> momenta;
    momenta.reserve(static_cast<std::size_t>(spec.momenta_per_node));
    for (int k = 0; k < spec.momenta_per_node; ++k) {
        PVec dir(dim);
        for (int a = 0; a < dim; ++a) dir[a] = normal(rng);
        if (dir.norm() == 0.0) dir[0] = 1.0;
        dir.normalize();
        double r = 0.0;
        if (k == 0) {
            r = 1e-6;
        } else if (k == 1) {
            r = spec.momentum_radius;
        } else {
            r = 1e-3 * std::pow(spec.momentum_radius / 1e-3, unit(rng));
        }
        momenta.push_back(r * dir);
    }

    const std::size_t nodes = model.weight().size();
    AssumptionReport report;
    report.sample_count = nodes * momenta.size();

    Tracker convexity_ineq, h_zero, convex, uniq, coercive_ratio;
    double gradient_C = 0.0;
    double coercive_c = std::numeric_limits<double>::infinity();
    for (std::size_t x = 0; x < nodes; ++x) {
        const double h0 = model.eval(x, PVec::Zero(dim));
        h_zero.offer(-h0, x, PVec::Zero(dim));
        for (const PVec& p : momenta) {
            const HamiltonianJet j = model.jet(x, p);
            const double r = p.norm();
            const double pdh = p.dot(j.grad);
            convexity_ineq.offer(h0 - (j.value - pdh), x, p);
            const double lam_min = Eigen::SelfAdjointEigenSolver<PMat>(j.hess).eigenvalues().minCoeff();
            convex.offer(lam_min, x, p);
            uniq.offer(pdh - j.value - 0.25 * alpha * p.dot(j.hess * p), x, p);
            gradient_C = std::max(gradient_C, j.grad.norm() / (std::pow(r, gamma - 1.0) + 1.0));
            if (r >= std::max(1.0, 0.25 * spec.momentum_radius))
                coercive_c = std::min(coercive_c, (pdh - j.value) / std::pow(r, gamma));
        }
    }

    // Coercivity: take c as half the smallest ratio over the upper range of sampled |p|, then the smallest C
    // making p.DpH - H >= c|p|^gamma - C hold on every sample.
    const double c_fit = 0.5 * coercive_c;
    double C_fit = 0.0;
    for (std::size_t x = 0; x < nodes; ++x) {
        for (const PVec& p : momenta) {
            const HamiltonianJet j = model.jet(x, p);
            const double gap = c_fit * std::pow(p.norm(), gamma) - (p.dot(j.grad) - j.value);
            C_fit = std::max(C_fit, gap);
            coercive_ratio.offer(p.dot(j.grad) - j.value - c_fit * std::pow(p.norm(), gamma) + C_fit, x, p);
        }
    }
    // Second pass margins are >= 0 by construction; the pass criterion is c > 0.
    report.coercivity_c = c_fit;
    report.coercivity_C = C_fit;
    report.gradient_growth_C = gradient_C;
    report.min_hessian_eigenvalue = convex.margin;

    report.checks.push_back(make_check("convexity_inequality", "H(x,p) - p.DpH(x,p) <= H(x,0)", convexity_ineq, false));
    {
        auto c = make_check("lagrangian_nonnegative", "H(x,0) = -min_v L0(x,v) <= 0", h_zero, false);
        report.checks.push_back(c);
    }
    {
        Tracker t;
        t.margin = c_fit;
        auto c = make_check("coercivity", "p.DpH - H >= c|p|^gamma - C", t, true);
        c.detail = "c=" + std::to_string(c_fit) + " C=" + std::to_string(C_fit);
        report.checks.push_back(c);
    }
    {
        Tracker t;
        t.margin = std::isfinite(gradient_C) ? 1.0 : -1.0;
        auto c = make_check("gradient_growth", "|DpH| <= C|p|^{gamma-1} + C", t, true);
        c.margin = gradient_C;
        c.detail = "C=" + std::to_string(gradient_C);
        report.checks.push_back(c);
    }
    {
        Tracker t;
        // 2/(d-2) is +infinity for d <= 2.
        const double bound = dim <= 2 ? std::numeric_limits<double>::infinity() : 2.0 / (dim - 2);
        t.margin = alpha < 0.0 ? alpha : bound - alpha;
        auto c = make_check("congestion_exponent", "0 <= alpha < 2/(d-2)", t, true);
        report.checks.push_back(c);
    }
    {
        Tracker t;
        t.margin = std::min(gamma - 1.0, 2.0 - gamma);
        report.checks.push_back(make_check("subquadratic", "1 < gamma < 2", t, true));
    }
    report.checks.push_back(make_check("strict_convexity", "D2ppH(x,p) > 0", convex, true));
    report.checks.push_back(
        make_check("uniqueness_inequality", "DpH.p - H > (alpha/4) p^T D2ppH p for p != 0", uniq, true));
    {
        Tracker t;
        t.margin = 4.0 / gamma - alpha;
        report.checks.push_back(make_check("uniqueness_sufficient", "alpha < 4/gamma", t, true));
    }
    if (spec.potential) {
        Tracker t;
        const int steps = 256;
        for (int k = 0; k <= steps; ++k) {
            const double m = spec.m_min + (spec.m_max - spec.m_min) * k / steps;
            PVec dummy = PVec::Zero(dim);
            dummy[0] = m;
            t.offer(spec.potential->slope(m), 0, dummy);
        }
        report.checks.push_back(make_check("potential_monotone", "V(x,m) strictly increasing in m", t, true));
    }
    return report;
}

}  // namespace mfgc
