#include "mfgc/potential.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mfgc {

Potential::Potential(Field v1, Kind kind, double parameter, double lambda)
    : v1_(std::move(v1)), kind_(kind), parameter_(parameter), lambda_(lambda) {
    if (!(parameter > 0.0)) throw std::invalid_argument("Potential: coupling parameter must be positive");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("Potential: lambda must lie in [0,1]");
    if (!v1_.all_finite()) throw NumericalError("Potential: non-finite spatial part");
}

Potential Potential::with_lambda(double lambda) const {
    Potential p = *this;
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("Potential: lambda must lie in [0,1]");
    p.lambda_ = lambda;
    return p;
}

double Potential::coupling(double m) const {
    switch (kind_) {
        case Kind::Arctan: return std::atan(m);
        case Kind::Linear: return parameter_ * m;
        case Kind::Power: return std::pow(m, parameter_);
    }
    return 0.0;
}

double Potential::coupling_slope(double m) const {
    switch (kind_) {
        case Kind::Arctan: return 1.0 / (1.0 + m * m);
        case Kind::Linear: return parameter_;
        case Kind::Power: return parameter_ * std::pow(m, parameter_ - 1.0);
    }
    return 0.0;
}

double Potential::value(std::size_t node, double m) const {
    return (1.0 - lambda_) * (v1_[node] + coupling(m)) + lambda_ * std::atan(m);
}

double Potential::slope(double m) const {
    return (1.0 - lambda_) * coupling_slope(m) + lambda_ / (1.0 + m * m);
}

double Potential::sup_abs(double m_lo, double m_hi) const {
    const double v1_sup = v1_.values.cwiseAbs().maxCoeff();
    double coupling_sup = 0.0;
    if (kind_ == Kind::Arctan) {
        coupling_sup = std::numbers::pi / 2.0;
    } else {
        coupling_sup = std::max(std::abs(coupling(m_lo)), std::abs(coupling(m_hi)));
    }
    return (1.0 - lambda_) * (v1_sup + coupling_sup) + lambda_ * std::numbers::pi / 2.0;
}

Potential::Kind Potential::parse_kind(const std::string& name) {
    if (name == "arctan") return Kind::Arctan;
    if (name == "linear") return Kind::Linear;
    if (name == "power") return Kind::Power;
    throw std::invalid_argument("unknown potential coupling '" + name + "' (expected arctan, linear or power)");
}

std::string Potential::kind_name(Kind kind) {
    switch (kind) {
        case Kind::Arctan: return "arctan";
        case Kind::Linear: return "linear";
        case Kind::Power: return "power";
    }
    return "?";
}

}  // namespace mfgc
