#pragma once

#include "mfgc/grid.hpp"

#include <string>

namespace mfgc {

/// Separable potential V(x, m) = v1(x) + v2(m), optionally blended with arctan:
/// V_lambda = (1 - lambda) V + lambda * arctan(m).
class Potential {
public:
    enum class Kind { Arctan, Linear, Power };

    Potential() = default;
    /// `parameter` is the slope for Linear (v2 = k m) and the exponent for Power (v2 = m^k).
    Potential(Field v1, Kind kind, double parameter = 1.0, double lambda = 0.0);

    Potential with_lambda(double lambda) const;

    double value(std::size_t node, double m) const;
    /// d/dm of value(node, m).
    double slope(double m) const;

    const Field& spatial_part() const { return v1_; }
    Kind kind() const { return kind_; }
    double parameter() const { return parameter_; }
    double lambda() const { return lambda_; }

    /// Upper bound of |V_lambda(x, m)| over all x and m in [m_lo, m_hi]; exact global sup
    /// for the bounded arctan coupling.
    double sup_abs(double m_lo, double m_hi) const;

    static Kind parse_kind(const std::string& name);
    static std::string kind_name(Kind kind);

private:
    double coupling(double m) const;
    double coupling_slope(double m) const;

    Field v1_;
    Kind kind_ = Kind::Arctan;
    double parameter_ = 1.0;
    double lambda_ = 0.0;
};

}  // namespace mfgc
