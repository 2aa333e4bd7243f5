#pragma once

#include "qsd/model.hpp"

#include <cmath>
#include <string>

namespace qsd::test {

inline DiffusionModel make_model(const std::string& drift, const std::string& kappa, double alpha) {
    DiffusionModel m;
    m.drift = Coefficient::of_expression(drift);
    m.killing = Coefficient::of_expression(kappa);
    m.boundary = std::isinf(alpha) ? BoundaryCondition::absorbing() : BoundaryCondition::elastic(alpha);
    return m;
}

inline constexpr double kInfAlpha = std::numeric_limits<double>::infinity();

}  // namespace qsd::test
