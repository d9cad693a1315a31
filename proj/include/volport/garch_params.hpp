#pragma once

#include <cmath>
#include <string>

#include "volport/errors.hpp"

namespace volport {

/// GARCH(1,1) coefficients: sigma2_t = omega + alpha * eps_{t-1}^2 + beta * sigma2_{t-1}.
struct GarchParams {
  double omega = 0.0;
  double alpha = 0.0;
  double beta = 0.0;

  bool valid() const {
    return std::isfinite(omega) && std::isfinite(alpha) && std::isfinite(beta) && omega > 0.0 &&
           alpha >= 0.0 && beta >= 0.0 && alpha + beta < 1.0;
  }

  double persistence() const { return alpha + beta; }

  /// Long-run variance omega / (1 - alpha - beta).
  double unconditional_variance() const { return omega / (1.0 - alpha - beta); }

  void validate() const {
    if (!valid())
      throw NumericalError("invalid GARCH(1,1) parameters: omega=" + std::to_string(omega) +
                           " alpha=" + std::to_string(alpha) + " beta=" + std::to_string(beta));
  }
};

} // namespace volport
