#pragma once

#include "mftma/common.hpp"

namespace mftma {

struct NnlsResult {
  Vector coefficients;   // mu >= 0
  Vector residual;       // A * mu - target
  int iterations = 0;
  bool converged = false;
};

/// Solves min_{mu >= 0} || A mu - target ||^2 with the Lawson-Hanson
/// active-set method. A is (n x m); the passive-set least squares use a
/// column-pivoted QR. `max_iterations` <= 0 means the canonical 10*m cap.
NnlsResult nnls(const Matrix& a, const Vector& target,
                double tolerance = 1e-8, int max_iterations = 0);

}  // namespace mftma
