#pragma once

#include <cstddef>
#include <vector>

namespace loft {

// Full eigendecomposition of a dense symmetric matrix (row-major n x n) via
// cyclic Jacobi rotations. Returns eigenvalues sorted ascending. Intended for
// the small kernels used here (n <= a few hundred).
std::vector<double> symmetric_eigenvalues(const std::vector<double>& a, std::size_t n);

// Smallest eigenvalue through an independent route: a Gershgorin upper bound
// mu >= lambda_max, then power iteration on (mu*I - A). Serves as the
// cross-check against the Jacobi decomposition.
double smallest_eigenvalue_power(const std::vector<double>& a, std::size_t n);

double max_abs_offdiag_asymmetry(const std::vector<double>& a, std::size_t n);

} // namespace loft
