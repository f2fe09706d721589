#pragma once

#include <cstddef>
#include <vector>

namespace pmelab {

/// Thomas algorithm. sub[0] and sup[n-1] are ignored. Intended for the
/// diagonally dominant M-matrices produced by the implicit schemes; there is
/// no pivoting.
std::vector<double> solve_tridiagonal(const std::vector<double>& sub, const std::vector<double>& diag,
                                      const std::vector<double>& sup, std::vector<double> rhs);

}  // namespace pmelab
