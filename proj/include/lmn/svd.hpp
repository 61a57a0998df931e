#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "lmn/matrix.hpp"

namespace lmn {

/// Factorization M = V * diag(S) * U^T with orthonormal columns in V (left
/// singular vectors, rows(M) x r) and U (right singular vectors, cols(M) x r),
/// S sorted descending. The V/S/U naming follows the data-matrix convention
/// used throughout this project.
struct SvdResult {
    Matrix V;
    std::vector<double> S;
    Matrix U;
};

struct SvdOptions {
    std::optional<std::size_t> max_rank;  // keep at most this many components
    double tol = 0.0;                     // drop sigma_i <= tol * sigma_0
    std::size_t max_sweeps = 0;           // 0 => 100 * max(rows, cols)
};

/// One-sided Jacobi SVD. Deterministic sign convention: the first entry of
/// each column of U with magnitude above 1e-12 times the column max is made
/// nonnegative (V flips in tandem).
SvdResult svd(const Matrix& m, const SvdOptions& opts = {});

/// Same contract as svd, computed via a Jacobi eigendecomposition of the
/// smaller of M M^T and M^T M; the other factor is recovered by projection
/// and re-orthonormalized. Loses singular values below ~sqrt(eps) * sigma_0.
SvdResult gram_svd(const Matrix& m, const SvdOptions& opts = {});

/// Number of entries with S_i > rel_tol * S_0. Zero for empty or all-zero S.
std::size_t rank_estimate(std::span<const double> singular_values, double rel_tol = 1e-10);

/// Symmetric eigendecomposition by cyclic Jacobi rotations: G = Q diag(w) Q^T
/// with eigenvalues sorted descending. G must be symmetric.
void symmetric_eig(const Matrix& g, Matrix& q, std::vector<double>& w,
                   std::size_t max_sweeps = 0);

}  // namespace lmn
