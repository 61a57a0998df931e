#include "lmn/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lmn/errors.hpp"

namespace lmn {

namespace {

constexpr double kZeroFloor = 1e-15;  // relative floor below which sigma is treated as 0

// Make the first non-negligible entry of each U column nonnegative,
// flipping the matching V column to keep V * diag(S) * U^T invariant.
void apply_sign_convention(Matrix& v, Matrix& u) {
    for (std::size_t j = 0; j < u.cols(); ++j) {
        double colmax = 0.0;
        for (std::size_t i = 0; i < u.rows(); ++i)
            colmax = std::max(colmax, std::abs(u(i, j)));
        if (colmax == 0.0) continue;
        const double threshold = 1e-12 * colmax;
        double lead = 0.0;
        for (std::size_t i = 0; i < u.rows(); ++i) {
            if (std::abs(u(i, j)) > threshold) {
                lead = u(i, j);
                break;
            }
        }
        if (lead < 0.0) {
            for (std::size_t i = 0; i < u.rows(); ++i) u(i, j) = -u(i, j);
            for (std::size_t i = 0; i < v.rows(); ++i) v(i, j) = -v(i, j);
        }
    }
}

// Truncate factors to rank r = min(max_rank, #{sigma > max(tol, floor) * sigma_0}).
// An all-zero matrix keeps one component with sigma = 0 and unit basis vectors
// so the returned factors still carry valid shapes and orthonormal columns.
SvdResult truncate(Matrix&& v, std::vector<double>&& s, Matrix&& u, const SvdOptions& opts) {
    const double s0 = s.empty() ? 0.0 : s[0];
    const double cutoff = std::max(opts.tol, kZeroFloor) * s0;
    std::size_t r = 0;
    while (r < s.size() && s[r] > cutoff) ++r;
    if (opts.max_rank) r = std::min(r, *opts.max_rank);

    if (r == 0) {
        SvdResult zero;
        zero.V = Matrix(v.rows(), 1);
        zero.V(0, 0) = 1.0;
        zero.S = {0.0};
        zero.U = Matrix(u.rows(), 1);
        zero.U(0, 0) = 1.0;
        return zero;
    }

    SvdResult out;
    out.V = Matrix(v.rows(), r);
    out.U = Matrix(u.rows(), r);
    out.S.assign(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(r));
    for (std::size_t i = 0; i < v.rows(); ++i)
        for (std::size_t j = 0; j < r; ++j) out.V(i, j) = v(i, j);
    for (std::size_t i = 0; i < u.rows(); ++i)
        for (std::size_t j = 0; j < r; ++j) out.U(i, j) = u(i, j);
    apply_sign_convention(out.V, out.U);
    return out;
}

// One-sided Jacobi on the columns of w (rows >= cols). On return the columns
// of w are mutually orthogonal and j accumulates the applied rotations.
void one_sided_jacobi(Matrix& w, Matrix& j, std::size_t max_sweeps) {
    const std::size_t n = w.rows();
    const std::size_t d = w.cols();
    // Dot products carry rounding noise of order sqrt(n) * machine eps, so a
    // tighter threshold makes degenerate column clusters rotate forever.
    const double eps = std::max(1e-13, std::sqrt(static_cast<double>(n)) * 4e-15);

    // Columns whose mass has collapsed to rounding residue are pure noise:
    // relative to each other they stay correlated no matter how often they
    // are rotated, so they must be deflated, not orthogonalized. The
    // Frobenius norm is rotation invariant, making it a stable yardstick.
    double fro2 = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) fro2 += w(i, c) * w(i, c);
    const double dead2 = 1e-30 * fro2;

    std::size_t sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double wp = w(i, p), wq = w(i, q);
                    app += wp * wp;
                    aqq += wq * wq;
                    apq += wp * wq;
                }
                if (app <= dead2 || aqq <= dead2) continue;
                if (std::abs(apq) <= eps * std::sqrt(app * aqq)) continue;
                rotated = true;

                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                for (std::size_t i = 0; i < n; ++i) {
                    const double wp = w(i, p), wq = w(i, q);
                    w(i, p) = c * wp - s * wq;
                    w(i, q) = s * wp + c * wq;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    const double jp = j(i, p), jq = j(i, q);
                    j(i, p) = c * jp - s * jq;
                    j(i, q) = s * jp + c * jq;
                }
            }
        }
        if (!rotated) return;
    }
    throw ConvergenceFailure("one-sided Jacobi SVD did not converge", sweep);
}

SvdResult svd_tall(const Matrix& m, const SvdOptions& opts) {
    // m has rows >= cols here.
    const std::size_t n = m.rows();
    const std::size_t d = m.cols();
    const std::size_t budget =
        opts.max_sweeps ? opts.max_sweeps : 100 * std::max(n, d);

    Matrix w = m;
    Matrix j = Matrix::identity(d);
    one_sided_jacobi(w, j, budget);

    std::vector<double> sigma(d);
    for (std::size_t k = 0; k < d; ++k) {
        double norm2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) norm2 += w(i, k) * w(i, k);
        sigma[k] = std::sqrt(norm2);
    }

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

    Matrix v(n, d);
    Matrix u(d, d);
    std::vector<double> s(d);
    for (std::size_t k = 0; k < d; ++k) {
        const std::size_t src = order[k];
        s[k] = sigma[src];
        const double inv = s[k] > 0.0 ? 1.0 / s[k] : 0.0;
        for (std::size_t i = 0; i < n; ++i) v(i, k) = w(i, src) * inv;
        for (std::size_t i = 0; i < d; ++i) u(i, k) = j(i, src);
    }
    return truncate(std::move(v), std::move(s), std::move(u), opts);
}

// Classical modified Gram-Schmidt, in place on the columns of a.
void orthonormalize_columns(Matrix& a) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double proj = 0.0;
            for (std::size_t i = 0; i < a.rows(); ++i) proj += a(i, k) * a(i, j);
            for (std::size_t i = 0; i < a.rows(); ++i) a(i, j) -= proj * a(i, k);
        }
        double norm2 = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) norm2 += a(i, j) * a(i, j);
        const double norm = std::sqrt(norm2);
        if (norm > 0.0)
            for (std::size_t i = 0; i < a.rows(); ++i) a(i, j) /= norm;
    }
}

}  // namespace

SvdResult svd(const Matrix& m, const SvdOptions& opts) {
    if (m.rows() == 0 || m.cols() == 0) throw InvalidInput("svd: empty matrix");
    if (!m.is_finite()) throw InvalidInput("svd: input has non-finite entries");
    if (opts.tol < 0.0) throw InvalidInput("svd: negative tolerance");

    if (m.rows() >= m.cols()) return svd_tall(m, opts);

    // Short-fat: factorize the transpose and swap the roles of U and V.
    SvdResult t = svd_tall(transpose(m), opts);
    SvdResult out;
    out.V = std::move(t.U);
    out.S = std::move(t.S);
    out.U = std::move(t.V);
    apply_sign_convention(out.V, out.U);
    return out;
}

void symmetric_eig(const Matrix& g, Matrix& q, std::vector<double>& w,
                   std::size_t max_sweeps) {
    const std::size_t n = g.rows();
    if (n != g.cols()) throw InvalidInput("symmetric_eig: matrix not square");
    const std::size_t budget = max_sweeps ? max_sweeps : 100 * n;

    Matrix a = g;
    q = Matrix::identity(n);

    double off_scale = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) off_scale = std::max(off_scale, std::abs(a(i, j)));
    // Same rounding-noise consideration as the one-sided sweep threshold.
    const double stop =
        std::max(1e-13, std::sqrt(static_cast<double>(n)) * 4e-15) * std::max(off_scale, 1.0);

    std::size_t sweep = 0;
    for (; sweep < budget; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t r = p + 1; r < n; ++r) off = std::max(off, std::abs(a(p, r)));
        if (off <= stop) break;

        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t r = p + 1; r < n; ++r) {
                const double apr = a(p, r);
                if (std::abs(apr) <= stop * 1e-2) continue;
                const double theta = (a(r, r) - a(p, p)) / (2.0 * apr);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a(i, p), air = a(i, r);
                    a(i, p) = c * aip - s * air;
                    a(i, r) = s * aip + c * air;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a(p, i), ari = a(r, i);
                    a(p, i) = c * api - s * ari;
                    a(r, i) = s * api + c * ari;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double qip = q(i, p), qir = q(i, r);
                    q(i, p) = c * qip - s * qir;
                    q(i, r) = s * qip + c * qir;
                }
            }
        }
    }
    if (sweep == budget) throw ConvergenceFailure("Jacobi eigensolver did not converge", sweep);

    w.resize(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = a(i, i);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return w[x] > w[y]; });
    Matrix qs(n, n);
    std::vector<double> ws(n);
    for (std::size_t k = 0; k < n; ++k) {
        ws[k] = w[order[k]];
        for (std::size_t i = 0; i < n; ++i) qs(i, k) = q(i, order[k]);
    }
    q = std::move(qs);
    w = std::move(ws);
}

SvdResult gram_svd(const Matrix& m, const SvdOptions& opts) {
    if (m.rows() == 0 || m.cols() == 0) throw InvalidInput("gram_svd: empty matrix");
    if (!m.is_finite()) throw InvalidInput("gram_svd: input has non-finite entries");
    if (opts.tol < 0.0) throw InvalidInput("gram_svd: negative tolerance");

    const bool use_right = m.cols() <= m.rows();  // eigendecompose M^T M vs M M^T
    const Matrix gram = use_right ? matmul(transpose(m), m) : matmul(m, transpose(m));

    Matrix q;
    std::vector<double> lambda;
    symmetric_eig(gram, q, lambda, opts.max_sweeps);

    // The Gram route cannot resolve directions below ~sqrt(eps) relative:
    // eigenvalue noise of order eps*lambda0 turns into junk sigmas of order
    // 1e-8*sigma0. Clamp those out so they are not mistaken for rank.
    const double lambda0 = lambda.empty() ? 0.0 : std::max(lambda[0], 0.0);
    const double lambda_floor = 1e-14 * lambda0;
    std::size_t kept = 0;
    while (kept < lambda.size() && lambda[kept] > lambda_floor) ++kept;

    std::vector<double> sigma(kept);
    for (std::size_t i = 0; i < kept; ++i) sigma[i] = std::sqrt(std::max(lambda[i], 0.0));

    Matrix eigvecs(q.rows(), kept == 0 ? 1 : kept);
    for (std::size_t i = 0; i < q.rows(); ++i)
        for (std::size_t j = 0; j < std::max<std::size_t>(kept, 1); ++j)
            eigvecs(i, j) = kept == 0 ? (i == 0 && j == 0 ? 1.0 : 0.0) : q(i, j);
    if (kept == 0) sigma = {0.0};

    // Projected factor: M * u_j / sigma_j (or M^T * v_j / sigma_j).
    const std::size_t proj_dim = use_right ? m.rows() : m.cols();
    Matrix projected(proj_dim, sigma.size());
    for (std::size_t j = 0; j < sigma.size(); ++j) {
        if (sigma[j] == 0.0) {
            projected(j % proj_dim, j) = 1.0;
            continue;
        }
        const double inv = 1.0 / sigma[j];
        for (std::size_t i = 0; i < proj_dim; ++i) {
            double acc = 0.0;
            if (use_right) {
                for (std::size_t k = 0; k < m.cols(); ++k) acc += m(i, k) * eigvecs(k, j);
            } else {
                for (std::size_t k = 0; k < m.rows(); ++k) acc += m(k, i) * eigvecs(k, j);
            }
            projected(i, j) = acc * inv;
        }
    }
    orthonormalize_columns(projected);

    Matrix v = use_right ? std::move(projected) : std::move(eigvecs);
    Matrix u = use_right ? std::move(eigvecs) : std::move(projected);
    return truncate(std::move(v), std::move(sigma), std::move(u), opts);
}

std::size_t rank_estimate(std::span<const double> singular_values, double rel_tol) {
    if (singular_values.empty()) return 0;
    const double s0 = singular_values[0];
    if (s0 <= 0.0) return 0;
    std::size_t r = 0;
    while (r < singular_values.size() && singular_values[r] > rel_tol * s0) ++r;
    return r;
}

}  // namespace lmn
