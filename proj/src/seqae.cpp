#include "lmn/seqae.hpp"

#include <algorithm>
#include <cmath>

#include "lmn/errors.hpp"
#include "lmn/svd.hpp"

namespace lmn::seqae {

namespace {

void validate(const SequenceBatch& batch) {
    if (batch.sequences.empty()) throw InvalidInput("seqae: empty batch");
    if (batch.dim == 0) throw InvalidInput("seqae: zero input dimension");
    for (const auto& seq : batch.sequences) {
        if (seq.empty()) throw InvalidInput("seqae: empty sequence in batch");
        for (const auto& x : seq) {
            if (x.size() != batch.dim) throw InvalidInput("seqae: vector dimension mismatch");
            if (!all_finite(x)) throw InvalidInput("seqae: non-finite input");
        }
    }
}

// Right singular factor and spectrum of the data matrix without forming it:
// eigendecompose the row Gram G = Xi Xi^T, whose (s,t) entry is the prefix
// sum of <x_{s-j}, x_{t-j}> along the diagonal, then project U = Xi^T V S^-1.
std::pair<std::vector<double>, Matrix> factor_via_row_gram(const SequenceBatch& batch) {
    const std::size_t a = batch.dim;
    const std::size_t max_len = batch.max_len();
    const std::size_t n = batch.total_steps();

    std::vector<std::size_t> offset(batch.sequences.size());
    {
        std::size_t off = 0;
        for (std::size_t q = 0; q < batch.sequences.size(); ++q) {
            offset[q] = off;
            off += batch.sequences[q].size();
        }
    }

    Matrix gram(n, n);
    for (std::size_t q1 = 0; q1 < batch.sequences.size(); ++q1) {
        const auto& s1 = batch.sequences[q1];
        for (std::size_t q2 = q1; q2 < batch.sequences.size(); ++q2) {
            const auto& s2 = batch.sequences[q2];
            for (std::size_t s = 0; s < s1.size(); ++s) {
                for (std::size_t t = 0; t < s2.size(); ++t) {
                    double c = dot(s1[s], s2[t]);
                    if (s > 0 && t > 0) c += gram(offset[q1] + s - 1, offset[q2] + t - 1);
                    gram(offset[q1] + s, offset[q2] + t) = c;
                    gram(offset[q2] + t, offset[q1] + s) = c;
                }
            }
        }
    }

    Matrix q;
    std::vector<double> lambda;
    symmetric_eig(gram, q, lambda);

    // Same resolution limit as the Gram-matrix route: eigenvalue noise of
    // order eps*lambda0 would otherwise masquerade as rank.
    const double lambda0 = lambda.empty() ? 0.0 : std::max(lambda[0], 0.0);
    std::size_t kept = 0;
    while (kept < lambda.size() && lambda[kept] > 1e-14 * lambda0) ++kept;
    kept = std::max<std::size_t>(kept, 1);

    std::vector<double> spectrum(kept);
    for (std::size_t i = 0; i < kept; ++i) spectrum[i] = std::sqrt(std::max(lambda[i], 0.0));

    Matrix u(a * max_len, kept);
    for (std::size_t qi = 0; qi < batch.sequences.size(); ++qi) {
        const auto& seq = batch.sequences[qi];
        for (std::size_t t = 0; t < seq.size(); ++t) {
            const std::size_t row = offset[qi] + t;
            // Row (qi, t) of Xi holds x_{t+1-i} in block i (1-based, i <= t+1).
            for (std::size_t blk = 0; blk <= t; ++blk) {
                const Vec& x = seq[t - blk];
                for (std::size_t c = 0; c < a; ++c) {
                    const double xv = x[c];
                    if (xv == 0.0) continue;
                    double* urow = u.data() + (blk * a + c) * kept;
                    for (std::size_t j = 0; j < kept; ++j) {
                        if (spectrum[j] > 0.0) urow[j] += xv * q(row, j) / spectrum[j];
                    }
                }
            }
        }
    }
    for (std::size_t j = 0; j < kept; ++j) {
        if (spectrum[j] == 0.0) u(j % u.rows(), j) = 1.0;
    }

    // Re-orthonormalize the projected factor (modified Gram-Schmidt).
    for (std::size_t j = 0; j < u.cols(); ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double proj = 0.0;
            for (std::size_t i = 0; i < u.rows(); ++i) proj += u(i, k) * u(i, j);
            for (std::size_t i = 0; i < u.rows(); ++i) u(i, j) -= proj * u(i, k);
        }
        double norm2 = 0.0;
        for (std::size_t i = 0; i < u.rows(); ++i) norm2 += u(i, j) * u(i, j);
        if (norm2 > 0.0) {
            const double inv = 1.0 / std::sqrt(norm2);
            for (std::size_t i = 0; i < u.rows(); ++i) u(i, j) *= inv;
        }
    }
    return {std::move(spectrum), std::move(u)};
}

// A and B from the first p columns of the right singular basis: A reads the
// newest input block of each basis vector; B chains block i to block i-1.
AutoencoderParams params_from_basis(const Matrix& u, std::size_t p, std::size_t a,
                                    std::size_t max_len) {
    AutoencoderParams params;
    params.p = p;
    params.a = a;
    params.train_len = max_len;
    params.A = Matrix(p, a);
    for (std::size_t i = 0; i < a && i < u.rows(); ++i)
        for (std::size_t j = 0; j < p; ++j) params.A(j, i) = u(i, j);

    params.B = Matrix(p, p);
    for (std::size_t blk = 1; blk < max_len; ++blk) {
        for (std::size_t c = 0; c < a; ++c) {
            const double* cur = u.data() + (blk * a + c) * u.cols();
            const double* prev = u.data() + ((blk - 1) * a + c) * u.cols();
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t j = 0; j < p; ++j) params.B(i, j) += cur[i] * prev[j];
        }
    }
    return params;
}

}  // namespace

std::size_t SequenceBatch::max_len() const {
    std::size_t m = 0;
    for (const auto& s : sequences) m = std::max(m, s.size());
    return m;
}

std::size_t SequenceBatch::total_steps() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.size();
    return n;
}

Matrix build_data_matrix(const SequenceBatch& batch) {
    validate(batch);
    const std::size_t a = batch.dim;
    const std::size_t max_len = batch.max_len();
    Matrix xi(batch.total_steps(), a * max_len);
    std::size_t row = 0;
    for (const auto& seq : batch.sequences) {
        for (std::size_t t = 0; t < seq.size(); ++t, ++row) {
            for (std::size_t blk = 0; blk <= t; ++blk) {
                const Vec& x = seq[t - blk];
                for (std::size_t c = 0; c < a; ++c) xi(row, blk * a + c) = x[c];
            }
        }
    }
    return xi;
}

FitResult fit(const SequenceBatch& batch, std::optional<std::size_t> p,
              const FitOptions& options) {
    validate(batch);
    if (p && *p == 0) throw InvalidInput("seqae::fit: p must be >= 1");

    const std::size_t a = batch.dim;
    const std::size_t max_len = batch.max_len();
    const std::size_t n = batch.total_steps();
    const std::size_t xi_entries = n * a * max_len;

    std::vector<double> spectrum;
    Matrix u_full;
    if (xi_entries <= options.materialize_budget) {
        const Matrix xi = build_data_matrix(batch);
        // The one-sided route has the best relative accuracy; the Gram route
        // is cheaper once the data matrix gets large.
        SvdResult f = xi_entries <= 1'000'000 ? svd(xi) : gram_svd(xi);
        spectrum = std::move(f.S);
        u_full = std::move(f.U);
    } else {
        auto [s, u] = factor_via_row_gram(batch);
        spectrum = std::move(s);
        u_full = std::move(u);
    }

    const std::size_t rank = rank_estimate(spectrum, options.rank_rel_tol);
    std::size_t p_eff = p ? std::min(*p, rank) : rank;
    if (!p && options.max_auto_p > 0) p_eff = std::min(p_eff, options.max_auto_p);
    p_eff = std::max<std::size_t>(p_eff, 1);
    p_eff = std::min(p_eff, u_full.cols());

    Matrix u(u_full.rows(), p_eff);
    for (std::size_t i = 0; i < u_full.rows(); ++i)
        for (std::size_t j = 0; j < p_eff; ++j) u(i, j) = u_full(i, j);

    AutoencoderParams params = params_from_basis(u, p_eff, a, max_len);
    return {std::move(params), std::move(spectrum), std::move(u)};
}

AutoencoderParams truncate_to(const FitResult& fitted, std::size_t p) {
    if (p == 0) throw InvalidInput("seqae::truncate_to: p must be >= 1");
    p = std::min(p, fitted.U.cols());
    return params_from_basis(fitted.U, p, fitted.params.a, fitted.params.train_len);
}

std::vector<Vec> encode(const AutoencoderParams& params, const Sequence& sequence) {
    std::vector<Vec> states;
    states.reserve(sequence.size());
    Vec y(params.p, 0.0);
    for (const Vec& x : sequence) {
        if (x.size() != params.a) throw InvalidInput("seqae::encode: input dimension mismatch");
        Vec next(params.p, 0.0);
        add_matvec(next, params.A, x);
        add_matvec(next, params.B, y);
        y = std::move(next);
        states.push_back(y);
    }
    return states;
}

std::pair<Vec, Vec> decode_step(const AutoencoderParams& params, std::span<const double> y) {
    if (y.size() != params.p) throw InvalidInput("seqae::decode_step: state dimension mismatch");
    Vec x_hat(params.a, 0.0);
    Vec y_prev(params.p, 0.0);
    add_matvec_transposed(x_hat, params.A, y);
    add_matvec_transposed(y_prev, params.B, y);
    return {std::move(x_hat), std::move(y_prev)};
}

Sequence reconstruct(const AutoencoderParams& params, std::span<const double> y_final,
                     std::size_t steps) {
    if (steps == 0) throw InvalidInput("seqae::reconstruct: steps must be >= 1");
    Sequence out;
    out.reserve(steps);
    Vec y(y_final.begin(), y_final.end());
    for (std::size_t i = 0; i < steps; ++i) {
        auto [x_hat, y_prev] = decode_step(params, y);
        out.push_back(std::move(x_hat));
        y = std::move(y_prev);
    }
    return out;
}

ReconstructionReport reconstruction_error(const AutoencoderParams& params,
                                          const SequenceBatch& batch) {
    validate(batch);
    ReconstructionReport report;
    for (const auto& seq : batch.sequences) {
        const auto states = encode(params, seq);
        const Sequence rec = reconstruct(params, states.back(), seq.size());
        std::vector<double> errors(seq.size(), 0.0);
        for (std::size_t t = 0; t < seq.size(); ++t) {
            // rec is most-recent-first: rec[0] is the estimate of the last input.
            const Vec& x_hat = rec[seq.size() - 1 - t];
            double e = 0.0;
            for (std::size_t c = 0; c < params.a; ++c) {
                const double d = x_hat[c] - seq[t][c];
                e += d * d;
            }
            errors[t] = e;
            report.total += e;
        }
        report.per_timestep.push_back(std::move(errors));
    }
    return report;
}

}  // namespace lmn::seqae
