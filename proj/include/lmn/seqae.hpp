#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "lmn/matrix.hpp"

namespace lmn::seqae {

using Sequence = std::vector<Vec>;

/// Variable-length sequences of fixed-dimension vectors.
struct SequenceBatch {
    std::size_t dim = 0;
    std::vector<Sequence> sequences;

    std::size_t max_len() const;
    std::size_t total_steps() const;
};

/// Linear sequence autoencoder: encoder y_t = A x_t + B y_{t-1} with y_0 = 0.
/// The decoder [x_t; y_{t-1}] = [A^T; B^T] y_t is derived on demand.
struct AutoencoderParams {
    std::size_t p = 0;          // memory size
    std::size_t a = 0;          // input size
    std::size_t train_len = 0;  // unfolding horizon of the fitted factorization
    Matrix A;                   // p x a
    Matrix B;                   // p x p
};

struct FitOptions {
    double rank_rel_tol = 1e-10;
    std::size_t materialize_budget = 100'000'000;  // max data-matrix entries
    std::size_t max_auto_p = 0;                    // cap for p = auto; 0 = uncapped
};

struct FitResult {
    AutoencoderParams params;
    std::vector<double> spectrum;  // all resolved singular values, descending
    Matrix U;                      // right factor, (a * max_len) x p
};

/// Data matrix: one row per timestep holding the reversed, zero-padded prefix
/// [x_t, x_{t-1}, ..., x_1, 0, ...] as blocks of size dim; sequences stacked.
Matrix build_data_matrix(const SequenceBatch& batch);

/// Closed-form fit via truncated SVD of the data matrix. p = nullopt means
/// the numerical rank at rank_rel_tol (capped by max_auto_p when set);
/// a requested p beyond the numerical rank is reduced to it. Data matrices
/// over the materialization budget are handled through the row-Gram matrix
/// accumulated lag by lag, never forming the data matrix itself.
FitResult fit(const SequenceBatch& batch, std::optional<std::size_t> p,
              const FitOptions& options = {});

/// Autoencoder using only the first p basis columns of an existing fit;
/// p beyond the fitted width is reduced to it.
AutoencoderParams truncate_to(const FitResult& fitted, std::size_t p);

std::vector<Vec> encode(const AutoencoderParams& params, const Sequence& sequence);

/// One decoding step: (x_hat, y_prev) from a state y.
std::pair<Vec, Vec> decode_step(const AutoencoderParams& params, std::span<const double> y);

/// Iterated decoding from y_final; emits `steps` inputs, most recent first.
Sequence reconstruct(const AutoencoderParams& params, std::span<const double> y_final,
                     std::size_t steps);

struct ReconstructionReport {
    // Squared error per timestep, aligned to original time indices, per sequence.
    std::vector<std::vector<double>> per_timestep;
    double total = 0.0;
};

ReconstructionReport reconstruction_error(const AutoencoderParams& params,
                                          const SequenceBatch& batch);

}  // namespace lmn::seqae
