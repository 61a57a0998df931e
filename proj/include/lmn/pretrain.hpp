#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "lmn/data.hpp"
#include "lmn/matrix.hpp"
#include "lmn/model.hpp"
#include "lmn/seqae.hpp"
#include "lmn/train.hpp"

namespace lmn::pretrain {

using model::Sequence;

struct PretrainConfig {
    std::size_t k = 10;      // unroll length of the stage-one network
    std::size_t hidden = 16; // hidden units of the stage-one network
    std::optional<std::size_t> p_mem;  // memory units; empty = full rank
    train::TrainConfig unfolded_train;
    bool selu_hidden = true;
    bool zero_last_output_lag = true;  // drop the lag-k output term in fidelity checks
    seqae::FitOptions fit;
};

/// Hidden-state sequences of the unfolded network over the given inputs.
seqae::SequenceBatch collect_hidden_states(const model::UnfoldedParams& unfolded,
                                           const std::vector<Sequence>& inputs);

/// U = [Aᵀ; AᵀBᵀ; ...; Aᵀ(Bᵀ)^(k-1)], k blocks of p rows each (k·p x m).
Matrix build_decoder_stack(const Matrix& A, const Matrix& B, std::size_t k);

/// Rewires an unfolded network into an equivalent memory-state network:
/// W_xh copied, W_hm = A, W_mm = B, W_mh = [W_hh_1 .. W_hh_k]·U, and
/// W_out = [W_o_0 .. W_o_(k-1)]·U so the memory's most recent block feeds
/// the output at lag 0. The lag-k output term has no memory image and is
/// dropped (see zero_last_output_lag).
model::LmnParams transfer_weights(const model::UnfoldedParams& unfolded, const Matrix& A,
                                  const Matrix& B, std::size_t k);

struct SequenceFidelity {
    double max_hidden_diff = 0.0;
    double max_output_diff = 0.0;
};

struct FidelityReport {
    double max_hidden_diff = 0.0;
    double max_output_diff = 0.0;
    std::vector<SequenceFidelity> per_sequence;
};

/// Runs both networks on each sequence and reports elementwise deviations of
/// hidden states and outputs. With zero_last_output_lag the unfolded output
/// is computed without its lag-k term, matching what the transfer preserves.
FidelityReport fidelity_report(const model::UnfoldedParams& unfolded,
                               const model::LmnParams& lmn,
                               const std::vector<Sequence>& inputs,
                               bool zero_last_output_lag);

struct PretrainDiagnostics {
    std::size_t ae_rank = 0;
    double ae_total_error = 0.0;
    double max_hidden_diff = 0.0;
    double max_output_diff = 0.0;
    std::vector<double> per_timestep_error_profile;  // summed across sequences
    std::vector<train::EpochRecord> unfolded_history;
};

/// Three stages: train the unfolded network on next-frame prediction, fit the
/// linear autoencoder on its hidden states, transfer the weights.
std::pair<model::LmnParams, PretrainDiagnostics> pretrain_pipeline(
    const data::PianoRollDataset& dataset, const PretrainConfig& config);

}  // namespace lmn::pretrain
