#include "lmn/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lmn/errors.hpp"
#include "lmn/svd.hpp"

namespace lmn::pretrain {

seqae::SequenceBatch collect_hidden_states(const model::UnfoldedParams& unfolded,
                                           const std::vector<Sequence>& inputs) {
    seqae::SequenceBatch batch;
    batch.dim = unfolded.p;
    batch.sequences.reserve(inputs.size());
    for (const auto& seq : inputs)
        batch.sequences.push_back(model::unfolded_forward(unfolded, seq).h);
    return batch;
}

Matrix build_decoder_stack(const Matrix& A, const Matrix& B, std::size_t k) {
    if (k == 0) throw InvalidInput("decoder stack: k must be positive");
    if (B.rows() != B.cols() || B.rows() != A.rows())
        throw InvalidInput("decoder stack: A is " + std::to_string(A.rows()) + "x" +
                           std::to_string(A.cols()) + " but B is " + std::to_string(B.rows()) +
                           "x" + std::to_string(B.cols()));
    const std::size_t p = A.cols();
    const std::size_t m = A.rows();
    Matrix u(k * p, m);
    Matrix block = transpose(A);  // p x m
    const Matrix bt = transpose(B);
    for (std::size_t i = 0; i < k; ++i) {
        if (i > 0) block = matmul(block, bt);
        for (std::size_t r = 0; r < p; ++r)
            for (std::size_t c = 0; c < m; ++c) u(i * p + r, c) = block(r, c);
    }
    return u;
}

namespace {

Matrix stack_block(const Matrix& u, std::size_t block, std::size_t p) {
    Matrix out(p, u.cols());
    for (std::size_t r = 0; r < p; ++r)
        for (std::size_t c = 0; c < u.cols(); ++c) out(r, c) = u(block * p + r, c);
    return out;
}

}  // namespace

model::LmnParams transfer_weights(const model::UnfoldedParams& unfolded, const Matrix& A,
                                  const Matrix& B, std::size_t k) {
    if (k != unfolded.k)
        throw InvalidInput("transfer: stack depth " + std::to_string(k) +
                           " does not match the unfolded network's " +
                           std::to_string(unfolded.k));
    if (unfolded.w_hh.size() != k || unfolded.w_o.size() != k + 1)
        throw InvalidInput("transfer: lag matrix count does not match k");
    const std::size_t p = unfolded.p;
    const std::size_t m = A.rows();
    if (A.cols() != p)
        throw InvalidInput("transfer W_hm = A: A is " + std::to_string(A.rows()) + "x" +
                           std::to_string(A.cols()) + ", hidden size is " + std::to_string(p));
    if (B.rows() != m || B.cols() != m)
        throw InvalidInput("transfer W_mm = B: B is " + std::to_string(B.rows()) + "x" +
                           std::to_string(B.cols()) + ", memory size is " + std::to_string(m));

    const Matrix u = build_decoder_stack(A, B, k);

    model::LmnParams lmn;
    lmn.a = unfolded.a;
    lmn.p = p;
    lmn.m = m;
    lmn.o = unfolded.o;
    lmn.variant = model::LmnVariant::B;
    lmn.w_xh = unfolded.w_xh;
    lmn.w_hm = A;
    lmn.w_mm = B;

    lmn.w_mh = Matrix(p, m);
    for (std::size_t lag = 1; lag <= k; ++lag) {
        if (unfolded.w_hh[lag - 1].rows() != p || unfolded.w_hh[lag - 1].cols() != p)
            throw InvalidInput("transfer W_mh = [W_hh]U: lag " + std::to_string(lag) +
                               " matrix has wrong shape");
        lmn.w_mh += matmul(unfolded.w_hh[lag - 1], stack_block(u, lag - 1, p));
    }

    lmn.w_out = Matrix(unfolded.o, m);
    for (std::size_t lag = 0; lag < k; ++lag) {
        if (unfolded.w_o[lag].rows() != unfolded.o || unfolded.w_o[lag].cols() != p)
            throw InvalidInput("transfer W_out = [W_o]U: lag " + std::to_string(lag) +
                               " matrix has wrong shape");
        lmn.w_out += matmul(unfolded.w_o[lag], stack_block(u, lag, p));
    }
    return lmn;
}

FidelityReport fidelity_report(const model::UnfoldedParams& unfolded,
                               const model::LmnParams& lmn,
                               const std::vector<Sequence>& inputs,
                               bool zero_last_output_lag) {
    if (lmn.a != unfolded.a || lmn.p != unfolded.p || lmn.o != unfolded.o)
        throw InvalidInput("fidelity: network shapes disagree");
    model::UnfoldedParams reference = unfolded;
    if (zero_last_output_lag) {
        auto& w = reference.w_o[reference.k];
        std::fill(w.data(), w.data() + w.rows() * w.cols(), 0.0);
    }

    FidelityReport report;
    report.per_sequence.reserve(inputs.size());
    for (const auto& seq : inputs) {
        const auto ours = model::lmn_forward(lmn, seq);
        const auto theirs = model::unfolded_forward(reference, seq);
        SequenceFidelity fid;
        for (std::size_t t = 0; t < seq.size(); ++t) {
            for (std::size_t i = 0; i < lmn.p; ++i)
                fid.max_hidden_diff =
                    std::max(fid.max_hidden_diff, std::abs(ours.h[t][i] - theirs.h[t][i]));
            for (std::size_t j = 0; j < lmn.o; ++j)
                fid.max_output_diff =
                    std::max(fid.max_output_diff, std::abs(ours.y[t][j] - theirs.y[t][j]));
        }
        report.max_hidden_diff = std::max(report.max_hidden_diff, fid.max_hidden_diff);
        report.max_output_diff = std::max(report.max_output_diff, fid.max_output_diff);
        report.per_sequence.push_back(fid);
    }
    return report;
}

std::pair<model::LmnParams, PretrainDiagnostics> pretrain_pipeline(
    const data::PianoRollDataset& dataset, const PretrainConfig& config) {
    if (config.k == 0) throw InvalidInput("pretrain: k must be positive");
    if (config.hidden == 0) throw InvalidInput("pretrain: hidden size must be positive");

    const auto train_examples = train::make_next_frame_examples(dataset, data::Split::Train);
    const auto valid_examples = train::make_next_frame_examples(dataset, data::Split::Valid);

    const auto activation =
        config.selu_hidden ? model::Activation::Selu : model::Activation::Tanh;
    train::ModelParams init = model::init_unfolded(dataset.dim, config.hidden, dataset.dim,
                                                   config.k, activation,
                                                   config.unfolded_train.seed);
    auto trained =
        train::train_loop(init, train_examples, valid_examples, config.unfolded_train);
    const auto& unfolded = std::get<model::UnfoldedParams>(trained.best);

    std::vector<Sequence> train_inputs;
    train_inputs.reserve(train_examples.size());
    for (const auto& ex : train_examples) train_inputs.push_back(ex.inputs);

    const auto hidden_batch = collect_hidden_states(unfolded, train_inputs);
    const auto fitted = seqae::fit(hidden_batch, config.p_mem, config.fit);

    auto lmn = transfer_weights(unfolded, fitted.params.A, fitted.params.B, config.k);

    PretrainDiagnostics diag;
    diag.ae_rank = lmn::rank_estimate(fitted.spectrum, config.fit.rank_rel_tol);
    const auto recon = seqae::reconstruction_error(fitted.params, hidden_batch);
    diag.ae_total_error = recon.total;
    diag.per_timestep_error_profile.assign(hidden_batch.max_len(), 0.0);
    for (const auto& per_seq : recon.per_timestep)
        for (std::size_t t = 0; t < per_seq.size(); ++t)
            diag.per_timestep_error_profile[t] += per_seq[t];
    const auto fidelity =
        fidelity_report(unfolded, lmn, train_inputs, config.zero_last_output_lag);
    diag.max_hidden_diff = fidelity.max_hidden_diff;
    diag.max_output_diff = fidelity.max_output_diff;
    diag.unfolded_history = std::move(trained.history);
    return {std::move(lmn), std::move(diag)};
}

}  // namespace lmn::pretrain
