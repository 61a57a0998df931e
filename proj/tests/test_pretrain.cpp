#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "lmn/data.hpp"
#include "lmn/errors.hpp"
#include "lmn/model.hpp"
#include "lmn/pretrain.hpp"
#include "lmn/seqae.hpp"
#include "lmn/svd.hpp"
#include "lmn/train.hpp"

using namespace lmn;
using namespace lmn::pretrain;
using model::Activation;
using model::LmnParams;
using model::UnfoldedParams;

namespace {

std::vector<Sequence> random_inputs(std::size_t a, const std::vector<std::size_t>& lengths,
                                    std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<Sequence> out;
    for (std::size_t len : lengths) {
        Sequence seq(len, Vec(a, 0.0));
        for (auto& x : seq)
            for (auto& v : x) v = dist(rng);
        out.push_back(std::move(seq));
    }
    return out;
}

data::PianoRollDataset small_dataset() {
    data::SyntheticSpec spec;
    spec.kind = data::SyntheticKind::RandomBinary;
    spec.dim = 4;
    spec.train_count = 5;
    spec.valid_count = 2;
    spec.test_count = 2;
    spec.length = 8;
    spec.density = 0.4;
    spec.seed = 12;
    auto ds = data::make_synthetic(spec);
    ds.dim = 4;
    return ds;
}

}  // namespace

TEST_CASE("collected hidden states replay the forward pass") {
    const UnfoldedParams u = model::init_unfolded(3, 5, 2, 2, Activation::Tanh, 31);
    const auto inputs = random_inputs(3, {4, 6}, 41);
    const auto batch = collect_hidden_states(u, inputs);
    REQUIRE(batch.dim == 5);
    REQUIRE(batch.sequences.size() == 2);
    for (std::size_t q = 0; q < inputs.size(); ++q) {
        const auto trace = model::unfolded_forward(u, inputs[q]);
        REQUIRE(batch.sequences[q].size() == inputs[q].size());
        for (std::size_t t = 0; t < inputs[q].size(); ++t)
            for (std::size_t i = 0; i < 5; ++i)
                CHECK(batch.sequences[q][t][i] == trace.h[t][i]);
    }
}

TEST_CASE("decoder stack blocks are powers of the memory feedback") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    Matrix A(4, 3), B(4, 4);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 3; ++j) A(i, j) = dist(rng);
        for (std::size_t j = 0; j < 4; ++j) B(i, j) = dist(rng);
    }

    const Matrix one = build_decoder_stack(A, B, 1);
    CHECK(max_abs_diff(one, transpose(A)) == 0.0);

    const Matrix stack = build_decoder_stack(A, B, 3);
    REQUIRE(stack.rows() == 9);
    REQUIRE(stack.cols() == 4);
    const Matrix at = transpose(A);
    const Matrix bt = transpose(B);
    const Matrix blk2 = matmul(at, bt);
    const Matrix blk3 = matmul(blk2, bt);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(stack(i, j) == doctest::Approx(at(i, j)).epsilon(1e-14));
            CHECK(stack(3 + i, j) == doctest::Approx(blk2(i, j)).epsilon(1e-13));
            CHECK(stack(6 + i, j) == doctest::Approx(blk3(i, j)).epsilon(1e-12));
        }

    const Matrix rep = build_decoder_stack(A, Matrix::identity(4), 2);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(rep(3 + i, j) == at(i, j));
}

TEST_CASE("identity autoencoder transfer copies the lag-one weights") {
    const UnfoldedParams u = model::init_unfolded(2, 3, 2, 1, Activation::Tanh, 17);
    const Matrix A = Matrix::identity(3);
    const Matrix B(3, 3);
    const LmnParams lmn = transfer_weights(u, A, B, 1);
    CHECK(lmn.variant == model::LmnVariant::B);
    CHECK(max_abs_diff(lmn.w_xh, u.w_xh) == 0.0);
    CHECK(max_abs_diff(lmn.w_hm, A) == 0.0);
    CHECK(max_abs_diff(lmn.w_mm, B) == 0.0);
    CHECK(max_abs_diff(lmn.w_mh, u.w_hh[0]) < 1e-14);
    CHECK(max_abs_diff(lmn.w_out, u.w_o[0]) < 1e-14);
}

TEST_CASE("transfer shapes follow the autoencoder memory size") {
    const UnfoldedParams u = model::init_unfolded(3, 4, 2, 3, Activation::Tanh, 23);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    Matrix A(7, 4), B(7, 7);
    for (std::size_t i = 0; i < 7; ++i) {
        for (std::size_t j = 0; j < 4; ++j) A(i, j) = dist(rng);
        for (std::size_t j = 0; j < 7; ++j) B(i, j) = dist(rng);
    }
    const LmnParams lmn = transfer_weights(u, A, B, 3);
    CHECK(lmn.p == 4);
    CHECK(lmn.m == 7);
    CHECK(lmn.w_mh.rows() == 4);
    CHECK(lmn.w_mh.cols() == 7);
    CHECK(lmn.w_out.rows() == 2);
    CHECK(lmn.w_out.cols() == 7);

    // Scaling every lag matrix scales the transferred readback linearly.
    UnfoldedParams scaled = u;
    for (auto& w : scaled.w_hh) w *= 2.0;
    const LmnParams twice = transfer_weights(scaled, A, B, 3);
    CHECK(max_abs_diff(twice.w_mh, lmn.w_mh * 2.0) < 1e-12);

    Matrix wrong(6, 4);
    CHECK_THROWS_AS(transfer_weights(u, wrong, B, 3), InvalidInput);
    CHECK_THROWS_AS(transfer_weights(u, A, B, 2), InvalidInput);
}

TEST_CASE("full-rank memory reproduces the stacked lag states") {
    // Fit the autoencoder on the hidden states, then check that the decoder
    // stack recovers [h_t; h_{t-1}; ...; h_{t-k+1}] from hm_t.
    const std::size_t k = 3;
    const UnfoldedParams u = model::init_unfolded(2, 3, 1, k, Activation::Tanh, 29);
    const auto inputs = random_inputs(2, {6, 5}, 43);
    const auto batch = collect_hidden_states(u, inputs);
    const auto fitted = seqae::fit(batch, std::nullopt);
    const LmnParams lmn = transfer_weights(u, fitted.params.A, fitted.params.B, k);
    const Matrix stack = build_decoder_stack(fitted.params.A, fitted.params.B, k);

    for (std::size_t q = 0; q < inputs.size(); ++q) {
        const auto trace = model::lmn_forward(lmn, inputs[q]);
        const auto& hs = batch.sequences[q];
        for (std::size_t t = 0; t < inputs[q].size(); ++t) {
            const Vec rec = matvec(stack, trace.hm[t]);
            for (std::size_t lag = 0; lag < k; ++lag) {
                for (std::size_t i = 0; i < 3; ++i) {
                    const double expect =
                        t >= lag ? hs[t - lag][i] : 0.0;
                    CHECK(std::abs(rec[lag * 3 + i] - expect) < 1e-8);
                }
            }
        }
    }
}

TEST_CASE("fidelity after a full-rank transfer is exact to tolerance") {
    const UnfoldedParams u = model::init_unfolded(2, 3, 2, 2, Activation::Tanh, 37);
    const auto inputs = random_inputs(2, {7, 4, 5}, 47);
    const auto batch = collect_hidden_states(u, inputs);
    const auto fitted = seqae::fit(batch, std::nullopt);
    const LmnParams lmn = transfer_weights(u, fitted.params.A, fitted.params.B, 2);

    const FidelityReport report = fidelity_report(u, lmn, inputs, true);
    REQUIRE(report.per_sequence.size() == 3);
    CHECK(report.max_hidden_diff < 1e-6);
    CHECK(report.max_output_diff < 1e-6);
    for (const auto& seq : report.per_sequence) {
        CHECK(seq.max_hidden_diff <= report.max_hidden_diff);
        CHECK(seq.max_output_diff <= report.max_output_diff);
    }

    // Keeping the lag-k output term exposes the one output path the memory
    // cannot represent, so the comparison degrades unless that term is silent.
    const FidelityReport kept = fidelity_report(u, lmn, inputs, false);
    CHECK(kept.max_hidden_diff == doctest::Approx(report.max_hidden_diff).epsilon(1e-12));
    CHECK(kept.max_output_diff >= report.max_output_diff);
}

TEST_CASE("pipeline trains, fits, and transfers end to end") {
    const auto ds = small_dataset();

    PretrainConfig cfg;
    cfg.k = 3;
    cfg.hidden = 6;
    cfg.selu_hidden = false;
    cfg.unfolded_train.max_epochs = 5;
    cfg.unfolded_train.patience = 5;
    cfg.unfolded_train.learning_rate = 0.01;
    cfg.unfolded_train.seed = 3;

    const auto [lmn, diag] = pretrain_pipeline(ds, cfg);
    CHECK(lmn.a == 4);
    CHECK(lmn.p == 6);
    CHECK(lmn.m == diag.ae_rank);
    CHECK(diag.ae_rank >= 1);
    CHECK(diag.unfolded_history.size() >= 1);
    CHECK(diag.ae_total_error < 1e-8);
    CHECK(diag.max_hidden_diff < 1e-6);
    CHECK(diag.max_output_diff < 1e-6);
    REQUIRE(!diag.per_timestep_error_profile.empty());
    double profile_sum = 0.0;
    for (double e : diag.per_timestep_error_profile) profile_sum += e;
    CHECK(profile_sum == doctest::Approx(diag.ae_total_error).epsilon(1e-9).scale(1e-12));

    const auto [lmn2, diag2] = pretrain_pipeline(ds, cfg);
    CHECK(max_abs_diff(lmn.w_mh, lmn2.w_mh) == 0.0);
    CHECK(max_abs_diff(lmn.w_out, lmn2.w_out) == 0.0);
    CHECK(diag2.ae_rank == diag.ae_rank);
}

TEST_CASE("restricting the memory width degrades fidelity gracefully") {
    const auto ds = small_dataset();

    PretrainConfig full;
    full.k = 3;
    full.hidden = 6;
    full.selu_hidden = false;
    full.unfolded_train.max_epochs = 3;
    full.unfolded_train.patience = 3;
    full.unfolded_train.seed = 4;

    PretrainConfig narrow = full;
    narrow.p_mem = 2;

    const auto [wide_lmn, wide] = pretrain_pipeline(ds, full);
    const auto [narrow_lmn, tight] = pretrain_pipeline(ds, narrow);
    CHECK(narrow_lmn.m == 2);
    CHECK(wide.ae_total_error <= tight.ae_total_error + 1e-12);
    CHECK(wide.max_hidden_diff <= tight.max_hidden_diff + 1e-12);
}

TEST_CASE("pipeline validates its configuration") {
    const auto ds = small_dataset();
    PretrainConfig cfg;
    cfg.k = 0;
    CHECK_THROWS_AS(pretrain_pipeline(ds, cfg), InvalidInput);
    cfg.k = 2;
    cfg.hidden = 0;
    CHECK_THROWS_AS(pretrain_pipeline(ds, cfg), InvalidInput);
}

TEST_CASE("transferred networks stay smaller than their unfolded teachers") {
    // Core premise of the rewiring: k lag matrices collapse into one memory.
    const std::size_t a = 4, p = 8, o = 4, k = 4, m = 8;
    const std::size_t unfolded_total = p * a + k * p * p + (k + 1) * o * p;
    const std::size_t lmn_total = p * a + p * m + m * p + m * m + o * m;
    CHECK(m < k * p);
    CHECK(lmn_total < unfolded_total);
}
