#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "lmn/data.hpp"
#include "lmn/matrix.hpp"
#include "lmn/model.hpp"

namespace lmn::train {

using model::Sequence;

struct TrainConfig {
    double learning_rate = 0.001;
    double l2 = 0.0;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    std::size_t batch_size = 1;
    std::uint64_t seed = 0;
    std::optional<std::size_t> truncation_window;
    double clip_norm = 0.0;  // 0 = no clipping
    double threshold = 0.5;  // binarization threshold for validation accuracy
    bool freeze_w_mh = false;  // keep W_mh pinned at zero (memoryless ablation)
};

/// One training item: inputs aligned one-to-one with binary targets
/// (next-frame slicing happens when examples are built, not here).
struct SequenceExample {
    Sequence inputs;
    std::vector<Vec> targets;
};

/// Mean over timesteps of the summed per-unit binary cross-entropy,
/// probabilities clamped to [1e-12, 1 - 1e-12].
double bce_loss(const std::vector<Vec>& predictions, const std::vector<Vec>& targets);

// -------------------------------------------------------------------------
// Exact BPTT gradients. Each returns (loss, gradients) where loss includes
// the l2 * 0.5 * ||W||^2 penalty whenever l2 > 0 and the gradients match it.
// A truncation window cuts gradient flow across window boundaries while
// keeping the forward pass exact.

struct LmnGradients {
    Matrix w_xh, w_mh, w_hm, w_mm, w_out;
};

struct UnfoldedGradients {
    Matrix w_xh;
    std::vector<Matrix> w_hh;
    std::vector<Matrix> w_o;
};

struct RnnGradients {
    Matrix w_xh, w_hh, w_o;
};

std::pair<double, LmnGradients> lmn_backward(
    const model::LmnParams& params, const Sequence& inputs, const std::vector<Vec>& targets,
    double l2 = 0.0, std::optional<std::size_t> truncation_window = {});

std::pair<double, UnfoldedGradients> unfolded_backward(
    const model::UnfoldedParams& params, const Sequence& inputs,
    const std::vector<Vec>& targets, double l2 = 0.0,
    std::optional<std::size_t> truncation_window = {});

std::pair<double, RnnGradients> rnn_backward(
    const model::RnnParams& params, const Sequence& inputs, const std::vector<Vec>& targets,
    double l2 = 0.0, std::optional<std::size_t> truncation_window = {});

// -------------------------------------------------------------------------
// Adam with L2 weight decay folded into the gradient before the update.

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::int64_t step = 0;
};

struct AdamOutcome {
    bool clipped = false;
    double grad_norm = 0.0;
};

AdamOutcome adam_step(AdamState& state, const std::vector<Matrix*>& params,
                      const std::vector<const Matrix*>& grads, const TrainConfig& config);

// -------------------------------------------------------------------------
// Model-generic plumbing: a tagged parameter set plus flattened views in a
// fixed per-model order, so the optimizer and checks stay shape-agnostic.

using ModelParams = std::variant<model::RnnParams, model::LmnParams, model::UnfoldedParams>;

std::vector<Matrix*> parameter_views(ModelParams& params);
std::vector<const Matrix*> parameter_views(const ModelParams& params);

std::vector<Vec> forward_outputs(const ModelParams& params, const Sequence& inputs);

/// Gradients in parameter_views order.
std::pair<double, std::vector<Matrix>> model_backward(
    const ModelParams& params, const SequenceExample& example, double l2 = 0.0,
    std::optional<std::size_t> truncation_window = {});

double eval_loss(const ModelParams& params, const SequenceExample& example, double l2 = 0.0);

double evaluate_accuracy(const ModelParams& params, const std::vector<SequenceExample>& examples,
                         double threshold = 0.5);

// -------------------------------------------------------------------------
// Training loop with early stopping on validation frame accuracy.

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
    double elapsed_seconds = 0.0;
    std::size_t clip_events = 0;
};

struct TrainResult {
    ModelParams best;
    std::vector<EpochRecord> history;
    double best_val_accuracy = 0.0;
    std::size_t best_epoch = 0;
};

TrainResult train_loop(const ModelParams& init, const std::vector<SequenceExample>& train_set,
                       const std::vector<SequenceExample>& valid_set, const TrainConfig& config);

/// Central finite differences vs analytic gradient; returns the max over all
/// coordinates of |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|).
double grad_check(const ModelParams& params, const SequenceExample& example,
                  double step = 1e-5, double l2 = 0.0);

/// CSV columns: epoch, train_loss, val_accuracy, elapsed_seconds.
void write_history_csv(const std::filesystem::path& path,
                       const std::vector<EpochRecord>& history);

/// Next-frame examples for one split: inputs are frames 1..l-1, targets are
/// frames 2..l, both as dense binary vectors of the dataset's dimension.
std::vector<SequenceExample> make_next_frame_examples(const data::PianoRollDataset& dataset,
                                                      data::Split split);

}  // namespace lmn::train
