#include "lmn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>

#include "lmn/errors.hpp"

namespace lmn::train {

namespace {

constexpr double kProbClamp = 1e-12;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

double clamp_prob(double y) { return std::clamp(y, kProbClamp, 1.0 - kProbClamp); }

/// d(bce)/d(pre-sigmoid); zero where the clamp flattens the loss.
double logit_grad(double y, double target, double inv_steps) {
    if (y <= kProbClamp || y >= 1.0 - kProbClamp) return 0.0;
    return (y - target) * inv_steps;
}

void check_targets(const Sequence& inputs, const std::vector<Vec>& targets, std::size_t o) {
    if (targets.size() != inputs.size())
        throw InvalidInput("targets: " + std::to_string(targets.size()) + " steps vs " +
                           std::to_string(inputs.size()) + " inputs");
    for (std::size_t t = 0; t < targets.size(); ++t)
        if (targets[t].size() != o)
            throw InvalidInput("targets: step " + std::to_string(t) + " has width " +
                               std::to_string(targets[t].size()) + ", expected " +
                               std::to_string(o));
}

bool same_window(std::size_t s, std::size_t t, std::optional<std::size_t> window) {
    if (!window) return true;
    return s / *window == t / *window;
}

double l2_penalty(const std::vector<const Matrix*>& views, double l2) {
    if (l2 == 0.0) return 0.0;
    double sum = 0.0;
    for (const Matrix* w : views) sum += squared_frobenius_norm(*w);
    return 0.5 * l2 * sum;
}

void add_l2_gradient(Matrix& grad, const Matrix& weights, double l2) {
    if (l2 == 0.0) return;
    const double* w = weights.data();
    double* g = grad.data();
    for (std::size_t i = 0; i < weights.rows() * weights.cols(); ++i) g[i] += l2 * w[i];
}

}  // namespace

double bce_loss(const std::vector<Vec>& predictions, const std::vector<Vec>& targets) {
    if (predictions.size() != targets.size())
        throw InvalidInput("bce: " + std::to_string(predictions.size()) + " predictions vs " +
                           std::to_string(targets.size()) + " targets");
    if (predictions.empty()) throw InvalidInput("bce: no timesteps");
    double total = 0.0;
    for (std::size_t t = 0; t < predictions.size(); ++t) {
        if (predictions[t].size() != targets[t].size())
            throw InvalidInput("bce: step " + std::to_string(t) + " width mismatch");
        for (std::size_t j = 0; j < predictions[t].size(); ++j) {
            const double y = clamp_prob(predictions[t][j]);
            const double tau = targets[t][j];
            total -= tau * std::log(y) + (1.0 - tau) * std::log1p(-y);
        }
    }
    return total / static_cast<double>(predictions.size());
}

std::pair<double, LmnGradients> lmn_backward(const model::LmnParams& params,
                                             const Sequence& inputs,
                                             const std::vector<Vec>& targets, double l2,
                                             std::optional<std::size_t> truncation_window) {
    check_targets(inputs, targets, params.o);
    if (truncation_window && *truncation_window == 0)
        throw InvalidInput("truncation window must be positive");
    const auto trace = model::lmn_forward(params, inputs);
    const std::size_t l = inputs.size();
    const double inv_steps = 1.0 / static_cast<double>(l);
    const bool variant_b = params.variant == model::LmnVariant::B;

    LmnGradients g{Matrix(params.p, params.a), Matrix(params.p, params.m),
                   Matrix(params.m, params.p), Matrix(params.m, params.m),
                   Matrix(params.o, variant_b ? params.m : params.p)};

    const Vec zero_m(params.m, 0.0);
    Vec dhm_next(params.m, 0.0);
    Vec dz_next(params.p, 0.0);
    for (std::size_t t = l; t-- > 0;) {
        Vec gout(params.o, 0.0);
        for (std::size_t j = 0; j < params.o; ++j)
            gout[j] = logit_grad(trace.y[t][j], targets[t][j], inv_steps);

        Vec dhm(params.m, 0.0);
        if (variant_b) add_matvec_transposed(dhm, params.w_out, gout);
        add_matvec_transposed(dhm, params.w_mm, dhm_next);
        add_matvec_transposed(dhm, params.w_mh, dz_next);

        Vec dh(params.p, 0.0);
        add_matvec_transposed(dh, params.w_hm, dhm);
        if (!variant_b) add_matvec_transposed(dh, params.w_out, gout);

        // trace.h holds tanh values, so the derivative is 1 - h^2 directly.
        Vec dz(params.p);
        for (std::size_t i = 0; i < params.p; ++i)
            dz[i] = dh[i] * (1.0 - trace.h[t][i] * trace.h[t][i]);

        const Vec& hm_prev = t > 0 ? trace.hm[t - 1] : zero_m;
        add_outer(g.w_out, 1.0, gout, variant_b ? trace.hm[t] : trace.h[t]);
        add_outer(g.w_hm, 1.0, dhm, trace.h[t]);
        add_outer(g.w_mm, 1.0, dhm, hm_prev);
        add_outer(g.w_xh, 1.0, dz, inputs[t]);
        add_outer(g.w_mh, 1.0, dz, hm_prev);

        if (t > 0 && !same_window(t - 1, t, truncation_window)) {
            std::fill(dhm_next.begin(), dhm_next.end(), 0.0);
            std::fill(dz_next.begin(), dz_next.end(), 0.0);
        } else {
            dhm_next = dhm;
            dz_next = dz;
        }
    }

    add_l2_gradient(g.w_xh, params.w_xh, l2);
    add_l2_gradient(g.w_mh, params.w_mh, l2);
    add_l2_gradient(g.w_hm, params.w_hm, l2);
    add_l2_gradient(g.w_mm, params.w_mm, l2);
    add_l2_gradient(g.w_out, params.w_out, l2);

    const std::vector<const Matrix*> views{&params.w_xh, &params.w_mh, &params.w_hm,
                                           &params.w_mm, &params.w_out};
    const double loss = bce_loss(trace.y, targets) + l2_penalty(views, l2);
    return {loss, std::move(g)};
}

std::pair<double, UnfoldedGradients> unfolded_backward(
    const model::UnfoldedParams& params, const Sequence& inputs,
    const std::vector<Vec>& targets, double l2, std::optional<std::size_t> truncation_window) {
    check_targets(inputs, targets, params.o);
    if (truncation_window && *truncation_window == 0)
        throw InvalidInput("truncation window must be positive");
    const std::size_t l = inputs.size();
    const std::size_t k = params.k;
    const double inv_steps = 1.0 / static_cast<double>(l);

    // Forward again, this time keeping pre-activations for the hidden grads.
    std::vector<Vec> z(l), h(l), y(l);
    for (std::size_t t = 0; t < l; ++t) {
        Vec pre = matvec(params.w_xh, inputs[t]);
        for (std::size_t lag = 1; lag <= k && lag <= t; ++lag)
            add_matvec(pre, params.w_hh[lag - 1], h[t - lag]);
        Vec ht(params.p);
        for (std::size_t i = 0; i < params.p; ++i)
            ht[i] = model::apply_activation(params.hidden_activation, pre[i]);
        z[t] = std::move(pre);
        h[t] = std::move(ht);
        Vec s(params.o, 0.0);
        for (std::size_t lag = 0; lag <= k && lag <= t; ++lag)
            add_matvec(s, params.w_o[lag], h[t - lag]);
        Vec yt(params.o);
        for (std::size_t j = 0; j < params.o; ++j) yt[j] = model::sigmoid(s[j]);
        y[t] = std::move(yt);
    }

    std::vector<Vec> gout(l), dz(l);
    for (std::size_t t = l; t-- > 0;) {
        gout[t].assign(params.o, 0.0);
        for (std::size_t j = 0; j < params.o; ++j)
            gout[t][j] = logit_grad(y[t][j], targets[t][j], inv_steps);

        Vec dh(params.p, 0.0);
        for (std::size_t lag = 0; lag <= k && t + lag < l; ++lag)
            if (same_window(t, t + lag, truncation_window))
                add_matvec_transposed(dh, params.w_o[lag], gout[t + lag]);
        for (std::size_t lag = 1; lag <= k && t + lag < l; ++lag)
            if (same_window(t, t + lag, truncation_window))
                add_matvec_transposed(dh, params.w_hh[lag - 1], dz[t + lag]);

        dz[t].resize(params.p);
        for (std::size_t i = 0; i < params.p; ++i)
            dz[t][i] = dh[i] * model::activation_grad(params.hidden_activation, z[t][i]);
    }

    UnfoldedGradients g;
    g.w_xh = Matrix(params.p, params.a);
    g.w_hh.assign(k, Matrix(params.p, params.p));
    g.w_o.assign(k + 1, Matrix(params.o, params.p));
    for (std::size_t t = 0; t < l; ++t) {
        add_outer(g.w_xh, 1.0, dz[t], inputs[t]);
        for (std::size_t lag = 1; lag <= k && lag <= t; ++lag)
            add_outer(g.w_hh[lag - 1], 1.0, dz[t], h[t - lag]);
        for (std::size_t lag = 0; lag <= k && lag <= t; ++lag)
            add_outer(g.w_o[lag], 1.0, gout[t], h[t - lag]);
    }

    std::vector<const Matrix*> views{&params.w_xh};
    add_l2_gradient(g.w_xh, params.w_xh, l2);
    for (std::size_t i = 0; i < k; ++i) {
        add_l2_gradient(g.w_hh[i], params.w_hh[i], l2);
        views.push_back(&params.w_hh[i]);
    }
    for (std::size_t i = 0; i <= k; ++i) {
        add_l2_gradient(g.w_o[i], params.w_o[i], l2);
        views.push_back(&params.w_o[i]);
    }
    const double loss = bce_loss(y, targets) + l2_penalty(views, l2);
    return {loss, std::move(g)};
}

std::pair<double, RnnGradients> rnn_backward(const model::RnnParams& params,
                                             const Sequence& inputs,
                                             const std::vector<Vec>& targets, double l2,
                                             std::optional<std::size_t> truncation_window) {
    check_targets(inputs, targets, params.o);
    if (truncation_window && *truncation_window == 0)
        throw InvalidInput("truncation window must be positive");
    const auto trace = model::rnn_forward(params, inputs);
    const std::size_t l = inputs.size();
    const double inv_steps = 1.0 / static_cast<double>(l);

    RnnGradients g{Matrix(params.p, params.a), Matrix(params.p, params.p),
                   Matrix(params.o, params.p)};

    const Vec zero_p(params.p, 0.0);
    Vec dz_next(params.p, 0.0);
    for (std::size_t t = l; t-- > 0;) {
        Vec gout(params.o, 0.0);
        for (std::size_t j = 0; j < params.o; ++j)
            gout[j] = logit_grad(trace.y[t][j], targets[t][j], inv_steps);

        Vec dh(params.p, 0.0);
        add_matvec_transposed(dh, params.w_o, gout);
        add_matvec_transposed(dh, params.w_hh, dz_next);

        Vec dz(params.p);
        for (std::size_t i = 0; i < params.p; ++i)
            dz[i] = dh[i] * (1.0 - trace.h[t][i] * trace.h[t][i]);

        const Vec& h_prev = t > 0 ? trace.h[t - 1] : zero_p;
        add_outer(g.w_o, 1.0, gout, trace.h[t]);
        add_outer(g.w_xh, 1.0, dz, inputs[t]);
        add_outer(g.w_hh, 1.0, dz, h_prev);

        if (t > 0 && !same_window(t - 1, t, truncation_window))
            std::fill(dz_next.begin(), dz_next.end(), 0.0);
        else
            dz_next = dz;
    }

    add_l2_gradient(g.w_xh, params.w_xh, l2);
    add_l2_gradient(g.w_hh, params.w_hh, l2);
    add_l2_gradient(g.w_o, params.w_o, l2);
    const std::vector<const Matrix*> views{&params.w_xh, &params.w_hh, &params.w_o};
    const double loss = bce_loss(trace.y, targets) + l2_penalty(views, l2);
    return {loss, std::move(g)};
}

AdamOutcome adam_step(AdamState& state, const std::vector<Matrix*>& params,
                      const std::vector<const Matrix*>& grads, const TrainConfig& config) {
    if (params.size() != grads.size())
        throw InvalidInput("adam: " + std::to_string(params.size()) + " parameters vs " +
                           std::to_string(grads.size()) + " gradients");
    if (state.m.empty()) {
        for (const Matrix* w : params) {
            state.m.emplace_back(w->rows(), w->cols());
            state.v.emplace_back(w->rows(), w->cols());
        }
    }
    if (state.m.size() != params.size())
        throw InvalidInput("adam: state tracks a different parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->rows() != grads[i]->rows() || params[i]->cols() != grads[i]->cols() ||
            params[i]->rows() != state.m[i].rows() || params[i]->cols() != state.m[i].cols())
            throw InvalidInput("adam: shape mismatch at parameter " + std::to_string(i));
    }

    // Effective gradient = data gradient + l2 * w, then optional global-norm clip.
    std::vector<Matrix> eff;
    eff.reserve(params.size());
    double sq_norm = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix e = *grads[i];
        add_l2_gradient(e, *params[i], config.l2);
        sq_norm += squared_frobenius_norm(e);
        eff.push_back(std::move(e));
    }
    AdamOutcome outcome;
    outcome.grad_norm = std::sqrt(sq_norm);
    double scale = 1.0;
    if (config.clip_norm > 0.0 && outcome.grad_norm > config.clip_norm) {
        scale = config.clip_norm / outcome.grad_norm;
        outcome.clipped = true;
    }

    ++state.step;
    const double bias1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        double* w = params[i]->data();
        double* m = state.m[i].data();
        double* v = state.v[i].data();
        const double* g = eff[i].data();
        const std::size_t n = params[i]->rows() * params[i]->cols();
        for (std::size_t idx = 0; idx < n; ++idx) {
            const double gi = g[idx] * scale;
            m[idx] = kAdamBeta1 * m[idx] + (1.0 - kAdamBeta1) * gi;
            v[idx] = kAdamBeta2 * v[idx] + (1.0 - kAdamBeta2) * gi * gi;
            const double m_hat = m[idx] / bias1;
            const double v_hat = v[idx] / bias2;
            w[idx] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + kAdamEps);
        }
    }
    return outcome;
}

std::vector<Matrix*> parameter_views(ModelParams& params) {
    std::vector<Matrix*> views;
    std::visit(
        [&](auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, model::RnnParams>) {
                views = {&p.w_xh, &p.w_hh, &p.w_o};
            } else if constexpr (std::is_same_v<T, model::LmnParams>) {
                views = {&p.w_xh, &p.w_mh, &p.w_hm, &p.w_mm, &p.w_out};
            } else {
                views.push_back(&p.w_xh);
                for (auto& w : p.w_hh) views.push_back(&w);
                for (auto& w : p.w_o) views.push_back(&w);
            }
        },
        params);
    return views;
}

std::vector<const Matrix*> parameter_views(const ModelParams& params) {
    auto mutable_views = parameter_views(const_cast<ModelParams&>(params));
    return {mutable_views.begin(), mutable_views.end()};
}

std::vector<Vec> forward_outputs(const ModelParams& params, const Sequence& inputs) {
    return std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, model::RnnParams>)
                return model::rnn_forward(p, inputs).y;
            else if constexpr (std::is_same_v<T, model::LmnParams>)
                return model::lmn_forward(p, inputs).y;
            else
                return model::unfolded_forward(p, inputs).y;
        },
        params);
}

std::pair<double, std::vector<Matrix>> model_backward(const ModelParams& params,
                                                      const SequenceExample& example,
                                                      double l2,
                                                      std::optional<std::size_t> truncation_window) {
    return std::visit(
        [&](const auto& p) -> std::pair<double, std::vector<Matrix>> {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, model::RnnParams>) {
                auto [loss, g] =
                    rnn_backward(p, example.inputs, example.targets, l2, truncation_window);
                std::vector<Matrix> flat;
                flat.push_back(std::move(g.w_xh));
                flat.push_back(std::move(g.w_hh));
                flat.push_back(std::move(g.w_o));
                return {loss, std::move(flat)};
            } else if constexpr (std::is_same_v<T, model::LmnParams>) {
                auto [loss, g] =
                    lmn_backward(p, example.inputs, example.targets, l2, truncation_window);
                std::vector<Matrix> flat;
                flat.push_back(std::move(g.w_xh));
                flat.push_back(std::move(g.w_mh));
                flat.push_back(std::move(g.w_hm));
                flat.push_back(std::move(g.w_mm));
                flat.push_back(std::move(g.w_out));
                return {loss, std::move(flat)};
            } else {
                auto [loss, g] =
                    unfolded_backward(p, example.inputs, example.targets, l2, truncation_window);
                std::vector<Matrix> flat;
                flat.push_back(std::move(g.w_xh));
                for (auto& w : g.w_hh) flat.push_back(std::move(w));
                for (auto& w : g.w_o) flat.push_back(std::move(w));
                return {loss, std::move(flat)};
            }
        },
        params);
}

double eval_loss(const ModelParams& params, const SequenceExample& example, double l2) {
    const auto outputs = forward_outputs(params, example.inputs);
    return bce_loss(outputs, example.targets) + l2_penalty(parameter_views(params), l2);
}

double evaluate_accuracy(const ModelParams& params, const std::vector<SequenceExample>& examples,
                         double threshold) {
    data::AccuracyCounts counts;
    for (const auto& ex : examples) {
        const auto outputs = forward_outputs(params, ex.inputs);
        for (std::size_t t = 0; t < outputs.size(); ++t)
            counts.add(outputs[t], ex.targets[t], threshold);
    }
    return counts.value();
}

namespace {

model::LmnParams* lmn_of(ModelParams& params) {
    return std::get_if<model::LmnParams>(&params);
}

std::size_t w_mh_view_index() { return 1; }  // views order: w_xh, w_mh, w_hm, w_mm, w_out

}  // namespace

TrainResult train_loop(const ModelParams& init, const std::vector<SequenceExample>& train_set,
                       const std::vector<SequenceExample>& valid_set,
                       const TrainConfig& config) {
    if (train_set.empty()) throw InvalidInput("train: empty training set");
    if (valid_set.empty()) throw InvalidInput("train: empty validation set");
    if (config.patience == 0) throw InvalidInput("train: patience must be positive");
    if (config.batch_size == 0) throw InvalidInput("train: batch size must be positive");
    if (config.learning_rate <= 0.0) throw InvalidInput("train: learning rate must be positive");
    if (config.freeze_w_mh && !std::holds_alternative<model::LmnParams>(init))
        throw InvalidInput("train: freeze_w_mh only applies to the memory-state model");

    ModelParams params = init;
    if (config.freeze_w_mh) {
        auto& w = lmn_of(params)->w_mh;
        std::fill(w.data(), w.data() + w.rows() * w.cols(), 0.0);
    }

    AdamState adam;
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    result.best = params;
    result.best_val_accuracy = -1.0;
    std::size_t epochs_since_best = 0;
    const auto start = std::chrono::steady_clock::now();

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t clip_events = 0;
        std::size_t cursor = 0;
        while (cursor < order.size()) {
            const std::size_t batch_end = std::min(cursor + config.batch_size, order.size());
            std::vector<Matrix> grads;
            for (std::size_t i = cursor; i < batch_end; ++i) {
                auto [loss, g] =
                    model_backward(params, train_set[order[i]], 0.0, config.truncation_window);
                loss_sum += loss;
                if (grads.empty()) {
                    grads = std::move(g);
                } else {
                    for (std::size_t j = 0; j < grads.size(); ++j) grads[j] += g[j];
                }
            }
            if (config.freeze_w_mh) {
                auto& gw = grads[w_mh_view_index()];
                std::fill(gw.data(), gw.data() + gw.rows() * gw.cols(), 0.0);
            }
            std::vector<const Matrix*> grad_views;
            grad_views.reserve(grads.size());
            for (const auto& g : grads) grad_views.push_back(&g);
            if (adam_step(adam, parameter_views(params), grad_views, config).clipped)
                ++clip_events;
            cursor = batch_end;
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / static_cast<double>(train_set.size());
        record.val_accuracy = evaluate_accuracy(params, valid_set, config.threshold);
        record.clip_events = clip_events;
        record.elapsed_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.history.push_back(record);

        if (record.val_accuracy > result.best_val_accuracy) {
            result.best_val_accuracy = record.val_accuracy;
            result.best = params;
            result.best_epoch = epoch;
            epochs_since_best = 0;
        } else if (++epochs_since_best >= config.patience) {
            break;
        }
    }
    return result;
}

double grad_check(const ModelParams& params, const SequenceExample& example, double step,
                  double l2) {
    if (step <= 0.0) throw InvalidInput("grad_check: step must be positive");
    auto [loss, analytic] = model_backward(params, example, l2);
    (void)loss;
    ModelParams probe = params;
    auto views = parameter_views(probe);
    double worst = 0.0;
    for (std::size_t i = 0; i < views.size(); ++i) {
        Matrix& w = *views[i];
        for (std::size_t idx = 0; idx < w.rows() * w.cols(); ++idx) {
            const double saved = w.data()[idx];
            w.data()[idx] = saved + step;
            const double up = eval_loss(probe, example, l2);
            w.data()[idx] = saved - step;
            const double down = eval_loss(probe, example, l2);
            w.data()[idx] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double ga = analytic[i].data()[idx];
            const double rel = std::abs(ga - fd) / std::max(1e-8, std::abs(ga) + std::abs(fd));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

void write_history_csv(const std::filesystem::path& path,
                       const std::vector<EpochRecord>& history) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write history to " + path.string());
    out << "epoch,train_loss,val_accuracy,elapsed_seconds\n";
    out << std::setprecision(17);
    for (const auto& r : history)
        out << r.epoch << ',' << r.train_loss << ',' << r.val_accuracy << ','
            << r.elapsed_seconds << '\n';
}

std::vector<SequenceExample> make_next_frame_examples(const data::PianoRollDataset& dataset,
                                                      data::Split split) {
    std::vector<SequenceExample> examples;
    const auto& sequences = dataset.split(split);
    examples.reserve(sequences.size());
    for (const auto& seq : sequences) {
        auto frames = data::to_frames(seq, dataset.dim, dataset.base_pitch);
        if (frames.size() < 2)
            throw InvalidInput("next-frame task needs sequences of length >= 2");
        SequenceExample ex;
        ex.inputs.assign(frames.begin(), frames.end() - 1);
        ex.targets.assign(frames.begin() + 1, frames.end());
        examples.push_back(std::move(ex));
    }
    return examples;
}

}  // namespace lmn::train
