#include "lmn/model.hpp"

#include <cmath>
#include <random>

#include "lmn/errors.hpp"

namespace lmn::model {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double sigmoid_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 - s);
}

double selu(double x) {
    return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * (std::exp(x) - 1.0);
}

double selu_grad(double x) {
    return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x);
}

double tanh_grad(double x) {
    const double t = std::tanh(x);
    return 1.0 - t * t;
}

double apply_activation(Activation act, double x) {
    return act == Activation::Tanh ? std::tanh(x) : selu(x);
}

double activation_grad(Activation act, double x) {
    return act == Activation::Tanh ? tanh_grad(x) : selu_grad(x);
}

namespace {

void check_finite(const Vec& v, const char* what, std::size_t timestep) {
    if (!all_finite(v)) throw NumericFailure(std::string(what) + " became non-finite", timestep);
}

}  // namespace

LmnTrace lmn_forward(const LmnParams& params, const Sequence& sequence) {
    if (sequence.empty()) throw InvalidInput("lmn_forward: empty sequence");
    LmnTrace trace;
    trace.h.reserve(sequence.size());
    trace.hm.reserve(sequence.size());
    trace.y.reserve(sequence.size());

    Vec hm(params.m, 0.0);
    for (std::size_t t = 0; t < sequence.size(); ++t) {
        const Vec& x = sequence[t];
        if (x.size() != params.a) throw InvalidInput("lmn_forward: input dimension mismatch");

        Vec z(params.p, 0.0);
        add_matvec(z, params.w_xh, x);
        add_matvec(z, params.w_mh, hm);
        Vec h(params.p);
        for (std::size_t i = 0; i < params.p; ++i) h[i] = std::tanh(z[i]);

        // The memory recurrence stays linear: no activation on hm.
        Vec hm_next(params.m, 0.0);
        add_matvec(hm_next, params.w_hm, h);
        add_matvec(hm_next, params.w_mm, hm);

        const Vec& readout = params.variant == LmnVariant::B ? hm_next : h;
        Vec y(params.o, 0.0);
        add_matvec(y, params.w_out, readout);
        for (double& v : y) v = sigmoid(v);

        check_finite(h, "functional state", t + 1);
        check_finite(hm_next, "memory state", t + 1);

        hm = hm_next;
        trace.h.push_back(std::move(h));
        trace.hm.push_back(std::move(hm_next));
        trace.y.push_back(std::move(y));
    }
    return trace;
}

SimpleTrace unfolded_forward(const UnfoldedParams& params, const Sequence& sequence) {
    if (sequence.empty()) throw InvalidInput("unfolded_forward: empty sequence");
    if (params.w_hh.size() != params.k || params.w_o.size() != params.k + 1)
        throw InvalidInput("unfolded_forward: lag matrix count does not match k");

    SimpleTrace trace;
    trace.h.reserve(sequence.size());
    trace.y.reserve(sequence.size());

    for (std::size_t t = 0; t < sequence.size(); ++t) {
        const Vec& x = sequence[t];
        if (x.size() != params.a) throw InvalidInput("unfolded_forward: input dimension mismatch");

        Vec z(params.p, 0.0);
        add_matvec(z, params.w_xh, x);
        for (std::size_t lag = 1; lag <= params.k && lag <= t; ++lag)
            add_matvec(z, params.w_hh[lag - 1], trace.h[t - lag]);
        Vec h(params.p);
        for (std::size_t i = 0; i < params.p; ++i)
            h[i] = apply_activation(params.hidden_activation, z[i]);
        check_finite(h, "hidden state", t + 1);
        trace.h.push_back(std::move(h));

        Vec s(params.o, 0.0);
        for (std::size_t lag = 0; lag <= params.k && lag <= t; ++lag)
            add_matvec(s, params.w_o[lag], trace.h[t - lag]);
        Vec y(params.o);
        for (std::size_t i = 0; i < params.o; ++i) y[i] = sigmoid(s[i]);
        trace.y.push_back(std::move(y));
    }
    return trace;
}

SimpleTrace rnn_forward(const RnnParams& params, const Sequence& sequence) {
    if (sequence.empty()) throw InvalidInput("rnn_forward: empty sequence");
    SimpleTrace trace;
    trace.h.reserve(sequence.size());
    trace.y.reserve(sequence.size());

    Vec h(params.p, 0.0);
    for (std::size_t t = 0; t < sequence.size(); ++t) {
        const Vec& x = sequence[t];
        if (x.size() != params.a) throw InvalidInput("rnn_forward: input dimension mismatch");

        Vec z(params.p, 0.0);
        add_matvec(z, params.w_xh, x);
        add_matvec(z, params.w_hh, h);
        for (std::size_t i = 0; i < params.p; ++i) z[i] = std::tanh(z[i]);
        h = z;
        check_finite(h, "hidden state", t + 1);

        Vec y(params.o, 0.0);
        add_matvec(y, params.w_o, h);
        for (double& v : y) v = sigmoid(v);

        trace.h.push_back(h);
        trace.y.push_back(std::move(y));
    }
    return trace;
}

std::int64_t parameter_count(Arch arch, std::int64_t x, std::int64_t h) {
    if (x < 1 || h < 1) throw InvalidInput("parameter_count: sizes must be >= 1");
    switch (arch) {
        case Arch::Lstm: return 4 * (x + h) * h;
        case Arch::Gru: return 3 * (x + h) * h;
        case Arch::Rnn: return (x + h) * h;
        case Arch::Lmn: break;
    }
    throw InvalidInput("parameter_count: LMN needs functional and memory sizes");
}

std::int64_t parameter_count(Arch arch, std::int64_t x, std::int64_t f, std::int64_t m) {
    if (arch != Arch::Lmn) throw InvalidInput("parameter_count: (f, m) form is LMN-only");
    if (x < 1 || f < 1 || m < 1) throw InvalidInput("parameter_count: sizes must be >= 1");
    return (x + m) * f + (f + m) * m;
}

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(cols));  // fan-in = cols
    std::uniform_real_distribution<double> dist(-s, s);
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = dist(rng);
    return m;
}

}  // namespace

LmnParams init_lmn(std::size_t a, std::size_t p, std::size_t m, std::size_t o,
                   LmnVariant variant, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    LmnParams params;
    params.a = a;
    params.p = p;
    params.m = m;
    params.o = o;
    params.variant = variant;
    params.w_xh = random_matrix(p, a, rng);
    params.w_mh = random_matrix(p, m, rng);
    params.w_hm = random_matrix(m, p, rng);
    params.w_mm = random_matrix(m, m, rng);
    params.w_out = random_matrix(o, variant == LmnVariant::B ? m : p, rng);
    return params;
}

UnfoldedParams init_unfolded(std::size_t a, std::size_t p, std::size_t o, std::size_t k,
                             Activation hidden_activation, std::uint64_t seed) {
    if (k == 0) throw InvalidInput("init_unfolded: k must be >= 1");
    std::mt19937_64 rng(seed);
    UnfoldedParams params;
    params.a = a;
    params.p = p;
    params.o = o;
    params.k = k;
    params.hidden_activation = hidden_activation;
    params.w_xh = random_matrix(p, a, rng);
    for (std::size_t i = 0; i < k; ++i) params.w_hh.push_back(random_matrix(p, p, rng));
    for (std::size_t i = 0; i <= k; ++i) params.w_o.push_back(random_matrix(o, p, rng));
    return params;
}

RnnParams init_rnn(std::size_t a, std::size_t p, std::size_t o, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    RnnParams params;
    params.a = a;
    params.p = p;
    params.o = o;
    params.w_xh = random_matrix(p, a, rng);
    params.w_hh = random_matrix(p, p, rng);
    params.w_o = random_matrix(o, p, rng);
    return params;
}

}  // namespace lmn::model
