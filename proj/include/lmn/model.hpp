#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lmn/matrix.hpp"

namespace lmn::model {

using Sequence = std::vector<Vec>;

// -------------------------------------------------------------------------
// Activations.

double sigmoid(double x);
double sigmoid_grad(double x);

inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

double selu(double x);
double selu_grad(double x);

double tanh_grad(double x);

enum class Activation { Tanh, Selu };

double apply_activation(Activation act, double x);
double activation_grad(Activation act, double x);

// -------------------------------------------------------------------------
// Parameter containers.

/// A: output read from the functional activation h_t.
/// B: output read from the memory state hm_t.
enum class LmnVariant { A, B };

struct LmnParams {
    std::size_t a = 0;  // input size
    std::size_t p = 0;  // functional size
    std::size_t m = 0;  // memory size
    std::size_t o = 0;  // output size
    LmnVariant variant = LmnVariant::B;
    Matrix w_xh;   // p x a
    Matrix w_mh;   // p x m
    Matrix w_hm;   // m x p
    Matrix w_mm;   // m x m
    Matrix w_out;  // o x m (variant B) or o x p (variant A)
};

/// k-lag feedforward approximation of the LMN; lags with t-i < 1 read zeros.
struct UnfoldedParams {
    std::size_t a = 0;
    std::size_t p = 0;
    std::size_t o = 0;
    std::size_t k = 0;
    Activation hidden_activation = Activation::Tanh;
    Matrix w_xh;               // p x a
    std::vector<Matrix> w_hh;  // k matrices p x p, lag i at index i-1
    std::vector<Matrix> w_o;   // k+1 matrices o x p, lag i at index i
};

struct RnnParams {
    std::size_t a = 0;
    std::size_t p = 0;
    std::size_t o = 0;
    Matrix w_xh;  // p x a
    Matrix w_hh;  // p x p
    Matrix w_o;   // o x p
};

// -------------------------------------------------------------------------
// Forward passes. Initial states are zero; traces keep one entry per step.

struct LmnTrace {
    std::vector<Vec> h;
    std::vector<Vec> hm;
    std::vector<Vec> y;
};

struct SimpleTrace {
    std::vector<Vec> h;
    std::vector<Vec> y;
};

LmnTrace lmn_forward(const LmnParams& params, const Sequence& sequence);
SimpleTrace unfolded_forward(const UnfoldedParams& params, const Sequence& sequence);
SimpleTrace rnn_forward(const RnnParams& params, const Sequence& sequence);

// -------------------------------------------------------------------------
// Recurrent-core parameter counts (output layers excluded for all).

enum class Arch { Lstm, Gru, Lmn, Rnn };

/// LSTM: 4(x+h)h, GRU: 3(x+h)h, RNN: (x+h)h. Throws for Arch::Lmn.
std::int64_t parameter_count(Arch arch, std::int64_t x, std::int64_t h);
/// LMN: (x+m)f + (f+m)m. `arch` must be Arch::Lmn.
std::int64_t parameter_count(Arch arch, std::int64_t x, std::int64_t f, std::int64_t m);

// -------------------------------------------------------------------------
// Seeded random initialization: uniform in [-s, s], s = 1/sqrt(fan-in).

LmnParams init_lmn(std::size_t a, std::size_t p, std::size_t m, std::size_t o,
                   LmnVariant variant, std::uint64_t seed);
UnfoldedParams init_unfolded(std::size_t a, std::size_t p, std::size_t o, std::size_t k,
                             Activation hidden_activation, std::uint64_t seed);
RnnParams init_rnn(std::size_t a, std::size_t p, std::size_t o, std::uint64_t seed);

}  // namespace lmn::model
