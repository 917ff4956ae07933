#pragma once

#include "gdflow/autodiff.hpp"
#include "gdflow/graph.hpp"
#include "gdflow/rng.hpp"
#include "gdflow/spline.hpp"

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace gdflow::encoder {

// Control path channels per sensor: spline value plus linear time.
constexpr int kPathChannels = 2;

// Parameters of the dual-CDE encoder. In RNN mode (the encoder ablation) the
// graph and vector-field weights are replaced by a per-sensor tanh recurrence.
struct EncoderParams {
    int n = 0;   // sensors
    int h = 0;   // hidden width
    int k = 0;   // Chebyshev order
    int d_e = 0; // embedding width
    bool rnn = false;

    Array w_h, w_y;         // (d, h) init maps
    Array f1_w1, f1_b1;     // (h, h), (h)
    Array f1_w2, f1_b2;     // (h, h*d), (h*d)
    std::vector<Array> gc;  // k+1 of (h, h), no bias
    Array f2_w1, f2_b1;     // (h, h), (h)
    Array f2_w2, f2_b2;     // (h, h*h), (h*h)
    Array embed;            // (n, d_e)

    Array rnn_w0;           // (1, h)
    Array rnn_win, rnn_wrec, rnn_b; // (1, h), (h, h), (h)

    static EncoderParams init(int n, int h, int k, int d_e, Rng& rng, bool rnn = false);
    std::vector<std::pair<std::string, Array*>> parameters(const std::string& prefix);
};

struct EncoderVars {
    const EncoderParams* params = nullptr;
    ad::Var w_h, w_y;
    std::array<ad::Var, 4> f1; // w1, b1, w2, b2
    std::vector<ad::Var> gc;
    std::array<ad::Var, 4> f2;
    ad::Var embed;
    std::array<ad::Var, 4> rnn; // w0, win, wrec, b
};

EncoderVars bind(ad::Tape& tape, const EncoderParams& params, bool trainable);

// (H0, Y0) from the initial path value X0: (b, n, d) -> two (b, n, h).
std::pair<ad::Var, ad::Var> init_state(ad::Var x0, const EncoderVars& ev);

// Temporal vector field: (R, h) state -> (R, h*d) flattened h x d matrices.
ad::Var vector_field_f1(ad::Var state, const EncoderVars& ev);

// Spatial vector field: (b, n, h) state -> (b*n, h*h) flattened h x h
// matrices, mixing sensors through the Chebyshev stack first.
ad::Var vector_field_f2(ad::Var state, const std::vector<ad::Var>& cheb,
                        const EncoderVars& ev);

// Euler integration of the dual CDE over one window batch.
// windows: (b, n, w) raw values, w >= 2. substeps > 1 refines the step size
// to 1/substeps (used by the convergence check). Returns S(T): (b, n, h).
ad::Var encode(const Array& windows, const EncoderVars& ev, int substeps = 1);

// Per-sensor tanh RNN used when params.rnn is set.
ad::Var encode_rnn(const Array& windows, const EncoderVars& ev);

} // namespace gdflow::encoder
