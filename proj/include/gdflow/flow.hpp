#pragma once

#include "gdflow/autodiff.hpp"
#include "gdflow/rng.hpp"

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace gdflow::flow {

// Binary masks enforcing the autoregressive structure of the conditioner:
// output dimension i may depend only on input dimensions < i.
struct MadeMasks {
    Array input_hidden;  // (h, hidden)
    Array hidden_output; // (hidden, 2h): [shift(h), log_scale(h)]
};

int hidden_width(int h);
MadeMasks made_masks(int h, int hidden);

struct FlowBlockParams {
    Array w1, b1; // (h, hidden), (hidden)
    Array w2, b2; // (hidden, 2h), (2h)
};

// Stack of masked-affine blocks, each followed by dimension reversal.
// Base distribution N(mean, diag(var)) is frozen.
struct FlowParams {
    int h = 0;
    int hidden = 0;
    std::vector<FlowBlockParams> blocks;
    Array base_mean; // (h)
    Array base_var;  // (h)

    static FlowParams init(int h, int num_blocks, Rng& rng);
    std::vector<std::pair<std::string, Array*>> parameters(const std::string& prefix);
};

// Tape-bound handles for one training/scoring pass.
struct FlowVars {
    int h = 0;
    int hidden = 0;
    std::vector<std::array<ad::Var, 4>> blocks; // w1, b1, w2, b2
    ad::Var mask1, mask2;                       // constants
    const FlowParams* params = nullptr;
    long* clamp_count = nullptr;
};

FlowVars bind(ad::Tape& tape, const FlowParams& params, bool trainable,
              long* clamp_count = nullptr);

// x: (R, h) rows -> z (R, h) and per-row logdet (R).
std::pair<ad::Var, ad::Var> forward(ad::Var x, const FlowVars& fv);

// log N(z | mean, diag(var)) per row: (R, h) -> (R).
ad::Var base_logprob(ad::Var z, const Array& mean, const Array& var);

// base_logprob(forward(s).z) + logdet, per row.
ad::Var log_likelihood(ad::Var s, const FlowVars& fv);

// Sequential per-dimension inverse of the whole stack (test/diagnostic path,
// no gradients). z: (R, h) -> x with forward(x) = z.
Array inverse(const FlowParams& params, const Array& z);

} // namespace gdflow::flow
