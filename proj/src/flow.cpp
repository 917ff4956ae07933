#include "gdflow/flow.hpp"

#include "gdflow/errors.hpp"

#include <cmath>

namespace gdflow::flow {

namespace {
constexpr double kLogScaleBound = 7.0;
constexpr double kLog2Pi = 1.8378770664093454836;

std::vector<int> hidden_degrees(int h, int hidden) {
    std::vector<int> deg(hidden);
    int span = h > 1 ? h - 1 : 1;
    for (int j = 0; j < hidden; ++j) deg[j] = 1 + j % span;
    return deg;
}
} // namespace

int hidden_width(int h) { return std::max(4, 2 * h); }

MadeMasks made_masks(int h, int hidden) {
    MadeMasks m{Array({h, hidden}), Array({hidden, 2 * h})};
    auto deg = hidden_degrees(h, hidden);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < hidden; ++j)
            m.input_hidden[static_cast<std::size_t>(i) * hidden + j] =
                deg[j] >= i + 1 ? 1.0 : 0.0;
    // Output o conditions dimension (o mod h); strict inequality keeps the
    // Jacobian of dimension i free of x_i itself. h = 1 connects nothing and
    // the block degenerates to bias-only shift/scale.
    for (int j = 0; j < hidden; ++j)
        for (int o = 0; o < 2 * h; ++o)
            m.hidden_output[static_cast<std::size_t>(j) * 2 * h + o] =
                (o % h) + 1 > deg[j] ? 1.0 : 0.0;
    return m;
}

FlowParams FlowParams::init(int h, int num_blocks, Rng& rng) {
    if (h < 1) throw ConfigError("flow dimension must be >= 1");
    if (num_blocks < 1) throw ConfigError("flow needs at least 1 block");
    FlowParams p;
    p.h = h;
    p.hidden = hidden_width(h);
    double bound = 1.0 / std::sqrt(static_cast<double>(h));
    for (int b = 0; b < num_blocks; ++b) {
        FlowBlockParams blk{Array::uniform({h, p.hidden}, rng, -bound, bound),
                            Array({p.hidden}),
                            // zero-initialized head: identity transform at start
                            Array({p.hidden, 2 * h}), Array({2 * h})};
        p.blocks.push_back(std::move(blk));
    }
    p.base_mean = Array({h});
    p.base_var = Array::full({h}, 1.0);
    return p;
}

std::vector<std::pair<std::string, Array*>>
FlowParams::parameters(const std::string& prefix) {
    std::vector<std::pair<std::string, Array*>> out;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        std::string base = prefix + ".block" + std::to_string(b);
        out.emplace_back(base + ".w1", &blocks[b].w1);
        out.emplace_back(base + ".b1", &blocks[b].b1);
        out.emplace_back(base + ".w2", &blocks[b].w2);
        out.emplace_back(base + ".b2", &blocks[b].b2);
    }
    return out;
}

FlowVars bind(ad::Tape& tape, const FlowParams& params, bool trainable,
              long* clamp_count) {
    FlowVars fv;
    fv.h = params.h;
    fv.hidden = params.hidden;
    fv.params = &params;
    fv.clamp_count = clamp_count;
    MadeMasks masks = made_masks(params.h, params.hidden);
    fv.mask1 = tape.constant(std::move(masks.input_hidden));
    fv.mask2 = tape.constant(std::move(masks.hidden_output));
    for (const auto& blk : params.blocks)
        fv.blocks.push_back({tape.leaf(blk.w1, trainable), tape.leaf(blk.b1, trainable),
                             tape.leaf(blk.w2, trainable), tape.leaf(blk.b2, trainable)});
    return fv;
}

namespace {
// Conditioner for one block: returns (shift, clamped log_scale), each (R, h).
std::pair<ad::Var, ad::Var> conditioner(ad::Var x, const std::array<ad::Var, 4>& blk,
                                        const FlowVars& fv) {
    ad::Var hid = ad::tanh(ad::add_bias(ad::matmul(x, ad::mul(blk[0], fv.mask1)), blk[1]));
    ad::Var out = ad::add_bias(ad::matmul(hid, ad::mul(blk[2], fv.mask2)), blk[3]);
    ad::Var shift = ad::slice(out, 1, 0, fv.h);
    ad::Var logs = ad::clamp(ad::slice(out, 1, fv.h, 2 * fv.h), -kLogScaleBound,
                             kLogScaleBound, fv.clamp_count);
    return {shift, logs};
}
} // namespace

std::pair<ad::Var, ad::Var> forward(ad::Var x, const FlowVars& fv) {
    const auto& s = x.shape();
    if (s.size() != 2 || s[1] != fv.h)
        throw ShapeError("flow forward expects (R, h) input, got " + shape_str(s));
    ad::Var z = x;
    ad::Var logdet;
    for (const auto& blk : fv.blocks) {
        auto [shift, logs] = conditioner(z, blk, fv);
        z = ad::flip_last(ad::add(ad::mul(z, ad::exp(logs)), shift));
        ad::Var ld = ad::sum_last(logs);
        logdet = logdet.valid() ? ad::add(logdet, ld) : ld;
    }
    return {z, logdet};
}

ad::Var base_logprob(ad::Var z, const Array& mean, const Array& var) {
    const auto& s = z.shape();
    if (s.size() != 2) throw ShapeError("base_logprob expects (R, h), got " + shape_str(s));
    const int h = s[1];
    if (mean.size() != static_cast<std::size_t>(h) || var.size() != mean.size())
        throw ShapeError("base parameter length mismatch");
    Array neg_mean({h}), inv_var({h});
    double log_const = h * kLog2Pi;
    for (int i = 0; i < h; ++i) {
        if (!(var[i] > 0.0)) throw NumericError("nonpositive base variance");
        neg_mean[i] = -mean[i];
        inv_var[i] = 1.0 / var[i];
        log_const += std::log(var[i]);
    }
    ad::Tape& tape = *z.tape;
    ad::Var d = ad::add_bias(z, tape.constant(std::move(neg_mean)));
    ad::Var quad = ad::sum_last(ad::mul(d, ad::scale_cols(d, tape.constant(std::move(inv_var)))));
    return ad::scale(ad::add_scalar(quad, log_const), -0.5);
}

ad::Var log_likelihood(ad::Var s, const FlowVars& fv) {
    auto [z, logdet] = forward(s, fv);
    return ad::add(base_logprob(z, fv.params->base_mean, fv.params->base_var), logdet);
}

Array inverse(const FlowParams& params, const Array& z) {
    if (z.rank() != 2 || z.dim(1) != params.h)
        throw ShapeError("flow inverse expects (R, h), got " + shape_str(z.shape()));
    const int R = z.dim(0), h = params.h, hidden = params.hidden;
    MadeMasks masks = made_masks(h, hidden);

    Array x = z;
    std::vector<double> hid(hidden), out(2 * h);
    for (auto blk = params.blocks.rbegin(); blk != params.blocks.rend(); ++blk) {
        for (int r = 0; r < R; ++r) {
            double* row = x.data() + static_cast<std::size_t>(r) * h;
            // undo the dimension reversal of this block
            for (int i = 0, j = h - 1; i < j; ++i, --j) std::swap(row[i], row[j]);
            std::vector<double> target(row, row + h);
            // dimension i needs only row[<i], already solved by iteration order
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < hidden; ++j) {
                    double acc = blk->b1[j];
                    for (int k = 0; k < i; ++k)
                        acc += row[k] * blk->w1[static_cast<std::size_t>(k) * hidden + j] *
                               masks.input_hidden[static_cast<std::size_t>(k) * hidden + j];
                    hid[j] = std::tanh(acc);
                }
                for (int o : {i, h + i}) {
                    double acc = blk->b2[o];
                    for (int j = 0; j < hidden; ++j)
                        acc += hid[j] * blk->w2[static_cast<std::size_t>(j) * 2 * h + o] *
                               masks.hidden_output[static_cast<std::size_t>(j) * 2 * h + o];
                    out[o] = acc;
                }
                double logs = std::clamp(out[h + i], -kLogScaleBound, kLogScaleBound);
                row[i] = (target[i] - out[i]) * std::exp(-logs);
                if (!std::isfinite(row[i]))
                    throw NumericError("non-finite intermediate in flow inverse");
            }
        }
    }
    return x;
}

} // namespace gdflow::flow
