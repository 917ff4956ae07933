#include "gdflow/encoder.hpp"

#include "gdflow/errors.hpp"

#include <cmath>

namespace gdflow::encoder {

namespace {
Array uniform_scaled(Shape shape, int fan_in, Rng& rng, double scale = 1.0) {
    double bound = scale / std::sqrt(static_cast<double>(fan_in));
    return Array::uniform(std::move(shape), rng, -bound, bound);
}
} // namespace

EncoderParams EncoderParams::init(int n, int h, int k, int d_e, Rng& rng, bool rnn) {
    if (n < 1 || h < 1) throw ConfigError("encoder needs n >= 1 and h >= 1");
    EncoderParams p;
    p.n = n;
    p.h = h;
    p.k = k;
    p.d_e = d_e;
    p.rnn = rnn;
    if (rnn) {
        p.rnn_w0 = Array::uniform({1, h}, rng, -1.0, 1.0);
        p.rnn_win = Array::uniform({1, h}, rng, -1.0, 1.0);
        p.rnn_wrec = uniform_scaled({h, h}, h, rng);
        p.rnn_b = Array({h});
        return p;
    }
    if (k < 0 || d_e < 1) throw ConfigError("encoder needs k >= 0 and d_e >= 1");
    const int d = kPathChannels;
    p.w_h = uniform_scaled({d, h}, d, rng);
    p.w_y = uniform_scaled({d, h}, d, rng);
    p.f1_w1 = uniform_scaled({h, h}, h, rng);
    p.f1_b1 = Array({h});
    // final field layers start small so early dynamics stay near-identity
    p.f1_w2 = uniform_scaled({h, h * d}, h, rng, 0.1);
    p.f1_b2 = Array({h * d});
    for (int i = 0; i <= k; ++i) p.gc.push_back(uniform_scaled({h, h}, h, rng));
    p.f2_w1 = uniform_scaled({h, h}, h, rng);
    p.f2_b1 = Array({h});
    p.f2_w2 = uniform_scaled({h, h * h}, h, rng, 0.1);
    p.f2_b2 = Array({h * h});
    p.embed = uniform_scaled({n, d_e}, d_e, rng);
    return p;
}

std::vector<std::pair<std::string, Array*>>
EncoderParams::parameters(const std::string& prefix) {
    std::vector<std::pair<std::string, Array*>> out;
    if (rnn) {
        out.emplace_back(prefix + ".rnn_w0", &rnn_w0);
        out.emplace_back(prefix + ".rnn_win", &rnn_win);
        out.emplace_back(prefix + ".rnn_wrec", &rnn_wrec);
        out.emplace_back(prefix + ".rnn_b", &rnn_b);
        return out;
    }
    out.emplace_back(prefix + ".w_h", &w_h);
    out.emplace_back(prefix + ".w_y", &w_y);
    out.emplace_back(prefix + ".f1_w1", &f1_w1);
    out.emplace_back(prefix + ".f1_b1", &f1_b1);
    out.emplace_back(prefix + ".f1_w2", &f1_w2);
    out.emplace_back(prefix + ".f1_b2", &f1_b2);
    for (std::size_t i = 0; i < gc.size(); ++i)
        out.emplace_back(prefix + ".gc" + std::to_string(i), &gc[i]);
    out.emplace_back(prefix + ".f2_w1", &f2_w1);
    out.emplace_back(prefix + ".f2_b1", &f2_b1);
    out.emplace_back(prefix + ".f2_w2", &f2_w2);
    out.emplace_back(prefix + ".f2_b2", &f2_b2);
    out.emplace_back(prefix + ".embed", &embed);
    return out;
}

EncoderVars bind(ad::Tape& tape, const EncoderParams& params, bool trainable) {
    EncoderVars ev;
    ev.params = &params;
    if (params.rnn) {
        ev.rnn = {tape.leaf(params.rnn_w0, trainable), tape.leaf(params.rnn_win, trainable),
                  tape.leaf(params.rnn_wrec, trainable), tape.leaf(params.rnn_b, trainable)};
        return ev;
    }
    ev.w_h = tape.leaf(params.w_h, trainable);
    ev.w_y = tape.leaf(params.w_y, trainable);
    ev.f1 = {tape.leaf(params.f1_w1, trainable), tape.leaf(params.f1_b1, trainable),
             tape.leaf(params.f1_w2, trainable), tape.leaf(params.f1_b2, trainable)};
    for (const auto& w : params.gc) ev.gc.push_back(tape.leaf(w, trainable));
    ev.f2 = {tape.leaf(params.f2_w1, trainable), tape.leaf(params.f2_b1, trainable),
             tape.leaf(params.f2_w2, trainable), tape.leaf(params.f2_b2, trainable)};
    ev.embed = tape.leaf(params.embed, trainable);
    return ev;
}

std::pair<ad::Var, ad::Var> init_state(ad::Var x0, const EncoderVars& ev) {
    if (x0.shape().size() != 3)
        throw ShapeError("init_state expects (b, n, d), got " + shape_str(x0.shape()));
    return {ad::bmm(x0, ev.w_h), ad::bmm(x0, ev.w_y)};
}

ad::Var vector_field_f1(ad::Var state, const EncoderVars& ev) {
    ad::Var a = ad::tanh(ad::add_bias(ad::matmul(state, ev.f1[0]), ev.f1[1]));
    return ad::add_bias(ad::matmul(a, ev.f1[2]), ev.f1[3]);
}

ad::Var vector_field_f2(ad::Var state, const std::vector<ad::Var>& cheb,
                        const EncoderVars& ev) {
    const auto& s = state.shape();
    if (s.size() != 3)
        throw ShapeError("vector_field_f2 expects (b, n, h), got " + shape_str(s));
    ad::Var mixed = ad::tanh(graph::conv(cheb, state, ev.gc));
    ad::Var flat = ad::reshape(mixed, {s[0] * s[1], s[2]});
    ad::Var a = ad::tanh(ad::add_bias(ad::matmul(flat, ev.f2[0]), ev.f2[1]));
    return ad::add_bias(ad::matmul(a, ev.f2[2]), ev.f2[3]);
}

ad::Var encode(const Array& windows, const EncoderVars& ev, int substeps) {
    const EncoderParams& p = *ev.params;
    if (p.rnn) return encode_rnn(windows, ev);
    if (windows.rank() != 3)
        throw ShapeError("encode expects (b, n, w) windows, got " + shape_str(windows.shape()));
    if (substeps < 1) throw ConfigError("substeps must be >= 1");
    const int b = windows.dim(0), n = windows.dim(1), w = windows.dim(2);
    if (n != p.n) throw ShapeError("window sensor count != encoder sensor count");
    if (w < 2) throw NumericError("encode needs window length >= 2");
    const int d = kPathChannels;
    const int R = b * n;
    ad::Tape& tape = *ev.embed.tape;

    std::vector<SplinePath> paths;
    paths.reserve(b);
    for (int wb = 0; wb < b; ++wb) {
        std::vector<double> vals(windows.data() + static_cast<std::size_t>(wb) * n * w,
                                 windows.data() + static_cast<std::size_t>(wb + 1) * n * w);
        paths.push_back(SplinePath::fit(Array({n, w}, std::move(vals))));
    }

    Array x0({b, n, d});
    for (int wb = 0; wb < b; ++wb)
        for (int s = 0; s < n; ++s)
            x0[(static_cast<std::size_t>(wb) * n + s) * d] =
                windows[(static_cast<std::size_t>(wb) * n + s) * w];
    auto [h0, y0] = init_state(tape.constant(std::move(x0)), ev);
    ad::Var H = ad::reshape(h0, {R, p.h});
    ad::Var Y = ad::reshape(y0, {R, p.h});

    std::vector<ad::Var> cheb = graph::chebyshev(graph::adjacency(ev.embed), p.k);

    const double dt = 1.0 / substeps;
    const int steps = (w - 1) * substeps;
    // time channel spans [0, 1] over the window so it stays commensurate
    // with z-scored value channels instead of dominating the path
    const double time_slope = 1.0 / (w - 1);
    std::vector<double> deriv(n);
    for (int step = 0; step < steps; ++step) {
        double t = step * dt;
        Array dx({R, d});
        for (int wb = 0; wb < b; ++wb) {
            paths[wb].eval_derivative(t, deriv.data());
            for (int s = 0; s < n; ++s) {
                std::size_t r = static_cast<std::size_t>(wb) * n + s;
                dx[r * d] = deriv[s] * dt;
                dx[r * d + 1] = dt * time_slope;
            }
        }
        try {
            ad::Var dxv = tape.constant(std::move(dx));
            ad::Var a1 = ad::tanh(ad::add_bias(ad::matmul(H, ev.f1[0]), ev.f1[1]));
            ad::Var inc_h = ad::fused_linear_contract(a1, ev.f1[2], ev.f1[3], dxv);

            ad::Var mixed = ad::tanh(graph::conv(cheb, ad::reshape(Y, {b, n, p.h}), ev.gc));
            ad::Var a2 = ad::tanh(ad::add_bias(
                ad::matmul(ad::reshape(mixed, {R, p.h}), ev.f2[0]), ev.f2[1]));
            ad::Var inc_y = ad::fused_linear_contract(a2, ev.f2[2], ev.f2[3], inc_h);

            H = ad::add(H, inc_h);
            Y = ad::add(Y, inc_y);
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " (euler step " +
                               std::to_string(step) + " of " + std::to_string(steps) + ")");
        }
    }
    return ad::reshape(ad::mul(H, Y), {b, n, p.h});
}

ad::Var encode_rnn(const Array& windows, const EncoderVars& ev) {
    const EncoderParams& p = *ev.params;
    if (windows.rank() != 3)
        throw ShapeError("encode expects (b, n, w) windows, got " + shape_str(windows.shape()));
    const int b = windows.dim(0), n = windows.dim(1), w = windows.dim(2);
    if (n != p.n) throw ShapeError("window sensor count != encoder sensor count");
    if (w < 2) throw NumericError("encode needs window length >= 2");
    const int R = b * n;
    ad::Tape& tape = *ev.rnn[0].tape;

    auto value_col = [&](int t) {
        Array x({R, 1});
        for (int wb = 0; wb < b; ++wb)
            for (int s = 0; s < n; ++s)
                x[static_cast<std::size_t>(wb) * n + s] =
                    windows[(static_cast<std::size_t>(wb) * n + s) * w + t];
        return tape.constant(std::move(x));
    };

    ad::Var r = ad::matmul(value_col(0), ev.rnn[0]);
    for (int t = 1; t < w; ++t) {
        ad::Var drive = ad::add(ad::matmul(value_col(t), ev.rnn[1]), ad::matmul(r, ev.rnn[2]));
        r = ad::tanh(ad::add_bias(drive, ev.rnn[3]));
    }
    return ad::reshape(r, {b, n, p.h});
}

} // namespace gdflow::encoder
