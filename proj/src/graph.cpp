#include "gdflow/graph.hpp"

#include "gdflow/errors.hpp"

namespace gdflow::graph {

ad::Var adjacency(ad::Var embed) {
    if (embed.shape().size() != 2)
        throw ShapeError("adjacency expects (n, d_e) embeddings, got " +
                         shape_str(embed.shape()));
    ad::Var sim = ad::matmul(embed, ad::transpose(embed));
    return ad::softmax_last(ad::relu(sim));
}

std::vector<ad::Var> chebyshev(ad::Var adj, int order) {
    const auto& s = adj.shape();
    if (s.size() != 2 || s[0] != s[1])
        throw ShapeError("chebyshev expects square adjacency, got " + shape_str(s));
    if (order < 0) throw ConfigError("chebyshev order must be >= 0");
    const int n = s[0];

    Array eye({n, n});
    for (int i = 0; i < n; ++i) eye[static_cast<std::size_t>(i) * n + i] = 1.0;

    std::vector<ad::Var> cheb;
    cheb.reserve(order + 1);
    cheb.push_back(adj.tape->constant(std::move(eye)));
    if (order >= 1) cheb.push_back(adj);
    for (int k = 2; k <= order; ++k) {
        ad::Var rec = ad::matmul(adj, cheb[k - 1]);
        cheb.push_back(ad::sub(ad::scale(rec, 2.0), cheb[k - 2]));
    }
    return cheb;
}

ad::Var conv(const std::vector<ad::Var>& cheb, ad::Var x,
             const std::vector<ad::Var>& weights) {
    if (cheb.empty() || cheb.size() != weights.size())
        throw ShapeError("graph conv needs one weight per Chebyshev term");
    if (x.shape().size() != 3)
        throw ShapeError("graph conv expects (b, n, h) input, got " + shape_str(x.shape()));
    ad::Var out = ad::bmm(ad::bmm(cheb[0], x), weights[0]);
    for (std::size_t k = 1; k < cheb.size(); ++k)
        out = ad::add(out, ad::bmm(ad::bmm(cheb[k], x), weights[k]));
    return out;
}

} // namespace gdflow::graph
