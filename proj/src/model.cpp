#include "gdflow/model.hpp"

#include "gdflow/errors.hpp"
#include "gdflow/textio.hpp"

#include <fstream>
#include <sstream>

namespace gdflow {

namespace {
constexpr const char* kMagic = "gdflow checkpoint v1";

std::vector<ad::Var> collect_encoder_vars(const encoder::EncoderVars& ev) {
    if (ev.params->rnn) return {ev.rnn[0], ev.rnn[1], ev.rnn[2], ev.rnn[3]};
    std::vector<ad::Var> out{ev.w_h, ev.w_y, ev.f1[0], ev.f1[1], ev.f1[2], ev.f1[3]};
    for (const auto& g : ev.gc) out.push_back(g);
    out.insert(out.end(), {ev.f2[0], ev.f2[1], ev.f2[2], ev.f2[3], ev.embed});
    return out;
}
} // namespace

GdflowModel GdflowModel::init(const RunConfig& cfg, int window, Rng& rng) {
    cfg.validate();
    if (window < 2) throw ConfigError("resolved window length must be >= 2");
    GdflowModel m;
    m.cfg = cfg;
    m.window = window;
    const int n = static_cast<int>(cfg.channels.size());
    m.enc = encoder::EncoderParams::init(n, cfg.hidden, cfg.cheb_k, cfg.embed_dim, rng,
                                         cfg.no_ncde);
    m.flw = flow::FlowParams::init(cfg.hidden, cfg.flow_blocks, rng);
    return m;
}

std::vector<std::pair<std::string, Array*>> GdflowModel::parameters() {
    auto out = enc.parameters("enc");
    auto f = flw.parameters("flow");
    out.insert(out.end(), f.begin(), f.end());
    return out;
}

GdflowModel::Bound GdflowModel::bind(ad::Tape& tape, bool trainable,
                                     long* clamp_count) const {
    Bound b;
    b.enc = encoder::bind(tape, enc, trainable);
    b.flw = flow::bind(tape, flw, trainable, clamp_count);
    b.params = collect_encoder_vars(b.enc);
    for (const auto& blk : b.flw.blocks)
        b.params.insert(b.params.end(), {blk[0], blk[1], blk[2], blk[3]});
    return b;
}

ad::Var GdflowModel::window_lls(const Bound& bound, const Array& windows, int substeps) {
    ad::Var s = encoder::encode(windows, bound.enc, substeps);
    const auto& shape = s.shape();
    ad::Var flat = ad::reshape(s, {shape[0] * shape[1], shape[2]});
    return flow::log_likelihood(flat, bound.flw);
}

std::vector<std::vector<double>> GdflowModel::window_sensor_lls(const Array& windows) const {
    ad::Tape tape;
    Bound bound = bind(tape, false);
    ad::Var lls = window_lls(bound, windows);
    const Array& v = lls.value();
    const int b = windows.dim(0), n = windows.dim(1);
    std::vector<std::vector<double>> out(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i)
        out[i].assign(v.data() + static_cast<std::size_t>(i) * n,
                      v.data() + static_cast<std::size_t>(i + 1) * n);
    return out;
}

std::vector<double> GdflowModel::score_windows(const Array& windows) const {
    auto lls = window_sensor_lls(windows);
    std::vector<double> scores;
    scores.reserve(lls.size());
    for (const auto& row : lls)
        scores.push_back(objective::score_from_lls(row, cfg.q, !cfg.no_quantile));
    return scores;
}

void GdflowModel::save(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path);
    out << kMagic << "\n";
    for (const auto& [k, v] : cfg.entries()) out << "config " << k << " = " << v << "\n";
    out << "stat_mean";
    for (double v : stats.mean) out << ' ' << fmt_f64(v);
    out << "\nstat_std";
    for (double v : stats.stdev) out << ' ' << fmt_f64(v);
    out << "\ntau " << fmt_f64(tau) << "\n";
    out << "best_epoch " << best_epoch << "\n";
    out << "window " << window << "\n";

    auto params = parameters();
    out << "params " << params.size() << "\n";
    for (const auto& [name, arr] : params) {
        out << name << ' ' << arr->rank();
        for (int d : arr->shape()) out << ' ' << d;
        out << "\n";
        out.write(reinterpret_cast<const char*>(arr->data()),
                  static_cast<std::streamsize>(arr->size() * sizeof(double)));
        out << "\n";
    }
    out << "end\n";
    if (!out) throw DataError("checkpoint write failed: " + path);
}

GdflowModel GdflowModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path);
    std::string line;
    if (!std::getline(in, line) || line != kMagic)
        throw DataError(path + ": not a checkpoint file");

    RunConfig cfg;
    data::NormStats stats;
    double tau = 0.0;
    int best_epoch = -1, window = 0;
    std::size_t param_count = 0;
    while (std::getline(in, line)) {
        if (line.rfind("params ", 0) == 0) {
            param_count = static_cast<std::size_t>(parse_i64(line.substr(7), path));
            break;
        }
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "config") {
            std::string key, eq;
            ls >> key >> eq;
            std::string value;
            std::getline(ls, value);
            if (eq != "=") throw DataError(path + ": malformed config line");
            cfg.set(key, trim(value));
        } else if (tag == "stat_mean" || tag == "stat_std") {
            for (int c = 0; c < data::kNumChannels; ++c) {
                std::string v;
                if (!(ls >> v)) throw DataError(path + ": truncated " + tag);
                (tag == "stat_mean" ? stats.mean : stats.stdev)[c] = parse_f64(v, tag);
            }
        } else if (tag == "tau") {
            std::string v;
            ls >> v;
            tau = parse_f64(v, "tau");
        } else if (tag == "best_epoch") {
            ls >> best_epoch;
        } else if (tag == "window") {
            ls >> window;
        } else {
            throw DataError(path + ": unexpected header line '" + line + "'");
        }
    }

    Rng scratch(0);
    GdflowModel m = GdflowModel::init(cfg, window, scratch);
    m.stats = stats;
    m.tau = tau;
    m.best_epoch = best_epoch;
    auto params = m.parameters();
    if (params.size() != param_count)
        throw DataError(path + ": parameter count mismatch");
    for (auto& [name, arr] : params) {
        if (!std::getline(in, line)) throw DataError(path + ": truncated parameter table");
        std::istringstream ls(line);
        std::string got_name;
        int rank = -1;
        ls >> got_name >> rank;
        if (got_name != name) throw DataError(path + ": expected parameter '" + name +
                                              "', found '" + got_name + "'");
        Shape shape(static_cast<std::size_t>(rank));
        for (int i = 0; i < rank; ++i) ls >> shape[static_cast<std::size_t>(i)];
        if (shape != arr->shape())
            throw DataError(path + ": shape mismatch for parameter '" + name + "'");
        in.read(reinterpret_cast<char*>(arr->data()),
                static_cast<std::streamsize>(arr->size() * sizeof(double)));
        if (!in) throw DataError(path + ": truncated parameter data");
        in.ignore(1); // trailing newline
    }
    if (!std::getline(in, line) || line != "end")
        throw DataError(path + ": missing end marker");
    return m;
}

} // namespace gdflow
