#include "gdflow/train.hpp"

#include "gdflow/errors.hpp"
#include "gdflow/eval.hpp"
#include "gdflow/optim.hpp"
#include "gdflow/textio.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

namespace gdflow::train {

namespace {
constexpr std::uint64_t kSplitStream = 0x73706c69;
constexpr std::uint64_t kInitStream = 0x696e6974;
constexpr std::uint64_t kEpochStream = 0x65706f63;

void sort_by_id(std::vector<data::Profile>& corpus) {
    std::sort(corpus.begin(), corpus.end(),
              [](const data::Profile& a, const data::Profile& b) { return a.id < b.id; });
}

std::vector<double> score_windows_batched(const GdflowModel& model,
                                          const std::vector<data::Profile>& profiles,
                                          const std::vector<data::Window>& windows,
                                          const std::vector<int>& channels) {
    std::vector<double> scores;
    scores.reserve(windows.size());
    const std::size_t batch = static_cast<std::size_t>(model.cfg.batch);
    for (std::size_t first = 0; first < windows.size(); first += batch) {
        std::size_t count = std::min(batch, windows.size() - first);
        Array chunk = data::assemble_batch(profiles, windows, first, count, channels,
                                           model.window);
        auto part = model.score_windows(chunk);
        scores.insert(scores.end(), part.begin(), part.end());
    }
    return scores;
}
} // namespace

Split split_profiles(const std::vector<data::Profile>& profiles, double train_frac,
                     std::uint64_t seed) {
    const std::size_t n = profiles.size();
    if (n < 2) throw DataError("train/test split needs at least 2 profiles");
    for (std::size_t i = 1; i < n; ++i)
        if (!(profiles[i - 1].id < profiles[i].id))
            throw DataError("profiles must be sorted by unique id before splitting");
    std::vector<int> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    Rng rng = Rng::stream(seed, kSplitStream);
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[rng.below(i)]);
    auto train_count = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
    train_count = std::clamp<std::size_t>(train_count, 1, n - 1);
    Split sp;
    sp.train.assign(order.begin(), order.begin() + static_cast<long>(train_count));
    sp.test.assign(order.begin() + static_cast<long>(train_count), order.end());
    std::sort(sp.train.begin(), sp.train.end());
    std::sort(sp.test.begin(), sp.test.end());
    return sp;
}

std::vector<data::Window> enumerate_windows(const std::vector<data::Profile>& profiles,
                                            const std::vector<int>& subset, int w, int s,
                                            long* skipped) {
    std::vector<data::Window> out;
    for (int idx : subset) {
        auto wins = data::make_windows(profiles[static_cast<std::size_t>(idx)], idx, w, s,
                                       skipped);
        out.insert(out.end(), wins.begin(), wins.end());
    }
    return out;
}

TrainResult train_model(std::vector<data::Profile> corpus, const RunConfig& cfg) {
    cfg.validate();
    sort_by_id(corpus);
    Split split = split_profiles(corpus, cfg.train_split, cfg.seed);

    std::vector<int> train_normals;
    for (int i : split.train)
        if (corpus[static_cast<std::size_t>(i)].label == 0) train_normals.push_back(i);
    if (train_normals.empty()) throw DataError("train split has no normal profiles");

    int w = cfg.window;
    if (w == 0) {
        w = corpus[static_cast<std::size_t>(train_normals.front())].length();
        for (int i : train_normals)
            w = std::min(w, corpus[static_cast<std::size_t>(i)].length());
    }
    if (w < 2) throw DataError("resolved window length is below 2");

    std::vector<data::Profile> stat_set;
    for (int i : train_normals) stat_set.push_back(corpus[static_cast<std::size_t>(i)]);
    data::NormStats stats = data::compute_stats(stat_set);
    for (auto& p : corpus) data::apply_stats(p, stats);

    TrainResult result;
    std::vector<data::Window> train_windows =
        enumerate_windows(corpus, train_normals, w, cfg.stride, &result.skipped_windows);
    if (train_windows.empty()) throw DataError("no training windows of length " +
                                               std::to_string(w));
    std::vector<data::Window> val_windows =
        enumerate_windows(corpus, split.test, w, cfg.stride, &result.skipped_windows);
    bool val_pos = false, val_neg = false;
    for (const auto& win : val_windows) (win.label ? val_pos : val_neg) = true;
    const bool val_usable = val_pos && val_neg;

    Rng init_rng = Rng::stream(cfg.seed, kInitStream);
    GdflowModel model = GdflowModel::init(cfg, w, init_rng);
    model.stats = stats;
    const std::vector<int> channels = cfg.channel_indices();

    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    opt_cfg.weight_decay = cfg.weight_decay;
    AdamW opt(opt_cfg);
    auto params = model.parameters();
    for (auto& [name, arr] : params) opt.add_slot(arr->shape());

    auto snapshot = [&]() {
        std::vector<Array> copy;
        copy.reserve(params.size());
        for (auto& [name, arr] : params) copy.push_back(*arr);
        return copy;
    };
    std::vector<Array> best = snapshot();
    int best_epoch = -1;
    double best_f1 = -1.0;
    double best_auroc = -1.0; // tie-break: equal F1-PA resolves to higher val AUROC
    double best_loss = std::numeric_limits<double>::infinity();

    result.log.push_back("profiles " + std::to_string(corpus.size()) + " train_normal " +
                         std::to_string(train_normals.size()) + " window " +
                         std::to_string(w) + " train_windows " +
                         std::to_string(train_windows.size()) + " val_windows " +
                         std::to_string(val_windows.size()));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<data::Window> shuffled = train_windows;
        Rng erng = Rng::stream(cfg.seed, kEpochStream + static_cast<std::uint64_t>(epoch));
        for (std::size_t i = shuffled.size(); i > 1; --i)
            std::swap(shuffled[i - 1], shuffled[erng.below(i)]);

        double loss_sum = 0.0;
        std::size_t loss_n = 0;
        const std::size_t bs = static_cast<std::size_t>(cfg.batch);
        for (std::size_t first = 0; first < shuffled.size(); first += bs) {
            std::size_t count = std::min(bs, shuffled.size() - first);
            Array batch = data::assemble_batch(corpus, shuffled, first, count, channels, w);
            ad::Tape tape;
            GdflowModel::Bound bound = model.bind(tape, true, &result.clamp_saturations);
            ad::Var lls;
            double loss_value;
            try {
                lls = GdflowModel::window_lls(bound, batch);
                ad::Var loss = cfg.no_quantile ? objective::mean_nll_loss(lls)
                                               : objective::q_nll_loss(lls, cfg.q);
                loss_value = loss.value().item();
                tape.backward(loss);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " (epoch " +
                                   std::to_string(epoch) + ", batch at window " +
                                   std::to_string(first) + ")");
            }
            opt.begin_step();
            for (std::size_t k = 0; k < params.size(); ++k)
                opt.update(k, *params[k].second, tape.grad(bound.params[k]));
            loss_sum += loss_value * static_cast<double>(count);
            loss_n += count;
        }
        double epoch_loss = loss_sum / static_cast<double>(loss_n);
        result.epoch_loss.push_back(epoch_loss);

        double val_f1 = std::numeric_limits<double>::quiet_NaN();
        std::string val_note = " val_f1 n/a";
        if (val_usable) {
            auto scores = score_windows_batched(model, corpus, val_windows, channels);
            std::vector<int> labels;
            labels.reserve(val_windows.size());
            for (const auto& win : val_windows) labels.push_back(win.label);
            val_f1 = eval::best_f1_search(scores, labels).second;
            double val_auroc = eval::auroc(scores, labels);
            if (val_f1 > best_f1 || (val_f1 == best_f1 && val_auroc > best_auroc)) {
                best_f1 = val_f1;
                best_auroc = val_auroc;
                best_epoch = epoch;
                best = snapshot();
            }
            val_note = " val_f1 " + fmt_f64(val_f1) + " val_auroc " + fmt_f64(val_auroc);
        } else if (epoch_loss < best_loss) {
            best_loss = epoch_loss;
            best_epoch = epoch;
            best = snapshot();
        }
        result.epoch_val_f1.push_back(val_f1);
        result.log.push_back("epoch " + std::to_string(epoch) + " loss " + fmt_f64(epoch_loss) +
                             val_note);
    }

    for (std::size_t k = 0; k < params.size(); ++k) *params[k].second = best[k];
    model.best_epoch = best_epoch;

    auto train_scores = score_windows_batched(model, corpus, train_windows, channels);
    model.tau = objective::quantile(train_scores, 1.0 - cfg.expected_anomaly_rate);
    result.log.push_back("tau " + fmt_f64(model.tau) + " best_epoch " +
                         std::to_string(best_epoch));
    result.model = std::move(model);
    return result;
}

std::vector<objective::ScoreRecord> score_corpus(const GdflowModel& model,
                                                 std::vector<data::Profile> corpus,
                                                 const std::vector<int>& subset) {
    sort_by_id(corpus);
    for (auto& p : corpus) data::apply_stats(p, model.stats);
    long skipped = 0;
    auto windows = enumerate_windows(corpus, subset, model.window, model.cfg.stride, &skipped);
    const std::vector<int> channels = model.cfg.channel_indices();

    std::vector<objective::ScoreRecord> records;
    records.reserve(windows.size());
    const std::size_t batch = static_cast<std::size_t>(model.cfg.batch);
    long next_id = 0;
    for (std::size_t first = 0; first < windows.size(); first += batch) {
        std::size_t count = std::min(batch, windows.size() - first);
        Array chunk =
            data::assemble_batch(corpus, windows, first, count, channels, model.window);
        auto lls = model.window_sensor_lls(chunk);
        for (std::size_t i = 0; i < count; ++i) {
            const data::Window& win = windows[first + i];
            objective::ScoreRecord rec;
            rec.window_id = next_id++;
            rec.profile_id = win.profile_id;
            rec.start = win.start;
            rec.sensor_lls = lls[i];
            rec.score = objective::score_from_lls(rec.sensor_lls, model.cfg.q,
                                                  !model.cfg.no_quantile);
            rec.anomalous = objective::is_anomalous(rec.score, model.tau);
            records.push_back(std::move(rec));
        }
    }
    return records;
}

void write_scores_csv(const std::string& path,
                      const std::vector<objective::ScoreRecord>& records) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "window_id,profile_id,start,score,decision\n";
    for (const auto& r : records)
        out << r.window_id << ',' << r.profile_id << ',' << r.start << ','
            << fmt_f64(r.score) << ',' << (r.anomalous ? 1 : 0) << "\n";
    if (!out) throw DataError("write failed: " + path);
}

std::vector<objective::ScoreRecord> read_scores_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || trim(line) != "window_id,profile_id,start,score,decision")
        throw DataError(path + ": bad score file header");
    std::vector<objective::ScoreRecord> records;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto cells = split(line, ',');
        if (cells.size() != 5)
            throw DataError(path + ":" + std::to_string(row) + ": expected 5 columns");
        std::string where = path + ":" + std::to_string(row);
        objective::ScoreRecord r;
        r.window_id = parse_i64(cells[0], where);
        r.profile_id = trim(cells[1]);
        r.start = static_cast<int>(parse_i64(cells[2], where));
        r.score = parse_f64(cells[3], where);
        long long dec = parse_i64(cells[4], where);
        if (dec != 0 && dec != 1) throw DataError(where + ": decision must be 0 or 1");
        r.anomalous = dec == 1;
        records.push_back(std::move(r));
    }
    return records;
}

Metrics evaluate_scores(const std::vector<objective::ScoreRecord>& records,
                        const std::vector<std::pair<std::string, int>>& labels) {
    if (records.empty()) throw DataError("no score records to evaluate");
    std::map<std::string, int> by_id(labels.begin(), labels.end());
    std::vector<double> scores;
    std::vector<int> window_labels;
    scores.reserve(records.size());
    for (const auto& r : records) {
        auto it = by_id.find(r.profile_id);
        if (it == by_id.end())
            throw DataError("no label for profile '" + r.profile_id + "'");
        scores.push_back(r.score);
        window_labels.push_back(it->second);
    }
    Metrics m;
    auto [tau_star, f1] = eval::best_f1_search(scores, window_labels);
    m.tau_star = tau_star;
    m.f1_pa = f1;
    m.auroc = eval::auroc(scores, window_labels);
    m.auprc = eval::auprc(scores, window_labels);
    m.windows = records.size();
    for (int l : window_labels) m.positives += static_cast<std::size_t>(l);
    return m;
}

std::string metrics_report(const Metrics& m) {
    std::string text;
    text += "windows = " + std::to_string(m.windows) + "\n";
    text += "positives = " + std::to_string(m.positives) + "\n";
    text += "f1_pa = " + fmt_f64(m.f1_pa) + "\n";
    text += "tau_star = " + fmt_f64(m.tau_star) + "\n";
    text += "auroc = " + fmt_f64(m.auroc) + "\n";
    text += "auprc = " + fmt_f64(m.auprc) + "\n";
    nlohmann::json j;
    j["windows"] = m.windows;
    j["positives"] = m.positives;
    j["f1_pa"] = m.f1_pa;
    j["tau_star"] = fmt_f64(m.tau_star); // may be +-inf, kept as text
    j["auroc"] = m.auroc;
    j["auprc"] = m.auprc;
    text += j.dump() + "\n";
    return text;
}

} // namespace gdflow::train
