#include "gdflow/eval.hpp"

#include "gdflow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gdflow::eval {

namespace {
void check_labels(const std::vector<double>& scores, const std::vector<int>& labels,
                  const char* op) {
    if (scores.size() != labels.size())
        throw DataError(std::string(op) + ": scores/labels length mismatch");
    if (scores.empty()) throw DataError(std::string(op) + ": empty input");
    for (double s : scores)
        if (!std::isfinite(s)) throw NumericError(std::string(op) + ": non-finite score");
    for (int l : labels)
        if (l != 0 && l != 1) throw DataError(std::string(op) + ": labels must be 0/1");
}

struct Segment {
    std::size_t begin, end; // [begin, end)
};

std::vector<Segment> segments_of(const std::vector<int>& labels) {
    std::vector<Segment> segs;
    std::size_t i = 0;
    while (i < labels.size()) {
        if (labels[i] == 1) {
            std::size_t j = i;
            while (j < labels.size() && labels[j] == 1) ++j;
            segs.push_back({i, j});
            i = j;
        } else {
            ++i;
        }
    }
    return segs;
}

// F1 from segment-max scores and normal-point scores at threshold tau, equal
// by construction to: classify -> point_adjust -> F1.
double f1_from_parts(const std::vector<Segment>& segs, const std::vector<double>& seg_max,
                     const std::vector<double>& normal_scores, std::size_t positives,
                     double tau) {
    std::size_t tp = 0;
    for (std::size_t k = 0; k < segs.size(); ++k)
        if (seg_max[k] > tau) tp += segs[k].end - segs[k].begin;
    std::size_t fp = 0;
    for (double s : normal_scores)
        if (s > tau) ++fp;
    std::size_t fn = positives - tp;
    double denom = static_cast<double>(2 * tp + fp + fn);
    return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}
} // namespace

std::vector<int> point_adjust(const std::vector<int>& preds, const std::vector<int>& labels) {
    if (preds.size() != labels.size()) throw DataError("point_adjust: length mismatch");
    std::vector<int> out = preds;
    for (const Segment& seg : segments_of(labels)) {
        bool hit = false;
        for (std::size_t i = seg.begin; i < seg.end && !hit; ++i) hit = out[i] == 1;
        if (hit)
            for (std::size_t i = seg.begin; i < seg.end; ++i) out[i] = 1;
    }
    return out;
}

double f1_pa_at(const std::vector<double>& scores, const std::vector<int>& labels, double tau) {
    check_labels(scores, labels, "f1_pa_at");
    auto segs = segments_of(labels);
    std::vector<double> seg_max(segs.size(), -std::numeric_limits<double>::infinity());
    std::size_t positives = 0;
    for (std::size_t k = 0; k < segs.size(); ++k) {
        positives += segs[k].end - segs[k].begin;
        for (std::size_t i = segs[k].begin; i < segs[k].end; ++i)
            seg_max[k] = std::max(seg_max[k], scores[i]);
    }
    std::vector<double> normal_scores;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == 0) normal_scores.push_back(scores[i]);
    return f1_from_parts(segs, seg_max, normal_scores, positives, tau);
}

std::pair<double, double> best_f1_search(const std::vector<double>& scores,
                                         const std::vector<int>& labels) {
    check_labels(scores, labels, "best_f1_search");
    auto segs = segments_of(labels);
    std::size_t positives = 0;
    std::vector<double> seg_max(segs.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < segs.size(); ++k) {
        positives += segs[k].end - segs[k].begin;
        for (std::size_t i = segs[k].begin; i < segs[k].end; ++i)
            seg_max[k] = std::max(seg_max[k], scores[i]);
    }
    if (positives == 0 || positives == labels.size())
        throw DataError("best_f1_search: needs both classes");
    std::vector<double> normal_scores;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == 0) normal_scores.push_back(scores[i]);

    std::vector<double> taus = scores;
    taus.push_back(-std::numeric_limits<double>::infinity());
    taus.push_back(std::numeric_limits<double>::infinity());
    std::sort(taus.begin(), taus.end());
    taus.erase(std::unique(taus.begin(), taus.end()), taus.end());

    double best_tau = taus.front(), best_f1 = -1.0;
    for (double tau : taus) {
        double f1 = f1_from_parts(segs, seg_max, normal_scores, positives, tau);
        if (f1 > best_f1) {
            best_f1 = f1;
            best_tau = tau;
        }
    }
    return {best_tau, best_f1};
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_labels(scores, labels, "auroc");
    const std::size_t m = scores.size();
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::size_t pos = 0;
    for (int l : labels) pos += static_cast<std::size_t>(l);
    std::size_t neg = m - pos;
    if (pos == 0 || neg == 0) throw DataError("auroc: needs both classes");

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < m) {
        std::size_t j = i;
        while (j < m && scores[idx[j]] == scores[idx[i]]) ++j;
        double midrank = 0.5 * static_cast<double>(i + 1 + j); // average of ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (labels[idx[k]] == 1) rank_sum_pos += midrank;
        i = j;
    }
    double u = rank_sum_pos - static_cast<double>(pos) * (static_cast<double>(pos) + 1.0) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_labels(scores, labels, "auprc");
    std::size_t pos = 0;
    for (int l : labels) pos += static_cast<std::size_t>(l);
    if (pos == 0) throw DataError("auprc: needs at least one positive");

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    // step rule: sum precision * recall increment over descending thresholds
    double ap = 0.0;
    std::size_t tp = 0, fp = 0, i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        std::size_t tp_add = 0, fp_add = 0;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            if (labels[idx[j]] == 1)
                ++tp_add;
            else
                ++fp_add;
            ++j;
        }
        tp += tp_add;
        fp += fp_add;
        double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += precision * (static_cast<double>(tp_add) / static_cast<double>(pos));
        i = j;
    }
    return ap;
}

} // namespace gdflow::eval
