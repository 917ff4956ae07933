#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gdflow/errors.hpp>
#include <gdflow/eval.hpp>
#include <gdflow/rng.hpp>

#include <cmath>
#include <limits>
#include <vector>

using namespace gdflow;

namespace {

// classify -> segment fill -> plain F1, all in one place
double f1_oracle(const std::vector<double>& scores, const std::vector<int>& labels, double tau) {
    const std::size_t m = scores.size();
    std::vector<int> pred(m);
    for (std::size_t i = 0; i < m; ++i) pred[i] = scores[i] > tau ? 1 : 0;
    std::size_t i = 0;
    while (i < m) {
        if (labels[i] == 1) {
            std::size_t j = i;
            bool hit = false;
            for (; j < m && labels[j] == 1; ++j)
                if (pred[j] == 1) hit = true;
            if (hit)
                for (std::size_t k = i; k < j; ++k) pred[k] = 1;
            i = j;
        } else {
            ++i;
        }
    }
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < m; ++k) {
        if (pred[k] == 1 && labels[k] == 1) ++tp;
        if (pred[k] == 1 && labels[k] == 0) ++fp;
        if (pred[k] == 0 && labels[k] == 1) ++fn;
    }
    double denom = static_cast<double>(2 * tp + fp + fn);
    return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}

// random instance with segment-shaped labels and quantized (tied) scores
void random_instance(Rng& rng, std::size_t m, std::vector<double>& scores,
                     std::vector<int>& labels) {
    scores.assign(m, 0.0);
    labels.assign(m, 0);
    std::size_t i = 0;
    while (i < m) {
        if (rng.uniform() < 0.12) {
            std::size_t len = 1 + rng.below(12);
            for (std::size_t k = i; k < std::min(m, i + len); ++k) labels[k] = 1;
            i += len;
        } else {
            ++i;
        }
    }
    bool saw0 = false, saw1 = false;
    for (int l : labels) (l ? saw1 : saw0) = true;
    if (!saw1) labels[m / 2] = 1;
    if (!saw0) labels[0] = 0;
    for (std::size_t k = 0; k < m; ++k)
        scores[k] = std::floor(labels[k] * rng.uniform(0.0, 6.0) + rng.uniform(0.0, 6.0));
}

} // namespace

TEST_CASE("point adjust fills hit segments and nothing else") {
    std::vector<int> labels = {0, 1, 1, 1, 0, 0, 1, 1, 0, 1};
    std::vector<int> preds  = {1, 0, 1, 0, 0, 1, 0, 0, 0, 1};
    std::vector<int> adj = eval::point_adjust(preds, labels);
    // segment [1,4) was hit at index 2 -> filled; [6,8) untouched; [9,10) hit
    std::vector<int> expect = {1, 1, 1, 1, 0, 1, 0, 0, 0, 1};
    CHECK(adj == expect);
    // idempotent
    CHECK(eval::point_adjust(adj, labels) == adj);
    // monotone: adding predictions never removes adjusted ones
    std::vector<int> more = preds;
    more[6] = 1;
    std::vector<int> adj2 = eval::point_adjust(more, labels);
    for (std::size_t i = 0; i < adj.size(); ++i) CHECK(adj2[i] >= adj[i]);
    CHECK_THROWS_AS(eval::point_adjust({1, 0}, {1}), DataError);
}

TEST_CASE("threshold f1 equals the classify-adjust-count oracle") {
    Rng rng(91);
    for (int rep = 0; rep < 30; ++rep) {
        std::vector<double> scores;
        std::vector<int> labels;
        random_instance(rng, 120, scores, labels);
        for (double tau : {-1.0, 0.0, 1.5, 3.0, 5.0, 11.0})
            CHECK(eval::f1_pa_at(scores, labels, tau) ==
                  doctest::Approx(f1_oracle(scores, labels, tau)).epsilon(1e-12));
    }
}

TEST_CASE("best f1 search matches a brute-force sweep") {
    Rng rng(92);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> scores;
        std::vector<int> labels;
        random_instance(rng, 200, scores, labels);

        std::vector<double> taus = scores;
        taus.push_back(-std::numeric_limits<double>::infinity());
        taus.push_back(std::numeric_limits<double>::infinity());
        std::sort(taus.begin(), taus.end());
        taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
        double best_tau = taus.front(), best_f1 = -1.0;
        for (double tau : taus) {
            double f1 = f1_oracle(scores, labels, tau);
            if (f1 > best_f1) {
                best_f1 = f1;
                best_tau = tau;
            }
        }

        auto [tau_star, f1_star] = eval::best_f1_search(scores, labels);
        CHECK(f1_star == doctest::Approx(best_f1).epsilon(1e-12));
        CHECK(tau_star == best_tau);
    }
    CHECK_THROWS_AS(eval::best_f1_search({1.0, 2.0}, {1, 1}), DataError);
    CHECK_THROWS_AS(eval::best_f1_search({1.0, 2.0}, {0, 0}), DataError);
}

TEST_CASE("auroc equals the pairwise comparison oracle") {
    Rng rng(93);
    for (int rep = 0; rep < 25; ++rep) {
        std::vector<double> scores;
        std::vector<int> labels;
        random_instance(rng, 150, scores, labels);

        double wins = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < scores.size(); ++i)
            for (std::size_t j = 0; j < scores.size(); ++j) {
                if (labels[i] != 1 || labels[j] != 0) continue;
                ++pairs;
                if (scores[i] > scores[j])
                    wins += 1.0;
                else if (scores[i] == scores[j])
                    wins += 0.5;
            }
        REQUIRE(pairs > 0);
        CHECK(eval::auroc(scores, labels) ==
              doctest::Approx(wins / static_cast<double>(pairs)).epsilon(1e-12));
    }

    CHECK(eval::auroc({0.9, 0.8, 0.7}, {1, 0, 1}) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(eval::auroc({2.0, 2.0, 2.0, 2.0}, {1, 0, 1, 0}) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(eval::auroc({1.0, 2.0}, {0, 1}) == 1.0);
    CHECK_THROWS_AS(eval::auroc({1.0, 2.0}, {1, 1}), DataError);
    CHECK_THROWS_AS(eval::auroc({1.0, std::nan("")}, {1, 0}), NumericError);
}

TEST_CASE("auprc equals a from-scratch threshold sweep") {
    // exact tiny case first
    CHECK(eval::auprc({4.0, 3.0, 2.0, 1.0}, {1, 0, 1, 0}) ==
          doctest::Approx(5.0 / 6.0).epsilon(1e-12));

    Rng rng(94);
    for (int rep = 0; rep < 25; ++rep) {
        std::vector<double> scores;
        std::vector<int> labels;
        random_instance(rng, 150, scores, labels);

        std::vector<double> thr = scores;
        std::sort(thr.begin(), thr.end(), std::greater<>());
        thr.erase(std::unique(thr.begin(), thr.end()), thr.end());
        std::size_t pos = 0;
        for (int l : labels) pos += static_cast<std::size_t>(l);
        double ap = 0.0, prev_recall = 0.0;
        for (double t : thr) {
            std::size_t tp = 0, fp = 0;
            for (std::size_t i = 0; i < scores.size(); ++i) {
                if (scores[i] >= t && labels[i] == 1) ++tp;
                if (scores[i] >= t && labels[i] == 0) ++fp;
            }
            double recall = static_cast<double>(tp) / static_cast<double>(pos);
            double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        CHECK(eval::auprc(scores, labels) == doctest::Approx(ap).epsilon(1e-10));
    }
    CHECK(eval::auprc({3.0, 1.0}, {1, 1}) == 1.0);
    CHECK_THROWS_AS(eval::auprc({1.0, 2.0}, {0, 0}), DataError);
}
