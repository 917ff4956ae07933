#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gdflow/errors.hpp>
#include <gdflow/eval.hpp>
#include <gdflow/model.hpp>
#include <gdflow/train.hpp>

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

using namespace gdflow;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.hidden = 4;
    cfg.embed_dim = 3;
    cfg.cheb_k = 1;
    cfg.flow_blocks = 1;
    cfg.epochs = 2;
    cfg.batch = 64;
    cfg.seed = 5;
    return cfg;
}

// small deterministic corpus: braking episodes with a known label pattern
std::vector<data::Profile> tiny_corpus(int m) {
    std::vector<data::Profile> out;
    for (int i = 0; i < m; ++i) {
        Rng rng(200 + static_cast<std::uint64_t>(i));
        data::Profile p;
        p.id = "p" + std::to_string(i);
        int len = 24 + i % 5;
        bool odd = i % 2 == 1;
        p.label = odd ? 1 : 0;
        for (int t = 0; t < len; ++t) {
            double u = static_cast<double>(t) / (len - 1);
            // normals ease off; odd profiles keep pressing
            double g = odd ? -0.5 * u : -0.4 * std::sin(3.14159 * u);
            p.series.t_ms.push_back(10.0 * t);
            p.series.ch[data::kAccelPedal].push_back(0.1 + 0.05 * rng.normal());
            p.series.ch[data::kBrakePedal].push_back(20.0 - 10.0 * g + rng.normal());
            p.series.ch[data::kSpeedKph].push_back(45.0 - 20.0 * u + 0.05 * rng.normal());
            p.series.ch[data::kLatAccG].push_back(0.01 * rng.normal());
            p.series.ch[data::kLongAccG].push_back(g + 0.002 * rng.normal());
        }
        out.push_back(std::move(p));
    }
    return out;
}

bool same_params(GdflowModel& a, GdflowModel& b) {
    auto pa = a.parameters(), pb = b.parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (pa[i].first != pb[i].first) return false;
        if (pa[i].second->shape() != pb[i].second->shape()) return false;
        for (std::size_t k = 0; k < pa[i].second->size(); ++k)
            if ((*pa[i].second)[k] != (*pb[i].second)[k]) return false;
    }
    return true;
}

} // namespace

TEST_CASE("parameter registry is unique, ordered, and shape-stable") {
    Rng rng(21);
    GdflowModel m = GdflowModel::init(tiny_config(), 12, rng);
    auto params = m.parameters();
    // 11 + (cheb_k+1) encoder tensors, then 4 per flow block
    REQUIRE(params.size() == 13 + 4);
    std::set<std::string> names;
    for (auto& [name, arr] : params) {
        CHECK(names.insert(name).second);
        CHECK(arr->size() > 0);
    }
    CHECK(params[0].first == "enc.w_h");
    CHECK(params[12].first == "enc.embed");
    CHECK(params[13].first == "flow.block0.w1");
    CHECK(params[16].first == "flow.block0.b2");

    RunConfig rc = tiny_config();
    rc.no_ncde = true;
    Rng rng2(22);
    GdflowModel rnn = GdflowModel::init(rc, 12, rng2);
    auto rp = rnn.parameters();
    REQUIRE(rp.size() == 4 + 4);
    CHECK(rp[0].first == "enc.rnn_w0");
}

TEST_CASE("split is deterministic, disjoint, covering, and clamped") {
    auto corpus = tiny_corpus(10);
    auto s1 = train::split_profiles(corpus, 0.8, 42);
    auto s2 = train::split_profiles(corpus, 0.8, 42);
    CHECK(s1.train == s2.train);
    CHECK(s1.test == s2.test);
    CHECK(s1.train.size() == 8);
    CHECK(s1.test.size() == 2);

    std::set<int> all(s1.train.begin(), s1.train.end());
    for (int i : s1.test) CHECK(all.insert(i).second);
    CHECK(all.size() == 10);

    auto s3 = train::split_profiles(corpus, 0.8, 43);
    CHECK(s1.train != s3.train); // different stream, different shuffle

    // extreme fractions still leave both sides nonempty
    CHECK(train::split_profiles(corpus, 0.999, 1).test.size() == 1);
    CHECK(train::split_profiles(corpus, 0.001, 1).train.size() == 1);

    auto unsorted = corpus;
    std::swap(unsorted[0], unsorted[1]);
    CHECK_THROWS_AS(train::split_profiles(unsorted, 0.8, 1), DataError);
    std::vector<data::Profile> one(1);
    CHECK_THROWS_AS(train::split_profiles(one, 0.8, 1), DataError);
}

TEST_CASE("training is reproducible and keeps normalization leak-free") {
    auto corpus = tiny_corpus(8);
    RunConfig cfg = tiny_config();

    train::TrainResult r1 = train::train_model(corpus, cfg);
    train::TrainResult r2 = train::train_model(corpus, cfg);

    REQUIRE(r1.epoch_loss.size() == 2);
    CHECK(r1.epoch_loss == r2.epoch_loss);
    CHECK(r1.epoch_val_f1.size() == 2);
    CHECK(same_params(r1.model, r2.model));
    CHECK(r1.model.tau == r2.model.tau);
    CHECK(std::isfinite(r1.model.tau));
    CHECK(r1.model.window >= 2);
    CHECK(r1.model.best_epoch >= 0);
    CHECK(r1.log.size() >= 3);

    // stats must come from train-split normals only
    auto split = train::split_profiles(corpus, cfg.train_split, cfg.seed);
    std::vector<data::Profile> stat_set;
    int shortest = 1 << 30;
    for (int i : split.train)
        if (corpus[static_cast<std::size_t>(i)].label == 0) {
            stat_set.push_back(corpus[static_cast<std::size_t>(i)]);
            shortest = std::min(shortest, corpus[static_cast<std::size_t>(i)].length());
        }
    REQUIRE(!stat_set.empty());
    data::NormStats expect = data::compute_stats(stat_set);
    for (int c = 0; c < data::kNumChannels; ++c) {
        CHECK(r1.model.stats.mean[c] == expect.mean[c]);
        CHECK(r1.model.stats.stdev[c] == expect.stdev[c]);
    }
    // auto window resolves to the shortest train-normal profile
    CHECK(r1.model.window == shortest);

    // tau is the (1 - expected_anomaly_rate) quantile of training scores
    std::vector<int> train_normals;
    for (int i : split.train)
        if (corpus[static_cast<std::size_t>(i)].label == 0) train_normals.push_back(i);
    auto train_records = train::score_corpus(r1.model, corpus, train_normals);
    std::vector<double> train_scores;
    for (const auto& rec : train_records) train_scores.push_back(rec.score);
    CHECK(r1.model.tau == doctest::Approx(objective::quantile(
                              train_scores, 1.0 - cfg.expected_anomaly_rate))
                              .epsilon(1e-12));
}

TEST_CASE("ablated variants train end to end") {
    auto corpus = tiny_corpus(8);
    RunConfig cfg = tiny_config();
    cfg.epochs = 1;

    cfg.no_ncde = true;
    train::TrainResult rnn = train::train_model(corpus, cfg);
    CHECK(rnn.model.enc.rnn);
    CHECK(std::isfinite(rnn.epoch_loss[0]));

    cfg.no_ncde = false;
    cfg.no_quantile = true;
    train::TrainResult mean = train::train_model(corpus, cfg);
    CHECK(std::isfinite(mean.epoch_loss[0]));
    CHECK_FALSE(mean.model.enc.rnn);
}

TEST_CASE("checkpoints restore scoring bit-exactly") {
    auto corpus = tiny_corpus(8);
    RunConfig cfg = tiny_config();
    train::TrainResult r = train::train_model(corpus, cfg);

    fs::path p = fs::temp_directory_path() / "gdflow_test_ckpt.bin";
    r.model.save(p.string());
    GdflowModel loaded = GdflowModel::load(p.string());

    CHECK(same_params(r.model, loaded));
    CHECK(loaded.tau == r.model.tau);
    CHECK(loaded.window == r.model.window);
    CHECK(loaded.best_epoch == r.model.best_epoch);
    CHECK(loaded.cfg.hidden == cfg.hidden);
    CHECK(loaded.cfg.seed == cfg.seed);
    for (int c = 0; c < data::kNumChannels; ++c) {
        CHECK(loaded.stats.mean[c] == r.model.stats.mean[c]);
        CHECK(loaded.stats.stdev[c] == r.model.stats.stdev[c]);
    }

    std::vector<int> all;
    for (int i = 0; i < 8; ++i) all.push_back(i);
    auto before = train::score_corpus(r.model, corpus, all);
    auto after = train::score_corpus(loaded, corpus, all);
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(before[i].score == after[i].score);
        CHECK(before[i].anomalous == after[i].anomalous);
    }
    fs::remove(p);

    fs::path bad = fs::temp_directory_path() / "gdflow_test_ckpt_bad.bin";
    std::ofstream(bad) << "not a checkpoint\n";
    CHECK_THROWS_AS(GdflowModel::load(bad.string()), DataError);
    fs::remove(bad);
}

TEST_CASE("corpus scoring numbers windows sequentially and applies tau") {
    auto corpus = tiny_corpus(6);
    RunConfig cfg = tiny_config();
    train::TrainResult r = train::train_model(corpus, cfg);

    std::vector<int> all;
    for (int i = 0; i < 6; ++i) all.push_back(i);
    auto records = train::score_corpus(r.model, corpus, all);
    REQUIRE(!records.empty());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(records[i].window_id == static_cast<long>(i));
        CHECK(records[i].anomalous == (records[i].score > r.model.tau));
        CHECK(records[i].sensor_lls.size() == 5);
        CHECK(records[i].start % cfg.stride == 0);
    }
    // starts are contiguous per profile and profiles appear in id order
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].profile_id == records[i - 1].profile_id)
            CHECK(records[i].start == records[i - 1].start + cfg.stride);
        else
            CHECK(records[i].profile_id > records[i - 1].profile_id);
    }

    auto again = train::score_corpus(r.model, corpus, all);
    for (std::size_t i = 0; i < records.size(); ++i)
        CHECK(records[i].score == again[i].score);
}

TEST_CASE("score csv round-trips and rejects malformed files") {
    std::vector<objective::ScoreRecord> records;
    for (int i = 0; i < 5; ++i) {
        objective::ScoreRecord r;
        r.window_id = i;
        r.profile_id = "p" + std::to_string(i % 2);
        r.start = 3 * i;
        r.score = 17.25 / (i + 1) - 2.0;
        r.anomalous = i % 2 == 1;
        records.push_back(r);
    }
    fs::path p = fs::temp_directory_path() / "gdflow_test_scores.csv";
    train::write_scores_csv(p.string(), records);
    auto back = train::read_scores_csv(p.string());
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(back[i].window_id == records[i].window_id);
        CHECK(back[i].profile_id == records[i].profile_id);
        CHECK(back[i].start == records[i].start);
        CHECK(back[i].score == records[i].score);
        CHECK(back[i].anomalous == records[i].anomalous);
    }
    std::ofstream(p) << "wrong\n";
    CHECK_THROWS_AS(train::read_scores_csv(p.string()), DataError);
    std::ofstream(p) << "window_id,profile_id,start,score,decision\n0,a,0,1.0,2\n";
    CHECK_THROWS_AS(train::read_scores_csv(p.string()), DataError);
    fs::remove(p);
}

TEST_CASE("evaluation joins labels by profile id") {
    std::vector<objective::ScoreRecord> records;
    std::vector<double> scores = {1.0, 5.0, 2.0, 6.0, 0.5};
    std::vector<std::string> ids = {"a", "b", "a", "b", "a"};
    for (std::size_t i = 0; i < scores.size(); ++i) {
        objective::ScoreRecord r;
        r.window_id = static_cast<long>(i);
        r.profile_id = ids[i];
        r.score = scores[i];
        records.push_back(r);
    }
    std::vector<std::pair<std::string, int>> labels = {{"a", 0}, {"b", 1}};
    train::Metrics m = train::evaluate_scores(records, labels);
    CHECK(m.windows == 5);
    CHECK(m.positives == 2);
    std::vector<int> window_labels = {0, 1, 0, 1, 0};
    CHECK(m.auroc == doctest::Approx(eval::auroc(scores, window_labels)).epsilon(1e-12));
    CHECK(m.auprc == doctest::Approx(eval::auprc(scores, window_labels)).epsilon(1e-12));
    auto [tau_star, f1] = eval::best_f1_search(scores, window_labels);
    CHECK(m.f1_pa == doctest::Approx(f1).epsilon(1e-12));
    CHECK(m.tau_star == tau_star);
    CHECK(m.f1_pa == 1.0); // b-windows strictly outscore a-windows

    std::string report = train::metrics_report(m);
    CHECK(report.find("f1_pa = ") != std::string::npos);
    CHECK(report.find("auroc = ") != std::string::npos);
    // last line is machine-readable
    std::size_t cut = report.rfind('\n', report.size() - 2);
    std::string last = report.substr(cut + 1);
    nlohmann::json j = nlohmann::json::parse(last);
    CHECK(j["windows"] == 5);
    CHECK(j["f1_pa"] == 1.0);

    CHECK_THROWS_AS(train::evaluate_scores(records, {{"a", 0}}), DataError);
    CHECK_THROWS_AS(train::evaluate_scores({}, labels), DataError);
}
