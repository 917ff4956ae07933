#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gdflow/data.hpp>
#include <gdflow/errors.hpp>
#include <gdflow/rng.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace gdflow;
namespace fs = std::filesystem;

namespace {

data::RawDrive flat_drive(int len, double accel, double brake, double speed, double lat,
                          double lacc) {
    data::RawDrive d;
    for (int i = 0; i < len; ++i) {
        d.t_ms.push_back(10.0 * i);
        d.ch[data::kAccelPedal].push_back(accel);
        d.ch[data::kBrakePedal].push_back(brake);
        d.ch[data::kSpeedKph].push_back(speed);
        d.ch[data::kLatAccG].push_back(lat);
        d.ch[data::kLongAccG].push_back(lacc);
    }
    return d;
}

data::Profile fake_profile(const std::string& id, int len, Rng& rng) {
    data::Profile p;
    p.id = id;
    p.series = flat_drive(len, 0.1, 20.0, 40.0, 0.01, -0.2);
    for (int i = 0; i < len; ++i) {
        p.series.ch[data::kSpeedKph][i] = 40.0 - 0.2 * i + rng.normal() * 0.01;
        p.series.ch[data::kLongAccG][i] = -0.2 + rng.normal() * 0.005;
    }
    return p;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string s(const std::string& leaf) const { return (path / leaf).string(); }
};

} // namespace

TEST_CASE("resample interpolates linearly onto the 10 ms grid") {
    data::RawDrive raw;
    raw.t_ms = {0.0, 4.0, 25.0, 30.0, 47.0};
    for (int c = 0; c < data::kNumChannels; ++c)
        raw.ch[c] = {0.0, 4.0 * (c + 1), 25.0 * (c + 1), 30.0 * (c + 1), 47.0 * (c + 1)};
    raw.ch[0] = {1.0, 2.0, -3.0, 5.0, 0.5}; // one non-affine channel

    data::RawDrive out = data::resample_10ms(raw);
    REQUIRE(out.size() == 5); // 0,10,20,30,40
    for (int i = 0; i < 5; ++i) CHECK(out.t_ms[static_cast<std::size_t>(i)] == 10.0 * i);

    // channels 1..4 are affine in t, so interpolation reproduces (c+1) t
    for (int c = 1; c < data::kNumChannels; ++c)
        for (int i = 0; i < 5; ++i)
            CHECK(out.ch[c][static_cast<std::size_t>(i)] ==
                  doctest::Approx(10.0 * i * (c + 1)).epsilon(1e-12));

    // hand-interpolated checks on the irregular channel
    CHECK(out.ch[0][0] == 1.0);                               // exact knot
    CHECK(out.ch[0][1] == doctest::Approx(2.0 + (10.0 - 4.0) / 21.0 * -5.0)); // 4 -> 25
    CHECK(out.ch[0][3] == 5.0);                               // exact knot at 30
    CHECK(out.ch[0][4] == doctest::Approx(5.0 + 10.0 / 17.0 * -4.5));         // 30 -> 47

    // a drive already on the grid is untouched
    data::RawDrive grid = flat_drive(7, 1.0, 2.0, 3.0, 0.01, -0.1);
    grid.ch[0] = {3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0};
    data::RawDrive same = data::resample_10ms(grid);
    REQUIRE(same.size() == grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        CHECK(same.t_ms[i] == grid.t_ms[i]);
        CHECK(same.ch[0][i] == grid.ch[0][i]);
    }
    CHECK_THROWS_AS(data::resample_10ms(flat_drive(1, 0, 0, 0, 0, 0)), DataError);
}

TEST_CASE("profile extraction applies every gate") {
    // one drive, several candidate runs separated by pressed pedal
    auto seg = [](data::RawDrive& d, int len, double accel, double brake, double speed,
                  double lat) {
        for (int i = 0; i < len; ++i) {
            d.t_ms.push_back(10.0 * static_cast<double>(d.size()));
            d.ch[data::kAccelPedal].push_back(accel);
            d.ch[data::kBrakePedal].push_back(brake);
            d.ch[data::kSpeedKph].push_back(speed);
            d.ch[data::kLatAccG].push_back(lat);
            d.ch[data::kLongAccG].push_back(-0.1);
        }
    };
    data::RawDrive d;
    seg(d, 5, 30.0, 0.0, 50.0, 0.0);    // cruising, pedal pressed
    seg(d, 4, 0.4999, 10.0, 40.0, 0.0); // kept: pedal just under the gate
    seg(d, 3, 0.5, 10.0, 40.0, 0.0);    // pedal at the gate = pressed, splits
    seg(d, 4, 0.0, 10.0, 15.0, 0.0);    // rejected: speed never above 15
    seg(d, 2, 30.0, 0.0, 50.0, 0.0);
    seg(d, 4, 0.0, 2.0, 40.0, 0.0);     // rejected: brake never above 2
    seg(d, 2, 30.0, 0.0, 50.0, 0.0);
    seg(d, 4, 0.0, 10.0, 40.0, -0.07);  // rejected: lateral at the gate
    seg(d, 2, 30.0, 0.0, 50.0, 0.0);
    seg(d, 1, 0.0, 10.0, 40.0, 0.0);    // rejected: single sample
    seg(d, 2, 30.0, 0.0, 50.0, 0.0);
    seg(d, 6, 0.2, 30.0, 60.0, 0.069);  // kept: everything inside the gates
    auto profiles = data::extract_profiles(d, "d0");
    REQUIRE(profiles.size() == 2);
    CHECK(profiles[0].id == "d0p0");
    CHECK(profiles[0].length() == 4);
    CHECK(profiles[0].series.ch[data::kAccelPedal][0] == 0.4999);
    CHECK(profiles[1].id == "d0p1");
    CHECK(profiles[1].length() == 6);
    CHECK(profiles[1].label == 0);

    // the speed/brake gates are strict: just above passes
    data::RawDrive d2;
    seg(d2, 4, 0.0, 2.001, 15.001, 0.0);
    CHECK(data::extract_profiles(d2, "x").size() == 1);
}

TEST_CASE("normalization stats use the population variance with a floor") {
    std::vector<data::Profile> train(2);
    train[0].series = flat_drive(2, 1.0, 0.0, 10.0, 0.0, 0.0);
    train[1].series = flat_drive(2, 3.0, 0.0, 20.0, 0.0, 0.0);
    train[0].series.ch[data::kAccelPedal] = {1.0, 2.0};
    train[1].series.ch[data::kAccelPedal] = {3.0, 6.0};

    data::NormStats st = data::compute_stats(train);
    // accel pedal: values 1,2,3,6 -> mean 3, var (4+1+0+9)/4 = 3.5
    CHECK(st.mean[data::kAccelPedal] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(st.stdev[data::kAccelPedal] == doctest::Approx(std::sqrt(3.5)).epsilon(1e-12));
    // speed: 10,10,20,20 -> mean 15, var 25
    CHECK(st.mean[data::kSpeedKph] == doctest::Approx(15.0).epsilon(1e-12));
    CHECK(st.stdev[data::kSpeedKph] == doctest::Approx(5.0).epsilon(1e-12));
    // constant channels hit the floor
    CHECK(st.stdev[data::kBrakePedal] == 1e-6);
    CHECK_THROWS_AS(data::compute_stats({}), DataError);

    data::Profile p;
    p.series = flat_drive(3, 5.0, 0.0, 25.0, 0.0, 0.0);
    p.series.ch[data::kAccelPedal] = {1.0, 3.0, 6.0};
    data::apply_stats(p, st);
    CHECK(p.series.ch[data::kAccelPedal][0] ==
          doctest::Approx((1.0 - 3.0) / std::sqrt(3.5)).epsilon(1e-12));
    CHECK(p.series.ch[data::kSpeedKph][1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("window enumeration counts starts and skips short profiles") {
    data::Profile p;
    p.id = "w";
    p.label = 1;
    p.series = flat_drive(10, 0, 0, 0, 0, 0);
    long skipped = 0;
    auto wins = data::make_windows(p, 7, 4, 3, &skipped);
    REQUIRE(wins.size() == 3);
    CHECK(skipped == 0);
    CHECK(wins[0].start == 0);
    CHECK(wins[1].start == 3);
    CHECK(wins[2].start == 6);
    CHECK(wins[0].profile_index == 7);
    CHECK(wins[0].label == 1);
    CHECK(wins[0].profile_id == "w");

    data::Profile shorty;
    shorty.series = flat_drive(3, 0, 0, 0, 0, 0);
    auto none = data::make_windows(shorty, 0, 4, 1, &skipped);
    CHECK(none.empty());
    CHECK(skipped == 1);
    CHECK_THROWS_AS(data::make_windows(p, 0, 1, 1, nullptr), ConfigError);
    CHECK_THROWS_AS(data::make_windows(p, 0, 4, 0, nullptr), ConfigError);
}

TEST_CASE("batch assembly lays out (window, channel, time)") {
    std::vector<data::Profile> profiles(2);
    for (int k = 0; k < 2; ++k) {
        profiles[static_cast<std::size_t>(k)].series = flat_drive(6, 0, 0, 0, 0, 0);
        for (int c = 0; c < data::kNumChannels; ++c)
            for (int t = 0; t < 6; ++t)
                profiles[static_cast<std::size_t>(k)].series.ch[c][static_cast<std::size_t>(t)] =
                    100.0 * k + 10.0 * c + t;
    }
    std::vector<data::Window> wins = {{"a", 0, 1, 0}, {"b", 1, 2, 0}, {"a", 0, 3, 0}};
    std::vector<int> channels = {data::kLongAccG, data::kSpeedKph};
    Array batch = data::assemble_batch(profiles, wins, 1, 2, channels, 3);
    REQUIRE(batch.shape() == (Shape{2, 2, 3}));
    // window "b": profile 1, start 2; long_acc is channel 4, speed channel 2
    CHECK(batch[0] == 100.0 + 40.0 + 2.0);
    CHECK(batch[1] == 100.0 + 40.0 + 3.0);
    CHECK(batch[3] == 100.0 + 20.0 + 2.0);
    // window "a": profile 0, start 3
    CHECK(batch[6] == 40.0 + 3.0);
    CHECK(batch[9] == 20.0 + 3.0);
}

TEST_CASE("car-following laws match hand arithmetic") {
    data::CtgParams ctg; // h_gap 1.2, lambda 1.2, d0 2.0
    // closing 2 m/s, desired 2 + 1.2*12 = 16.4, actual 15
    CHECK(data::ctg_accel(ctg, 12.0, 10.0, 15.0) ==
          doctest::Approx(-(2.0 + 1.2 * 1.4) / 1.2).epsilon(1e-12));
    // equilibrium: matched speeds at the desired gap
    CHECK(data::ctg_accel(ctg, 20.0, 20.0, 2.0 + 1.2 * 20.0) == 0.0);
    data::CtgParams bad = ctg;
    bad.h_gap = 0.0;
    CHECK_THROWS_AS(data::ctg_accel(bad, 10.0, 10.0, 10.0), ConfigError);

    CHECK(data::uam_accel(12.0, 10.0, 15.0) ==
          doctest::Approx((100.0 - 144.0) / 30.0).epsilon(1e-12));
    CHECK(data::uam_accel(10.0, 10.0, 5.0) == 0.0);
    CHECK_THROWS_AS(data::uam_accel(10.0, 5.0, 0.0), NumericError);
}

TEST_CASE("drive synthesis is deterministic and passes its own gates") {
    data::ScenarioConfig cfg;
    for (std::uint64_t seed : {11ull, 12ull, 13ull, 14ull}) {
        Rng a = Rng::stream(seed, 0x64726976);
        Rng b = Rng::stream(seed, 0x64726976);
        data::RawDrive d1 = data::synthesize_drive(cfg, a);
        data::RawDrive d2 = data::synthesize_drive(cfg, b);
        REQUIRE(d1.size() == d2.size());
        for (std::size_t i = 0; i < d1.size(); ++i) {
            CHECK(d1.t_ms[i] == d2.t_ms[i]);
            for (int c = 0; c < data::kNumChannels; ++c) CHECK(d1.ch[c][i] == d2.ch[c][i]);
        }

        auto profiles = data::extract_profiles(d1, "s" + std::to_string(seed));
        REQUIRE(profiles.size() >= 1);
        for (const auto& p : profiles) {
            CHECK(p.length() >= 2);
            double max_brake = 0.0;
            for (std::size_t i = 0; i < p.series.size(); ++i) {
                CHECK(p.series.ch[data::kAccelPedal][i] < 0.5);
                CHECK(p.series.ch[data::kBrakePedal][i] >= 0.0);
                CHECK(p.series.ch[data::kBrakePedal][i] <= 100.0);
                max_brake = std::max(max_brake, p.series.ch[data::kBrakePedal][i]);
            }
            CHECK(max_brake > 2.0);
            // deceleration eases back toward zero by the cut point
            double tail = p.series.ch[data::kLongAccG].back();
            double peak = 0.0;
            for (double g : p.series.ch[data::kLongAccG]) peak = std::min(peak, g);
            CHECK(peak < -0.05);
            CHECK(tail > peak);
        }
    }
    data::ScenarioConfig bad;
    bad.cruise_kph_min = 10.0; // below the speed gate
    Rng r(1);
    CHECK_THROWS_AS(data::synthesize_drive(bad, r), ConfigError);
}

TEST_CASE("anomaly injection marks ceil(ratio m) profiles deterministically") {
    Rng mk(7);
    std::vector<data::Profile> profiles;
    for (int i = 0; i < 75; ++i)
        profiles.push_back(fake_profile("p" + std::to_string(i), 40 + i % 13, mk));
    std::vector<data::Profile> copy = profiles;

    data::inject_anomalies(profiles, 0.67, 99);
    int flagged = 0;
    for (const auto& p : profiles) flagged += p.label;
    CHECK(flagged == 51); // ceil(0.67 * 75)

    // a second run from the same seed is byte-identical
    std::vector<data::Profile> again = copy;
    data::inject_anomalies(again, 0.67, 99);
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        CHECK(again[i].label == profiles[i].label);
        for (int c = 0; c < data::kNumChannels; ++c)
            for (std::size_t t = 0; t < profiles[i].series.size(); ++t)
                CHECK(again[i].series.ch[c][t] == profiles[i].series.ch[c][t]);
    }

    // perturbation rewrites the braking channels only
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const auto& before = copy[i].series;
        const auto& after = profiles[i].series;
        for (std::size_t t = 0; t < before.size(); ++t) {
            CHECK(after.ch[data::kAccelPedal][t] == before.ch[data::kAccelPedal][t]);
            CHECK(after.ch[data::kLatAccG][t] == before.ch[data::kLatAccG][t]);
        }
        if (profiles[i].label == 0)
            for (std::size_t t = 0; t < before.size(); ++t)
                CHECK(after.ch[data::kLongAccG][t] == before.ch[data::kLongAccG][t]);
    }

    std::vector<data::Profile> none = copy;
    data::inject_anomalies(none, 0.0, 99);
    for (const auto& p : none) CHECK(p.label == 0);
    std::vector<data::Profile> all = copy;
    data::inject_anomalies(all, 1.0, 99);
    for (const auto& p : all) CHECK(p.label == 1);

    std::vector<data::Profile> empty;
    CHECK_THROWS_AS(data::inject_anomalies(empty, 0.5, 1), DataError);
    CHECK_THROWS_AS(data::inject_anomalies(copy, -0.1, 1), ConfigError);
    CHECK_THROWS_AS(data::inject_anomalies(copy, 1.1, 1), ConfigError);
}

TEST_CASE("drive csv round-trips bit-exactly") {
    TempDir tmp("gdflow_test_csv");
    Rng rng(3);
    data::RawDrive d = flat_drive(20, 0, 0, 0, 0, 0);
    for (int c = 0; c < data::kNumChannels; ++c)
        for (auto& v : d.ch[c]) v = rng.normal() * 17.3;
    data::write_drive_csv(tmp.s("d.csv"), d);
    data::RawDrive back = data::read_drive_csv(tmp.s("d.csv"));
    REQUIRE(back.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(back.t_ms[i] == d.t_ms[i]);
        for (int c = 0; c < data::kNumChannels; ++c) CHECK(back.ch[c][i] == d.ch[c][i]);
    }

    std::ofstream(tmp.s("bad.csv")) << "wrong,header\n";
    CHECK_THROWS_AS(data::read_drive_csv(tmp.s("bad.csv")), DataError);
    std::ofstream(tmp.s("mono.csv"))
        << "t_ms,accel_pedal_pct,brake_pedal_pct,speed_kph,lat_acc_g,long_acc_g\n"
        << "0,0,0,0,0,0\n0,0,0,0,0,0\n";
    CHECK_THROWS_AS(data::read_drive_csv(tmp.s("mono.csv")), DataError);
    CHECK_THROWS_AS(data::read_drive_csv(tmp.s("absent.csv")), DataError);
}

TEST_CASE("corpus round-trips with sorted labels") {
    TempDir tmp("gdflow_test_corpus");
    Rng rng(5);
    std::vector<data::Profile> profiles = {fake_profile("zeta", 12, rng),
                                           fake_profile("alpha", 9, rng),
                                           fake_profile("mid", 30, rng)};
    profiles[2].label = 1;
    data::write_corpus(tmp.s(""), profiles);

    auto labels = data::read_labels_csv(tmp.s("labels.csv"));
    REQUIRE(labels.size() == 3);
    CHECK(labels[0].first == "alpha");
    CHECK(labels[1].first == "mid");
    CHECK(labels[1].second == 1);
    CHECK(labels[2].first == "zeta");

    auto back = data::read_corpus(tmp.s(""));
    REQUIRE(back.size() == 3);
    CHECK(back[0].id == "alpha");
    CHECK(back[0].length() == 9);
    CHECK(back[2].id == "zeta");
    for (std::size_t t = 0; t < back[0].series.size(); ++t)
        CHECK(back[0].series.ch[data::kSpeedKph][t] ==
              profiles[1].series.ch[data::kSpeedKph][t]);

    std::ofstream(tmp.s("labels.csv")) << "profile_id,label\nq,2\n";
    CHECK_THROWS_AS(data::read_labels_csv(tmp.s("labels.csv")), DataError);
}

TEST_CASE("matrix and label column readers validate their input") {
    TempDir tmp("gdflow_test_matrix");
    std::ofstream(tmp.s("m.csv")) << "1,2,3\n4,5,6\n";
    Array m = data::read_matrix_csv(tmp.s("m.csv"));
    REQUIRE(m.shape() == (Shape{2, 3}));
    CHECK(m[4] == 5.0);
    std::ofstream(tmp.s("ragged.csv")) << "1,2\n3\n";
    CHECK_THROWS_AS(data::read_matrix_csv(tmp.s("ragged.csv")), DataError);
    std::ofstream(tmp.s("empty.csv")) << "";
    CHECK_THROWS_AS(data::read_matrix_csv(tmp.s("empty.csv")), DataError);

    std::ofstream(tmp.s("l.csv")) << "0\n1\n1\n0\n";
    auto labels = data::read_label_column(tmp.s("l.csv"));
    REQUIRE(labels.size() == 4);
    CHECK(labels[1] == 1);
    std::ofstream(tmp.s("badl.csv")) << "0\n0.5\n";
    CHECK_THROWS_AS(data::read_label_column(tmp.s("badl.csv")), DataError);
}

TEST_CASE("channel names map both ways") {
    CHECK(data::channel_index("long_acc_g") == data::kLongAccG);
    CHECK(data::channel_name(data::kSpeedKph) == std::string("speed_kph"));
    CHECK_THROWS_AS(data::channel_index("bogus"), ConfigError);
    CHECK_THROWS_AS(data::channel_name(99), ConfigError);
}
