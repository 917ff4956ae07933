#include "gdflow/data.hpp"

#include "gdflow/errors.hpp"
#include "gdflow/textio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace fs = std::filesystem;

namespace gdflow::data {

namespace {
constexpr const char* kDriveHeader =
    "t_ms,accel_pedal_pct,brake_pedal_pct,speed_kph,lat_acc_g,long_acc_g";
constexpr double kGridMs = 10.0;
constexpr double kG = 9.80665;

// Gate thresholds for profile extraction.
constexpr double kAccelReleased = 0.5; // %
constexpr double kMinSpeed = 15.0;     // kph
constexpr double kMinBrake = 2.0;      // %
constexpr double kMaxLat = 0.07;       // g

// Hardest allowed service braking; commanded decel maps onto pedal percent.
constexpr double kMaxDecel = 6.0; // m/s^2

const char* kChannelNames[kNumChannels] = {"accel_pedal_pct", "brake_pedal_pct",
                                           "speed_kph", "lat_acc_g", "long_acc_g"};
} // namespace

const char* channel_name(int ch) {
    if (ch < 0 || ch >= kNumChannels) throw ConfigError("channel index out of range");
    return kChannelNames[ch];
}

int channel_index(const std::string& name) {
    for (int i = 0; i < kNumChannels; ++i)
        if (name == kChannelNames[i]) return i;
    throw ConfigError("unknown channel '" + name + "'");
}

// ---- CSV interfaces --------------------------------------------------------

RawDrive read_drive_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || trim(line) != kDriveHeader)
        throw DataError(path + ": expected header '" + kDriveHeader + "'");
    RawDrive d;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto cells = split(line, ',');
        if (cells.size() != 1 + kNumChannels)
            throw DataError(path + ":" + std::to_string(row) + ": expected 6 columns");
        std::string where = path + ":" + std::to_string(row);
        double t = parse_f64(cells[0], where);
        if (!d.t_ms.empty() && t <= d.t_ms.back())
            throw DataError(where + ": t_ms not strictly increasing");
        d.t_ms.push_back(t);
        for (int c = 0; c < kNumChannels; ++c)
            d.ch[c].push_back(parse_f64(cells[1 + c], where));
    }
    return d;
}

void write_drive_csv(const std::string& path, const RawDrive& drive) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << kDriveHeader << "\n";
    for (std::size_t i = 0; i < drive.size(); ++i) {
        out << fmt_f64(drive.t_ms[i]);
        for (int c = 0; c < kNumChannels; ++c) out << ',' << fmt_f64(drive.ch[c][i]);
        out << "\n";
    }
    if (!out) throw DataError("write failed: " + path);
}

std::vector<std::pair<std::string, int>> read_labels_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || trim(line) != "profile_id,label")
        throw DataError(path + ": expected header 'profile_id,label'");
    std::vector<std::pair<std::string, int>> out;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto cells = split(line, ',');
        if (cells.size() != 2)
            throw DataError(path + ":" + std::to_string(row) + ": expected 2 columns");
        long long label = parse_i64(cells[1], path + ":" + std::to_string(row));
        if (label != 0 && label != 1)
            throw DataError(path + ":" + std::to_string(row) + ": label must be 0 or 1");
        out.emplace_back(trim(cells[0]), static_cast<int>(label));
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<Profile> read_corpus(const std::string& dir) {
    std::vector<Profile> profiles;
    for (auto& [id, label] : read_labels_csv(dir + "/labels.csv")) {
        Profile p;
        p.id = id;
        p.label = label;
        profiles.push_back(std::move(p));
    }
    for (auto& p : profiles) {
        p.series = read_drive_csv(dir + "/profiles/" + p.id + ".csv");
        if (p.length() < 2) throw DataError("profile " + p.id + " shorter than 2 samples");
    }
    return profiles;
}

void write_corpus(const std::string& dir, const std::vector<Profile>& profiles) {
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "profiles", ec);
    if (ec) throw DataError("cannot create " + dir + "/profiles: " + ec.message());
    std::vector<const Profile*> order;
    for (const auto& p : profiles) order.push_back(&p);
    std::sort(order.begin(), order.end(),
              [](const Profile* a, const Profile* b) { return a->id < b->id; });
    std::ofstream labels(dir + "/labels.csv");
    if (!labels) throw DataError("cannot write " + dir + "/labels.csv");
    labels << "profile_id,label\n";
    for (const Profile* p : order) {
        labels << p->id << ',' << p->label << "\n";
        write_drive_csv(dir + "/profiles/" + p->id + ".csv", p->series);
    }
    if (!labels) throw DataError("write failed: " + dir + "/labels.csv");
}

// ---- Preprocessing ---------------------------------------------------------

RawDrive resample_10ms(const RawDrive& raw) {
    if (raw.size() < 2) throw DataError("resample needs at least 2 samples");
    RawDrive out;
    const double t0 = raw.t_ms.front(), t1 = raw.t_ms.back();
    std::size_t hi = 1;
    for (long i = 0;; ++i) {
        double t = t0 + kGridMs * i;
        if (t > t1) break;
        while (hi + 1 < raw.size() && raw.t_ms[hi] < t) ++hi;
        std::size_t lo = hi - 1;
        out.t_ms.push_back(t);
        if (t == raw.t_ms[lo] || t == raw.t_ms[hi]) {
            std::size_t k = t == raw.t_ms[lo] ? lo : hi;
            for (int c = 0; c < kNumChannels; ++c) out.ch[c].push_back(raw.ch[c][k]);
        } else {
            double u = (t - raw.t_ms[lo]) / (raw.t_ms[hi] - raw.t_ms[lo]);
            for (int c = 0; c < kNumChannels; ++c)
                out.ch[c].push_back(raw.ch[c][lo] + u * (raw.ch[c][hi] - raw.ch[c][lo]));
        }
    }
    return out;
}

std::vector<Profile> extract_profiles(const RawDrive& drive, const std::string& drive_id) {
    std::vector<Profile> out;
    const std::size_t m = drive.size();
    std::size_t i = 0;
    int k = 0;
    while (i < m) {
        if (drive.ch[kAccelPedal][i] >= kAccelReleased) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < m && drive.ch[kAccelPedal][j] < kAccelReleased) ++j;
        // gates over the run [i, j)
        double max_speed = 0.0, max_brake = 0.0, max_lat = 0.0;
        for (std::size_t s = i; s < j; ++s) {
            max_speed = std::max(max_speed, drive.ch[kSpeedKph][s]);
            max_brake = std::max(max_brake, drive.ch[kBrakePedal][s]);
            max_lat = std::max(max_lat, std::abs(drive.ch[kLatAccG][s]));
        }
        if (j - i >= 2 && max_speed > kMinSpeed && max_brake > kMinBrake && max_lat < kMaxLat) {
            Profile p;
            p.id = drive_id + "p" + std::to_string(k++);
            p.series.t_ms.assign(drive.t_ms.begin() + i, drive.t_ms.begin() + j);
            for (int c = 0; c < kNumChannels; ++c)
                p.series.ch[c].assign(drive.ch[c].begin() + i, drive.ch[c].begin() + j);
            out.push_back(std::move(p));
        }
        i = j;
    }
    return out;
}

NormStats compute_stats(const std::vector<Profile>& training) {
    if (training.empty()) throw DataError("normalization needs a nonempty training set");
    NormStats st;
    std::size_t total = 0;
    for (const auto& p : training) total += p.series.size();
    for (int c = 0; c < kNumChannels; ++c) {
        double sum = 0.0;
        for (const auto& p : training)
            for (double v : p.series.ch[c]) sum += v;
        double mean = sum / static_cast<double>(total);
        double ss = 0.0;
        for (const auto& p : training)
            for (double v : p.series.ch[c]) ss += (v - mean) * (v - mean);
        st.mean[c] = mean;
        st.stdev[c] = std::max(std::sqrt(ss / static_cast<double>(total)), 1e-6);
    }
    return st;
}

void apply_stats(Profile& p, const NormStats& stats) {
    for (int c = 0; c < kNumChannels; ++c)
        for (double& v : p.series.ch[c]) v = (v - stats.mean[c]) / stats.stdev[c];
}

std::vector<Window> make_windows(const Profile& p, int profile_index, int w, int s,
                                 long* skipped) {
    if (w < 2) throw ConfigError("window length must be >= 2");
    if (s < 1) throw ConfigError("stride must be >= 1");
    std::vector<Window> out;
    if (p.length() < w) {
        if (skipped) ++*skipped;
        return out;
    }
    for (int start = 0; start + w <= p.length(); start += s)
        out.push_back(Window{p.id, profile_index, start, p.label});
    return out;
}

Array assemble_batch(const std::vector<Profile>& profiles, const std::vector<Window>& windows,
                     std::size_t first, std::size_t count, const std::vector<int>& channels,
                     int w) {
    const int n = static_cast<int>(channels.size());
    Array batch({static_cast<int>(count), n, w});
    double* dst = batch.data();
    for (std::size_t b = 0; b < count; ++b) {
        const Window& win = windows[first + b];
        const Profile& p = profiles[static_cast<std::size_t>(win.profile_index)];
        for (int c = 0; c < n; ++c) {
            const auto& col = p.series.ch[static_cast<std::size_t>(channels[c])];
            for (int t = 0; t < w; ++t) *dst++ = col[static_cast<std::size_t>(win.start + t)];
        }
    }
    return batch;
}

// ---- Synthetic generation --------------------------------------------------

double ctg_accel(const CtgParams& p, double v_ego, double v_front, double gap) {
    if (!(p.h_gap > 0.0)) throw ConfigError("CTG time gap must be positive");
    double closing = v_ego - v_front;                // gap shrink rate
    double delta = (p.d0 + p.h_gap * v_ego) - gap;   // desired minus actual
    return -(closing + p.lambda * delta) / p.h_gap;
}

double uam_accel(double v_ego, double v_front, double gap) {
    if (!(gap > 0.0)) throw NumericError("uniform-deceleration law needs positive gap");
    return (v_front * v_front - v_ego * v_ego) / (2.0 * gap);
}

namespace {
double brake_from_decel(double accel, double noise, Rng& rng) {
    // below ~0.05 m/s^2 the pads carry no pressure: pedal reads as jitter
    if (accel >= -0.05) return noise * rng.uniform(0.0, 0.3);
    double pct = 3.0 + (-accel / kMaxDecel) * 60.0 + noise * rng.uniform(0.0, 0.5);
    return std::clamp(pct, 0.0, 100.0);
}
} // namespace

RawDrive synthesize_drive(const ScenarioConfig& cfg, Rng& rng) {
    if (cfg.episode_s_min > cfg.episode_s_max || cfg.episode_s_min <= 0.0)
        throw ConfigError("bad episode duration range");
    if (cfg.approach_s_min > cfg.approach_s_max || cfg.approach_s_min < 0.0)
        throw ConfigError("bad approach duration range");
    if (cfg.cruise_kph_min > cfg.cruise_kph_max || cfg.cruise_kph_min <= kMinSpeed)
        throw ConfigError("cruise speed range must stay above the speed gate");
    if (cfg.lead_decel_min > cfg.lead_decel_max || cfg.lead_decel_min < 0.0)
        throw ConfigError("bad lead deceleration range");

    const double dt = kGridMs / 1000.0;
    const double noise = cfg.noise;
    const int approach_n =
        static_cast<int>(std::lround(rng.uniform(cfg.approach_s_min, cfg.approach_s_max) / dt));
    const int brake_n =
        static_cast<int>(std::lround(rng.uniform(cfg.episode_s_min, cfg.episode_s_max) / dt));
    const int tail_n = static_cast<int>(std::lround(0.8 / dt));
    // driver patience: how long a lingering light deceleration is tolerated
    // before the foot returns to the accelerator
    const int settle_cap = static_cast<int>(std::lround(rng.uniform(0.5, 1.2) / dt));
    const double lead_decel = rng.uniform(cfg.lead_decel_min, cfg.lead_decel_max);

    double v_ego = rng.uniform(cfg.cruise_kph_min, cfg.cruise_kph_max) / 3.6;
    double v_front = v_ego;
    double gap = cfg.ctg.d0 + cfg.ctg.h_gap * v_ego; // start at the CTG equilibrium

    // slow AR(1) wander for the resting channels; white noise at 100 Hz would
    // swamp them after z-scoring
    const double ar = 0.9753; // ~0.4 s time constant on the 10 ms grid
    double lat = noise * rng.normal() * 0.010;
    double ped_w = 0.0;  // pedal wander around the held position
    double ped_j = 0.08; // released-pedal jitter

    RawDrive d;
    long t_idx = 0;
    auto emit = [&](double accel_pct, double brake_pct, double a_ego) {
        lat = ar * lat + noise * rng.normal() * 0.0022;
        d.t_ms.push_back(kGridMs * t_idx++);
        d.ch[kAccelPedal].push_back(accel_pct);
        d.ch[kBrakePedal].push_back(brake_pct);
        d.ch[kSpeedKph].push_back(std::max(v_ego * 3.6 + noise * rng.normal() * 0.05, 0.0));
        d.ch[kLatAccG].push_back(std::clamp(lat, -0.05, 0.05));
        d.ch[kLongAccG].push_back(a_ego / kG + noise * rng.normal() * 0.002);
    };

    const double pedal_base = rng.uniform(8.0, 18.0);
    for (int i = 0; i < approach_n; ++i) {
        double a = 0.2 + noise * rng.normal() * 0.05;
        v_ego += a * dt;
        v_front = v_ego;
        gap = cfg.ctg.d0 + cfg.ctg.h_gap * v_ego;
        ped_w = ar * ped_w + noise * rng.normal() * 0.09;
        emit(pedal_base + ped_w, 0.0, a);
    }
    // lead brakes for brake_n samples, then holds speed; the episode plays on
    // until the commanded deceleration has eased to a half of its peak,
    // where the driver's foot moves back to the accelerator
    int settled = 0;
    double a_peak = 0.0;
    for (int i = 0; i < brake_n + settle_cap; ++i) {
        if (i < brake_n) v_front = std::max(v_front - lead_decel * dt, 0.0);
        double a = std::min(ctg_accel(cfg.ctg, v_ego, v_front, gap),
                            uam_accel(v_ego, v_front, std::max(gap, 0.1)));
        a = std::clamp(a, -kMaxDecel, 0.0);
        a_peak = std::min(a_peak, a);
        v_ego = std::max(v_ego + a * dt, 0.0);
        gap = std::max(gap + (v_front - v_ego) * dt, 0.1);
        ped_j = std::clamp(ar * ped_j + noise * rng.normal() * 0.015, 0.0, 0.45);
        emit(noise * ped_j, brake_from_decel(a, noise, rng), a);
        if (i >= brake_n) {
            settled = (a > std::min(-0.3, 0.5 * a_peak)) ? settled + 1 : 0;
            if (settled >= 5) break;
        }
    }
    for (int i = 0; i < tail_n; ++i) {
        double a = 1.0 + noise * rng.normal() * 0.05;
        v_ego += a * dt;
        ped_w = ar * ped_w + noise * rng.normal() * 0.09;
        emit(pedal_base + ped_w, 0.0, a);
    }
    return d;
}

namespace {
// Rewrite the braking shape of one profile in place.
void perturb_profile(Profile& p, Rng& rng) {
    const int len = p.length();
    const double dt = kGridMs / 1000.0;
    const int kind = static_cast<int>(rng.below(3));
    double v = p.series.ch[kSpeedKph][0] / 3.6;

    std::vector<double> acc_g(len);
    if (kind == 0) {
        // late reaction: coasting where braking is due, then an emergency stop
        // harder than the comfort envelope allows
        int cut = std::max(1, static_cast<int>(0.6 * len));
        double spike = -rng.uniform(0.65, 0.85);
        for (int i = 0; i < len; ++i)
            acc_g[i] = (i < cut ? -0.002 + rng.normal() * 0.002 : spike + rng.normal() * 0.002);
    } else if (kind == 1) {
        // surging: deceleration oscillates instead of easing off
        double f = rng.uniform(2.0, 4.0), phase = rng.uniform(0.0, 6.283185307179586);
        for (int i = 0; i < len; ++i)
            acc_g[i] = -0.25 + 0.2 * std::sin(6.283185307179586 * f * i * dt + phase) +
                       rng.normal() * 0.002;
    } else {
        // non-converging: pedal pressed ever harder to the end of the episode
        double peak = rng.uniform(0.5, 0.7);
        for (int i = 0; i < len; ++i) {
            double u = static_cast<double>(i) / std::max(1, len - 1);
            acc_g[i] = -peak * u * u + rng.normal() * 0.002;
        }
    }

    for (int i = 0; i < len; ++i) {
        double a = acc_g[i] * kG;
        v = std::max(v + a * dt, 0.0);
        p.series.ch[kLongAccG][i] = acc_g[i];
        p.series.ch[kSpeedKph][i] = std::max(v * 3.6 + rng.normal() * 0.05, 0.0);
        p.series.ch[kBrakePedal][i] = brake_from_decel(a, 1.0, rng);
    }
}
} // namespace

void inject_anomalies(std::vector<Profile>& profiles, double ratio, std::uint64_t seed) {
    if (profiles.empty()) throw DataError("anomaly injection on empty profile set");
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("anomaly ratio outside [0, 1]");
    const std::size_t m =
        static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(profiles.size())));
    std::vector<std::size_t> order(profiles.size());
    std::iota(order.begin(), order.end(), 0);
    Rng pick = Rng::stream(seed, 0x616e6f6d); // selection stream
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[pick.below(i)]);
    for (std::size_t i = 0; i < m; ++i) {
        Profile& p = profiles[order[i]];
        p.label = 1;
        Rng prng = Rng::stream(seed, 0x70657274 + order[i]);
        perturb_profile(p, prng);
    }
}

// ---- Benchmark adapter -----------------------------------------------------

Array read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<double> values;
    std::string line;
    int cols = -1;
    std::size_t rows = 0, row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto cells = split(line, ',');
        if (cols < 0)
            cols = static_cast<int>(cells.size());
        else if (static_cast<int>(cells.size()) != cols)
            throw DataError(path + ":" + std::to_string(row) + ": ragged row");
        for (const auto& c : cells)
            values.push_back(parse_f64(c, path + ":" + std::to_string(row)));
        ++rows;
    }
    if (rows == 0) throw DataError(path + ": empty matrix");
    return Array({static_cast<int>(rows), cols}, std::move(values));
}

std::vector<int> read_label_column(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<int> labels;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        double v = parse_f64(line, path + ":" + std::to_string(row));
        if (v != 0.0 && v != 1.0)
            throw DataError(path + ":" + std::to_string(row) + ": label must be 0 or 1");
        labels.push_back(v == 1.0 ? 1 : 0);
    }
    return labels;
}

} // namespace gdflow::data
