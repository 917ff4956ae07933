#pragma once

#include "gdflow/array.hpp"
#include "gdflow/rng.hpp"

#include <array>
#include <string>
#include <vector>

namespace gdflow::data {

// Sensor channels, in the CSV column order after t_ms.
enum Channel : int {
    kAccelPedal = 0,
    kBrakePedal = 1,
    kSpeedKph = 2,
    kLatAccG = 3,
    kLongAccG = 4,
};
constexpr int kNumChannels = 5;

const char* channel_name(int ch);
int channel_index(const std::string& name);

// One recorded drive: per-channel columns over a shared time base.
struct RawDrive {
    std::vector<double> t_ms;
    std::array<std::vector<double>, kNumChannels> ch;

    std::size_t size() const { return t_ms.size(); }
};

// Contiguous accelerator-released episode at 10 ms spacing.
struct Profile {
    std::string id;
    int label = 0; // 1 = anomalous
    RawDrive series;

    int length() const { return static_cast<int>(series.size()); }
};

struct Window {
    std::string profile_id;
    int profile_index = 0;
    int start = 0;
    int label = 0;
};

struct NormStats {
    std::array<double, kNumChannels> mean{};
    std::array<double, kNumChannels> stdev{};
};

// ---- CSV interfaces --------------------------------------------------------

RawDrive read_drive_csv(const std::string& path);
void write_drive_csv(const std::string& path, const RawDrive& drive);

// Corpus layout: <dir>/profiles/<id>.csv plus <dir>/labels.csv.
std::vector<Profile> read_corpus(const std::string& dir);
void write_corpus(const std::string& dir, const std::vector<Profile>& profiles);

// id -> label pairs from a labels.csv, sorted by id; series not loaded.
std::vector<std::pair<std::string, int>> read_labels_csv(const std::string& path);

// ---- Preprocessing ---------------------------------------------------------

// Linear interpolation of every channel onto a uniform 10 ms grid.
RawDrive resample_10ms(const RawDrive& raw);

// Maximal accelerator-released runs passing the speed, brake, and lateral
// acceleration gates. ids are "<drive_id>p<k>".
std::vector<Profile> extract_profiles(const RawDrive& drive, const std::string& drive_id);

NormStats compute_stats(const std::vector<Profile>& training);
void apply_stats(Profile& p, const NormStats& stats);

// Sliding windows over one profile; profiles shorter than w are skipped and
// counted in *skipped when given.
std::vector<Window> make_windows(const Profile& p, int profile_index, int w, int s,
                                 long* skipped = nullptr);

// (b, n, w) tensor for windows[first, first+count) over selected channels.
Array assemble_batch(const std::vector<Profile>& profiles, const std::vector<Window>& windows,
                     std::size_t first, std::size_t count, const std::vector<int>& channels,
                     int w);

// ---- Synthetic generation --------------------------------------------------

struct CtgParams {
    double h_gap = 1.2;  // target time gap, s
    double lambda = 1.2; // gap-error weight, 1/s
    double d0 = 2.0;     // standstill distance, m
};

struct ScenarioConfig {
    CtgParams ctg;
    double approach_s_min = 1.5, approach_s_max = 3.0;
    double episode_s_min = 0.25, episode_s_max = 0.55;
    double cruise_kph_min = 30.0, cruise_kph_max = 55.0;
    double lead_decel_min = 2.5, lead_decel_max = 5.5; // m/s^2
    double noise = 1.0; // noise amplitude scale; 0 disables sensor noise
};

// Commanded deceleration laws; exposed for direct inspection in tests.
double ctg_accel(const CtgParams& p, double v_ego, double v_front, double gap);
double uam_accel(double v_ego, double v_front, double gap);

// One drive with a single braking episode framed by accelerator-on phases.
RawDrive synthesize_drive(const ScenarioConfig& cfg, Rng& rng);

// Marks ceil(ratio * count) profiles anomalous and rewrites their braking
// shape (late spike, oscillation, or non-converging deceleration).
void inject_anomalies(std::vector<Profile>& profiles, double ratio, std::uint64_t seed);

// ---- Benchmark adapter -----------------------------------------------------

// Plain numeric matrix, one row per timestamp, comma separated, no header.
Array read_matrix_csv(const std::string& path);
std::vector<int> read_label_column(const std::string& path);

} // namespace gdflow::data
