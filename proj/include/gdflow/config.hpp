#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gdflow {

// Every field has a same-named `key = value` form in config files and a
// same-named command-line flag; flags win over file values.
struct RunConfig {
    int window = 0; // 0 = shortest training-profile length
    int stride = 1;
    int batch = 256;
    int epochs = 10;
    double lr = 3e-3;
    double weight_decay = 5e-4;
    int hidden = 32;
    int flow_blocks = 1;
    double q = 0.05;
    int cheb_k = 2;
    int embed_dim = 8;
    std::vector<std::string> channels = {"long_acc_g", "speed_kph", "brake_pedal_pct",
                                         "accel_pedal_pct", "lat_acc_g"};
    std::uint64_t seed = 1;
    bool no_ncde = false;
    bool no_quantile = false;
    double train_split = 0.8;
    double expected_anomaly_rate = 0.4;

    // generation
    int count = 60;
    double ratio = 0.6;
    double approach_s_min = 1.5, approach_s_max = 3.0;
    double episode_s_min = 0.25, episode_s_max = 0.55;
    double cruise_kph_min = 30.0, cruise_kph_max = 55.0;
    double lead_decel_min = 2.5, lead_decel_max = 5.5;

    void validate() const;
    std::vector<int> channel_indices() const;

    // Flat key=value round trip, used by config files and checkpoints.
    void set(const std::string& key, const std::string& value);
    std::vector<std::pair<std::string, std::string>> entries() const;
};

RunConfig load_config_file(const std::string& path, RunConfig base = {});
void apply_overrides(RunConfig& cfg, const std::map<std::string, std::string>& overrides);

} // namespace gdflow
