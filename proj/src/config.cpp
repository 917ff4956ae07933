#include "gdflow/config.hpp"

#include "gdflow/data.hpp"
#include "gdflow/errors.hpp"
#include "gdflow/textio.hpp"

#include <fstream>

namespace gdflow {

namespace {
int to_int(const std::string& v, const std::string& key) {
    long long x = parse_i64(v, "config key '" + key + "'");
    return static_cast<int>(x);
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string join(const std::vector<std::string>& parts, char delim) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += delim;
        out += parts[i];
    }
    return out;
}
} // namespace

void RunConfig::validate() const {
    if (window != 0 && window < 2) throw ConfigError("window must be 0 (auto) or >= 2");
    if (stride < 1) throw ConfigError("stride must be >= 1");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (hidden < 1) throw ConfigError("hidden must be >= 1");
    if (flow_blocks < 1) throw ConfigError("flow_blocks must be >= 1");
    if (!(q >= 0.0 && q < 1.0)) throw ConfigError("q must lie in [0, 1)");
    if (cheb_k < 0) throw ConfigError("cheb_k must be >= 0");
    if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
    if (channels.empty()) throw ConfigError("channel set must be nonempty");
    if (!(train_split > 0.0 && train_split < 1.0))
        throw ConfigError("train_split must lie in (0, 1)");
    if (!(expected_anomaly_rate >= 0.0 && expected_anomaly_rate < 1.0))
        throw ConfigError("expected_anomaly_rate must lie in [0, 1)");
    if (count < 1) throw ConfigError("count must be >= 1");
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("ratio must lie in [0, 1]");
    channel_indices();
}

std::vector<int> RunConfig::channel_indices() const {
    std::vector<int> idx;
    for (const auto& name : channels) idx.push_back(data::channel_index(name));
    return idx;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "window")
        window = to_int(value, key);
    else if (key == "stride")
        stride = to_int(value, key);
    else if (key == "batch")
        batch = to_int(value, key);
    else if (key == "epochs")
        epochs = to_int(value, key);
    else if (key == "lr")
        lr = parse_f64(value, key);
    else if (key == "weight_decay")
        weight_decay = parse_f64(value, key);
    else if (key == "hidden")
        hidden = to_int(value, key);
    else if (key == "flow_blocks")
        flow_blocks = to_int(value, key);
    else if (key == "q")
        q = parse_f64(value, key);
    else if (key == "cheb_k")
        cheb_k = to_int(value, key);
    else if (key == "embed_dim")
        embed_dim = to_int(value, key);
    else if (key == "channels") {
        channels.clear();
        for (auto& c : split(value, ',')) {
            std::string name = trim(c);
            if (!name.empty()) channels.push_back(name);
        }
    } else if (key == "seed")
        seed = static_cast<std::uint64_t>(parse_i64(value, key));
    else if (key == "no_ncde")
        no_ncde = to_bool(value, key);
    else if (key == "no_quantile")
        no_quantile = to_bool(value, key);
    else if (key == "train_split")
        train_split = parse_f64(value, key);
    else if (key == "expected_anomaly_rate")
        expected_anomaly_rate = parse_f64(value, key);
    else if (key == "count")
        count = to_int(value, key);
    else if (key == "ratio")
        ratio = parse_f64(value, key);
    else if (key == "approach_s_min")
        approach_s_min = parse_f64(value, key);
    else if (key == "approach_s_max")
        approach_s_max = parse_f64(value, key);
    else if (key == "episode_s_min")
        episode_s_min = parse_f64(value, key);
    else if (key == "episode_s_max")
        episode_s_max = parse_f64(value, key);
    else if (key == "cruise_kph_min")
        cruise_kph_min = parse_f64(value, key);
    else if (key == "cruise_kph_max")
        cruise_kph_max = parse_f64(value, key);
    else if (key == "lead_decel_min")
        lead_decel_min = parse_f64(value, key);
    else if (key == "lead_decel_max")
        lead_decel_max = parse_f64(value, key);
    else
        throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
    std::vector<std::pair<std::string, std::string>> e;
    e.emplace_back("window", std::to_string(window));
    e.emplace_back("stride", std::to_string(stride));
    e.emplace_back("batch", std::to_string(batch));
    e.emplace_back("epochs", std::to_string(epochs));
    e.emplace_back("lr", fmt_f64(lr));
    e.emplace_back("weight_decay", fmt_f64(weight_decay));
    e.emplace_back("hidden", std::to_string(hidden));
    e.emplace_back("flow_blocks", std::to_string(flow_blocks));
    e.emplace_back("q", fmt_f64(q));
    e.emplace_back("cheb_k", std::to_string(cheb_k));
    e.emplace_back("embed_dim", std::to_string(embed_dim));
    e.emplace_back("channels", join(channels, ','));
    e.emplace_back("seed", std::to_string(seed));
    e.emplace_back("no_ncde", no_ncde ? "true" : "false");
    e.emplace_back("no_quantile", no_quantile ? "true" : "false");
    e.emplace_back("train_split", fmt_f64(train_split));
    e.emplace_back("expected_anomaly_rate", fmt_f64(expected_anomaly_rate));
    e.emplace_back("count", std::to_string(count));
    e.emplace_back("ratio", fmt_f64(ratio));
    e.emplace_back("approach_s_min", fmt_f64(approach_s_min));
    e.emplace_back("approach_s_max", fmt_f64(approach_s_max));
    e.emplace_back("episode_s_min", fmt_f64(episode_s_min));
    e.emplace_back("episode_s_max", fmt_f64(episode_s_max));
    e.emplace_back("cruise_kph_min", fmt_f64(cruise_kph_min));
    e.emplace_back("cruise_kph_max", fmt_f64(cruise_kph_max));
    e.emplace_back("lead_decel_min", fmt_f64(lead_decel_min));
    e.emplace_back("lead_decel_max", fmt_f64(lead_decel_max));
    return e;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(row) + ": expected key = value");
        base.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return base;
}

void apply_overrides(RunConfig& cfg, const std::map<std::string, std::string>& overrides) {
    for (const auto& [key, value] : overrides) cfg.set(key, value);
}

} // namespace gdflow
