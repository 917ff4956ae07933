#include "gdflow/config.hpp"
#include "gdflow/data.hpp"
#include "gdflow/errors.hpp"
#include "gdflow/model.hpp"
#include "gdflow/textio.hpp"
#include "gdflow/train.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace gdflow;

namespace {

const char* kConfigKeys[] = {
    "window", "stride", "batch", "epochs", "lr", "weight_decay", "hidden",
    "flow_blocks", "q", "cheb_k", "embed_dim", "channels", "seed", "no_ncde",
    "no_quantile", "train_split", "expected_anomaly_rate", "count", "ratio",
    "approach_s_min", "approach_s_max", "episode_s_min", "episode_s_max",
    "cruise_kph_min", "cruise_kph_max", "lead_decel_min", "lead_decel_max"};

struct ConfigFlags {
    std::string config_path;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "flat key = value config file");
        for (const char* key : kConfigKeys)
            options[key] = cmd->add_option(std::string("--") + key, values[key]);
    }

    RunConfig resolve() const {
        RunConfig cfg;
        if (!config_path.empty()) cfg = load_config_file(config_path);
        for (const char* key : kConfigKeys)
            if (options.at(key)->count() > 0) cfg.set(key, values.at(key));
        cfg.validate();
        return cfg;
    }
};

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << text;
    if (!out) throw DataError("write failed: " + path);
}

std::string padded(int i, int width) {
    std::string s = std::to_string(i);
    return std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(
                           static_cast<std::size_t>(width), s.size()),
                       '0') +
           s;
}

data::ScenarioConfig scenario_from(const RunConfig& cfg) {
    data::ScenarioConfig sc;
    sc.approach_s_min = cfg.approach_s_min;
    sc.approach_s_max = cfg.approach_s_max;
    sc.episode_s_min = cfg.episode_s_min;
    sc.episode_s_max = cfg.episode_s_max;
    sc.cruise_kph_min = cfg.cruise_kph_min;
    sc.cruise_kph_max = cfg.cruise_kph_max;
    sc.lead_decel_min = cfg.lead_decel_min;
    sc.lead_decel_max = cfg.lead_decel_max;
    return sc;
}

constexpr std::uint64_t kDriveStream = 0x64726976;

int cmd_generate(const RunConfig& cfg, const std::string& out_dir) {
    data::ScenarioConfig sc = scenario_from(cfg);
    std::vector<data::Profile> profiles;
    for (int i = 0; i < cfg.count; ++i) {
        Rng rng = Rng::stream(cfg.seed, kDriveStream + static_cast<std::uint64_t>(i));
        data::RawDrive drive = data::resample_10ms(data::synthesize_drive(sc, rng));
        auto extracted = data::extract_profiles(drive, "d" + padded(i, 4));
        if (extracted.empty())
            throw DataError("drive " + std::to_string(i) + " produced no profile");
        profiles.push_back(std::move(extracted.front()));
    }
    data::inject_anomalies(profiles, cfg.ratio, cfg.seed);
    ensure_dir(out_dir);
    data::write_corpus(out_dir, profiles);
    int anomalous = 0;
    for (const auto& p : profiles) anomalous += p.label;
    std::cout << "generated " << profiles.size() << " profiles (" << anomalous
              << " anomalous) in " << out_dir << "\n";
    return 0;
}

int cmd_preprocess(const std::string& in_dir, const std::string& out_dir) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(in_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".csv")
            files.push_back(entry.path().string());
    if (files.empty()) throw DataError("no .csv drives in " + in_dir);
    std::sort(files.begin(), files.end());

    std::vector<data::Profile> profiles;
    for (const auto& file : files) {
        data::RawDrive drive = data::resample_10ms(data::read_drive_csv(file));
        auto extracted = data::extract_profiles(drive, fs::path(file).stem().string());
        for (auto& p : extracted) profiles.push_back(std::move(p));
    }
    ensure_dir(out_dir);
    data::write_corpus(out_dir, profiles);
    std::cout << "extracted " << profiles.size() << " profiles from " << files.size()
              << " drives into " << out_dir << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& corpus_dir,
              const std::string& out_dir) {
    auto corpus = data::read_corpus(corpus_dir);
    train::TrainResult result = train::train_model(std::move(corpus), cfg);
    ensure_dir(out_dir);
    result.model.save(out_dir + "/checkpoint.gdf");
    std::string log;
    for (const auto& line : result.log) log += line + "\n";
    write_text(out_dir + "/train_log.txt", log);
    std::cout << log << "saved " << out_dir << "/checkpoint.gdf\n";
    return 0;
}

int cmd_score(const std::string& checkpoint, const std::string& corpus_dir,
              const std::string& split, const std::string& out_dir) {
    GdflowModel model = GdflowModel::load(checkpoint);
    auto corpus = data::read_corpus(corpus_dir);
    std::sort(corpus.begin(), corpus.end(),
              [](const data::Profile& a, const data::Profile& b) { return a.id < b.id; });
    std::vector<int> subset;
    if (split == "all") {
        for (std::size_t i = 0; i < corpus.size(); ++i) subset.push_back(static_cast<int>(i));
    } else if (split == "train" || split == "test") {
        train::Split sp = train::split_profiles(corpus, model.cfg.train_split, model.cfg.seed);
        subset = split == "train" ? sp.train : sp.test;
    } else {
        throw ConfigError("--split must be all, train, or test");
    }
    auto records = train::score_corpus(model, corpus, subset);
    ensure_dir(out_dir);
    train::write_scores_csv(out_dir + "/scores.csv", records);
    std::cout << "scored " << records.size() << " windows into " << out_dir
              << "/scores.csv\n";
    return 0;
}

int cmd_evaluate(const std::string& scores_path, const std::string& corpus_dir,
                 const std::string& out_dir) {
    auto records = train::read_scores_csv(scores_path);
    auto labels = data::read_labels_csv(corpus_dir + "/labels.csv");
    train::Metrics m = train::evaluate_scores(records, labels);
    std::string report = train::metrics_report(m);
    ensure_dir(out_dir);
    write_text(out_dir + "/metrics.txt", report);
    std::cout << report;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"deceleration-profile anomaly detector"};
    app.require_subcommand(1);

    ConfigFlags gen_cfg, train_cfg;
    std::string gen_out = "corpus";
    auto* gen = app.add_subcommand("generate", "synthesize a labeled profile corpus");
    gen_cfg.attach(gen);
    gen->add_option("--out", gen_out, "output corpus directory");

    std::string pre_in, pre_out = "corpus";
    auto* pre = app.add_subcommand("preprocess", "extract profiles from raw drive CSVs");
    pre->add_option("--in", pre_in, "directory of drive CSVs")->required();
    pre->add_option("--out", pre_out, "output corpus directory");

    std::string train_corpus = "corpus", train_out = "run";
    auto* tr = app.add_subcommand("train", "train a detector on a corpus");
    train_cfg.attach(tr);
    tr->add_option("--corpus", train_corpus, "corpus directory");
    tr->add_option("--out", train_out, "output directory for checkpoint and log");

    std::string score_ckpt = "run/checkpoint.gdf", score_corpus = "corpus";
    std::string score_split = "all", score_out = "run";
    auto* sc = app.add_subcommand("score", "score corpus windows with a checkpoint");
    sc->add_option("--checkpoint", score_ckpt, "checkpoint file");
    sc->add_option("--corpus", score_corpus, "corpus directory");
    sc->add_option("--split", score_split, "all, train, or test");
    sc->add_option("--out", score_out, "output directory for scores.csv");

    std::string eval_scores = "run/scores.csv", eval_corpus = "corpus", eval_out = "run";
    auto* ev = app.add_subcommand("evaluate", "compute metrics from a score file");
    ev->add_option("--scores", eval_scores, "score CSV from the score command");
    ev->add_option("--corpus", eval_corpus, "corpus directory providing labels");
    ev->add_option("--out", eval_out, "output directory for metrics.txt");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_generate(gen_cfg.resolve(), gen_out);
        if (pre->parsed()) return cmd_preprocess(pre_in, pre_out);
        if (tr->parsed()) return cmd_train(train_cfg.resolve(), train_corpus, train_out);
        if (sc->parsed()) return cmd_score(score_ckpt, score_corpus, score_split, score_out);
        if (ev->parsed()) return cmd_evaluate(eval_scores, eval_corpus, eval_out);
        return 2;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
