#pragma once

#include "gdflow/data.hpp"
#include "gdflow/model.hpp"
#include "gdflow/objective.hpp"

#include <string>
#include <vector>

namespace gdflow::train {

// Index split over profiles sorted by id; both sides nonempty.
struct Split {
    std::vector<int> train;
    std::vector<int> test;
};
Split split_profiles(const std::vector<data::Profile>& profiles, double train_frac,
                     std::uint64_t seed);

struct TrainResult {
    GdflowModel model;
    std::vector<double> epoch_loss;
    std::vector<double> epoch_val_f1; // NaN when validation is single-class
    long skipped_windows = 0;
    long clamp_saturations = 0;
    std::vector<std::string> log;
};

// Trains on normal profiles of the train split, validates per epoch on the
// held-out split, keeps the best checkpoint, and sets tau from the training
// score distribution.
TrainResult train_model(std::vector<data::Profile> corpus, const RunConfig& cfg);

// Deterministic window enumeration over a profile subset (ids ascending,
// starts ascending). Profiles must already be normalized as intended.
std::vector<data::Window> enumerate_windows(const std::vector<data::Profile>& profiles,
                                            const std::vector<int>& subset, int w, int s,
                                            long* skipped = nullptr);

// Scores raw (unnormalized) profiles under the model's stored stats and tau.
std::vector<objective::ScoreRecord> score_corpus(const GdflowModel& model,
                                                 std::vector<data::Profile> corpus,
                                                 const std::vector<int>& subset);

void write_scores_csv(const std::string& path,
                      const std::vector<objective::ScoreRecord>& records);
std::vector<objective::ScoreRecord> read_scores_csv(const std::string& path);

struct Metrics {
    double f1_pa = 0.0;
    double tau_star = 0.0;
    double auroc = 0.0;
    double auprc = 0.0;
    std::size_t windows = 0;
    std::size_t positives = 0;
};

// Window-level metrics; labels joined to records through profile ids.
Metrics evaluate_scores(const std::vector<objective::ScoreRecord>& records,
                        const std::vector<std::pair<std::string, int>>& labels);

// `metric = value` lines plus one machine-readable JSON line.
std::string metrics_report(const Metrics& m);

} // namespace gdflow::train
