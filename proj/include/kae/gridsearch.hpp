#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kae/training.hpp"

namespace kae::gridsearch {

// One point of the search space.
struct Combination {
  int id = 0;
  std::string equation;
  int encoding_dim = 0;
  koopman::OperatorKind form = koopman::OperatorKind::dense;
  losses::AccuracyTerm accuracy = losses::AccuracyTerm::full;
  losses::EmbeddingTerm embedding = losses::EmbeddingTerm::none;
  losses::OperatorTerm op = losses::OperatorTerm::none;
  losses::AuxiliaryTerm auxiliary = losses::AuxiliaryTerm::none;
  double lambda = 1.0;
};

struct SearchSpace {
  std::string equation;
  std::vector<int> encoding_dims;
  std::vector<losses::AccuracyTerm> accuracies;
  std::vector<losses::EmbeddingTerm> embeddings;
  std::vector<losses::OperatorTerm> operators;  // may include none
  std::vector<losses::AuxiliaryTerm> auxiliaries{losses::AuxiliaryTerm::none};
  std::vector<koopman::OperatorKind> forms;
  std::vector<double> lambdas{0.975};  // expands the discounted accuracy term
  // Extra form/operator-term pairs to drop, on top of the built-in rule
  // that the determinant term never pairs with the dense form.
  std::vector<std::pair<koopman::OperatorKind, losses::OperatorTerm>> exclusions;
  training::TrainConfig train_template;
  koopman::ModelOptions model_options;
};

// Cartesian product filtered by the constraints, in declared option order:
// encoding_dim, accuracy (with its discount factors), embedding, auxiliary,
// form, operator term. Throws if the filtered space is empty.
std::vector<Combination> enumerate(const SearchSpace& space);

struct RunResult {
  Combination combo;
  training::History history;
  double wall_seconds = 0.0;  // total run wall time
  bool diverged = false;

  double error_at(int epoch) const;  // +inf when diverged before that epoch
};

struct SearchOutcome {
  std::vector<RunResult> results;  // sorted by combination id
  std::size_t n_trained = 0;       // trained during this call
  std::size_t n_resumed = 0;       // reused from the journal
};

// Trains every combination with a combination-derived seed. Completed runs
// are appended to <out_dir>/runs.csv as they finish, so an interrupted
// search resumes by skipping complete ids; the canonical
// <out_dir>/results.csv is rewritten at the end, sorted by id. Results are
// independent of the worker count.
SearchOutcome run_search(const SearchSpace& space, const dynamics::Dataset& train,
                         const dynamics::Dataset& test, int workers,
                         std::uint64_t seed, const std::string& out_dir,
                         bool resume = false);

// --- analyses ----------------------------------------------------------

enum class OptionDimension { encoding_dim, accuracy, embedding, op, auxiliary, form };
std::string to_string(OptionDimension d);
OptionDimension option_dimension_from_string(const std::string& s);
std::string level_of(const Combination& c, OptionDimension d);

struct MeanEffectCell {
  std::string level;
  int epoch = 0;
  double mean_error = 0.0;
  std::size_t count = 0;     // runs contributing to the mean
  std::size_t excluded = 0;  // diverged runs left out
};
// Mean test error per option level per eval epoch; diverged runs are
// excluded and counted.
std::vector<MeanEffectCell> mean_effect(const std::vector<RunResult>& results,
                                        OptionDimension dim);

struct TopEntry {
  double error = 0.0;
  Combination combo;
};
// k lowest errors at the given eval epoch, ascending, ties broken by
// combination id; diverged runs rank last.
std::vector<TopEntry> top_k(const std::vector<RunResult>& results, int epoch,
                            std::size_t k);

struct RelativeTimeCell {
  OptionDimension dimension;
  std::string level;
  double relative = 0.0;  // mean wall time of the level / overall mean
};
std::vector<RelativeTimeCell> mean_relative_times(const std::vector<RunResult>& results);

// The long-horizon operator comparison preset: full accuracy +
// reconstruction only, all form x operator-term pairs including "none",
// minus determinant x dense; 14 combinations.
SearchSpace operator_study_space(const std::string& equation, int encoding_dim,
                                 const training::TrainConfig& train_template,
                                 const koopman::ModelOptions& model_options = {});

// --- CSV surfaces -------------------------------------------------------
// results schema:
// combo_id,equation,encoding_dim,form,accuracy,embedding,operator,auxiliary,
// lambda,epoch,test_error,wall_time_s,status
// with one row per (run, eval epoch), '.' decimals, inf for diverged.

void write_results_csv(const std::string& path, const std::vector<RunResult>& results);
std::vector<RunResult> read_results_csv(const std::string& path);

void write_mean_effect_csv(const std::string& path,
                           const std::vector<MeanEffectCell>& cells,
                           OptionDimension dim);
void write_mean_effect_blocks_csv(
    const std::string& path,
    const std::vector<std::pair<OptionDimension, std::vector<MeanEffectCell>>>& blocks);
void write_top_k_csv(const std::string& path, const std::vector<TopEntry>& entries);
void write_relative_times_csv(const std::string& path,
                              const std::vector<RelativeTimeCell>& cells);

std::string format_mean_effect_table(const std::vector<MeanEffectCell>& cells,
                                     OptionDimension dim);
std::string format_top_k_table(const std::vector<TopEntry>& entries);
std::string format_relative_times_table(const std::vector<RelativeTimeCell>& cells);
// The operator-study table: error, operator form, operator loss.
std::string format_operator_study_table(const std::vector<RunResult>& results,
                                        int epoch);
void write_operator_study_csv(const std::string& path,
                              const std::vector<RunResult>& results, int epoch);

}  // namespace kae::gridsearch
