#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kae/gridsearch.hpp"

namespace kae::config {

// Raised for any malformed, unknown, or out-of-range configuration entry;
// carries the offending "section.key" so the CLI can name it.
struct ConfigError : std::runtime_error {
  std::string field;
  ConfigError(std::string field_, const std::string& message)
      : std::runtime_error(field_.empty() ? message : field_ + ": " + message),
        field(std::move(field_)) {}
};

struct DataConfig {
  std::string equation = "shm";
  int n_train = 200;
  int n_test = 50;
  int n_steps = 50;
  double dt = 0.1;
  std::int64_t seed = 1;
  dynamics::GenerationOptions options;
};

struct ModelConfig {
  int encoding_dim = 16;
  koopman::OperatorKind form = koopman::OperatorKind::tridiagonal;
  koopman::ModelOptions options;
  std::uint64_t seed = 0;
};

struct SearchConfig {
  std::vector<int> encoding_dims;
  std::vector<losses::AccuracyTerm> accuracies;
  std::vector<losses::EmbeddingTerm> embeddings;
  std::vector<losses::OperatorTerm> operators;
  std::vector<losses::AuxiliaryTerm> auxiliaries;
  std::vector<koopman::OperatorKind> forms;
  std::vector<double> lambdas;
  std::vector<std::pair<koopman::OperatorKind, losses::OperatorTerm>> exclusions;
  int workers = 1;
};

struct StudyConfig {
  std::optional<int> epochs;  // overrides [train] epochs for operator studies
};

// The experiment file: flat sections of key = value lines. Unknown
// sections or keys are rejected.
struct ExperimentConfig {
  DataConfig data;
  ModelConfig model;
  losses::LossConfig loss;
  training::TrainConfig train;
  SearchConfig search;
  StudyConfig study;
  bool has_search = false;

  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig parse(const std::string& text);

  // Assembles the search space from [search] plus the train/model sections.
  gridsearch::SearchSpace search_space() const;
};

}  // namespace kae::config
