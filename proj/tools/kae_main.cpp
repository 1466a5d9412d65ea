// kae: generate datasets, train Koopman autoencoders, run loss/operator
// grid searches, and aggregate the result files. See README.md.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "kae/config.hpp"

namespace fs = std::filesystem;
using kae::Rng;

namespace {

constexpr const char* kVersion = "1.0.0";

constexpr int kExitConfig = 2;
constexpr int kExitDataGen = 3;
constexpr int kExitDiverged = 4;

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string file_hash(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream buf;
  buf << is.rdbuf();
  char out[20];
  std::snprintf(out, sizeof(out), "%016llx",
                static_cast<unsigned long long>(fnv1a(buf.str())));
  return out;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::string& config_path, std::int64_t seed) {
  std::ofstream os(out_dir + "/manifest.txt", std::ios::trunc);
  os << "tool = kae " << kVersion << "\n"
     << "command = " << command << "\n"
     << "config = " << config_path << "\n"
     << "config_hash = " << (config_path.empty() ? "-" : file_hash(config_path)) << "\n"
     << "seed = " << seed << "\n";
}

std::uint64_t test_split_seed(std::int64_t seed) {
  return Rng::mix(static_cast<std::uint64_t>(seed), 0x74657374ull);
}

struct DatasetPair {
  kae::dynamics::Dataset train, test;
};

DatasetPair generate_pair(const kae::config::ExperimentConfig& cfg) {
  const auto eq = kae::dynamics::make_equation(cfg.data.equation, cfg.data.options);
  DatasetPair pair;
  pair.train = kae::dynamics::generate_dataset(
      eq, cfg.data.n_train, cfg.data.n_steps, cfg.data.dt, cfg.data.seed,
      kae::dynamics::Split::train, cfg.data.options);
  pair.test = kae::dynamics::generate_dataset(
      eq, cfg.data.n_test, cfg.data.n_steps, cfg.data.dt,
      static_cast<std::int64_t>(test_split_seed(cfg.data.seed)),
      kae::dynamics::Split::test, cfg.data.options);
  return pair;
}

DatasetPair load_pair(const std::string& dir) {
  DatasetPair pair;
  pair.train = kae::dynamics::load_dataset(dir + "/train.kae");
  pair.test = kae::dynamics::load_dataset(dir + "/test.kae");
  return pair;
}

DatasetPair obtain_pair(const kae::config::ExperimentConfig& cfg,
                        const std::string& data_dir, const std::string& out_dir) {
  if (!data_dir.empty()) return load_pair(data_dir);
  // No prebuilt datasets: generate them under the output directory.
  const std::string dir = out_dir + "/data";
  fs::create_directories(dir);
  auto pair = generate_pair(cfg);
  kae::dynamics::save_dataset(pair.train, dir + "/train.kae");
  kae::dynamics::save_dataset(pair.test, dir + "/test.kae");
  return pair;
}

int cmd_generate_data(const std::string& config_path, const std::string& out_dir) {
  const auto cfg = kae::config::ExperimentConfig::load(config_path);
  fs::create_directories(out_dir);
  const auto pair = generate_pair(cfg);
  kae::dynamics::save_dataset(pair.train, out_dir + "/train.kae");
  kae::dynamics::save_dataset(pair.test, out_dir + "/test.kae");
  write_manifest(out_dir, "generate-data", config_path, cfg.data.seed);
  std::cout << "equation " << cfg.data.equation << ": wrote " << pair.train.size()
            << " train and " << pair.test.size() << " test trajectories, "
            << cfg.data.n_steps << " steps at dt " << cfg.data.dt << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir) {
  const auto cfg = kae::config::ExperimentConfig::load(config_path);
  fs::create_directories(out_dir);
  const auto pair = data_dir.empty() ? generate_pair(cfg) : load_pair(data_dir);
  auto model = kae::koopman::init_model(pair.train.equation.state_dim,
                                        cfg.model.encoding_dim, cfg.model.form,
                                        cfg.model.seed, cfg.model.options);
  const auto history = kae::training::fit(model, pair.train, pair.test, cfg.train);
  kae::koopman::save_model(model, out_dir + "/model.kae");

  // Single runs reuse the results schema with combination id 0.
  kae::gridsearch::RunResult run;
  run.combo.id = 0;
  run.combo.equation = cfg.data.equation;
  run.combo.encoding_dim = cfg.model.encoding_dim;
  run.combo.form = cfg.model.form;
  run.combo.accuracy = cfg.loss.accuracy;
  run.combo.embedding = cfg.loss.embedding;
  run.combo.op = cfg.loss.op;
  run.combo.auxiliary = cfg.loss.auxiliary;
  run.combo.lambda = cfg.loss.accuracy == kae::losses::AccuracyTerm::discounted
                         ? cfg.loss.lambda
                         : 1.0;
  run.history = history;
  run.diverged = history.diverged;
  run.wall_seconds =
      history.records.empty() ? 0.0 : history.records.back().wall_seconds;
  kae::gridsearch::write_results_csv(out_dir + "/history.csv", {run});
  write_manifest(out_dir, "train", config_path,
                 static_cast<std::int64_t>(cfg.train.seed));

  if (history.diverged) {
    std::cerr << "training diverged at epoch " << history.diverged_epoch << "\n";
    return kExitDiverged;
  }
  std::cout << "final test error " << history.records.back().test_error << " after "
            << cfg.train.epochs << " epochs\n";
  return 0;
}

int cmd_grid_search(const std::string& config_path, const std::string& data_dir,
                    const std::string& out_dir, int workers_flag, bool resume) {
  const auto cfg = kae::config::ExperimentConfig::load(config_path);
  fs::create_directories(out_dir);
  const auto space = cfg.search_space();
  const auto pair = obtain_pair(cfg, data_dir, out_dir);
  const int workers = workers_flag > 0 ? workers_flag : cfg.search.workers;
  const auto outcome = kae::gridsearch::run_search(
      space, pair.train, pair.test, workers,
      static_cast<std::uint64_t>(cfg.data.seed), out_dir, resume);
  write_manifest(out_dir, "grid-search", config_path, cfg.data.seed);
  std::cout << outcome.results.size() << " combinations (" << outcome.n_trained
            << " trained, " << outcome.n_resumed << " resumed) -> " << out_dir
            << "/results.csv\n";
  return 0;
}

int cmd_report(const std::string& results_path, const std::string& analysis,
               int epoch, int k, std::string out_path) {
  const auto results = kae::gridsearch::read_results_csv(results_path);
  if (results.empty()) throw std::runtime_error("no runs in '" + results_path + "'");
  const int final_epoch = results.front().history.records.back().epoch;
  if (epoch <= 0) epoch = final_epoch;
  const std::string dir = fs::path(results_path).parent_path().string();
  const std::string base = dir.empty() ? "." : dir;

  if (analysis == "mean-effect") {
    if (out_path.empty()) out_path = base + "/mean_effect.csv";
    std::string text;
    std::vector<std::pair<kae::gridsearch::OptionDimension,
                          std::vector<kae::gridsearch::MeanEffectCell>>> blocks;
    for (auto dim : {kae::gridsearch::OptionDimension::accuracy,
                     kae::gridsearch::OptionDimension::embedding,
                     kae::gridsearch::OptionDimension::op,
                     kae::gridsearch::OptionDimension::auxiliary,
                     kae::gridsearch::OptionDimension::form,
                     kae::gridsearch::OptionDimension::encoding_dim}) {
      blocks.emplace_back(dim, kae::gridsearch::mean_effect(results, dim));
      text += kae::gridsearch::format_mean_effect_table(blocks.back().second, dim) + "\n";
    }
    kae::gridsearch::write_mean_effect_blocks_csv(out_path, blocks);
    std::cout << text << "wrote " << out_path << "\n";
    return 0;
  }
  if (analysis == "top-k") {
    const auto entries = kae::gridsearch::top_k(results, epoch,
                                                static_cast<std::size_t>(k));
    if (out_path.empty()) out_path = base + "/top_k.csv";
    kae::gridsearch::write_top_k_csv(out_path, entries);
    std::cout << kae::gridsearch::format_top_k_table(entries) << "wrote " << out_path
              << "\n";
    return 0;
  }
  if (analysis == "relative-times") {
    const auto cells = kae::gridsearch::mean_relative_times(results);
    if (out_path.empty()) out_path = base + "/relative_times.csv";
    kae::gridsearch::write_relative_times_csv(out_path, cells);
    std::cout << kae::gridsearch::format_relative_times_table(cells) << "wrote "
              << out_path << "\n";
    return 0;
  }
  throw std::runtime_error("unknown analysis '" + analysis +
                           "' (expected mean-effect, top-k, or relative-times)");
}

int cmd_operator_study(std::string equation, const std::string& config_path,
                       const std::string& out_dir, int workers_flag) {
  auto cfg = kae::config::ExperimentConfig::load(config_path);
  if (equation.empty()) equation = cfg.data.equation;
  cfg.data.equation = equation;
  fs::create_directories(out_dir);

  auto train_template = cfg.train;
  if (cfg.study.epochs) train_template.epochs = *cfg.study.epochs;
  const auto space = kae::gridsearch::operator_study_space(
      equation, cfg.model.encoding_dim, train_template, cfg.model.options);

  const auto pair = obtain_pair(cfg, "", out_dir);
  const int workers = workers_flag > 0 ? workers_flag : cfg.search.workers;
  const auto outcome = kae::gridsearch::run_search(
      space, pair.train, pair.test, workers,
      static_cast<std::uint64_t>(cfg.data.seed), out_dir, false);
  const int final_epoch = train_template.epochs;
  kae::gridsearch::write_operator_study_csv(out_dir + "/study_table.csv",
                                            outcome.results, final_epoch);
  write_manifest(out_dir, "operator-study", config_path, cfg.data.seed);
  std::cout << kae::gridsearch::format_operator_study_table(outcome.results, final_epoch)
            << "wrote " << out_dir << "/study_table.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman autoencoder experiment runner"};
  app.set_version_flag("--version", std::string("kae ") + kVersion);
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, results_path, analysis, equation,
      report_out;
  int workers = 0, epoch = 0, topk = 10;
  bool resume = false;

  auto* gen = app.add_subcommand("generate-data", "Solve the configured equation "
                                                  "and write train/test datasets");
  gen->add_option("--config", config_path, "experiment config file")->required();
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* train = app.add_subcommand("train", "Train a single configuration");
  train->add_option("--config", config_path, "experiment config file")->required();
  train->add_option("--data", data_dir, "directory holding train.kae/test.kae");
  train->add_option("--out", out_dir, "output directory")->required();

  auto* grid = app.add_subcommand("grid-search", "Run every combination in [search]");
  grid->add_option("--config", config_path, "experiment config file")->required();
  grid->add_option("--data", data_dir, "directory holding train.kae/test.kae");
  grid->add_option("--out", out_dir, "output directory")->required();
  grid->add_option("--workers", workers, "worker threads (default from config)");
  grid->add_flag("--resume", resume, "skip combinations already in runs.csv");

  auto* report = app.add_subcommand("report", "Aggregate a results csv");
  report->add_option("--results", results_path, "results.csv from a search")->required();
  report->add_option("--analysis", analysis,
                     "mean-effect | top-k | relative-times")->required();
  report->add_option("--epoch", epoch, "eval epoch (default: final)");
  report->add_option("--k", topk, "rows for top-k (default 10)");
  report->add_option("--out", report_out, "report csv path (default: beside results)");

  auto* study = app.add_subcommand("operator-study",
                                   "Operator form x operator loss comparison");
  study->add_option("--equation", equation, "equation (default from config)");
  study->add_option("--config", config_path, "experiment config file")->required();
  study->add_option("--out", out_dir, "output directory")->required();
  study->add_option("--workers", workers, "worker threads (default from config)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate_data(config_path, out_dir);
    if (train->parsed()) return cmd_train(config_path, data_dir, out_dir);
    if (grid->parsed())
      return cmd_grid_search(config_path, data_dir, out_dir, workers, resume);
    if (report->parsed())
      return cmd_report(results_path, analysis, epoch, topk, report_out);
    if (study->parsed())
      return cmd_operator_study(equation, config_path, out_dir, workers);
  } catch (const kae::config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const kae::dynamics::IntegrationBlowup& e) {
    std::cerr << "data generation failed: " << e.what() << "\n";
    return kExitDataGen;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
