#include "kae/gridsearch.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "kae/kernels.hpp"

namespace kae::gridsearch {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::runtime_error("results csv: bad number '" + s + "'");
  return v;
}

constexpr const char* kResultsHeader =
    "combo_id,equation,encoding_dim,form,accuracy,embedding,operator,auxiliary,"
    "lambda,epoch,test_error,wall_time_s,status";

}  // namespace

std::vector<Combination> enumerate(const SearchSpace& space) {
  if (space.encoding_dims.empty() || space.accuracies.empty() ||
      space.embeddings.empty() || space.operators.empty() ||
      space.auxiliaries.empty() || space.forms.empty())
    throw std::invalid_argument("enumerate: every option dimension needs at least one level");

  const auto excluded = [&](koopman::OperatorKind form, losses::OperatorTerm op) {
    if (op == losses::OperatorTerm::determinant && form == koopman::OperatorKind::dense)
      return true;
    for (const auto& [f, o] : space.exclusions)
      if (f == form && o == op) return true;
    return false;
  };

  std::vector<Combination> out;
  int id = 0;
  for (int dim : space.encoding_dims) {
    for (auto acc : space.accuracies) {
      const std::vector<double> lambdas =
          acc == losses::AccuracyTerm::discounted ? space.lambdas
                                                  : std::vector<double>{1.0};
      if (lambdas.empty())
        throw std::invalid_argument("enumerate: discounted accuracy needs discount factors");
      for (double lambda : lambdas) {
        for (auto emb : space.embeddings) {
          for (auto aux : space.auxiliaries) {
            for (auto form : space.forms) {
              if (form == koopman::OperatorKind::jordan && dim % 2 != 0)
                throw std::invalid_argument(
                    "enumerate: the jordan form needs an even encoding dimension, got " +
                    std::to_string(dim));
              for (auto op : space.operators) {
                if (excluded(form, op)) continue;
                Combination c;
                c.id = id++;
                c.equation = space.equation;
                c.encoding_dim = dim;
                c.form = form;
                c.accuracy = acc;
                c.embedding = emb;
                c.op = op;
                c.auxiliary = aux;
                c.lambda = lambda;
                out.push_back(c);
              }
            }
          }
        }
      }
    }
  }
  if (out.empty())
    throw std::invalid_argument("enumerate: all combinations were filtered out");
  return out;
}

double RunResult::error_at(int epoch) const {
  for (const auto& rec : history.records)
    if (rec.epoch == epoch) return rec.test_error;
  if (diverged) return kInf;
  throw std::invalid_argument("no eval record at epoch " + std::to_string(epoch));
}

namespace {

training::TrainConfig config_for(const SearchSpace& space, const Combination& c) {
  training::TrainConfig cfg = space.train_template;
  cfg.loss.accuracy = c.accuracy;
  cfg.loss.embedding = c.embedding;
  cfg.loss.op = c.op;
  cfg.loss.auxiliary = c.auxiliary;
  cfg.loss.lambda = c.lambda;
  return cfg;
}

RunResult train_combination(const SearchSpace& space, const Combination& c,
                            const dynamics::Dataset& train,
                            const dynamics::Dataset& test, std::uint64_t seed) {
  const std::uint64_t combo_seed = seed ^ static_cast<std::uint64_t>(c.id);
  auto model = koopman::init_model(train.equation.state_dim, c.encoding_dim, c.form,
                                   Rng::mix(combo_seed, 1), space.model_options);
  training::TrainConfig cfg = config_for(space, c);
  cfg.seed = Rng::mix(combo_seed, 2);
  RunResult result;
  result.combo = c;
  result.history = training::fit(model, train, test, cfg);
  result.diverged = result.history.diverged;
  result.wall_seconds = result.history.records.empty()
                            ? 0.0
                            : result.history.records.back().wall_seconds;
  return result;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

void append_result_rows(std::ostream& os, const RunResult& r) {
  for (const auto& rec : r.history.records) {
    os << r.combo.id << ',' << r.combo.equation << ',' << r.combo.encoding_dim << ','
       << koopman::to_string(r.combo.form) << ',' << losses::to_string(r.combo.accuracy)
       << ',' << losses::to_string(r.combo.embedding) << ','
       << losses::to_string(r.combo.op) << ',' << losses::to_string(r.combo.auxiliary)
       << ',' << format_double(r.combo.lambda) << ',' << rec.epoch << ','
       << format_double(rec.test_error) << ',' << format_double(rec.wall_seconds)
       << ',' << (r.diverged ? "diverged" : "ok") << '\n';
  }
}

// Parses whole runs out of a results/journal file; tolerates a truncated
// trailing line so an interrupted search can still resume.
std::vector<RunResult> parse_results(std::istream& is, bool tolerant) {
  std::string line;
  if (!std::getline(is, line) || line != kResultsHeader) {
    if (!tolerant)
      throw std::runtime_error("results csv: missing or unexpected header");
    return {};
  }
  std::map<int, RunResult> by_id;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 13) {
      if (tolerant) continue;
      throw std::runtime_error("results csv: malformed row '" + line + "'");
    }
    try {
      Combination c;
      c.id = std::stoi(f[0]);
      c.equation = f[1];
      c.encoding_dim = std::stoi(f[2]);
      c.form = koopman::operator_kind_from_string(f[3]);
      c.accuracy = losses::accuracy_from_string(f[4]);
      c.embedding = losses::embedding_from_string(f[5]);
      c.op = losses::operator_from_string(f[6]);
      c.auxiliary = losses::auxiliary_from_string(f[7]);
      c.lambda = parse_double(f[8]);
      training::EvalRecord rec;
      rec.epoch = std::stoi(f[9]);
      rec.test_error = parse_double(f[10]);
      rec.wall_seconds = parse_double(f[11]);
      const bool diverged = f[12] == "diverged";
      if (!diverged && f[12] != "ok")
        throw std::runtime_error("results csv: bad status '" + f[12] + "'");
      auto& r = by_id.try_emplace(c.id).first->second;
      r.combo = c;
      r.diverged = r.diverged || diverged;
      r.history.diverged = r.diverged;
      r.history.records.push_back(rec);
      r.wall_seconds = std::max(r.wall_seconds, rec.wall_seconds);
    } catch (const std::exception&) {
      if (!tolerant) throw;
    }
  }
  std::vector<RunResult> out;
  out.reserve(by_id.size());
  for (auto& [id, r] : by_id) out.push_back(std::move(r));
  return out;
}

std::size_t expected_eval_rows(const training::TrainConfig& cfg) {
  if (cfg.epochs == 0) return 0;
  std::size_t n = static_cast<std::size_t>(cfg.epochs / cfg.eval_interval);
  if (cfg.epochs % cfg.eval_interval != 0) ++n;
  return n;
}

}  // namespace

void write_results_csv(const std::string& path, const std::vector<RunResult>& results) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << kResultsHeader << '\n';
  for (const auto& r : results) append_result_rows(os, r);
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<RunResult> read_results_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return parse_results(is, false);
}

SearchOutcome run_search(const SearchSpace& space, const dynamics::Dataset& train,
                         const dynamics::Dataset& test, int workers,
                         std::uint64_t seed, const std::string& out_dir, bool resume) {
  if (workers < 1) throw std::invalid_argument("run_search: workers must be positive");
  const auto combos = enumerate(space);
  std::filesystem::create_directories(out_dir);
  const std::string journal_path = out_dir + "/runs.csv";
  const std::string results_path = out_dir + "/results.csv";

  SearchOutcome outcome;
  const std::size_t rows_per_run = expected_eval_rows(space.train_template);
  std::map<int, RunResult> completed;
  if (resume && std::filesystem::exists(journal_path)) {
    std::ifstream is(journal_path);
    for (auto& r : parse_results(is, true)) {
      if (r.history.records.size() == rows_per_run) completed.emplace(r.combo.id, r);
    }
  }

  std::vector<Combination> todo;
  for (const auto& c : combos)
    if (!completed.count(c.id)) todo.push_back(c);
  outcome.n_resumed = completed.size();

  std::ofstream journal;
  if (resume && !completed.empty()) {
    // Rewrite the journal with only the complete runs, then append.
    std::ofstream fresh(journal_path, std::ios::trunc);
    fresh << kResultsHeader << '\n';
    for (const auto& [id, r] : completed) append_result_rows(fresh, r);
    fresh.close();
    journal.open(journal_path, std::ios::app);
  } else {
    journal.open(journal_path, std::ios::trunc);
    journal << kResultsHeader << '\n';
  }
  if (!journal) throw std::runtime_error("cannot open '" + journal_path + "' for writing");

  // Worker-level parallelism owns the cores; keep the kernels serial while
  // more than one worker is active (results do not depend on either knob).
  const int previous_kernel_threads = kernels::max_threads();
  if (workers > 1) kernels::set_max_threads(1);

  std::mutex sink_mutex;
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::map<int, RunResult> trained;

  const auto worker_loop = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) break;
      try {
        RunResult r = train_combination(space, todo[i], train, test, seed);
        std::lock_guard<std::mutex> lock(sink_mutex);
        append_result_rows(journal, r);
        journal.flush();
        trained.emplace(r.combo.id, std::move(r));
      } catch (...) {
        std::lock_guard<std::mutex> lock(sink_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(todo.size());
      }
    }
  };

  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker_loop);
  worker_loop();
  for (auto& t : pool) t.join();
  if (workers > 1) kernels::set_max_threads(previous_kernel_threads);
  if (first_error) std::rethrow_exception(first_error);

  outcome.n_trained = trained.size();
  for (auto& [id, r] : completed) outcome.results.push_back(std::move(r));
  for (auto& [id, r] : trained) outcome.results.push_back(std::move(r));
  std::sort(outcome.results.begin(), outcome.results.end(),
            [](const RunResult& a, const RunResult& b) { return a.combo.id < b.combo.id; });
  write_results_csv(results_path, outcome.results);
  return outcome;
}

std::string to_string(OptionDimension d) {
  switch (d) {
    case OptionDimension::encoding_dim: return "encoding_dim";
    case OptionDimension::accuracy: return "accuracy";
    case OptionDimension::embedding: return "embedding";
    case OptionDimension::op: return "operator";
    case OptionDimension::auxiliary: return "auxiliary";
    case OptionDimension::form: return "form";
  }
  return "?";
}

OptionDimension option_dimension_from_string(const std::string& s) {
  if (s == "encoding_dim") return OptionDimension::encoding_dim;
  if (s == "accuracy") return OptionDimension::accuracy;
  if (s == "embedding") return OptionDimension::embedding;
  if (s == "operator") return OptionDimension::op;
  if (s == "auxiliary") return OptionDimension::auxiliary;
  if (s == "form") return OptionDimension::form;
  throw std::invalid_argument("unknown option dimension '" + s + "'");
}

std::string level_of(const Combination& c, OptionDimension d) {
  switch (d) {
    case OptionDimension::encoding_dim: return std::to_string(c.encoding_dim);
    case OptionDimension::accuracy: return losses::to_string(c.accuracy);
    case OptionDimension::embedding: return losses::to_string(c.embedding);
    case OptionDimension::op: return losses::to_string(c.op);
    case OptionDimension::auxiliary: return losses::to_string(c.auxiliary);
    case OptionDimension::form: return koopman::to_string(c.form);
  }
  return "?";
}

std::vector<MeanEffectCell> mean_effect(const std::vector<RunResult>& results,
                                        OptionDimension dim) {
  if (results.empty()) throw std::invalid_argument("mean_effect: no results");
  // Levels in order of first appearance (results arrive sorted by id).
  std::vector<std::string> levels;
  for (const auto& r : results) {
    const auto lv = level_of(r.combo, dim);
    if (std::find(levels.begin(), levels.end(), lv) == levels.end())
      levels.push_back(lv);
  }
  std::vector<int> epochs;
  for (const auto& rec : results.front().history.records) epochs.push_back(rec.epoch);

  std::vector<MeanEffectCell> cells;
  for (const auto& lv : levels) {
    for (int epoch : epochs) {
      MeanEffectCell cell;
      cell.level = lv;
      cell.epoch = epoch;
      double sum = 0.0;
      for (const auto& r : results) {
        if (level_of(r.combo, dim) != lv) continue;
        const double err = r.error_at(epoch);
        if (std::isfinite(err)) {
          sum += err;
          ++cell.count;
        } else {
          ++cell.excluded;
        }
      }
      cell.mean_error = cell.count ? sum / static_cast<double>(cell.count) : kInf;
      cells.push_back(cell);
    }
  }
  return cells;
}

std::vector<TopEntry> top_k(const std::vector<RunResult>& results, int epoch,
                            std::size_t k) {
  std::vector<TopEntry> all;
  all.reserve(results.size());
  for (const auto& r : results) all.push_back({r.error_at(epoch), r.combo});
  std::sort(all.begin(), all.end(), [](const TopEntry& a, const TopEntry& b) {
    if (a.error != b.error) return a.error < b.error;  // inf ranks last
    return a.combo.id < b.combo.id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

std::vector<RelativeTimeCell> mean_relative_times(const std::vector<RunResult>& results) {
  if (results.empty()) throw std::invalid_argument("mean_relative_times: no results");
  double overall = 0.0;
  for (const auto& r : results) overall += r.wall_seconds;
  overall /= static_cast<double>(results.size());
  if (overall <= 0.0)
    throw std::invalid_argument("mean_relative_times: no timing information");

  std::vector<RelativeTimeCell> cells;
  for (OptionDimension dim :
       {OptionDimension::accuracy, OptionDimension::embedding, OptionDimension::op,
        OptionDimension::auxiliary, OptionDimension::form,
        OptionDimension::encoding_dim}) {
    std::vector<std::string> levels;
    for (const auto& r : results) {
      const auto lv = level_of(r.combo, dim);
      if (std::find(levels.begin(), levels.end(), lv) == levels.end())
        levels.push_back(lv);
    }
    if (levels.size() < 2) continue;  // degenerate dimension carries no signal
    for (const auto& lv : levels) {
      double sum = 0.0;
      std::size_t count = 0;
      for (const auto& r : results) {
        if (level_of(r.combo, dim) != lv) continue;
        sum += r.wall_seconds;
        ++count;
      }
      cells.push_back({dim, lv, (sum / static_cast<double>(count)) / overall});
    }
  }
  return cells;
}

SearchSpace operator_study_space(const std::string& equation, int encoding_dim,
                                 const training::TrainConfig& train_template,
                                 const koopman::ModelOptions& model_options) {
  SearchSpace space;
  space.equation = equation;
  space.encoding_dims = {encoding_dim};
  space.accuracies = {losses::AccuracyTerm::full};
  space.embeddings = {losses::EmbeddingTerm::reconstruction};
  space.operators = {losses::OperatorTerm::none, losses::OperatorTerm::isometry,
                     losses::OperatorTerm::norm, losses::OperatorTerm::unitary,
                     losses::OperatorTerm::determinant};
  space.auxiliaries = {losses::AuxiliaryTerm::none};
  space.forms = {koopman::OperatorKind::dense, koopman::OperatorKind::tridiagonal,
                 koopman::OperatorKind::jordan};
  space.train_template = train_template;
  space.model_options = model_options;
  return space;
}

namespace {

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string format_error(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

void write_mean_effect_csv(const std::string& path,
                           const std::vector<MeanEffectCell>& cells,
                           OptionDimension dim) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << "dimension,level,epoch,mean_error,count,diverged_excluded\n";
  for (const auto& c : cells)
    os << to_string(dim) << ',' << c.level << ',' << c.epoch << ','
       << format_double(c.mean_error) << ',' << c.count << ',' << c.excluded << '\n';
}

void write_top_k_csv(const std::string& path, const std::vector<TopEntry>& entries) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << "rank,error,combo_id,equation,encoding_dim,form,accuracy,embedding,operator,"
        "auxiliary,lambda\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    os << (i + 1) << ',' << format_double(e.error) << ',' << e.combo.id << ','
       << e.combo.equation << ',' << e.combo.encoding_dim << ','
       << koopman::to_string(e.combo.form) << ',' << losses::to_string(e.combo.accuracy)
       << ',' << losses::to_string(e.combo.embedding) << ','
       << losses::to_string(e.combo.op) << ',' << losses::to_string(e.combo.auxiliary)
       << ',' << format_double(e.combo.lambda) << '\n';
  }
}

void write_relative_times_csv(const std::string& path,
                              const std::vector<RelativeTimeCell>& cells) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << "dimension,level,mean_relative_time\n";
  for (const auto& c : cells)
    os << to_string(c.dimension) << ',' << c.level << ',' << format_double(c.relative)
       << '\n';
}

std::string format_mean_effect_table(const std::vector<MeanEffectCell>& cells,
                                     OptionDimension dim) {
  std::ostringstream os;
  os << pad(to_string(dim), 14) << pad("epoch", 8) << pad("mean_error", 14)
     << pad("count", 8) << "excluded\n";
  for (const auto& c : cells)
    os << pad(c.level, 14) << pad(std::to_string(c.epoch), 8)
       << pad(format_error(c.mean_error), 14) << pad(std::to_string(c.count), 8)
       << c.excluded << '\n';
  return os.str();
}

std::string format_top_k_table(const std::vector<TopEntry>& entries) {
  std::ostringstream os;
  os << pad("error", 12) << pad("accuracy", 12) << pad("embedding", 16)
     << pad("operator", 13) << pad("auxiliary", 14) << pad("form", 13)
     << "dimension\n";
  for (const auto& e : entries)
    os << pad(format_error(e.error), 12) << pad(losses::to_string(e.combo.accuracy), 12)
       << pad(losses::to_string(e.combo.embedding), 16)
       << pad(losses::to_string(e.combo.op), 13)
       << pad(losses::to_string(e.combo.auxiliary), 14)
       << pad(koopman::to_string(e.combo.form), 13) << e.combo.encoding_dim << '\n';
  return os.str();
}

std::string format_relative_times_table(const std::vector<RelativeTimeCell>& cells) {
  std::ostringstream os;
  os << pad("option", 22) << "mean_time\n";
  for (const auto& c : cells)
    os << pad(c.level + " (" + to_string(c.dimension) + ")", 22)
       << format_error(c.relative) << '\n';
  return os.str();
}

std::string format_operator_study_table(const std::vector<RunResult>& results,
                                        int epoch) {
  std::ostringstream os;
  os << pad("error", 14) << pad("operator form", 16) << "operator loss\n";
  for (const auto& r : results)
    os << pad(format_error(r.error_at(epoch)), 14)
       << pad(koopman::to_string(r.combo.form), 16) << losses::to_string(r.combo.op)
       << '\n';
  return os.str();
}

void write_operator_study_csv(const std::string& path,
                              const std::vector<RunResult>& results, int epoch) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << "error,operator_form,operator_loss\n";
  for (const auto& r : results)
    os << format_double(r.error_at(epoch)) << ',' << koopman::to_string(r.combo.form)
       << ',' << losses::to_string(r.combo.op) << '\n';
}

}  // namespace kae::gridsearch
