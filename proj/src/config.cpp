#include "kae/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace kae::config {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct RawConfig {
  // section -> key -> value, plus declaration order for error reporting
  std::map<std::string, std::map<std::string, std::string>> sections;
};

RawConfig parse_raw(const std::string& text) {
  RawConfig raw;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("", "line " + std::to_string(lineno) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("", "line " + std::to_string(lineno) + ": empty section name");
      raw.sections[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("", "line " + std::to_string(lineno) + ": expected key = value");
    if (section.empty())
      throw ConfigError("", "line " + std::to_string(lineno) + ": key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("", "line " + std::to_string(lineno) + ": empty key");
    if (!raw.sections[section].emplace(key, value).second)
      throw ConfigError(section + "." + key, "duplicate key");
  }
  return raw;
}

class Section {
 public:
  Section(const RawConfig& raw, std::string name) : name_(std::move(name)) {
    auto it = raw.sections.find(name_);
    if (it != raw.sections.end()) entries_ = &it->second;
  }

  bool present() const { return entries_ != nullptr; }

  std::optional<std::string> get(const std::string& key) {
    consumed_.push_back(key);
    if (!entries_) return std::nullopt;
    auto it = entries_->find(key);
    if (it == entries_->end()) return std::nullopt;
    return it->second;
  }

  std::string field(const std::string& key) const { return name_ + "." + key; }

  int get_int(const std::string& key, int fallback) {
    auto v = get(key);
    if (!v) return fallback;
    try {
      std::size_t pos = 0;
      const int n = std::stoi(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("");
      return n;
    } catch (...) {
      throw ConfigError(field(key), "expected an integer, got '" + *v + "'");
    }
  }

  std::int64_t get_i64(const std::string& key, std::int64_t fallback) {
    auto v = get(key);
    if (!v) return fallback;
    try {
      std::size_t pos = 0;
      const long long n = std::stoll(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("");
      return n;
    } catch (...) {
      throw ConfigError(field(key), "expected an integer, got '" + *v + "'");
    }
  }

  double get_double(const std::string& key, double fallback) {
    auto v = get(key);
    if (!v) return fallback;
    try {
      std::size_t pos = 0;
      const double x = std::stod(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("");
      return x;
    } catch (...) {
      throw ConfigError(field(key), "expected a number, got '" + *v + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError(field(key), "expected true/false, got '" + *v + "'");
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    auto v = get(key);
    return v ? *v : fallback;
  }

  std::vector<std::string> get_list(const std::string& key) {
    auto v = get(key);
    std::vector<std::string> out;
    if (!v) return out;
    std::istringstream is(*v);
    std::string item;
    while (std::getline(is, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  // Rejects keys nobody asked about.
  void finish() const {
    if (!entries_) return;
    for (const auto& [key, value] : *entries_)
      if (std::find(consumed_.begin(), consumed_.end(), key) == consumed_.end())
        throw ConfigError(field(key), "unknown key");
  }

 private:
  std::string name_;
  const std::map<std::string, std::string>* entries_ = nullptr;
  std::vector<std::string> consumed_;
};

template <class T>
T parse_enum(const std::string& field, const std::string& value,
             T (*from_string)(const std::string&)) {
  try {
    return from_string(value);
  } catch (const std::exception& e) {
    throw ConfigError(field, e.what());
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  const RawConfig raw = parse_raw(text);
  static const std::vector<std::string> known = {"data", "model", "loss",
                                                 "train", "search", "study"};
  for (const auto& [name, entries] : raw.sections)
    if (std::find(known.begin(), known.end(), name) == known.end())
      throw ConfigError(name, "unknown section");

  ExperimentConfig cfg;

  Section data(raw, "data");
  cfg.data.equation = data.get_string("equation", cfg.data.equation);
  cfg.data.n_train = data.get_int("n_train", cfg.data.n_train);
  cfg.data.n_test = data.get_int("n_test", cfg.data.n_test);
  cfg.data.n_steps = data.get_int("n_steps", cfg.data.n_steps);
  cfg.data.dt = data.get_double("dt", cfg.data.dt);
  cfg.data.seed = data.get_i64("seed", cfg.data.seed);
  cfg.data.options.grid_size = data.get_int("grid_size", cfg.data.options.grid_size);
  cfg.data.options.fourier_modes =
      data.get_int("fourier_modes", cfg.data.options.fourier_modes);
  cfg.data.options.classical_lorenz =
      data.get_bool("classical_lorenz", cfg.data.options.classical_lorenz);
  cfg.data.options.stable_fluid =
      data.get_bool("stable_fluid", cfg.data.options.stable_fluid);
  cfg.data.options.shm_range = data.get_double("shm_range", cfg.data.options.shm_range);
  cfg.data.options.pendulum_theta_range =
      data.get_double("pendulum_theta_range", cfg.data.options.pendulum_theta_range);
  cfg.data.options.lorenz_range =
      data.get_double("lorenz_range", cfg.data.options.lorenz_range);
  cfg.data.options.fluid_range =
      data.get_double("fluid_range", cfg.data.options.fluid_range);
  data.finish();
  if (std::find(dynamics::equation_names().begin(), dynamics::equation_names().end(),
                cfg.data.equation) == dynamics::equation_names().end())
    throw ConfigError("data.equation", "unknown equation '" + cfg.data.equation + "'");
  if (cfg.data.dt <= 0.0) throw ConfigError("data.dt", "must be positive");
  if (cfg.data.n_train < 1) throw ConfigError("data.n_train", "must be positive");
  if (cfg.data.n_test < 1) throw ConfigError("data.n_test", "must be positive");
  if (cfg.data.n_steps < 1) throw ConfigError("data.n_steps", "must be positive");
  if (cfg.data.options.grid_size < 8) throw ConfigError("data.grid_size", "must be >= 8");
  if (cfg.data.options.fourier_modes < 1)
    throw ConfigError("data.fourier_modes", "must be positive");

  Section model(raw, "model");
  cfg.model.encoding_dim = model.get_int("encoding_dim", cfg.model.encoding_dim);
  const std::string form = model.get_string("form", "tridiagonal");
  cfg.model.form =
      parse_enum(model.field("form"), form, koopman::operator_kind_from_string);
  const std::string act = model.get_string("activation", "tanh");
  if (act == "tanh") {
    cfg.model.options.activation = koopman::Activation::tanh;
  } else if (act == "relu") {
    cfg.model.options.activation = koopman::Activation::relu;
  } else {
    throw ConfigError("model.activation", "expected tanh or relu, got '" + act + "'");
  }
  for (const auto& h : model.get_list("hidden")) {
    try {
      cfg.model.options.hidden.push_back(std::stoi(h));
    } catch (...) {
      throw ConfigError("model.hidden", "expected a width list, got '" + h + "'");
    }
    if (cfg.model.options.hidden.back() < 1)
      throw ConfigError("model.hidden", "widths must be positive");
  }
  cfg.model.seed = static_cast<std::uint64_t>(model.get_i64("seed", 0));
  model.finish();
  if (cfg.model.encoding_dim < 1)
    throw ConfigError("model.encoding_dim", "must be positive");

  Section loss(raw, "loss");
  cfg.loss.accuracy = parse_enum(loss.field("accuracy"),
                                 loss.get_string("accuracy", "full"),
                                 losses::accuracy_from_string);
  cfg.loss.embedding = parse_enum(loss.field("embedding"),
                                  loss.get_string("embedding", "none"),
                                  losses::embedding_from_string);
  cfg.loss.op = parse_enum(loss.field("operator"), loss.get_string("operator", "none"),
                           losses::operator_from_string);
  cfg.loss.auxiliary = parse_enum(loss.field("auxiliary"),
                                  loss.get_string("auxiliary", "none"),
                                  losses::auxiliary_from_string);
  cfg.loss.lambda = loss.get_double("lambda", cfg.loss.lambda);
  cfg.loss.weight_accuracy = loss.get_double("weight_accuracy", 1.0);
  cfg.loss.weight_embedding = loss.get_double("weight_embedding", 1.0);
  cfg.loss.weight_operator = loss.get_double("weight_operator", 1.0);
  cfg.loss.weight_auxiliary = loss.get_double("weight_auxiliary", 1.0);
  cfg.loss.power_iterations = loss.get_int("power_iterations", 10);
  cfg.loss.isometry_samples = loss.get_int("isometry_samples", 64);
  cfg.loss.isometry_on_encoded = loss.get_bool("isometry_on_encoded", false);
  loss.finish();
  if (cfg.loss.lambda <= 0.0 || cfg.loss.lambda > 1.0)
    throw ConfigError("loss.lambda", "must lie in (0, 1]");

  Section train(raw, "train");
  cfg.train.epochs = train.get_int("epochs", cfg.train.epochs);
  cfg.train.batch_size = train.get_int("batch_size", cfg.train.batch_size);
  cfg.train.lr = train.get_double("lr", cfg.train.lr);
  const std::string clip = train.get_string("clip", "1.0");
  if (clip == "none") {
    cfg.train.clip.reset();
  } else {
    try {
      cfg.train.clip = std::stod(clip);
    } catch (...) {
      throw ConfigError("train.clip", "expected a number or 'none', got '" + clip + "'");
    }
  }
  cfg.train.eval_interval = train.get_int("eval_interval", cfg.train.eval_interval);
  cfg.train.seed = static_cast<std::uint64_t>(train.get_i64("seed", 0));
  train.finish();
  cfg.train.loss = cfg.loss;
  try {
    cfg.train.validate();
  } catch (const std::exception& e) {
    throw ConfigError("train", e.what());
  }

  Section search(raw, "search");
  cfg.has_search = search.present();
  for (const auto& d : search.get_list("encoding_dims")) {
    try {
      cfg.search.encoding_dims.push_back(std::stoi(d));
    } catch (...) {
      throw ConfigError("search.encoding_dims", "expected integers, got '" + d + "'");
    }
  }
  for (const auto& a : search.get_list("accuracies"))
    cfg.search.accuracies.push_back(
        parse_enum(search.field("accuracies"), a, losses::accuracy_from_string));
  for (const auto& e : search.get_list("embeddings"))
    cfg.search.embeddings.push_back(
        parse_enum(search.field("embeddings"), e, losses::embedding_from_string));
  for (const auto& o : search.get_list("operators"))
    cfg.search.operators.push_back(
        parse_enum(search.field("operators"), o, losses::operator_from_string));
  for (const auto& a : search.get_list("auxiliaries"))
    cfg.search.auxiliaries.push_back(
        parse_enum(search.field("auxiliaries"), a, losses::auxiliary_from_string));
  for (const auto& f : search.get_list("forms"))
    cfg.search.forms.push_back(
        parse_enum(search.field("forms"), f, koopman::operator_kind_from_string));
  for (const auto& l : search.get_list("lambdas")) {
    try {
      cfg.search.lambdas.push_back(std::stod(l));
    } catch (...) {
      throw ConfigError("search.lambdas", "expected numbers, got '" + l + "'");
    }
  }
  for (const auto& x : search.get_list("exclude")) {
    const auto colon = x.find(':');
    if (colon == std::string::npos)
      throw ConfigError("search.exclude", "expected form:operator pairs, got '" + x + "'");
    cfg.search.exclusions.emplace_back(
        parse_enum(search.field("exclude"), trim(x.substr(0, colon)),
                   koopman::operator_kind_from_string),
        parse_enum(search.field("exclude"), trim(x.substr(colon + 1)),
                   losses::operator_from_string));
  }
  cfg.search.workers = search.get_int("workers", 1);
  search.finish();
  if (cfg.search.workers < 1) throw ConfigError("search.workers", "must be positive");

  Section study(raw, "study");
  if (auto v = study.get("epochs")) {
    try {
      cfg.study.epochs = std::stoi(*v);
    } catch (...) {
      throw ConfigError("study.epochs", "expected an integer, got '" + *v + "'");
    }
    if (*cfg.study.epochs < 1) throw ConfigError("study.epochs", "must be positive");
  }
  study.finish();

  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("", "cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse(buf.str());
}

gridsearch::SearchSpace ExperimentConfig::search_space() const {
  if (!has_search) throw ConfigError("search", "config has no [search] section");
  gridsearch::SearchSpace space;
  space.equation = data.equation;
  space.encoding_dims = search.encoding_dims.empty()
                            ? std::vector<int>{model.encoding_dim}
                            : search.encoding_dims;
  space.accuracies = search.accuracies.empty()
                         ? std::vector<losses::AccuracyTerm>{loss.accuracy}
                         : search.accuracies;
  space.embeddings = search.embeddings.empty()
                         ? std::vector<losses::EmbeddingTerm>{loss.embedding}
                         : search.embeddings;
  space.operators = search.operators.empty()
                        ? std::vector<losses::OperatorTerm>{loss.op}
                        : search.operators;
  space.auxiliaries = search.auxiliaries.empty()
                          ? std::vector<losses::AuxiliaryTerm>{loss.auxiliary}
                          : search.auxiliaries;
  space.forms = search.forms.empty() ? std::vector<koopman::OperatorKind>{model.form}
                                     : search.forms;
  if (!search.lambdas.empty()) space.lambdas = search.lambdas;
  space.exclusions = search.exclusions;
  space.train_template = train;
  space.model_options = model.options;
  return space;
}

}  // namespace kae::config
