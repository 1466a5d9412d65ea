#include "kae/koopman.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace kae::koopman {

std::string to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::dense: return "dense";
    case OperatorKind::tridiagonal: return "tridiagonal";
    case OperatorKind::jordan: return "jordan";
  }
  return "?";
}

OperatorKind operator_kind_from_string(const std::string& s) {
  if (s == "dense") return OperatorKind::dense;
  if (s == "tridiagonal") return OperatorKind::tridiagonal;
  if (s == "jordan") return OperatorKind::jordan;
  throw std::invalid_argument("unknown operator form '" + s + "'");
}

TensorPtr Mlp::forward(Tape& tape, const TensorPtr& x) const {
  if (x->rank() != 2 || x->shape[1] != static_cast<std::size_t>(config.widths.front()))
    throw std::invalid_argument("Mlp::forward: input " + Tensor::shape_str(x->shape) +
                                " does not match width " +
                                std::to_string(config.widths.front()));
  TensorPtr h = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    h = tape.add_rowvec(tape.matmul(h, weights[l], false, true), biases[l]);
    if (l + 1 < weights.size())
      h = config.activation == Activation::tanh ? tape.tanh(h) : tape.relu(h);
  }
  return h;
}

std::vector<TensorPtr> Mlp::params() const {
  std::vector<TensorPtr> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(weights[l]);
    out.push_back(biases[l]);
  }
  return out;
}

Mlp Mlp::init(const MlpConfig& cfg, Rng& rng) {
  if (cfg.widths.size() < 3)
    throw std::invalid_argument("Mlp: need at least one hidden layer");
  for (int w : cfg.widths)
    if (w <= 0) throw std::invalid_argument("Mlp: widths must be positive");
  Mlp mlp;
  mlp.config = cfg;
  for (std::size_t l = 0; l + 1 < cfg.widths.size(); ++l) {
    const int fan_in = cfg.widths[l];
    const int fan_out = cfg.widths[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    mlp.weights.push_back(Tensor::uniform(
        {static_cast<std::size_t>(fan_out), static_cast<std::size_t>(fan_in)}, rng,
        -bound, bound, true));
    mlp.biases.push_back(Tensor::uniform({static_cast<std::size_t>(fan_out)}, rng,
                                         -bound, bound, true));
  }
  return mlp;
}

TensorPtr KoopmanOperator::matrix(Tape& tape) const {
  switch (kind) {
    case OperatorKind::dense: return dense;
    case OperatorKind::tridiagonal: return tape.tridiagonal_matrix(diag, lower, upper);
    case OperatorKind::jordan: return tape.jordan_matrix(block_a, block_b);
  }
  throw std::logic_error("KoopmanOperator: bad kind");
}

std::vector<TensorPtr> KoopmanOperator::params() const {
  switch (kind) {
    case OperatorKind::dense: return {dense};
    case OperatorKind::tridiagonal: return {diag, lower, upper};
    case OperatorKind::jordan: return {block_a, block_b};
  }
  throw std::logic_error("KoopmanOperator: bad kind");
}

std::size_t KoopmanOperator::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params()) n += p->size();
  return n;
}

std::vector<std::complex<double>> KoopmanOperator::eigenvalues() const {
  if (kind != OperatorKind::jordan)
    throw std::logic_error("eigenvalues: only the jordan form has a closed-form spectrum");
  std::vector<std::complex<double>> out;
  out.reserve(static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < block_a->size(); ++i) {
    out.emplace_back(block_a->values[i], block_b->values[i]);
    out.emplace_back(block_a->values[i], -block_b->values[i]);
  }
  return out;
}

KoopmanOperator KoopmanOperator::init_near_identity(OperatorKind kind, int dim,
                                                    Rng& rng) {
  if (dim <= 0) throw std::invalid_argument("operator dim must be positive");
  KoopmanOperator op;
  op.kind = kind;
  op.dim = dim;
  const std::size_t d = static_cast<std::size_t>(dim);
  switch (kind) {
    case OperatorKind::dense: {
      op.dense = Tensor::zeros({d, d}, true);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          op.dense->values[i * d + j] = (i == j ? 1.0 : 0.0) + 0.01 * rng.normal();
      break;
    }
    case OperatorKind::tridiagonal: {
      if (dim < 2)
        throw std::invalid_argument("tridiagonal form requires encoding dimension >= 2");
      op.diag = Tensor::zeros({d}, true);
      op.lower = Tensor::zeros({d - 1}, true);
      op.upper = Tensor::zeros({d - 1}, true);
      for (std::size_t i = 0; i < d; ++i) op.diag->values[i] = 1.0 + 0.01 * rng.normal();
      for (std::size_t i = 0; i + 1 < d; ++i) {
        op.upper->values[i] = 0.01 * rng.normal();
        op.lower->values[i] = 0.01 * rng.normal();
      }
      break;
    }
    case OperatorKind::jordan: {
      if (dim % 2 != 0)
        throw std::invalid_argument("jordan form requires an even encoding dimension");
      const std::size_t nb = d / 2;
      op.block_a = Tensor::zeros({nb}, true);
      op.block_b = Tensor::zeros({nb}, true);
      for (std::size_t i = 0; i < nb; ++i) {
        const double phi = rng.uniform(-0.05, 0.05);
        op.block_a->values[i] = std::cos(phi);
        op.block_b->values[i] = std::sin(phi);
      }
      break;
    }
  }
  return op;
}

TensorPtr KoopmanModel::encode(Tape& tape, const TensorPtr& states) const {
  return encoder.forward(tape, states);
}

TensorPtr KoopmanModel::decode(Tape& tape, const TensorPtr& latents) const {
  return decoder.forward(tape, latents);
}

std::vector<TensorPtr> KoopmanModel::params() const {
  std::vector<TensorPtr> out = encoder.params();
  for (auto& p : op.params()) out.push_back(p);
  for (auto& p : decoder.params()) out.push_back(p);
  return out;
}

KoopmanModel init_model(int state_dim, int encoding_dim, OperatorKind kind,
                        std::uint64_t seed, const ModelOptions& opts) {
  if (state_dim <= 0 || encoding_dim <= 0)
    throw std::invalid_argument("init_model: dimensions must be positive");
  std::vector<int> hidden = opts.hidden;
  if (hidden.empty()) {
    const int w = std::max(64, 2 * encoding_dim);
    hidden = {w, w};
  }
  KoopmanModel model;
  model.state_dim = state_dim;
  model.encoding_dim = encoding_dim;

  Rng rng(Rng::mix(seed, 0));
  MlpConfig enc_cfg;
  enc_cfg.widths.push_back(state_dim);
  enc_cfg.widths.insert(enc_cfg.widths.end(), hidden.begin(), hidden.end());
  enc_cfg.widths.push_back(encoding_dim);
  enc_cfg.activation = opts.activation;
  model.encoder = Mlp::init(enc_cfg, rng);

  model.op = KoopmanOperator::init_near_identity(kind, encoding_dim, rng);

  MlpConfig dec_cfg;
  dec_cfg.widths.push_back(encoding_dim);
  dec_cfg.widths.insert(dec_cfg.widths.end(), hidden.rbegin(), hidden.rend());
  dec_cfg.widths.push_back(state_dim);
  dec_cfg.activation = opts.activation;
  model.decoder = Mlp::init(dec_cfg, rng);
  return model;
}

RolloutResult rollout(Tape& tape, const KoopmanModel& model, const TensorPtr& s0,
                      std::size_t n) {
  if (n < 1) throw std::invalid_argument("rollout: need at least one step");
  RolloutResult out;
  out.e0 = model.encode(tape, s0);
  out.operator_matrix = model.op.matrix(tape);
  out.latents.reserve(n);
  out.preds.reserve(n);
  TensorPtr e = out.e0;
  for (std::size_t i = 1; i <= n; ++i) {
    // Row-convention: e_{i} = e_{i-1} K^T applies K to each latent row.
    e = tape.matmul(e, out.operator_matrix, false, true);
    if (!e->all_finite()) throw RolloutDivergence(i);
    out.latents.push_back(e);
    out.preds.push_back(model.decode(tape, e));
  }
  return out;
}

namespace {

constexpr char kModelMagic[8] = {'K', 'A', 'E', 'M', 'O', 'D', 'L', '1'};

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

void write_tensor(std::ostream& os, const TensorPtr& t) {
  write_pod(os, static_cast<std::uint32_t>(t->shape.size()));
  for (std::size_t d : t->shape) write_pod(os, static_cast<std::uint64_t>(d));
  os.write(reinterpret_cast<const char*>(t->values.data()),
           static_cast<std::streamsize>(t->values.size() * sizeof(double)));
}

TensorPtr read_tensor(std::istream& is) {
  const auto rank = read_pod<std::uint32_t>(is);
  std::vector<std::size_t> shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = read_pod<std::uint64_t>(is);
    n *= d;
  }
  std::vector<double> values(n);
  is.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  return Tensor::make(std::move(shape), std::move(values), true);
}

void write_mlp(std::ostream& os, const Mlp& mlp) {
  write_pod(os, static_cast<std::uint32_t>(mlp.config.widths.size()));
  for (int w : mlp.config.widths) write_pod(os, static_cast<std::int32_t>(w));
  write_pod(os, static_cast<std::uint8_t>(mlp.config.activation));
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    write_tensor(os, mlp.weights[l]);
    write_tensor(os, mlp.biases[l]);
  }
}

Mlp read_mlp(std::istream& is) {
  Mlp mlp;
  const auto nw = read_pod<std::uint32_t>(is);
  mlp.config.widths.resize(nw);
  for (auto& w : mlp.config.widths) w = read_pod<std::int32_t>(is);
  mlp.config.activation = static_cast<Activation>(read_pod<std::uint8_t>(is));
  for (std::size_t l = 0; l + 1 < nw; ++l) {
    mlp.weights.push_back(read_tensor(is));
    mlp.biases.push_back(read_tensor(is));
  }
  return mlp;
}

}  // namespace

void save_model(const KoopmanModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_model: cannot open '" + path + "'");
  os.write(kModelMagic, sizeof(kModelMagic));
  write_pod(os, static_cast<std::int32_t>(model.state_dim));
  write_pod(os, static_cast<std::int32_t>(model.encoding_dim));
  write_pod(os, static_cast<std::uint8_t>(model.op.kind));
  write_mlp(os, model.encoder);
  for (const auto& p : model.op.params()) write_tensor(os, p);
  write_mlp(os, model.decoder);
  if (!os) throw std::runtime_error("save_model: write failed for '" + path + "'");
}

KoopmanModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_model: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kModelMagic, 8) != 0)
    throw std::runtime_error("load_model: '" + path + "' is not a model file");
  KoopmanModel model;
  model.state_dim = read_pod<std::int32_t>(is);
  model.encoding_dim = read_pod<std::int32_t>(is);
  model.op.kind = static_cast<OperatorKind>(read_pod<std::uint8_t>(is));
  model.op.dim = model.encoding_dim;
  model.encoder = read_mlp(is);
  switch (model.op.kind) {
    case OperatorKind::dense:
      model.op.dense = read_tensor(is);
      break;
    case OperatorKind::tridiagonal:
      model.op.diag = read_tensor(is);
      model.op.lower = read_tensor(is);
      model.op.upper = read_tensor(is);
      break;
    case OperatorKind::jordan:
      model.op.block_a = read_tensor(is);
      model.op.block_b = read_tensor(is);
      break;
  }
  model.decoder = read_mlp(is);
  if (!is) throw std::runtime_error("load_model: truncated file '" + path + "'");
  return model;
}

}  // namespace kae::koopman
