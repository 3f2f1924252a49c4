#include "dmml/surrogate.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace dmml {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

namespace {

constexpr double kAdaMaxFloor = 1e-12;
constexpr double kScaleFloor = 1e-12;

void leaky_relu_inplace(Matrix& z, double slope) {
  z = z.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

}  // namespace

std::string to_string(Label label) {
  switch (label) {
    case Label::simulation:
      return "simulation";
    case Label::observation:
      return "observation";
    case Label::mixed:
      return "mixed";
  }
  return "unknown";
}

Label label_from_string(const std::string& s) {
  if (s == "simulation") return Label::simulation;
  if (s == "observation") return Label::observation;
  if (s == "mixed") return Label::mixed;
  throw std::invalid_argument("unknown label '" + s + "'");
}

PairSet PairSet::select_columns(const std::vector<int>& columns) const {
  PairSet out;
  out.inputs.resize(inputs.rows(), static_cast<Eigen::Index>(columns.size()));
  out.targets.resize(targets.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const int c = columns[k];
    out.inputs.col(static_cast<Eigen::Index>(k)) = inputs.col(c);
    out.targets.col(static_cast<Eigen::Index>(k)) = targets.col(c);
    out.sample.push_back(sample[c]);
    out.step.push_back(step[c]);
    out.label.push_back(label[c]);
  }
  return out;
}

PairSet PairSet::select_samples(const std::vector<int>& ids) const {
  std::vector<int> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> columns;
  for (int j = 0; j < size(); ++j)
    if (std::binary_search(sorted.begin(), sorted.end(), sample[j])) columns.push_back(j);
  return select_columns(columns);
}

void TrainConfig::validate() const {
  if (hidden.empty()) throw std::invalid_argument("train config: at least one hidden layer is required");
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("train config: hidden widths must be positive");
  if (epochs < 0) throw std::invalid_argument("train config: epochs must be nonnegative");
  if (batch_size < 1) throw std::invalid_argument("train config: batch size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("train config: beta1, beta2 must lie in [0, 1)");
  if (!(slope >= 0.0 && slope < 1.0)) throw std::invalid_argument("train config: leaky slope must lie in [0, 1)");
  if (loss == LossKind::weighted && (w_observation > 0.0 || w_simulation > 0.0)) {
    if (!(w_observation > w_simulation && w_simulation > 0.0))
      throw std::invalid_argument("train config: weighted loss needs w_observation > w_simulation > 0");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"hidden", c.hidden},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"loss", c.loss == LossKind::weighted ? "weighted" : "standard"},
                     {"w_observation", c.w_observation},
                     {"w_simulation", c.w_simulation},
                     {"slope", c.slope},
                     {"normalize", c.normalize},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.hidden = j.value("hidden", d.hidden);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  const std::string loss = j.value("loss", std::string("standard"));
  if (loss != "standard" && loss != "weighted") throw std::invalid_argument("unknown loss '" + loss + "'");
  c.loss = loss == "weighted" ? LossKind::weighted : LossKind::standard;
  c.w_observation = j.value("w_observation", d.w_observation);
  c.w_simulation = j.value("w_simulation", d.w_simulation);
  c.slope = j.value("slope", d.slope);
  c.normalize = j.value("normalize", d.normalize);
  c.seed = j.value("seed", d.seed);
}

double InfluenceMask::density(std::size_t layer) const {
  const Matrix& m = layers.at(layer);
  return m.sum() / static_cast<double>(m.size());
}

InfluenceMask build_influence_mask(const Geometry& geometry, int radius, const std::vector<int>& hidden) {
  if (radius < 0) throw std::invalid_argument("influence mask: negative radius");
  const int nb = geometry.coarse.block_count();
  const int n = geometry.index.size();
  for (int h : hidden)
    if (h < nb)
      throw std::invalid_argument("influence mask: hidden width " + std::to_string(h) + " is below the block count " +
                                  std::to_string(nb));

  InfluenceMask mask;
  mask.radius = radius;
  std::vector<int> io(2 * n);
  for (int p = 0; p < n; ++p) io[p] = io[n + p] = geometry.index.dofs[p].block;
  mask.neuron_block.push_back(io);
  for (int h : hidden) {
    std::vector<int> blocks(h);
    for (int k = 0; k < h; ++k) blocks[k] = k % nb;
    mask.neuron_block.push_back(std::move(blocks));
  }
  mask.neuron_block.emplace_back(io.begin(), io.begin() + n);

  for (std::size_t l = 0; l + 1 < mask.neuron_block.size(); ++l) {
    const auto& from = mask.neuron_block[l];
    const auto& to = mask.neuron_block[l + 1];
    Matrix m(static_cast<Eigen::Index>(to.size()), static_cast<Eigen::Index>(from.size()));
    for (std::size_t r = 0; r < to.size(); ++r)
      for (std::size_t c = 0; c < from.size(); ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            geometry.coarse.distance(to[r], from[c]) <= radius ? 1.0 : 0.0;
    mask.layers.push_back(std::move(m));
  }
  return mask;
}

Mlp::Mlp(std::vector<int> dims, double slope) : dims_(std::move(dims)), slope_(slope) {
  if (dims_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output dimensions");
  for (int d : dims_)
    if (d < 1) throw std::invalid_argument("Mlp dimensions must be positive");
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    weights.push_back(Matrix::Zero(dims_[l + 1], dims_[l]));
    biases.push_back(Eigen::VectorXd::Zero(dims_[l + 1]));
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t count = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    count += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  return count;
}

void Mlp::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const bool output = l + 1 == weights.size();
    Matrix& w = weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      const double fan_in = masked() ? std::max(1.0, masks[l].row(r).sum()) : static_cast<double>(w.cols());
      const double stddev = std::sqrt((output ? 1.0 : 2.0) / fan_in);
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = stddev * normal(rng);
    }
    biases[l].setZero();
  }
  apply_masks();
}

void Mlp::set_masks(std::vector<Matrix> m) {
  if (!m.empty()) {
    if (m.size() != weights.size()) throw std::invalid_argument("mask layer count does not match the network");
    for (std::size_t l = 0; l < m.size(); ++l)
      if (m[l].rows() != weights[l].rows() || m[l].cols() != weights[l].cols())
        throw std::invalid_argument("mask shape does not match layer " + std::to_string(l));
  }
  masks = std::move(m);
  apply_masks();
}

void Mlp::apply_masks() {
  if (!masked()) return;
  for (std::size_t l = 0; l < weights.size(); ++l) weights[l].array() *= masks[l].array();
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  return forward(Matrix(x)).col(0);
}

Matrix Mlp::forward(const Matrix& x) const {
  if (x.rows() != input_dim())
    throw std::invalid_argument("Mlp::forward: input has " + std::to_string(x.rows()) + " rows, expected " +
                                std::to_string(input_dim()));
  Matrix a = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Matrix z = weights[l] * a;
    z.colwise() += biases[l];
    if (l + 1 < weights.size()) leaky_relu_inplace(z, slope_);
    a = std::move(z);
  }
  return a;
}

Eigen::VectorXd pair_weights(const std::vector<Label>& labels, const TrainConfig& config) {
  const double n = static_cast<double>(labels.size());
  if (labels.empty()) throw std::invalid_argument("loss: empty pair set");
  Eigen::VectorXd w(static_cast<Eigen::Index>(labels.size()));
  if (config.loss == LossKind::standard) {
    w.setConstant(1.0 / n);
    return w;
  }
  const double w_obs = config.w_observation > 0.0 ? config.w_observation : 2.0 / n;
  const double w_sim = config.w_simulation > 0.0 ? config.w_simulation : 1.0 / n;
  for (std::size_t j = 0; j < labels.size(); ++j)
    w[static_cast<Eigen::Index>(j)] = labels[j] == Label::observation ? w_obs : w_sim;
  return w;
}

double loss(const Mlp& net, const Matrix& inputs, const Matrix& targets, const Eigen::VectorXd& weights) {
  if (inputs.cols() == 0) throw std::invalid_argument("loss: empty pair set");
  const Matrix r = net.forward(inputs) - targets;
  return r.colwise().squaredNorm().dot(weights.transpose());
}

double loss(const Mlp& net, const PairSet& pairs, const TrainConfig& config) {
  return loss(net, pairs.inputs, pairs.targets, pair_weights(pairs.label, config));
}

namespace {

// Buffers reused across mini-batches.
struct Workspace {
  std::vector<Matrix> act;  // act[0] = input, act[l+1] = output of layer l
  std::vector<Matrix> delta;
};

double backward_into(const Mlp& net, const Matrix& inputs, const Matrix& targets, const Eigen::VectorXd& weights,
                     Workspace& ws, Gradient& grad) {
  const int layers = net.layer_count();
  ws.act.resize(layers + 1);
  ws.delta.resize(layers);
  ws.act[0] = inputs;
  for (int l = 0; l < layers; ++l) {
    Matrix& z = ws.act[l + 1];
    z.noalias() = net.weights[l] * ws.act[l];
    z.colwise() += net.biases[l];
    if (l + 1 < layers) leaky_relu_inplace(z, net.slope());
  }
  Matrix& top = ws.delta[layers - 1];
  top = ws.act[layers] - targets;
  const double value = top.colwise().squaredNorm().dot(weights.transpose());
  top = top * (2.0 * weights).asDiagonal();

  grad.weights.resize(layers);
  grad.biases.resize(layers);
  const double slope = net.slope();
  for (int l = layers - 1; l >= 0; --l) {
    grad.weights[l].noalias() = ws.delta[l] * ws.act[l].transpose();
    grad.biases[l] = ws.delta[l].rowwise().sum();
    if (net.masked()) grad.weights[l].array() *= net.masks[l].array();
    if (l > 0) {
      Matrix& below = ws.delta[l - 1];
      below.noalias() = net.weights[l].transpose() * ws.delta[l];
      below.array() *= ws.act[l].array().unaryExpr([slope](double a) { return a > 0.0 ? 1.0 : slope; });
    }
  }
  grad.loss = value;
  return value;
}

}  // namespace

Gradient backward(const Mlp& net, const Matrix& inputs, const Matrix& targets, const Eigen::VectorXd& weights) {
  if (inputs.cols() == 0) throw std::invalid_argument("backward: empty pair set");
  if (inputs.rows() != net.input_dim() || targets.rows() != net.output_dim())
    throw std::invalid_argument("backward: pair dimensions do not match the network");
  Workspace ws;
  Gradient grad;
  backward_into(net, inputs, targets, weights, ws, grad);
  return grad;
}

Gradient backward(const Mlp& net, const PairSet& pairs, const TrainConfig& config) {
  return backward(net, pairs.inputs, pairs.targets, pair_weights(pairs.label, config));
}

AdaMaxState::AdaMaxState(const Mlp& net) {
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    m_w.push_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
    u_w.push_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
    m_b.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    u_b.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
  }
}

namespace {

template <typename Param, typename Moment>
void adamax_update(Param& theta, Moment& m, Moment& u, const Param& g, double beta1, double beta2, double lr,
                   double bias_correction) {
  m = beta1 * m + (1.0 - beta1) * g;
  u = (beta2 * u).cwiseMax(g.cwiseAbs());
  theta.array() -= lr * (m.array() / bias_correction) / u.array().max(kAdaMaxFloor);
}

}  // namespace

void adamax_step(AdaMaxState& state, Mlp& net, const Gradient& grad, const TrainConfig& config, long t) {
  if (t < 1) throw std::invalid_argument("adamax_step: step counter must start at 1");
  const double bias_correction = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    adamax_update(net.weights[l], state.m_w[l], state.u_w[l], grad.weights[l], config.beta1, config.beta2,
                  config.learning_rate, bias_correction);
    adamax_update(net.biases[l], state.m_b[l], state.u_b[l], grad.biases[l], config.beta1, config.beta2,
                  config.learning_rate, bias_correction);
  }
  state.step = t;
  net.apply_masks();
}

Standardizer Standardizer::fit(const Matrix& data) {
  Standardizer s;
  const double n = static_cast<double>(data.cols());
  s.mean = data.rowwise().sum() / n;
  const Matrix centered = data.colwise() - s.mean;
  s.scale = (centered.rowwise().squaredNorm() / n).cwiseSqrt();
  for (Eigen::Index i = 0; i < s.scale.size(); ++i)
    if (!(s.scale[i] > kScaleFloor)) s.scale[i] = 1.0;
  return s;
}

Standardizer Standardizer::identity(int dim) {
  return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

Matrix Standardizer::apply(const Matrix& data) const {
  return (data.colwise() - mean).array().colwise() / scale.array();
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& v) const {
  return (v - mean).cwiseQuotient(scale);
}

Matrix Standardizer::invert(const Matrix& data) const {
  return (data.array().colwise() * scale.array()).matrix().colwise() + mean;
}

Eigen::VectorXd Standardizer::invert(const Eigen::VectorXd& v) const {
  return v.cwiseProduct(scale) + mean;
}

Eigen::VectorXd SurrogateModel::predict(const Eigen::VectorXd& x) const {
  return output.invert(net.forward(input.apply(x)));
}

Matrix SurrogateModel::predict(const Matrix& x) const {
  return output.invert(net.forward(input.apply(x)));
}

TrainResult train(const PairSet& pairs, const TrainConfig& config, const InfluenceMask* mask) {
  config.validate();
  if (pairs.size() == 0) throw std::invalid_argument("train: empty pair set");

  TrainResult result;
  SurrogateModel& model = result.model;
  model.config = config;
  if (config.normalize) {
    model.input = Standardizer::fit(pairs.inputs);
    model.output = Standardizer::fit(pairs.targets);
  } else {
    model.input = Standardizer::identity(pairs.input_dim());
    model.output = Standardizer::identity(pairs.output_dim());
  }

  std::vector<int> dims{pairs.input_dim()};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(pairs.output_dim());
  model.net = Mlp(dims, config.slope);
  if (mask) {
    model.net.set_masks(mask->layers);
    model.mask_radius = mask->radius;
  }
  model.net.initialize(config.seed);

  const Matrix x = model.input.apply(pairs.inputs);
  const Matrix y = model.output.apply(pairs.targets);
  const Eigen::VectorXd w = pair_weights(pairs.label, config);
  result.initial_loss = loss(model.net, x, y, w);

  const int n = pairs.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  AdaMaxState state(model.net);
  Workspace ws;
  Gradient grad;
  Matrix xb, yb;
  Eigen::VectorXd wb;
  long t = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (int start = 0; start < n; start += config.batch_size) {
      const int b = std::min(config.batch_size, n - start);
      xb.resize(x.rows(), b);
      yb.resize(y.rows(), b);
      wb.resize(b);
      const double rescale = static_cast<double>(n) / b;
      for (int k = 0; k < b; ++k) {
        const int j = order[start + k];
        xb.col(k) = x.col(j);
        yb.col(k) = y.col(j);
        wb[k] = w[j] * rescale;
      }
      const double batch_loss = backward_into(model.net, xb, yb, wb, ws, grad);
      if (!std::isfinite(batch_loss)) {
        std::ostringstream os;
        os << "training diverged: non-finite loss at epoch " << epoch << ", batch starting at " << start;
        throw std::runtime_error(os.str());
      }
      epoch_loss += batch_loss * b / n;
      adamax_step(state, model.net, grad, config, ++t);
    }
    result.history.push_back(epoch_loss);
  }
  return result;
}

Eigen::VectorXd rollout(const std::vector<const SurrogateModel*>& nets, const Eigen::VectorXd& initial,
                        const std::vector<Eigen::VectorXd>& loads) {
  if (nets.size() != loads.size()) throw std::invalid_argument("rollout: one load vector per network is required");
  Eigen::VectorXd state = initial;
  for (std::size_t k = 0; k < nets.size(); ++k) {
    const SurrogateModel& m = *nets[k];
    if (m.net.input_dim() != state.size() + loads[k].size() || m.net.output_dim() != state.size())
      throw std::invalid_argument("rollout: network " + std::to_string(k) + " does not chain with the state size");
    Eigen::VectorXd x(state.size() + loads[k].size());
    x << state, loads[k];
    state = m.predict(x);
  }
  return state;
}

namespace {

void write_block(std::ostream& out, const Matrix& m) {
  // Row-major order.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
}

void read_block(std::istream& in, Matrix& m) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(m.rows(), m.cols());
  in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  if (!in) throw std::runtime_error("model file: truncated weight blob");
  m = rm;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void save_model(const SurrogateModel& model, const std::string& path) {
  nlohmann::json header{
      {"format", "dmml-mlp-1"},
      {"dims", model.net.dims()},
      {"slope", model.net.slope()},
      {"masked", model.net.masked()},
      {"mask_radius", model.mask_radius ? nlohmann::json(*model.mask_radius) : nlohmann::json(nullptr)},
      {"input_mean", to_std(model.input.mean)},
      {"input_scale", to_std(model.input.scale)},
      {"output_mean", to_std(model.output.mean)},
      {"output_scale", to_std(model.output.scale)},
      {"config", model.config},
      {"layer_order", "per layer: W (out x in, row-major), b, mask (row-major, when masked)"},
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model file " + path);
  out << header.dump() << '\n';
  for (int l = 0; l < model.net.layer_count(); ++l) {
    write_block(out, model.net.weights[l]);
    write_block(out, model.net.biases[l]);
    if (model.net.masked()) write_block(out, model.net.masks[l]);
  }
}

SurrogateModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file " + path);
  std::string line;
  std::getline(in, line);
  const auto header = nlohmann::json::parse(line);
  if (header.value("format", "") != "dmml-mlp-1") throw std::runtime_error("model file: unknown format");

  SurrogateModel model;
  model.net = Mlp(header.at("dims").get<std::vector<int>>(), header.at("slope").get<double>());
  model.input = {from_std(header.at("input_mean")), from_std(header.at("input_scale"))};
  model.output = {from_std(header.at("output_mean")), from_std(header.at("output_scale"))};
  model.config = header.at("config").get<TrainConfig>();
  if (!header.at("mask_radius").is_null()) model.mask_radius = header.at("mask_radius").get<int>();
  const bool masked = header.at("masked").get<bool>();
  std::vector<Matrix> masks;
  for (int l = 0; l < model.net.layer_count(); ++l) {
    read_block(in, model.net.weights[l]);
    Matrix b(model.net.biases[l].size(), 1);
    read_block(in, b);
    model.net.biases[l] = b.col(0);
    if (masked) {
      Matrix m(model.net.weights[l].rows(), model.net.weights[l].cols());
      read_block(in, m);
      masks.push_back(std::move(m));
    }
  }
  if (masked) model.net.masks = std::move(masks);
  return model;
}

}  // namespace dmml
