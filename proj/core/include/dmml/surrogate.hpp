// Multi-layer perceptron surrogate for the coarse time-stepping map u^{n+1} ~ N(u^n, I^n).
//
// Hidden layers use leaky ReLU, the output layer is affine. Optional binary masks restrict the
// connections between layers to a region of influence on the coarse grid.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dmml/mesh.hpp"
#include "dmml/pairs.hpp"

namespace dmml {

using Matrix = Eigen::MatrixXd;

enum class LossKind { standard, weighted };

struct TrainConfig {
  std::vector<int> hidden = std::vector<int>(6, 256);
  int epochs = 500;
  int batch_size = 32;
  double learning_rate = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  LossKind loss = LossKind::standard;
  /// Weighted-loss factors for observation / other targets. Nonpositive means the default 2/N, 1/N.
  double w_observation = 0.0;
  double w_simulation = 0.0;
  double slope = 0.01;
  bool normalize = true;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Per-layer 0/1 masks with the same shape as the weight matrices.
struct InfluenceMask {
  int radius = 0;
  std::vector<Matrix> layers;
  /// Coarse block assigned to every neuron, one vector per layer including input and output.
  std::vector<std::vector<int>> neuron_block;

  double density(std::size_t layer) const;
};

/// Input layout is [u (n) | load (n)]; both halves attach to the home block of their continuum.
/// Hidden neurons are assigned round-robin to blocks; a connection survives iff its endpoints' blocks
/// are within Chebyshev distance `radius`. Throws if a hidden width is below the block count.
InfluenceMask build_influence_mask(const Geometry& geometry, int radius, const std::vector<int>& hidden);

class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> dims, double slope);

  const std::vector<int>& dims() const { return dims_; }
  int layer_count() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  double slope() const { return slope_; }
  std::size_t parameter_count() const;

  /// He-normal initialization with fan-in counted over unmasked connections; zero biases.
  void initialize(std::uint64_t seed);
  void set_masks(std::vector<Matrix> masks);
  bool masked() const { return !masks.empty(); }
  void apply_masks();

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  /// Column-wise batch evaluation.
  Matrix forward(const Matrix& x) const;

  std::vector<Matrix> weights;
  std::vector<Eigen::VectorXd> biases;
  std::vector<Matrix> masks;

 private:
  std::vector<int> dims_;
  double slope_ = 0.01;
};

struct Gradient {
  std::vector<Matrix> weights;
  std::vector<Eigen::VectorXd> biases;
  double loss = 0.0;
};

/// Per-pair loss weights: 1/N for the standard loss; w_observation / w_simulation for the weighted one.
Eigen::VectorXd pair_weights(const std::vector<Label>& labels, const TrainConfig& config);

/// sum_j w_j ||y_j - N(x_j)||^2.
double loss(const Mlp& net, const Matrix& inputs, const Matrix& targets, const Eigen::VectorXd& weights);
double loss(const Mlp& net, const PairSet& pairs, const TrainConfig& config);

/// Exact gradient of the weighted sum of squares; masked entries are zero.
Gradient backward(const Mlp& net, const Matrix& inputs, const Matrix& targets, const Eigen::VectorXd& weights);
Gradient backward(const Mlp& net, const PairSet& pairs, const TrainConfig& config);

struct AdaMaxState {
  std::vector<Matrix> m_w, u_w;
  std::vector<Eigen::VectorXd> m_b, u_b;
  long step = 0;

  explicit AdaMaxState(const Mlp& net);
};

/// One AdaMax update at step `t` (1-based); masked weights are re-zeroed afterwards.
void adamax_step(AdaMaxState& state, Mlp& net, const Gradient& grad, const TrainConfig& config, long t);

/// Per-feature affine standardization.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Matrix& data);
  static Standardizer identity(int dim);
  Matrix apply(const Matrix& data) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  Matrix invert(const Matrix& data) const;
  Eigen::VectorXd invert(const Eigen::VectorXd& v) const;
};

/// Trained network with its normalization; predict() works in physical units.
struct SurrogateModel {
  Mlp net;
  Standardizer input;
  Standardizer output;
  TrainConfig config;
  std::optional<int> mask_radius;

  Eigen::VectorXd predict(const Eigen::VectorXd& x) const;
  Matrix predict(const Matrix& x) const;
};

struct TrainResult {
  SurrogateModel model;
  double initial_loss = 0.0;
  std::vector<double> history;  // mean mini-batch loss per epoch
};

/// Mini-batch AdaMax over shuffled pairs. Deterministic for fixed (pairs, config, mask).
/// Throws std::runtime_error when the loss becomes non-finite.
TrainResult train(const PairSet& pairs, const TrainConfig& config, const InfluenceMask* mask = nullptr);

/// Applies nets[k] to [state | loads[k]] in sequence and returns the final state.
Eigen::VectorXd rollout(const std::vector<const SurrogateModel*>& nets, const Eigen::VectorXd& initial,
                        const std::vector<Eigen::VectorXd>& loads);

/// Model file: one line of JSON header, a newline, then the little-endian float64 blob
/// (per layer: W row-major, b, then the mask row-major when masked).
void save_model(const SurrogateModel& model, const std::string& path);
SurrogateModel load_model(const std::string& path);

}  // namespace dmml
