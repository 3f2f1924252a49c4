#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dmml {

/// Where a training target came from.
enum class Label : std::uint8_t { simulation, observation, mixed };

std::string to_string(Label label);
Label label_from_string(const std::string& s);

/// Training pairs stored column-wise: column j is (inputs.col(j), targets.col(j)).
struct PairSet {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
  std::vector<int> sample;  // source id
  std::vector<int> step;    // 1-based time index of the input state
  std::vector<Label> label;

  int size() const { return static_cast<int>(inputs.cols()); }
  int input_dim() const { return static_cast<int>(inputs.rows()); }
  int output_dim() const { return static_cast<int>(targets.rows()); }

  /// Pairs whose sample id is in `ids`, in the original order.
  PairSet select_samples(const std::vector<int>& ids) const;
  PairSet select_columns(const std::vector<int>& columns) const;
};

}  // namespace dmml
