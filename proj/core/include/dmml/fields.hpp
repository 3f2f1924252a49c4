// Mobility and source fields evaluated by both the fine and the coarse solver.

#pragma once

#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmml/mesh.hpp"

namespace dmml {

/// Expanding mobility front: lambda(t, x) = 1 + clamp(1 - |x - c| / (r0 + v t), 0, 1).
/// A zero initial radius with zero speed gives lambda = 1 everywhere.
class MobilityField {
 public:
  MobilityField() = default;
  MobilityField(double speed, double initial_radius, Point center);

  static MobilityField uniform() { return {}; }

  double operator()(double t, Point x) const;
  bool time_dependent() const { return speed_ > 0.0 && radius_ > 0.0; }
  double min_value() const { return 1.0; }

  double speed() const { return speed_; }
  double initial_radius() const { return radius_; }
  Point center() const { return center_; }

  nlohmann::json to_json() const;
  static MobilityField from_json(const nlohmann::json& j);

 private:
  double speed_ = 0.0;
  double radius_ = 0.0;
  Point center_{};
};

struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
  bool contains(Point p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
};

/// Source term g(step, x). Step k drives the transition from state k+1 to state k+2
/// (1-based states), evaluated at time (k+1) dt.
class SourceField {
 public:
  enum class Kind { zero, uniform, block_wells, oscillating_wells };

  static SourceField zero();
  static SourceField uniform(double value);
  /// +rate on `injector`, -rate on `producer`, constant in time.
  static SourceField block_wells(Rect injector, Rect producer, double rate, int injector_block = -1,
                                 int producer_block = -1);
  /// +-amplitude [(sin a x)^2 + (sin b y)^2] on the two wells, (a, b) given per step.
  static SourceField oscillating_wells(Rect injector, Rect producer, double amplitude,
                                       std::vector<std::pair<double, double>> rates);

  double operator()(int step, Point x) const;
  bool time_dependent() const { return kind_ == Kind::oscillating_wells; }
  Kind kind() const { return kind_; }
  int injector_block() const { return injector_block_; }
  int producer_block() const { return producer_block_; }
  const std::vector<std::pair<double, double>>& rates() const { return rates_; }

  nlohmann::json to_json() const;
  static SourceField from_json(const nlohmann::json& j);

 private:
  Kind kind_ = Kind::zero;
  double value_ = 0.0;
  Rect injector_{}, producer_{};
  int injector_block_ = -1, producer_block_ = -1;
  std::vector<std::pair<double, double>> rates_;
};

}  // namespace dmml
