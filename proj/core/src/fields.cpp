#include "dmml/fields.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dmml {

MobilityField::MobilityField(double speed, double initial_radius, Point center)
    : speed_(speed), radius_(initial_radius), center_(center) {
  if (speed < 0.0) throw std::invalid_argument("mobility front speed must be nonnegative");
  if (initial_radius < 0.0) throw std::invalid_argument("mobility initial radius must be nonnegative");
}

double MobilityField::operator()(double t, Point x) const {
  const double radius = radius_ + speed_ * t;
  if (!(radius > 0.0)) return 1.0;
  const double d = std::hypot(x.x - center_.x, x.y - center_.y);
  return 1.0 + std::clamp(1.0 - d / radius, 0.0, 1.0);
}

nlohmann::json MobilityField::to_json() const {
  return {{"speed", speed_}, {"initial_radius", radius_}, {"center", {center_.x, center_.y}}};
}

MobilityField MobilityField::from_json(const nlohmann::json& j) {
  const auto c = j.value("center", std::vector<double>{0.0, 0.0});
  return MobilityField(j.value("speed", 0.0), j.value("initial_radius", 0.0), Point{c.at(0), c.at(1)});
}

SourceField SourceField::zero() { return {}; }

SourceField SourceField::uniform(double value) {
  SourceField s;
  s.kind_ = Kind::uniform;
  s.value_ = value;
  return s;
}

SourceField SourceField::block_wells(Rect injector, Rect producer, double rate, int injector_block,
                                     int producer_block) {
  SourceField s;
  s.kind_ = Kind::block_wells;
  s.injector_ = injector;
  s.producer_ = producer;
  s.value_ = rate;
  s.injector_block_ = injector_block;
  s.producer_block_ = producer_block;
  return s;
}

SourceField SourceField::oscillating_wells(Rect injector, Rect producer, double amplitude,
                                           std::vector<std::pair<double, double>> rates) {
  SourceField s;
  s.kind_ = Kind::oscillating_wells;
  s.injector_ = injector;
  s.producer_ = producer;
  s.value_ = amplitude;
  s.rates_ = std::move(rates);
  return s;
}

double SourceField::operator()(int step, Point x) const {
  switch (kind_) {
    case Kind::zero:
      return 0.0;
    case Kind::uniform:
      return value_;
    case Kind::block_wells:
      if (injector_.contains(x)) return value_;
      if (producer_.contains(x)) return -value_;
      return 0.0;
    case Kind::oscillating_wells: {
      if (step < 0 || step >= static_cast<int>(rates_.size()))
        throw std::out_of_range("source evaluated at a step without rate parameters");
      const auto [a, b] = rates_[step];
      const double sa = std::sin(a * x.x), sb = std::sin(b * x.y);
      const double shape = sa * sa + sb * sb;
      if (injector_.contains(x)) return value_ * shape;
      if (producer_.contains(x)) return -value_ * shape;
      return 0.0;
    }
  }
  return 0.0;
}

namespace {

nlohmann::json rect_json(const Rect& r) { return {r.x0, r.y0, r.x1, r.y1}; }

Rect rect_from(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>()};
}

}  // namespace

nlohmann::json SourceField::to_json() const {
  switch (kind_) {
    case Kind::zero:
      return {{"kind", "zero"}};
    case Kind::uniform:
      return {{"kind", "uniform"}, {"value", value_}};
    case Kind::block_wells:
      return {{"kind", "block_wells"},         {"rate", value_},
              {"injector", rect_json(injector_)}, {"producer", rect_json(producer_)},
              {"injector_block", injector_block_}, {"producer_block", producer_block_}};
    case Kind::oscillating_wells: {
      nlohmann::json ab = nlohmann::json::array();
      for (const auto& [a, b] : rates_) ab.push_back({a, b});
      return {{"kind", "oscillating_wells"},
              {"amplitude", value_},
              {"injector", rect_json(injector_)},
              {"producer", rect_json(producer_)},
              {"alpha_beta", ab}};
    }
  }
  return {};
}

SourceField SourceField::from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "zero") return zero();
  if (kind == "uniform") return uniform(j.at("value").get<double>());
  if (kind == "block_wells")
    return block_wells(rect_from(j.at("injector")), rect_from(j.at("producer")), j.at("rate").get<double>(),
                       j.value("injector_block", -1), j.value("producer_block", -1));
  if (kind == "oscillating_wells") {
    std::vector<std::pair<double, double>> rates;
    for (const auto& ab : j.at("alpha_beta")) rates.emplace_back(ab.at(0).get<double>(), ab.at(1).get<double>());
    return oscillating_wells(rect_from(j.at("injector")), rect_from(j.at("producer")),
                             j.at("amplitude").get<double>(), std::move(rates));
  }
  throw std::invalid_argument("unknown source kind '" + kind + "'");
}

}  // namespace dmml
