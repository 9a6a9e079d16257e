#include "fitr/quadrature.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include "fitr/errors.hpp"

namespace fitr {

namespace {

struct LineRule {
  std::vector<double> nodes;  // on [0, 1]
  std::vector<double> weights;
};

template <std::size_t N>
LineRule unit_interval_rule() {
  using Gauss = boost::math::quadrature::gauss<double, N>;
  const auto& x = Gauss::abscissa();
  const auto& w = Gauss::weights();
  LineRule rule;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == 0.0) {
      rule.nodes.push_back(0.5);
      rule.weights.push_back(0.5 * w[i]);
      continue;
    }
    for (double s : {-1.0, 1.0}) {
      rule.nodes.push_back(0.5 * (1.0 + s * x[i]));
      rule.weights.push_back(0.5 * w[i]);
    }
  }
  return rule;
}

LineRule line_rule(int points) {
  switch (points) {
    case 1: return unit_interval_rule<1>();
    case 2: return unit_interval_rule<2>();
    case 3: return unit_interval_rule<3>();
    case 4: return unit_interval_rule<4>();
    case 5: return unit_interval_rule<5>();
    case 6: return unit_interval_rule<6>();
    case 7: return unit_interval_rule<7>();
    case 8: return unit_interval_rule<8>();
    case 9: return unit_interval_rule<9>();
    case 10: return unit_interval_rule<10>();
    case 11: return unit_interval_rule<11>();
    case 12: return unit_interval_rule<12>();
    default: break;
  }
  throw Error(Errc::InvalidConfig, "triangle quadrature degree too high");
}

}  // namespace

std::vector<TriangleNode> triangle_rule(int degree) {
  // Duffy map (u, v) -> (u, (1 - u) v) with Jacobian (1 - u): exact when
  // 2 * points - 1 >= degree + 1.
  const int points = std::max(1, (degree + 3) / 2);
  const LineRule line = line_rule(points);
  std::vector<TriangleNode> rule;
  rule.reserve(line.nodes.size() * line.nodes.size());
  for (std::size_t i = 0; i < line.nodes.size(); ++i) {
    const double u = line.nodes[i];
    for (std::size_t j = 0; j < line.nodes.size(); ++j) {
      const double v = line.nodes[j];
      const double l2 = u;
      const double l3 = (1.0 - u) * v;
      TriangleNode node;
      node.point.lambda = {1.0 - l2 - l3, l2, l3};
      // Reference triangle area is 1/2; normalise so weights sum to 1.
      node.weight = 2.0 * line.weights[i] * line.weights[j] * (1.0 - u);
      rule.push_back(node);
    }
  }
  return rule;
}

}  // namespace fitr
