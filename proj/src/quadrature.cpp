#include "pmelab/quadrature.hpp"

#include <boost/math/special_functions/legendre.hpp>

#include <algorithm>
#include <map>
#include <mutex>
#include <stdexcept>

namespace pmelab {

namespace {

// Reference rule on [-1, 1]; cached because Legendre zeros are costly for large n.
const QuadratureRule& reference_rule(int n) {
  static std::mutex lock;
  static std::map<int, QuadratureRule> cache;
  std::lock_guard<std::mutex> guard(lock);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  const std::vector<double> positive = boost::math::legendre_p_zeros<double>(n);
  QuadratureRule rule;
  for (double x : positive) {
    const double dp = boost::math::legendre_p_prime(n, x);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes.push_back(x);
    rule.weights.push_back(w);
    if (x != 0.0) {
      rule.nodes.push_back(-x);
      rule.weights.push_back(w);
    }
  }
  std::vector<std::size_t> order(rule.nodes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return rule.nodes[a] < rule.nodes[b]; });
  QuadratureRule sorted;
  for (std::size_t i : order) {
    sorted.nodes.push_back(rule.nodes[i]);
    sorted.weights.push_back(rule.weights[i]);
  }
  return cache.emplace(n, std::move(sorted)).first->second;
}

}  // namespace

QuadratureRule gauss_legendre(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: need at least one node");
  const QuadratureRule& ref = reference_rule(n);
  QuadratureRule out;
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  out.nodes.reserve(ref.nodes.size());
  out.weights.reserve(ref.nodes.size());
  for (std::size_t i = 0; i < ref.nodes.size(); ++i) {
    out.nodes.push_back(mid + half * ref.nodes[i]);
    out.weights.push_back(half * ref.weights[i]);
  }
  return out;
}

}  // namespace pmelab
