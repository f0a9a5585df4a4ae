#include "baldur/logistic_bound.hpp"

#include <cmath>

namespace baldur {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double jaakkola_lambda(double a) {
  const double x = std::abs(a);
  // sigmoid(x) - 1/2 = tanh(x/2)/2; series below 1e-4 avoids cancellation.
  if (x < 1e-4) return 0.125 - x * x / 96.0;
  return std::tanh(0.5 * x) / (4.0 * x);
}

double log_logistic_bound_h(double y, int t, double xi) {
  return y * t + log_sigmoid(xi) - 0.5 * (y + xi) - jaakkola_lambda(xi) * (y * y - xi * xi);
}

double logistic_bound_h(double y, int t, double xi) { return std::exp(log_logistic_bound_h(y, t, xi)); }

double logistic_likelihood(double y, int t) { return std::exp(y * t + log_sigmoid(-y)); }

}  // namespace baldur
