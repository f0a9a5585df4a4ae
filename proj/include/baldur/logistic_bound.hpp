#pragma once

namespace baldur {

double sigmoid(double x);
double log_sigmoid(double x);

// lambda(a) = (sigmoid(a) - 1/2) / (2a), with lambda(0) = 1/8. Even in a.
double jaakkola_lambda(double a);

// Quadratic-exponential lower bound on exp(y t) sigmoid(-y):
//   h = exp(y t) sigmoid(xi) exp(-(y + xi)/2 - lambda(xi) (y^2 - xi^2)),
// tight at xi = |y|.
double logistic_bound_h(double y, int t, double xi);
double log_logistic_bound_h(double y, int t, double xi);

// The exact likelihood exp(y t) sigmoid(-y) the bound is measured against.
double logistic_likelihood(double y, int t);

}  // namespace baldur
