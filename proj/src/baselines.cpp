#include "gaia/baselines.hpp"

#include <algorithm>
#include <string>

#include <Eigen/Dense>

#include "gaia/errors.hpp"

namespace gaia {

namespace {

void clamp_nonnegative(std::vector<double>& v) {
  for (double& x : v) x = std::max(0.0, x);
}

}  // namespace

BaselineForecast last_value(std::span<const double> history, std::size_t horizon) {
  BaselineForecast f;
  f.values.assign(horizon, history.empty() ? 0.0 : history.back());
  clamp_nonnegative(f.values);
  return f;
}

BaselineForecast seasonal_naive(std::span<const double> history, std::size_t horizon,
                                std::size_t period) {
  if (period == 0) throw ConfigError("seasonal_naive: period must be positive");
  if (history.size() < period) {
    auto f = last_value(history, horizon);
    f.fell_back = true;
    return f;
  }
  BaselineForecast f;
  const std::size_t n = history.size();
  for (std::size_t h = 0; h < horizon; ++h) {
    // Month n + h maps to n + h - period, stepping back again if that is
    // still in the future.
    std::size_t t = n + h;
    while (t >= n) t -= period;
    f.values.push_back(history[t]);
  }
  clamp_nonnegative(f.values);
  return f;
}

ArFit fit_ar(std::span<const double> history, std::size_t p) {
  if (history.size() <= p) {
    throw DataError("fit_ar: need more than " + std::to_string(p) + " observations, got " +
                    std::to_string(history.size()));
  }
  const std::size_t rows = history.size() - p;
  Eigen::MatrixXd X(rows, p + 1);
  Eigen::VectorXd y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t t = r + p;
    X(r, 0) = 1.0;
    for (std::size_t i = 0; i < p; ++i) X(r, i + 1) = history[t - 1 - i];
    y(r) = history[t];
  }
  const Eigen::VectorXd beta = X.completeOrthogonalDecomposition().solve(y);
  ArFit fit;
  fit.intercept = beta(0);
  for (std::size_t i = 0; i < p; ++i) fit.coefficients.push_back(beta(i + 1));
  return fit;
}

BaselineForecast ar_ls(std::span<const double> history, std::size_t horizon, std::size_t p) {
  if (history.size() <= p) {
    auto f = last_value(history, horizon);
    f.fell_back = true;
    return f;
  }
  const ArFit fit = fit_ar(history, p);
  std::vector<double> y(history.begin(), history.end());
  BaselineForecast f;
  for (std::size_t h = 0; h < horizon; ++h) {
    double next = fit.intercept;
    for (std::size_t i = 0; i < p; ++i) next += fit.coefficients[i] * y[y.size() - 1 - i];
    y.push_back(next);
    f.values.push_back(next);
  }
  clamp_nonnegative(f.values);
  return f;
}

BaselineForecast run_baseline(std::string_view name, std::span<const double> history,
                              std::size_t horizon) {
  if (name == "last_value") return last_value(history, horizon);
  if (name == "seasonal_naive") return seasonal_naive(history, horizon);
  if (name == "ar_ls") return ar_ls(history, horizon);
  throw ConfigError("unknown baseline '" + std::string(name) + "'");
}

}  // namespace gaia
