#pragma once

#include <span>
#include <string_view>
#include <vector>

namespace gaia {

struct BaselineForecast {
  std::vector<double> values;  // one per forecast month, clamped at 0
  bool fell_back = false;      // history too short, last_value used instead
};

// Repeats the last observed value. An empty history forecasts zeros.
BaselineForecast last_value(std::span<const double> history, std::size_t horizon);
// Value from one period earlier; needs at least `period` observations.
BaselineForecast seasonal_naive(std::span<const double> history, std::size_t horizon,
                                std::size_t period = 12);

struct ArFit {
  double intercept = 0.0;
  std::vector<double> coefficients;  // coefficients[i] multiplies y[t-1-i]
};

// Least-squares AR(p) fit with intercept. Needs history.size() > p.
ArFit fit_ar(std::span<const double> history, std::size_t p);
// Fits AR(p) and rolls the recursion forward; falls back to last_value
// when history.size() <= p.
BaselineForecast ar_ls(std::span<const double> history, std::size_t horizon, std::size_t p = 2);

// Dispatch by name: "last_value", "seasonal_naive", "ar_ls".
BaselineForecast run_baseline(std::string_view name, std::span<const double> history,
                              std::size_t horizon);

}  // namespace gaia
