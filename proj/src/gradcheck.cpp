#include "gaia/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "gaia/ops.hpp"

namespace gaia {
namespace {

struct ProbeResult {
  double value;
  std::uint64_t kink_pattern;
};

ProbeResult probe(const std::function<Tensor()>& f) {
  NoGradGuard no_grad;
  auto& kp = KinkProbe::current();
  const bool was_armed = kp.armed;
  kp.armed = true;
  kp.reset();
  const double v = f().item();
  ProbeResult r{v, kp.pattern_hash};
  kp.armed = was_armed;
  return r;
}

}  // namespace

GradCheckReport check_gradients(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                const GradCheckOptions& options,
                                const std::vector<std::string>& names) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tape::current().clear();
  backward(f());

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    ParamGradCheck entry;
    entry.name = pi < names.size() ? names[pi] : "param" + std::to_string(pi);
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());

    auto data = p.data_mut();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + options.step;
      const ProbeResult plus = probe(f);
      data[i] = saved - options.step;
      const ProbeResult minus = probe(f);
      data[i] = saved;
      if (plus.kink_pattern != minus.kink_pattern) {
        ++entry.skipped;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * options.step);
      const double denom =
          std::max({std::abs(analytic[i]), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      entry.max_rel_error = std::max(entry.max_rel_error, rel);
      ++entry.checked;
    }
    entry.pass = entry.max_rel_error < options.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.skipped += entry.skipped;
    report.pass = report.pass && entry.pass;
    report.params.push_back(std::move(entry));
  }
  return report;
}

}  // namespace gaia
