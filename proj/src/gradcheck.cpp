#include "protox/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace protox {

namespace {

double evaluate(const LossBuilder& build) {
  Graph<double> g(false);
  auto loss = build(g);
  return g.value(loss)[0];
}

}  // namespace

GradcheckReport gradcheck(const LossBuilder& build, const std::vector<NamedTensor<double>>& params,
                          const GradcheckOptions& options) {
  for (const auto& p : params) p.tensor->zero_grad();
  {
    Graph<double> g;
    auto loss = build(g);
    g.backward(loss);
  }

  GradcheckReport report;
  report.passed = true;
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto& p = params[t];
    auto data = p.tensor->data();
    std::vector<double> analytic(p.tensor->grad().begin(), p.tensor->grad().end());
    if (t == 0)
      for (auto& a : analytic) a *= options.analytic_fault_scale;

    GradcheckEntry entry;
    entry.name = p.name;
    entry.size = data.size();
    double scale = options.scale_floor;
    std::vector<double> numeric(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + options.step;
      const double up = evaluate(build);
      data[i] = saved - options.step;
      const double down = evaluate(build);
      data[i] = saved;
      numeric[i] = (up - down) / (2 * options.step);
      if (!std::isfinite(numeric[i]) || !std::isfinite(analytic[i])) {
        throw NumericError("gradcheck: non-finite gradient in parameter '" + p.name + "' at element " +
                           std::to_string(i));
      }
      scale = std::max({scale, std::abs(numeric[i]), std::abs(analytic[i])});
    }
    for (std::size_t i = 0; i < data.size(); ++i)
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(analytic[i] - numeric[i]));
    entry.max_rel_error = entry.max_abs_error / scale;
    entry.passed = entry.max_rel_error < options.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.passed = report.passed && entry.passed;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

std::string format_report(const GradcheckReport& report) {
  std::string out;
  char line[256];
  for (const auto& e : report.entries) {
    std::snprintf(line, sizeof line, "%-28s %7zu  abs %.3e  rel %.3e  %s\n", e.name.c_str(), e.size,
                  e.max_abs_error, e.max_rel_error, e.passed ? "ok" : "FAIL");
    out += line;
  }
  std::snprintf(line, sizeof line, "max relative error %.3e: %s\n", report.max_rel_error,
                report.passed ? "PASS" : "FAIL");
  out += line;
  return out;
}

}  // namespace protox
