#include "schro/report.hpp"

#include <algorithm>
#include <cmath>

namespace schro {

bool VerificationReport::finite() const noexcept {
  return std::isfinite(constant) &&
         std::all_of(records.begin(), records.end(), [](const ProbeRecord& r) { return std::isfinite(r.ratio); });
}

void VerificationReport::add_ratio(std::vector<double> key, double measured, double bound, double ratio) {
  records.push_back({std::move(key), measured, bound, ratio});
  ++evaluated;
  if (argmax < 0 || ratio > constant || std::isnan(ratio)) {
    constant = ratio;
    argmax = static_cast<std::ptrdiff_t>(records.size()) - 1;
  }
}

void VerificationReport::add(std::vector<double> key, double measured, double bound) {
  if (!(bound > 0.0)) {
    ++excluded_zero_bound;
    return;
  }
  add_ratio(std::move(key), measured, bound, measured / bound);
}

double relative_change(double a, double b, double abs_floor) {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale <= abs_floor) return 0.0;
  return std::abs(a - b) / scale;
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Consistent: return "consistent";
    case Verdict::Flagged: return "flagged";
    case Verdict::InconclusiveTruncation: return "inconclusive-truncation";
  }
  return "?";
}

Bundle report_bundle(std::vector<VerificationReport> reports, const std::vector<std::string>& order,
                     double max_delta) {
  auto rank = [&](const VerificationReport& r) {
    for (std::size_t k = 0; k < order.size(); ++k)
      if (r.name == order[k] || r.name.rfind(order[k] + "[", 0) == 0) return k;
    return order.size();
  };
  std::stable_sort(reports.begin(), reports.end(), [&](const auto& a, const auto& b) {
    const auto ra = rank(a), rb = rank(b);
    return ra != rb ? ra < rb : a.name < b.name;
  });

  Bundle b;
  std::string truncated, flagged;
  for (const auto& r : reports) {
    Verdict v = Verdict::Consistent;
    if (r.truncation_dominated) {
      v = Verdict::InconclusiveTruncation;
      truncated += (truncated.empty() ? "" : ", ") + r.name;
    } else if (!r.finite() || (std::isfinite(r.stability_delta) && r.stability_delta > max_delta)) {
      v = Verdict::Flagged;
      flagged += (flagged.empty() ? "" : ", ") + r.name;
    }
    b.verdicts.push_back(v);
  }
  b.reports = std::move(reports);
  if (!truncated.empty()) {
    b.overall = Verdict::InconclusiveTruncation;
    b.summary = std::string(verdict_name(b.overall)) + ": " + truncated;
  } else if (!flagged.empty()) {
    b.overall = Verdict::Flagged;
    b.summary = std::string(verdict_name(b.overall)) + ": " + flagged;
  } else if (!b.reports.empty()) {
    b.summary = verdict_name(Verdict::Consistent);
  }
  return b;
}

}  // namespace schro
