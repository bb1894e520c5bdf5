#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace schro {

/// One evaluated probe or ball: identifying coordinates plus measured value, bound and ratio.
struct ProbeRecord {
  std::vector<double> key;
  double measured = 0.0;
  double bound = 0.0;
  double ratio = 0.0;
};

/// Result of fitting the smallest constant that makes an inequality hold on a sample.
struct VerificationReport {
  std::string name;
  std::string header;                  // fixed conventions used by the check
  std::vector<std::string> key_columns;
  std::vector<ProbeRecord> records;

  double constant = 0.0;               // supremum of the ratios
  std::ptrdiff_t argmax = -1;          // record attaining it
  std::size_t evaluated = 0;
  std::size_t excluded_constraint = 0;
  std::size_t excluded_zero_bound = 0;
  std::size_t degenerate = 0;
  double stability_delta = std::numeric_limits<double>::quiet_NaN();
  bool truncation_dominated = false;
  std::map<std::string, double> extras;

  bool finite() const noexcept;
  /// Adds a record and updates the supremum; ratio is measured / bound.
  void add(std::vector<double> key, double measured, double bound);
  /// Adds a record with an explicitly computed ratio.
  void add_ratio(std::vector<double> key, double measured, double bound, double ratio);
};

/// Relative change |a - b| / max(|a|, |b|), with both tiny values treated as equal.
double relative_change(double a, double b, double abs_floor = 1e-9);

enum class Verdict { Consistent, Flagged, InconclusiveTruncation };

const char* verdict_name(Verdict v);

struct Bundle {
  std::vector<VerificationReport> reports;
  std::vector<Verdict> verdicts;
  Verdict overall = Verdict::Consistent;
  std::string summary;
};

/// Merges reports in the given canonical order and assigns verdicts. A report is consistent when
/// its constant is finite and its stability delta (when measured) is at most max_delta.
Bundle report_bundle(std::vector<VerificationReport> reports, const std::vector<std::string>& order = {},
                     double max_delta = 0.25);

}  // namespace schro
