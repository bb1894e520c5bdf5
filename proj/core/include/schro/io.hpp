#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "schro/operators.hpp"
#include "schro/report.hpp"

namespace schro {

/// Shortest round-trip decimal form; "inf", "-inf" and "nan" for non-finite values.
std::string format_number(double v);

/// Comma-separated table written in one go. Cells holding commas, quotes or newlines are quoted.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  CsvTable& row(std::vector<std::string> cells);
  CsvTable& row_numbers(const std::vector<double>& cells);
  const std::vector<std::string>& header() const noexcept { return header_; }
  std::size_t rows() const noexcept { return rows_.size(); }
  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Per-probe or per-ball records of a report: key columns, measured, bound, ratio.
CsvTable report_table(const VerificationReport& rep);
/// Summary fields of a report (no records).
nlohmann::json report_summary(const VerificationReport& rep);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Descriptor <-> JSON. Unknown keys and wrong types are rejected with the offending field named.
OperatorDescriptor descriptor_from_json(const nlohmann::json& j, const std::string& where = "operator");
nlohmann::json descriptor_to_json(const OperatorDescriptor& d);

}  // namespace schro
