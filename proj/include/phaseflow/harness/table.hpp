#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace phaseflow::harness {

/// Small in-memory CSV table. Cells are stored as already-formatted text so a
/// table written and read back produces the same bytes.
class Table {
 public:
  Table() = default;
  explicit Table(std::vector<std::string> header);

  void add_row(std::vector<std::string> cells);

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

  std::size_t column(std::string_view name) const;
  const std::string& at(std::size_t row, std::string_view name) const;
  /// Parsed numeric cell; "NA" reads as NaN.
  double number(std::size_t row, std::string_view name) const;

  std::string to_csv() const;
  void write(const std::filesystem::path& path) const;
  static Table read(const std::filesystem::path& path);
  static Table parse(std::string_view text);

  friend bool operator==(const Table&, const Table&) = default;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string cell(double v);
std::string cell(std::size_t v);
std::string cell(int v);
std::string cell(std::optional<std::size_t> v);
std::string cell(bool v);

}  // namespace phaseflow::harness
