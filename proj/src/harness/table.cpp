#include "phaseflow/harness/table.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "phaseflow/analysis.hpp"
#include "phaseflow/errors.hpp"

namespace phaseflow::harness {

Table::Table(std::vector<std::string> header) : header_(std::move(header)) {}

void Table::add_row(std::vector<std::string> cells) {
  if (cells.size() != header_.size()) throw ParameterError("row width does not match table header");
  rows_.push_back(std::move(cells));
}

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  throw ParameterError("no column named '" + std::string(name) + "'");
}

const std::string& Table::at(std::size_t row, std::string_view name) const { return rows_.at(row)[column(name)]; }

double Table::number(std::size_t row, std::string_view name) const {
  const std::string& text = at(row, name);
  if (text == "NA" || text == "nan") return std::nan("");
  if (text == "inf") return HUGE_VAL;
  if (text == "-inf") return -HUGE_VAL;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParameterError("cell '" + text + "' in column " + std::string(name) + " is not numeric");
  }
  return v;
}

std::string Table::to_csv() const {
  std::string out;
  auto append_line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  append_line(header_);
  for (const auto& row : rows_) append_line(row);
  return out;
}

void Table::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_csv();
  if (!out) throw IoError("failed writing " + path.string());
}

Table Table::parse(std::string_view text) {
  auto split = [](std::string_view line) {
    std::vector<std::string> cells;
    while (true) {
      const auto comma = line.find(',');
      cells.emplace_back(line.substr(0, comma));
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    return cells;
  };
  Table table;
  bool first = true;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (first) {
      table.header_ = split(line);
      first = false;
    } else {
      table.add_row(split(line));
    }
  }
  return table;
}

Table Table::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string cell(double v) { return format_double(v); }
std::string cell(std::size_t v) { return std::to_string(v); }
std::string cell(int v) { return std::to_string(v); }
std::string cell(std::optional<std::size_t> v) { return v ? std::to_string(*v) : "NA"; }
std::string cell(bool v) { return v ? "1" : "0"; }

}  // namespace phaseflow::harness
