#include "sviglmm/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace sviglmm {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim whitespace and a possible trailing \r
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return static_cast<int>(j);
  return -1;
}

int CsvTable::require_column(const std::string& name) const {
  const int j = column(name);
  if (j < 0) throw DataError("missing column '" + name + "'");
  return j;
}

double CsvTable::numeric(std::size_t row, int col) const {
  const std::string& s = rows[row][static_cast<std::size_t>(col)];
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw DataError("non-numeric cell '" + s + "' in column '" +
                    header[static_cast<std::size_t>(col)] + "', row " + std::to_string(row + 2));
  return v;
}

CsvTable parse_csv(std::istream& in, const std::string& what) {
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw DataError(what + ": empty file");
  table.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line);
    if (fields.size() != table.header.size())
      throw DataError(what + ": row with " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(table.header.size()));
    table.rows.push_back(std::move(fields));
  }
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return parse_csv(in, path);
}

void write_csv(const CsvTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (std::size_t j = 0; j < table.header.size(); ++j)
    out << (j ? "," : "") << table.header[j];
  out << "\n";
  for (const auto& row : table.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << row[j];
    out << "\n";
  }
  if (!out.good()) throw std::runtime_error("write failed: " + path);
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace sviglmm
