#ifndef SVIGLMM_CSV_HPP
#define SVIGLMM_CSV_HPP

#include <string>
#include <vector>

#include "sviglmm/types.hpp"

namespace sviglmm {

/// Minimal CSV table: comma separator, '.' decimal point, header row required.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
  int require_column(const std::string& name) const;
  double numeric(std::size_t row, int col) const;
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(std::istream& in, const std::string& what);
void write_csv(const CsvTable& table, const std::string& path);

std::string format_double(double v);  // round-trip exact

}  // namespace sviglmm

#endif
