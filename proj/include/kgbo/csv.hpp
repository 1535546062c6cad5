#pragma once

#include <string>
#include <vector>

namespace kgbo {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// RFC 4180 subset: comma separated, optional double quotes, "" escapes.
CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);
std::string format_csv(const CsvTable& table);
void write_csv(const std::string& path, const CsvTable& table);

}  // namespace kgbo
