#pragma once

#include <string>
#include <utility>
#include <vector>

namespace cst {

/// Minimal CSV with a header row, LF line endings and optional leading
/// `# key=value` comment lines (config echo). No quoting; fields must not
/// contain commas.
struct CsvTable {
  std::vector<std::pair<std::string, std::string>> echo;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

std::vector<std::string> split(const std::string& s, char delim);

}  // namespace cst
