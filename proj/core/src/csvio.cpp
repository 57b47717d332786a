#include "cstseld/csvio.hpp"

#include <fstream>
#include <sstream>

#include "cstseld/errors.hpp"

namespace cst {

std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(s);
  while (std::getline(ss, field, delim)) out.push_back(field);
  if (!s.empty() && s.back() == delim) out.emplace_back();
  return out;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open CSV file: " + path);
  CsvTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      if (!body.empty() && body.front() == ' ') body.erase(0, 1);
      const auto eq = body.find('=');
      if (eq != std::string::npos)
        table.echo.emplace_back(body.substr(0, eq), body.substr(eq + 1));
      continue;
    }
    auto fields = split(line, ',');
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
    } else {
      if (fields.size() != table.header.size())
        throw DataError(path + ": row has " + std::to_string(fields.size()) +
                        " fields, header has " + std::to_string(table.header.size()));
      table.rows.push_back(std::move(fields));
    }
  }
  if (!have_header) throw DataError(path + ": missing CSV header row");
  return table;
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream f(path, std::ios::binary);  // binary keeps LF endings everywhere
  if (!f) throw DataError("cannot write CSV file: " + path);
  for (const auto& [k, v] : table.echo) f << "# " << k << "=" << v << "\n";
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) f << ",";
    f << table.header[i];
  }
  f << "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) f << ",";
      f << row[i];
    }
    f << "\n";
  }
}

}  // namespace cst
