#include "cstseld/labels.hpp"

#include <cstdio>

#include "cstseld/csvio.hpp"
#include "cstseld/errors.hpp"

namespace cst {

std::vector<LabeledEvent> read_label_csv(const std::string& path) {
  const auto table = read_csv(path);
  if (table.header.size() != 5)
    throw DataError(path + ": label CSV must have 5 columns "
                           "(frame_index,class_index,source_index,azimuth_deg,elevation_deg)");
  std::vector<LabeledEvent> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    LabeledEvent e;
    try {
      e.frame = std::stoi(row[0]);
      e.class_index = std::stoi(row[1]);
      e.source_index = std::stoi(row[2]);
      e.azimuth_deg = std::stod(row[3]);
      e.elevation_deg = std::stod(row[4]);
    } catch (const std::exception&) {
      throw DataError(path + ": malformed label row");
    }
    if (e.frame < 0 || e.class_index < 0) throw DataError(path + ": negative frame or class index");
    out.push_back(e);
  }
  return out;
}

void write_label_csv(const std::string& path, const std::vector<LabeledEvent>& events,
                     const std::vector<std::pair<std::string, std::string>>& echo) {
  CsvTable table;
  table.echo = echo;
  table.header = {"frame_index", "class_index", "source_index", "azimuth_deg", "elevation_deg"};
  char buf[64];
  for (const auto& e : events) {
    std::vector<std::string> row;
    row.push_back(std::to_string(e.frame));
    row.push_back(std::to_string(e.class_index));
    row.push_back(std::to_string(e.source_index));
    std::snprintf(buf, sizeof(buf), "%.4f", e.azimuth_deg);
    row.emplace_back(buf);
    std::snprintf(buf, sizeof(buf), "%.4f", e.elevation_deg);
    row.emplace_back(buf);
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

}  // namespace cst
