#include "ctgen/core/csv.hpp"

#include <cstdio>
#include <stdexcept>

namespace ctgen {

std::string fmt_float(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  os_.open(path, std::ios::trunc);
  if (!os_) throw std::runtime_error("CsvWriter: cannot open " + path.string());
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) os_ << ',';
    os_ << cells[i];
  }
  os_ << '\n';
}

}  // namespace ctgen
