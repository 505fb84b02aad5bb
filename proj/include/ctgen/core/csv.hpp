#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace ctgen {

/// Formats a float with a fixed "%.9g" pattern so that rerunning a command
/// with the same seed yields byte-identical CSV output.
std::string fmt_float(double v);

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);

  void row(const std::vector<std::string>& cells);
  void flush() { os_.flush(); }

 private:
  std::ofstream os_;
};

}  // namespace ctgen
