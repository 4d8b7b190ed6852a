#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace eqmv {

/// Reals are written with 17 significant digits so a read-back is lossless.
std::string format_real(double value);

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);

  void write_row(const std::vector<std::string>& cells);

 private:
  std::ofstream out_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Strict numeric CSV reader: one header row, every data row the same width.
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace eqmv
