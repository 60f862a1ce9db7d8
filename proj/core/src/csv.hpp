#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace capmml::detail {

/// A headered comma-separated file split into string cells. Quoting is not
/// supported; every row must have exactly as many cells as the header.
struct CsvTable {
  std::string file;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};

CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text, const std::string& file_label);

}  // namespace capmml::detail
