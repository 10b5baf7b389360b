#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stpod/mesh_fe.hpp"

namespace stpod {

/// Comma-separated, '.' decimal, header row. Numbers are written with 17
/// significant digits so they round-trip exactly.
class CsvTable {
public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<std::string> row);
  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

  void write(const std::filesystem::path& path) const;
  /// Appends rows; writes the header first when the file is new or empty.
  void append_to(const std::filesystem::path& path) const;
  static CsvTable read(const std::filesystem::path& path);

  /// Column index by header name; throws InvalidArgument when absent.
  int column(const std::string& name) const;

private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string format_number(double value);
double parse_number(const std::string& text);

/// Little-endian binary dense matrix: 8-byte magic, int64 rows, int64
/// cols, column-major doubles.
void write_matrix(const std::filesystem::path& path, const Mat& m);
Mat read_matrix(const std::filesystem::path& path);

std::string sha256_hex(const std::string& data);
std::string sha256_file(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace stpod
