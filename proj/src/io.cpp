#include "stpod/io.hpp"

#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "stpod/errors.hpp"

namespace stpod {

namespace {

constexpr std::array<char, 8> kMatrixMagic{'S', 'T', 'P', 'O', 'D', 'M', 'A', 'T'};

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void write_rows(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
}

}  // namespace

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header_.size()) throw DimensionMismatch("CsvTable: row width does not match the header");
  for (const auto& cell : row)
    if (cell.find(',') != std::string::npos || cell.find('\n') != std::string::npos)
      throw InvalidArgument("CsvTable: cells must not contain separators");
  rows_.push_back(std::move(row));
}

void CsvTable::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  write_rows(out, {header_});
  write_rows(out, rows_);
}

void CsvTable::append_to(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  if (!fresh) {
    const CsvTable existing = read(path);
    if (existing.header() != header_) throw InvalidArgument("CsvTable: header of " + path.string() + " differs");
  }
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw InvalidArgument("cannot append to " + path.string());
  if (fresh) write_rows(out, {header_});
  write_rows(out, rows_);
}

CsvTable CsvTable::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifacts("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument(path.string() + " is empty");
  CsvTable table(split_line(line));
  while (std::getline(in, line))
    if (!line.empty()) table.add_row(split_line(line));
  return table;
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header_.size(); ++i)
    if (header_[i] == name) return static_cast<int>(i);
  throw InvalidArgument("CsvTable: no column named " + name);
}

std::string format_number(double value) { return fmt::format("{:.17g}", value); }

double parse_number(const std::string& text) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw InvalidArgument("not a number: '" + text + "'");
  return value;
}

void write_matrix(const std::filesystem::path& path, const Mat& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  const std::int64_t dims[2] = {m.rows(), m.cols()};
  out.write(kMatrixMagic.data(), kMatrixMagic.size());
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Mat read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifacts("cannot read " + path.string());
  std::array<char, 8> magic{};
  std::int64_t dims[2] = {0, 0};
  in.read(magic.data(), magic.size());
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || magic != kMatrixMagic || dims[0] < 0 || dims[1] < 0)
    throw InvalidArgument(path.string() + " is not a matrix file");
  Mat m(dims[0], dims[1]);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) throw InvalidArgument(path.string() + " is truncated");
  return m;
}

std::string sha256_hex(const std::string& data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw InvalidArgument("SHA-256 computation failed");
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text(path)); }

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifacts("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << text;
}

}  // namespace stpod
