#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "redssl/data/dataset.hpp"
#include "redssl/error.hpp"

namespace redssl::data {

std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

template <typename T>
T parse_cell(std::string_view cell, std::size_t line, std::size_t column) {
  T value{};
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty()) {
    throw ParseError("non-numeric cell '" + std::string(cell) + "' in column " + std::to_string(column + 1), line);
  }
  return value;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");

  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  std::vector<double> values;
  Dataset ds;
  ds.name = path.stem().string();

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      const auto header = split_commas(line);
      if (header.empty() || header.front() != "label") throw ParseError("header must start with 'label'", line_no);
      columns = header.size();
      if (columns < 2) throw ParseError("header has no feature columns", line_no);
      continue;
    }
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != columns) {
      throw ParseError("expected " + std::to_string(columns) + " columns, found " + std::to_string(cells.size()),
                       line_no);
    }
    const int label = parse_cell<int>(cells[0], line_no, 0);
    if (label < 0) throw ParseError("negative label", line_no);
    ds.labels.push_back(label);
    for (std::size_t c = 1; c < cells.size(); ++c) values.push_back(parse_cell<double>(cells[c], line_no, c));
  }
  if (ds.labels.empty()) throw ParseError("no data rows");
  const auto rows = static_cast<Eigen::Index>(ds.labels.size());
  const auto dim = static_cast<Eigen::Index>(columns - 1);
  ds.points = Eigen::Map<const Matrix>(values.data(), rows, dim);
  return ds;
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
  dataset.validate();
  std::ostringstream os;
  os << "label";
  for (Eigen::Index c = 0; c < dataset.points.cols(); ++c) os << ",f" << c;
  os << '\n';
  for (Eigen::Index r = 0; r < dataset.points.rows(); ++r) {
    os << dataset.labels[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < dataset.points.cols(); ++c) os << ',' << format_double(dataset.points(r, c));
    os << '\n';
  }
  auto out = open_for_write(path);
  out << os.str();
}

void save_csv(const Matrix& matrix, const std::filesystem::path& path) {
  std::ostringstream os;
  for (Eigen::Index c = 0; c < matrix.cols(); ++c) os << (c ? ",f" : "f") << c;
  os << '\n';
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) os << (c ? "," : "") << format_double(matrix(r, c));
    os << '\n';
  }
  auto out = open_for_write(path);
  out << os.str();
}

}  // namespace redssl::data
