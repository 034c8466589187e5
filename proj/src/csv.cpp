#include "bss/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

namespace bss {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> parse_row(const std::string& line, std::size_t lineno) {
  std::vector<double> row;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    std::size_t comma = line.find(',', pos);
    if (comma == std::string::npos) comma = line.size();
    const std::string cell = line.substr(pos, comma - pos);
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str())
      throw std::runtime_error("csv: unparsable value '" + cell + "' on line " +
                               std::to_string(lineno));
    row.push_back(v);
    pos = comma + 1;
    if (comma == line.size()) break;
  }
  return row;
}

Matrix rows_to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::runtime_error("csv: no data rows");
  const std::size_t cols = rows[0].size();
  for (std::size_t r = 1; r < rows.size(); ++r)
    if (rows[r].size() != cols)
      throw std::runtime_error("csv: ragged row " + std::to_string(r + 1));
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return m;
}

std::vector<std::vector<double>> read_rows(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    rows.push_back(parse_row(line, lineno));
  }
  return rows;
}

}  // namespace

void write_block_csv(std::ostream& out, const Matrix& block, bool header) {
  if (header)
    out << "# channels=" << block.rows() << " samples=" << block.cols() << "\n";
  for (Index i = 0; i < block.rows(); ++i) {
    for (Index t = 0; t < block.cols(); ++t) {
      if (t) out << ',';
      out << fmt(block(i, t));
    }
    out << '\n';
  }
}

Matrix read_block_csv(std::istream& in) { return rows_to_matrix(read_rows(in)); }

void write_timeseries_csv(std::ostream& out, const Vector& t, const Matrix& block) {
  if (t.size() != block.cols())
    throw shape_error("write_timeseries_csv: time grid length must match sample count");
  for (Index k = 0; k < t.size(); ++k) {
    out << fmt(t(k));
    for (Index i = 0; i < block.rows(); ++i) out << ',' << fmt(block(i, k));
    out << '\n';
  }
}

std::pair<Vector, Matrix> read_timeseries_csv(std::istream& in) {
  const Matrix wide = rows_to_matrix(read_rows(in));
  if (wide.cols() < 2)
    throw std::runtime_error("csv: timeseries needs a time column plus channels");
  Vector t = wide.col(0);
  Matrix block = wide.rightCols(wide.cols() - 1).transpose();
  return {std::move(t), std::move(block)};
}

void write_block_csv_file(const std::string& path, const Matrix& block, bool header) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("csv: cannot open for writing: " + path);
  write_block_csv(f, block, header);
  if (!f) throw std::runtime_error("csv: write failed: " + path);
}

Matrix read_block_csv_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("csv: cannot open: " + path);
  return read_block_csv(f);
}

void write_timeseries_csv_file(const std::string& path, const Vector& t, const Matrix& block) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("csv: cannot open for writing: " + path);
  write_timeseries_csv(f, t, block);
  if (!f) throw std::runtime_error("csv: write failed: " + path);
}

std::pair<Vector, Matrix> read_timeseries_csv_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("csv: cannot open: " + path);
  return read_timeseries_csv(f);
}

}  // namespace bss
