#include "stabkit/dataset.hpp"

#include "stabkit/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace stabkit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<std::vector<double>> parse_row(const std::string& line) {
  std::vector<double> values;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell = trim(cell);
    double v = 0.0;
    const auto* first = cell.data();
    const auto* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (cell.empty() || ec != std::errc() || ptr != last) return std::nullopt;
    values.push_back(v);
  }
  return values;
}

}  // namespace

std::vector<Vector> load_points(const std::filesystem::path& path,
                                std::optional<std::size_t> expected_dim) {
  std::ifstream in(path);
  if (!in) throw ParseError("dataset: cannot open " + path.string());
  std::vector<Vector> points;
  std::string line;
  std::size_t line_no = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto row = parse_row(line);
    if (!row) {
      if (first_content) {
        first_content = false;
        continue;  // header
      }
      throw ParseError("dataset: " + path.string() + ": line " + std::to_string(line_no) +
                       ": expected comma-separated numbers");
    }
    first_content = false;
    if (expected_dim && row->size() != *expected_dim)
      throw ParseError("dataset: " + path.string() + ": line " + std::to_string(line_no) +
                       ": " + std::to_string(row->size()) + " columns, expected " +
                       std::to_string(*expected_dim));
    Vector v = Eigen::Map<Vector>(row->data(), static_cast<Eigen::Index>(row->size()));
    if (!v.allFinite())
      throw ParseError("dataset: " + path.string() + ": line " + std::to_string(line_no) +
                       ": non-finite value");
    points.push_back(std::move(v));
  }
  return points;
}

void save_points(const std::vector<Vector>& points, const std::filesystem::path& path,
                 const std::string& column_prefix) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  if (!points.empty()) {
    for (Eigen::Index j = 0; j < points.front().size(); ++j)
      out << (j ? "," : "") << column_prefix << j;
    out << '\n';
  }
  for (const auto& p : points) {
    for (Eigen::Index j = 0; j < p.size(); ++j) out << (j ? "," : "") << p(j);
    out << '\n';
  }
}

}  // namespace stabkit
