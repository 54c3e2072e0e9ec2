#include "factorlasso/panel.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "factorlasso/error.hpp"

namespace factorlasso {

void PanelDataset::validate() const {
  if (n < 2) throw Error(ErrorCode::dimension, "panel needs at least 2 units");
  if (T < 1) throw Error(ErrorCode::dimension, "panel needs at least 1 period");
  if (p < 1) throw Error(ErrorCode::dimension, "panel needs at least 1 covariate");
  if (y.rows() != n || y.cols() != T || d.rows() != n || d.cols() != T)
    throw Error(ErrorCode::dimension, "y/d must be n x T");
  if (x.rows() != static_cast<Eigen::Index>(n) * T || x.cols() != p)
    throw Error(ErrorCode::dimension, "x must be (n*T) x p");
  if (!y.allFinite() || !d.allFinite() || !x.allFinite())
    throw Error(ErrorCode::invalid_data, "panel contains non-finite values");
}

Matrix within_transform(const Matrix& z) {
  if (z.rows() < 2) throw Error(ErrorCode::dimension, "within_transform: need n >= 2");
  if (z.cols() < 1) throw Error(ErrorCode::dimension, "within_transform: need T >= 1");
  if (!z.allFinite())
    throw Error(ErrorCode::invalid_data, "within_transform: non-finite input");
  Matrix out = z;
  const Vector unit_means = z.rowwise().mean();
  const Eigen::RowVectorXd period_means = z.colwise().mean();
  const double grand = z.mean();
  out.colwise() -= unit_means;
  out.rowwise() -= period_means;
  out.array() += grand;
  return out;
}

namespace {

// Cross-sectional demeaning of every column.
void demean_columns(Matrix& m) {
  const Eigen::RowVectorXd means = m.colwise().mean();
  m.rowwise() -= means;
}

}  // namespace

DemeanedPanel demean_panel(const PanelDataset& data) {
  data.validate();
  DemeanedPanel out;
  out.n = data.n;
  out.T = data.T;
  out.p = data.p;
  out.cross_section = (data.T == 1);
  if (out.cross_section) {
    out.y_tilde = data.y;
    out.d_tilde = data.d;
    out.x_tilde = data.x;
    demean_columns(out.y_tilde);
    demean_columns(out.d_tilde);
    demean_columns(out.x_tilde);
    return out;
  }
  out.y_tilde = within_transform(data.y);
  out.d_tilde = within_transform(data.d);
  out.x_tilde = data.x;
  for (int j = 0; j < data.p; ++j) {
    // Column j of the stacked covariate block is an n x T panel in place.
    Eigen::Map<Matrix> panel(out.x_tilde.col(j).data(), data.n, data.T);
    panel = within_transform(panel);
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& field, int row, const std::string& col) {
  const char* begin = field.data();
  const char* end = begin + field.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t')) --end;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw Error(ErrorCode::parse, "row " + std::to_string(row) +
                                      ", column '" + col +
                                      "': cannot parse '" + field + "'");
  return value;
}

}  // namespace

PanelDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::parse, "empty file '" + path + "'");
  const auto header = split_csv_line(line);

  int id_col = -1, time_col = -1, y_col = -1, d_col = -1;
  std::vector<int> x_cols;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    const std::string& name = header[c];
    if (name == schema.id) id_col = c;
    else if (name == schema.time) time_col = c;
    else if (name == schema.y) y_col = c;
    else if (name == schema.d) d_col = c;
    else if (name.rfind(schema.x_prefix, 0) == 0) x_cols.push_back(c);
  }
  if (id_col < 0 || time_col < 0 || y_col < 0 || d_col < 0)
    throw Error(ErrorCode::parse, "header must contain '" + schema.id + "', '" +
                                      schema.time + "', '" + schema.y +
                                      "', '" + schema.d + "'");
  if (x_cols.empty())
    throw Error(ErrorCode::parse,
                "header has no covariate columns with prefix '" +
                    schema.x_prefix + "'");

  const int p = static_cast<int>(x_cols.size());
  std::unordered_map<std::string, int> unit_ids, period_ids;
  std::vector<std::string> unit_order, period_order;
  struct Row {
    int unit, period;
    double y, d;
    std::vector<double> x;
  };
  std::vector<Row> rows;

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != static_cast<int>(header.size()))
      throw Error(ErrorCode::parse, "row " + std::to_string(line_no) + ": expected " +
                                        std::to_string(header.size()) +
                                        " fields, got " +
                                        std::to_string(fields.size()));
    Row row;
    const std::string& unit_label = fields[id_col];
    const std::string& period_label = fields[time_col];
    auto [ui, new_unit] = unit_ids.try_emplace(unit_label, static_cast<int>(unit_order.size()));
    if (new_unit) unit_order.push_back(unit_label);
    auto [pi, new_period] =
        period_ids.try_emplace(period_label, static_cast<int>(period_order.size()));
    if (new_period) period_order.push_back(period_label);
    row.unit = ui->second;
    row.period = pi->second;
    row.y = parse_double(fields[y_col], line_no, schema.y);
    row.d = parse_double(fields[d_col], line_no, schema.d);
    row.x.resize(p);
    for (int j = 0; j < p; ++j)
      row.x[j] = parse_double(fields[x_cols[j]], line_no, header[x_cols[j]]);
    rows.push_back(std::move(row));
  }

  const int n = static_cast<int>(unit_order.size());
  const int T = static_cast<int>(period_order.size());
  if (n < 2) throw Error(ErrorCode::invalid_data, "need at least 2 units");
  if (rows.empty()) throw Error(ErrorCode::invalid_data, "no data rows");

  std::unordered_set<long long> seen;
  for (const auto& row : rows) {
    const long long key = static_cast<long long>(row.unit) * T + row.period;
    if (!seen.insert(key).second)
      throw Error(ErrorCode::duplicate_cell,
                  "duplicate cell (id='" + unit_order[row.unit] + "', time='" +
                      period_order[row.period] + "')");
  }
  if (static_cast<long long>(rows.size()) != static_cast<long long>(n) * T)
    throw Error(ErrorCode::unbalanced_panel,
                "unbalanced panel: " + std::to_string(rows.size()) +
                    " rows for " + std::to_string(n) + " units x " +
                    std::to_string(T) + " periods");

  PanelDataset data;
  data.n = n;
  data.T = T;
  data.p = p;
  data.y.resize(n, T);
  data.d.resize(n, T);
  data.x.resize(static_cast<Eigen::Index>(n) * T, p);
  for (const auto& row : rows) {
    data.y(row.unit, row.period) = row.y;
    data.d(row.unit, row.period) = row.d;
    for (int j = 0; j < p; ++j)
      data.x(static_cast<Eigen::Index>(row.period) * n + row.unit, j) = row.x[j];
  }
  data.validate();
  return data;
}

}  // namespace factorlasso
