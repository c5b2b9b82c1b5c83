#include "dhglm/data.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace dhglm {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    // trim
    size_t a = cell.find_first_not_of(" \t\r");
    size_t b = cell.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_number(const std::string& s, const std::string& where) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw dhglm_error("csv: non-numeric cell '" + s + "' in " + where);
  }
}

}  // namespace

Dataset ingest_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw dhglm_error("csv: cannot open " + path);

  std::string header_line;
  if (!std::getline(in, header_line)) throw dhglm_error("csv: empty file " + path);
  std::vector<std::string> header = split_csv_line(header_line);

  auto col_index = [&](const std::string& name) {
    for (size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return (int)j;
    throw dhglm_error("csv: missing column '" + name + "' in " + path);
  };

  int yi = col_index(schema.response);
  std::vector<int> ci;
  for (const auto& c : schema.covariates) ci.push_back(col_index(c));
  int gi = schema.group.empty() ? -1 : col_index(schema.group);

  std::vector<double> yv;
  std::vector<std::vector<double>> cv(ci.size());
  std::vector<std::string> gv;
  std::string line;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (cells.size() < header.size())
      throw dhglm_error("csv: short row at line " + std::to_string(lineno));
    std::string where = path + ":" + std::to_string(lineno);
    yv.push_back(parse_number(cells[yi], where) * schema.response_scale);
    for (size_t k = 0; k < ci.size(); ++k) cv[k].push_back(parse_number(cells[ci[k]], where));
    if (gi >= 0) gv.push_back(cells[gi]);
  }
  if (yv.empty()) throw dhglm_error("csv: no data rows in " + path);

  Dataset d;
  d.y = Eigen::Map<VectorXd>(yv.data(), (Eigen::Index)yv.size());
  for (size_t k = 0; k < ci.size(); ++k)
    d.cols[schema.covariates[k]] = Eigen::Map<VectorXd>(cv[k].data(), (Eigen::Index)cv[k].size());
  if (gi >= 0) {
    std::map<std::string, int> remap;
    std::vector<std::string> order;
    d.group.resize((Eigen::Index)gv.size());
    for (size_t i = 0; i < gv.size(); ++i) {
      auto it = remap.find(gv[i]);
      if (it == remap.end()) {
        it = remap.emplace(gv[i], (int)order.size()).first;
        order.push_back(gv[i]);
      }
      d.group[(Eigen::Index)i] = it->second;
    }
    d.n_groups = (int)order.size();
  }
  d.response_scale = schema.response_scale;
  d.provenance = path;
  d.validate();
  return d;
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw dhglm_error("csv: cannot write " + path);
  out << std::setprecision(17);
  out << "y";
  for (const auto& [name, v] : data.cols) out << "," << name;
  if (data.group.size() > 0) out << ",group";
  for (const auto& [name, v] : data.group_cols) out << "," << name;
  if (data.offset) out << ",offset";
  out << "\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    out << data.y[i];
    for (const auto& [name, v] : data.cols) out << "," << v[i];
    if (data.group.size() > 0) out << "," << data.group[i];
    for (const auto& [name, v] : data.group_cols) out << "," << v[data.group.size() ? data.group[i] : i];
    if (data.offset) out << "," << (*data.offset)[i];
    out << "\n";
  }
}

MatrixXd row_standardize(const MatrixXd& adjacency) {
  if (adjacency.rows() != adjacency.cols())
    throw dhglm_error("spatial: adjacency matrix must be square");
  for (Eigen::Index i = 0; i < adjacency.rows(); ++i) {
    if (adjacency(i, i) != 0.0)
      throw dhglm_error("spatial: adjacency diagonal must be zero");
    for (Eigen::Index j = 0; j < adjacency.cols(); ++j)
      if (adjacency(i, j) < 0.0) throw dhglm_error("spatial: adjacency entries must be nonnegative");
  }
  MatrixXd W = adjacency;
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    double s = W.row(i).sum();
    if (s == 0.0)
      throw dhglm_error("spatial: region " + std::to_string(i) + " has no neighbors");
    W.row(i) /= s;
  }
  return W;
}

MatrixXd read_adjacency_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dhglm_error("csv: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(parse_number(c, path + ":" + std::to_string(lineno)));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw dhglm_error("csv: empty adjacency file " + path);
  MatrixXd A((Eigen::Index)rows.size(), (Eigen::Index)rows[0].size());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw dhglm_error("csv: ragged adjacency file " + path);
    for (size_t j = 0; j < rows[i].size(); ++j) A((Eigen::Index)i, (Eigen::Index)j) = rows[i][j];
  }
  return A;
}

}  // namespace dhglm
