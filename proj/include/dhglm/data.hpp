#pragma once

#include <map>
#include <optional>
#include <string>

#include "dhglm/util.hpp"

namespace dhglm {

// Observation-level data plus optional group-level covariates and spatial
// structure. Group indices are dense 0-based integers.
struct Dataset {
  VectorXd y;
  std::map<std::string, VectorXd> cols;        // per-observation covariates
  std::map<std::string, VectorXd> group_cols;  // per-group covariates
  VectorXi group;                              // obs -> group, empty when ungrouped
  int n_groups = 0;
  std::optional<VectorXd> offset;  // on the linear predictor scale
  std::optional<MatrixXd> W;       // row-standardized neighborhood matrix
  std::string provenance;
  double response_scale = 1.0;  // factor already applied to y at ingestion

  Eigen::Index n() const { return y.size(); }

  const VectorXd& col(const std::string& name) const {
    auto it = cols.find(name);
    if (it == cols.end()) throw dhglm_error("dataset: missing column '" + name + "'");
    return it->second;
  }

  const VectorXd& group_col(const std::string& name) const {
    auto it = group_cols.find(name);
    if (it == group_cols.end()) throw dhglm_error("dataset: missing group column '" + name + "'");
    return it->second;
  }

  bool has_col(const std::string& name) const { return cols.count(name) > 0; }
  bool has_group_col(const std::string& name) const { return group_cols.count(name) > 0; }

  void validate() const {
    for (const auto& [name, v] : cols)
      if (v.size() != y.size()) throw dhglm_error("dataset: column '" + name + "' length mismatch");
    if (group.size() > 0) {
      if (group.size() != y.size()) throw dhglm_error("dataset: group index length mismatch");
      for (Eigen::Index i = 0; i < group.size(); ++i)
        if (group[i] < 0 || group[i] >= n_groups) throw dhglm_error("dataset: group index out of range");
    }
    for (const auto& [name, v] : group_cols)
      if (v.size() != n_groups)
        throw dhglm_error("dataset: group column '" + name + "' length mismatch");
    if (offset && offset->size() != y.size()) throw dhglm_error("dataset: offset length mismatch");
  }
};

struct CsvSchema {
  std::string response;
  std::vector<std::string> covariates;
  std::string group;             // empty -> ungrouped
  double response_scale = 1.0;   // y is multiplied by this at ingestion
};

// Read a headered CSV into a Dataset; group labels are remapped to dense
// 0-based indices in order of first appearance.
Dataset ingest_csv(const std::string& path, const CsvSchema& schema);

// Observation-level table with a documented header row; group-level columns
// are broadcast per row.
void write_csv(const Dataset& data, const std::string& path);

// Dense nonnegative adjacency -> row-standardized W. Throws on nonzero
// diagonal, non-square input, or an all-zero row (island region).
MatrixXd row_standardize(const MatrixXd& adjacency);

MatrixXd read_adjacency_csv(const std::string& path);

}  // namespace dhglm
