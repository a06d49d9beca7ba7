#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>

namespace divjudge {

/// Numeric sample matrix: one row per sample, one column per encoded feature.
struct DatasetMatrix {
  Eigen::MatrixXd values;
  std::string label;  // provenance: distribution description or source path

  DatasetMatrix() = default;
  DatasetMatrix(Eigen::MatrixXd v, std::string l = {})
      : values(std::move(v)), label(std::move(l)) {}

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

}  // namespace divjudge
