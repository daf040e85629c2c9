#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace airseg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Error type thrown by all operations on contract violations.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace airseg
