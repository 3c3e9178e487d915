#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfnet {

using Index = Eigen::Index;

template <typename Scalar>
using VectorX = Eigen::Vector<Scalar, Eigen::Dynamic>;

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

// Row-major matrix view; all tensors in this library are row-major.
template <typename Scalar>
using MatrixRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using MatMap = Eigen::Map<MatrixRM<Scalar>>;

template <typename Scalar>
using ConstMatMap = Eigen::Map<const MatrixRM<Scalar>>;

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(msg);
}

template <typename... Args>
std::string cat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

inline std::string shape_str(const std::vector<Index>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace detail

}  // namespace cfnet
