#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace dasf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// A stacked M x Q variable per unknown; most problems have one, CCA has two.
using VariableSet = std::vector<Matrix>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

// Row partition of a stacked vector/matrix into per-node channel blocks.
struct BlockLayout {
  std::vector<int> sizes;
  std::vector<int> offsets;
  int total = 0;

  static BlockLayout from_sizes(const std::vector<int>& sizes) {
    BlockLayout l;
    l.sizes = sizes;
    l.offsets.reserve(sizes.size());
    for (int s : sizes) {
      if (s <= 0) throw Error("block layout: non-positive block size");
      l.offsets.push_back(l.total);
      l.total += s;
    }
    return l;
  }

  int count() const { return static_cast<int>(sizes.size()); }
  int size(int k) const { return sizes.at(static_cast<size_t>(k)); }
  int offset(int k) const { return offsets.at(static_cast<size_t>(k)); }
};

inline double stacked_norm(const VariableSet& xs) {
  double s = 0;
  for (const Matrix& x : xs) s += x.squaredNorm();
  return std::sqrt(s);
}

inline double stacked_distance(const VariableSet& a, const VariableSet& b) {
  if (a.size() != b.size()) throw Error("variable sets differ in arity");
  double s = 0;
  for (size_t v = 0; v < a.size(); ++v) s += (a[v] - b[v]).squaredNorm();
  return std::sqrt(s);
}

}  // namespace dasf
