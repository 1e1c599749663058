#pragma once

#include <vector>

#include "omniban/tensor.hpp"
#include "oracles.hpp"

namespace testutil {

inline oracle::Mat to_mat(const omniban::Tensor& t) {
  oracle::Mat m = oracle::zeros(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

inline omniban::Tensor from_mat(const oracle::Mat& m) {
  std::vector<double> v;
  for (const auto& row : m) v.insert(v.end(), row.begin(), row.end());
  return omniban::Tensor({m.size(), m[0].size()}, std::move(v));
}

inline double max_diff(const oracle::Mat& a, const omniban::Tensor& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) d = std::max(d, std::abs(a[i][j] - b.at(i, j)));
  return d;
}

}  // namespace testutil
