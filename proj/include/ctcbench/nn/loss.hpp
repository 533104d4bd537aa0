#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ctcbench/core/error.hpp"

namespace ctcbench::nn {

template <typename T>
struct LossResult {
  T loss = T(0);
  std::vector<T> grad;  // d loss / d logits, row-major [N][classes]
};

/// Mean softmax cross-entropy over a batch, stabilised by log-sum-exp.
/// grad = (softmax - onehot) / N.
template <typename T>
LossResult<T> cross_entropy(const std::vector<T>& logits, const std::vector<int>& labels,
                            int classes = 2) {
  const std::size_t n = labels.size();
  if (n == 0 || logits.size() != n * static_cast<std::size_t>(classes))
    throw ValidationError("cross_entropy: logits/labels size mismatch");
  LossResult<T> out;
  out.grad.resize(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= classes) throw ValidationError("cross_entropy: label out of range");
    const T* row = logits.data() + i * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (int k = 0; k < classes; ++k) z += std::exp(static_cast<double>(row[k]) - mx);
    const double lse = mx + std::log(z);
    total += lse - row[y];
    for (int k = 0; k < classes; ++k) {
      const double p = std::exp(static_cast<double>(row[k]) - lse);
      out.grad[i * classes + k] = static_cast<T>((p - (k == y ? 1.0 : 0.0)) / n);
    }
  }
  out.loss = static_cast<T>(total / n);
  return out;
}

template <typename T>
std::vector<T> softmax_row(const T* row, int classes) {
  const double mx = *std::max_element(row, row + classes);
  std::vector<T> p(classes);
  double z = 0.0;
  for (int k = 0; k < classes; ++k) z += std::exp(static_cast<double>(row[k]) - mx);
  for (int k = 0; k < classes; ++k) p[k] = static_cast<T>(std::exp(static_cast<double>(row[k]) - mx) / z);
  return p;
}

}  // namespace ctcbench::nn
