#include "umx/solver.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>

namespace umx::solver {

namespace {

// C(n, k), saturating at UINT64_MAX.
std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 acc = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    acc = acc * (n - k + i) / i;
    if (acc > std::numeric_limits<std::uint64_t>::max()) return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(acc);
}

}  // namespace

double estimate_ric(const Eigen::MatrixXcd& matrix, int sparsity, std::uint64_t max_subsets) {
  const auto cols = matrix.cols();
  if (sparsity <= 0) throw std::invalid_argument("estimate_ric: sparsity must be positive");
  if (sparsity > cols) throw std::invalid_argument("estimate_ric: sparsity exceeds column count");
  const std::uint64_t count = binomial(static_cast<std::uint64_t>(cols), static_cast<std::uint64_t>(sparsity));
  if (count > max_subsets)
    throw TooLarge("estimate_ric: " + std::to_string(count) + " column subsets exceed the cap of " +
                   std::to_string(max_subsets));

  Eigen::MatrixXcd normalized = matrix;
  for (Eigen::Index j = 0; j < cols; ++j) {
    const double n = normalized.col(j).norm();
    if (n == 0.0) throw std::invalid_argument("estimate_ric: zero column");
    if (n != 1.0) normalized.col(j) /= n;
  }
  const Eigen::MatrixXcd gram = normalized.adjoint() * normalized;

  const auto s = static_cast<Eigen::Index>(sparsity);
  std::vector<Eigen::Index> subset(static_cast<std::size_t>(s));
  std::iota(subset.begin(), subset.end(), Eigen::Index{0});
  Eigen::MatrixXcd sub(s, s);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig;
  double worst = 0.0;
  for (;;) {
    for (Eigen::Index a = 0; a < s; ++a)
      for (Eigen::Index b = 0; b < s; ++b) sub(a, b) = gram(subset[a], subset[b]);
    eig.compute(sub, Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues();
    worst = std::max({worst, ev.maxCoeff() - 1.0, 1.0 - ev.minCoeff()});

    // Next combination in lexicographic order.
    Eigen::Index i = s - 1;
    while (i >= 0 && subset[static_cast<std::size_t>(i)] == cols - s + i) --i;
    if (i < 0) break;
    ++subset[static_cast<std::size_t>(i)];
    for (Eigen::Index j = i + 1; j < s; ++j)
      subset[static_cast<std::size_t>(j)] = subset[static_cast<std::size_t>(j - 1)] + 1;
  }
  return worst;
}

double estimate_ric(const SensingOperator& op, int sparsity, std::uint64_t max_subsets) {
  if (sparsity > 0 && sparsity <= op.cols()) {
    const std::uint64_t count = binomial(static_cast<std::uint64_t>(op.cols()), static_cast<std::uint64_t>(sparsity));
    if (count > max_subsets)
      throw TooLarge("estimate_ric: " + std::to_string(count) + " column subsets exceed the cap of " +
                     std::to_string(max_subsets));
  }
  return estimate_ric(op.to_dense(), sparsity, max_subsets);
}

}  // namespace umx::solver
