#include "avf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace avf {

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("roc_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw std::invalid_argument("roc_auc: labels must be 0 or 1");
    if (!std::isfinite(scores[i]))
      throw std::invalid_argument("roc_auc: non-finite score");
    pos += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0)
    throw std::invalid_argument("roc_auc: need both classes present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of mid-ranks over positives (1-based ranks, ties averaged).
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // avg of i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) rank_sum += mid_rank;
    i = j;
  }
  return (rank_sum - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1)) /
         (static_cast<double>(pos) * static_cast<double>(neg));
}

double accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                double threshold) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("accuracy: bad input lengths");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    hits += static_cast<std::size_t>((scores[i] >= threshold ? 1 : 0) == labels[i]);
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

}  // namespace avf
