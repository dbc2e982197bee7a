#pragma once

#include <vector>

namespace avf {

/// Area under the ROC curve for binary labels (1 = positive/fake).
/// Computed via mid-ranks, so tied scores contribute 1/2; equivalent to the
/// probability that a random positive outscores a random negative.
/// Requires at least one positive and one negative.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Fraction of samples where (score >= threshold) matches the label.
double accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                double threshold = 0.5);

}  // namespace avf
