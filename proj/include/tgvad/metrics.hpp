#pragma once

#include <cstddef>
#include <vector>

namespace tgvad {

/// Frame-level area under the ROC curve, computed exactly via the
/// Mann-Whitney statistic: P(score_pos > score_neg) + 0.5 * P(tie).
/// MetricError unless both classes are present.
double frame_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Average precision: the precision at each positive's rank (descending
/// score, ties kept in input order) averaged over all positives.
/// MetricError when there is no positive frame.
double frame_ap(const std::vector<double>& scores, const std::vector<int>& labels);

/// Repeats each snippet score over its frame span.
std::vector<double> expand_to_frames(const std::vector<double>& snippet_scores,
                                     std::size_t frames_per_snippet);

} // namespace tgvad
