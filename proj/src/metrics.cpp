#include "tgvad/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "tgvad/errors.hpp"

namespace tgvad {

namespace {

void check_aligned(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw AlignmentError("metrics: " + std::to_string(scores.size()) + " scores vs " +
                             std::to_string(labels.size()) + " labels");
    }
    if (scores.empty()) {
        throw MetricError("metrics are undefined on empty inputs");
    }
}

} // namespace

double frame_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_aligned(scores, labels);
    const auto n = scores.size();
    std::size_t positives = 0;
    for (int label : labels) {
        positives += label ? 1 : 0;
    }
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) {
        throw MetricError("AUC is undefined: labels contain a single class");
    }

    // Average ranks over tie groups; the rank-sum form of the Mann-Whitney
    // statistic then counts ties as half wins exactly.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double positive_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j); // ranks are 1-based
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]]) {
                positive_rank_sum += avg_rank;
            }
        }
        i = j;
    }
    const auto np = static_cast<double>(positives);
    const auto nn = static_cast<double>(negatives);
    return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double frame_ap(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_aligned(scores, labels);
    std::size_t positives = 0;
    for (int label : labels) {
        positives += label ? 1 : 0;
    }
    if (positives == 0) {
        throw MetricError("AP is undefined: no positive frames");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    // stable: ties keep input order, which is the documented convention
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    std::size_t seen_positives = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (labels[order[rank]]) {
            ++seen_positives;
            ap += static_cast<double>(seen_positives) / static_cast<double>(rank + 1);
        }
    }
    return ap / static_cast<double>(positives);
}

std::vector<double> expand_to_frames(const std::vector<double>& snippet_scores,
                                     std::size_t frames_per_snippet) {
    if (frames_per_snippet == 0) {
        throw ContractError("frames_per_snippet must be at least 1");
    }
    std::vector<double> frames;
    frames.reserve(snippet_scores.size() * frames_per_snippet);
    for (double s : snippet_scores) {
        frames.insert(frames.end(), frames_per_snippet, s);
    }
    return frames;
}

} // namespace tgvad
