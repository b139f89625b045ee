#include "cimage/metrics.hpp"

#include <algorithm>

#include "cimage/errors.hpp"

namespace cimage {

namespace {

// (score, is_positive) pairs sorted by descending score
std::vector<std::pair<double, int>> sorted_pairs(const std::vector<double>& pos,
                                                 const std::vector<double>& neg) {
  if (pos.empty() || neg.empty())
    throw ConfigError("metrics: need nonempty positive and negative score lists");
  std::vector<std::pair<double, int>> all;
  all.reserve(pos.size() + neg.size());
  for (double s : pos) all.emplace_back(s, 1);
  for (double s : neg) all.emplace_back(s, 0);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second > b.second;  // stable within ties for determinism only
  });
  return all;
}

}  // namespace

double auc_score(const std::vector<double>& pos_scores,
                 const std::vector<double>& neg_scores) {
  auto all = sorted_pairs(pos_scores, neg_scores);
  double wins = 0.0;
  std::size_t neg_seen_above = 0;
  std::size_t i = 0;
  // every positive beats the negatives strictly below it and halves the ties
  while (i < all.size()) {
    std::size_t j = i;
    std::size_t tie_pos = 0, tie_neg = 0;
    while (j < all.size() && all[j].first == all[i].first) {
      tie_pos += all[j].second;
      tie_neg += 1 - all[j].second;
      ++j;
    }
    const std::size_t neg_below =
        neg_scores.size() - neg_seen_above - tie_neg;
    wins += static_cast<double>(tie_pos) *
            (static_cast<double>(neg_below) + 0.5 * static_cast<double>(tie_neg));
    neg_seen_above += tie_neg;
    i = j;
  }
  return wins /
         (static_cast<double>(pos_scores.size()) * static_cast<double>(neg_scores.size()));
}

double average_precision(const std::vector<double>& pos_scores,
                         const std::vector<double>& neg_scores) {
  auto all = sorted_pairs(pos_scores, neg_scores);
  const double total_pos = static_cast<double>(pos_scores.size());
  double ap = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    std::size_t tie_pos = 0, tie_neg = 0;
    while (j < all.size() && all[j].first == all[i].first) {
      tie_pos += all[j].second;
      tie_neg += 1 - all[j].second;
      ++j;
    }
    tp += tie_pos;
    fp += tie_neg;
    if (tie_pos > 0) {
      const double precision =
          static_cast<double>(tp) / static_cast<double>(tp + fp);
      ap += precision * static_cast<double>(tie_pos) / total_pos;
    }
    i = j;
  }
  return ap;
}

}  // namespace cimage
