#pragma once

#include <vector>

namespace cimage {

// AUC as the probability that a random positive outscores a random negative,
// ties counted one half (rank-sum over tie groups).
double auc_score(const std::vector<double>& pos_scores,
                 const std::vector<double>& neg_scores);

// Average precision by step interpolation over the descending score list;
// tied scores are processed as one threshold group.
double average_precision(const std::vector<double>& pos_scores,
                         const std::vector<double>& neg_scores);

}  // namespace cimage
