#pragma once

#include <cstddef>
#include <vector>

#include "loft/tensor.hpp"

namespace loft {

// Filters of one conv layer ordered by descending l2 norm, ties broken by
// ascending filter index.
struct RankedFilterList {
    int layer_id = 0;
    int epoch = 0;
    std::vector<std::pair<std::size_t, double>> entries; // (filter_index, l2_norm)

    std::size_t size() const { return entries.size(); }
};

// bank: (c_out, c_in, k, k); one entry per output filter.
RankedFilterList rank_filters(const Tensor& bank, int layer_id, int epoch);

// Position map from list A to list B. sigma[i] is the 1-based position in B
// of the element at 1-based position i+1 of A, or 0 when the element is
// absent from B. l is the length of B.
struct RankMap {
    std::vector<std::size_t> sigma;
    std::size_t l = 0;
    std::vector<std::size_t> missing; // 1-based A positions absent from B

    bool complete() const { return missing.empty(); }
};

RankMap rank_map(const RankedFilterList& a, const RankedFilterList& b);

// Spearman's footrule F(sigma) = sum_i |i - sigma(i)|. Requires a full
// permutation; maps with missing elements belong to filter_distance.
double footrule(const RankMap& map);

// Weighted displacement F_w(sigma) = sum_i w_i |sum_{j<i} w_j -
// sum_{sigma(j)<sigma(i)} w_j|; reduces to the footrule under unit weights.
double weighted_footrule(const RankMap& map, const std::vector<double>& weights);

// Position-weighted log displacement sum_i (1/i)|ln i - ln sigma(i)|; an
// element of A missing from B contributes (1/i)|ln(l+1) - ln i| with l the
// length of B. Zero iff sigma is the identity with nothing missing.
double filter_distance(const RankedFilterList& a, const RankedFilterList& b);

// E x E matrix (row-major) of filter distances between snapshot pairs of one
// layer; entry (i,j) = filter_distance(snapshot_i, snapshot_j). Generally
// asymmetric; the diagonal is exactly zero.
std::vector<double> pairwise_heatmap(const std::vector<RankedFilterList>& snapshots);

// curve[t] = mean over tracked layers of filter_distance(snap[t], snap[last]).
std::vector<double> distance_to_final(const std::vector<std::vector<RankedFilterList>>& per_layer);

// Restricts a ranked list to its top-k prefix (the pruned-list variant used
// by the heatmap flag).
RankedFilterList top_prefix(const RankedFilterList& list, std::size_t k);

} // namespace loft
