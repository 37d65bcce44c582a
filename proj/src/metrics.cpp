#include "loft/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include "loft/errors.hpp"

namespace loft {

RankedFilterList rank_filters(const Tensor& bank, int layer_id, int epoch) {
    if (bank.shape.size() != 4) {
        throw DimensionError("rank_filters: bank must be (c_out, c_in, k, k)");
    }
    const std::size_t c_out = bank.shape[0];
    if (c_out == 0) {
        throw DimensionError("rank_filters: empty bank");
    }
    const std::size_t per_filter = bank.numel() / c_out;

    RankedFilterList out;
    out.layer_id = layer_id;
    out.epoch = epoch;
    out.entries.reserve(c_out);
    for (std::size_t f = 0; f < c_out; ++f) {
        double acc = 0.0;
        const double* base = &bank.data[f * per_filter];
        for (std::size_t k = 0; k < per_filter; ++k) {
            acc += base[k] * base[k];
        }
        out.entries.emplace_back(f, std::sqrt(acc));
    }
    std::sort(out.entries.begin(), out.entries.end(), [](const auto& lhs, const auto& rhs) {
        if (lhs.second != rhs.second) {
            return lhs.second > rhs.second;
        }
        return lhs.first < rhs.first;
    });
    return out;
}

namespace {

std::unordered_map<std::size_t, std::size_t> position_index(const RankedFilterList& list,
                                                            const char* who) {
    std::unordered_map<std::size_t, std::size_t> pos;
    pos.reserve(list.size());
    for (std::size_t i = 0; i < list.size(); ++i) {
        const auto [it, inserted] = pos.emplace(list.entries[i].first, i + 1);
        if (!inserted) {
            throw CorruptionError(std::string(who) + ": duplicate filter index " +
                                  std::to_string(list.entries[i].first));
        }
    }
    return pos;
}

} // namespace

RankMap rank_map(const RankedFilterList& a, const RankedFilterList& b) {
    position_index(a, "rank_map: list A");
    const auto pos_b = position_index(b, "rank_map: list B");
    RankMap map;
    map.l = b.size();
    map.sigma.resize(a.size(), 0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto it = pos_b.find(a.entries[i].first);
        if (it == pos_b.end()) {
            map.missing.push_back(i + 1);
        } else {
            map.sigma[i] = it->second;
        }
    }
    return map;
}

double footrule(const RankMap& map) {
    if (!map.complete()) {
        throw PreconditionError("footrule: rank map has missing elements; use filter_distance");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < map.sigma.size(); ++i) {
        const double pos_a = static_cast<double>(i + 1);
        const double pos_b = static_cast<double>(map.sigma[i]);
        total += std::abs(pos_a - pos_b);
    }
    return total;
}

double weighted_footrule(const RankMap& map, const std::vector<double>& weights) {
    if (!map.complete()) {
        throw PreconditionError("weighted_footrule: rank map has missing elements");
    }
    if (weights.size() != map.sigma.size()) {
        throw DimensionError("weighted_footrule: weights length mismatch");
    }
    for (double w : weights) {
        if (w <= 0.0) {
            throw ConfigError("weighted_footrule: weights must be positive");
        }
    }
    const std::size_t l = map.sigma.size();
    double total = 0.0;
    for (std::size_t i = 0; i < l; ++i) {
        double before_a = 0.0;
        double before_b = 0.0;
        for (std::size_t j = 0; j < l; ++j) {
            if (j < i) {
                before_a += weights[j];
            }
            if (map.sigma[j] < map.sigma[i]) {
                before_b += weights[j];
            }
        }
        total += weights[i] * std::abs(before_a - before_b);
    }
    return total;
}

double filter_distance(const RankedFilterList& a, const RankedFilterList& b) {
    const RankMap map = rank_map(a, b);
    const double truncated = std::log(static_cast<double>(map.l + 1));
    double total = 0.0;
    for (std::size_t i = 0; i < map.sigma.size(); ++i) {
        const double rank_a = static_cast<double>(i + 1);
        const double weight = 1.0 / rank_a;
        if (map.sigma[i] == 0) {
            total += weight * std::abs(truncated - std::log(rank_a));
        } else {
            total += weight * std::abs(std::log(rank_a) - std::log(static_cast<double>(map.sigma[i])));
        }
    }
    return total;
}

std::vector<double> pairwise_heatmap(const std::vector<RankedFilterList>& snapshots) {
    if (snapshots.size() < 2) {
        throw PreconditionError("pairwise_heatmap: need at least 2 snapshots");
    }
    for (const RankedFilterList& s : snapshots) {
        if (s.layer_id != snapshots.front().layer_id) {
            throw PreconditionError("pairwise_heatmap: snapshots mix layers");
        }
    }
    const std::size_t e = snapshots.size();
    std::vector<double> heat(e * e, 0.0);
    for (std::size_t i = 0; i < e; ++i) {
        for (std::size_t j = 0; j < e; ++j) {
            heat[i * e + j] = (i == j) ? 0.0 : filter_distance(snapshots[i], snapshots[j]);
        }
    }
    return heat;
}

std::vector<double> distance_to_final(const std::vector<std::vector<RankedFilterList>>& per_layer) {
    if (per_layer.empty()) {
        throw PreconditionError("distance_to_final: no layers");
    }
    const std::size_t e = per_layer.front().size();
    if (e < 2) {
        throw PreconditionError("distance_to_final: need at least 2 snapshots");
    }
    for (const auto& snaps : per_layer) {
        if (snaps.size() != e) {
            throw DimensionError("distance_to_final: snapshot counts differ across layers");
        }
    }
    std::vector<double> curve(e, 0.0);
    for (std::size_t t = 0; t < e; ++t) {
        double acc = 0.0;
        for (const auto& snaps : per_layer) {
            acc += filter_distance(snaps[t], snaps[e - 1]);
        }
        curve[t] = acc / static_cast<double>(per_layer.size());
    }
    return curve;
}

RankedFilterList top_prefix(const RankedFilterList& list, std::size_t k) {
    RankedFilterList out = list;
    if (k < out.entries.size()) {
        out.entries.resize(k);
    }
    return out;
}

} // namespace loft
