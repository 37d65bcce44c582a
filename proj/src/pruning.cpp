#include "loft/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "loft/errors.hpp"
#include "loft/metrics.hpp"

namespace loft {

TicketMask prune_filters(const ConvStackWeights& weights, const ConvStackSpec& spec,
                         double ratio) {
    if (ratio < 0.0 || ratio >= 1.0) {
        throw ConfigError("prune_filters: pruning ratio outside [0, 1)");
    }
    TicketMask mask;
    mask.ratio = ratio;
    mask.kept.resize(spec.num_conv_layers());
    for (std::size_t layer = 0; layer < spec.num_conv_layers(); ++layer) {
        const std::size_t c_out = spec.layer_out_channels(layer);
        if (spec.layer_in_sensitive_block(layer)) {
            mask.skipped_layers.push_back(layer);
            mask.kept[layer].resize(c_out);
            for (std::size_t f = 0; f < c_out; ++f) {
                mask.kept[layer][f] = f;
            }
            continue;
        }
        const std::size_t keep = static_cast<std::size_t>(
            std::ceil((1.0 - ratio) * static_cast<double>(c_out)));
        if (keep == 0) {
            throw ConfigError("prune_filters: layer " + std::to_string(layer) +
                              " would keep 0 filters");
        }
        const RankedFilterList ranked = rank_filters(weights.layers[layer],
                                                     static_cast<int>(layer), 0);
        std::vector<std::size_t> kept;
        kept.reserve(keep);
        for (std::size_t i = 0; i < keep; ++i) {
            kept.push_back(ranked.entries[i].first);
        }
        std::sort(kept.begin(), kept.end());
        mask.kept[layer] = std::move(kept);
    }
    return mask;
}

PrunedModel apply_ticket(const ConvStackWeights& weights, const ConvStackSpec& spec,
                         const TicketMask& mask) {
    if (mask.kept.size() != spec.num_conv_layers()) {
        throw DimensionError("apply_ticket: mask layer count mismatch");
    }
    PrunedModel out;
    out.spec = spec;
    for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
        out.spec.blocks[b].c_mid = mask.kept[2 * b].size();
        out.spec.blocks[b].c_out = mask.kept[2 * b + 1].size();
        if (b + 1 < spec.blocks.size()) {
            out.spec.blocks[b + 1].c_in = mask.kept[2 * b + 1].size();
        }
    }

    // Input-channel selection of layer L follows the kept filters of L-1.
    std::vector<std::size_t> prev_kept; // empty = all input channels survive
    for (std::size_t layer = 0; layer < spec.num_conv_layers(); ++layer) {
        const Tensor& bank = weights.layers[layer];
        const std::vector<std::size_t>& rows = mask.kept[layer];
        const std::size_t c_in_new = prev_kept.empty() ? bank.shape[1] : prev_kept.size();
        Tensor pruned = Tensor::zeros({rows.size(), c_in_new, 3, 3});
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (std::size_t c = 0; c < c_in_new; ++c) {
                const std::size_t src_c = prev_kept.empty() ? c : prev_kept[c];
                std::copy_n(&bank.data[(rows[i] * bank.shape[1] + src_c) * 9], 9,
                            &pruned.data[(i * c_in_new + c) * 9]);
            }
        }
        out.weights.layers.push_back(std::move(pruned));
        const std::size_t c_out = spec.layer_out_channels(layer);
        prev_kept = rows.size() == c_out ? std::vector<std::size_t>{} : rows;
    }

    const std::vector<std::size_t>& last_kept = mask.kept.back();
    out.weights.head = Tensor::zeros({spec.num_classes, last_kept.size()});
    for (std::size_t cls = 0; cls < spec.num_classes; ++cls) {
        for (std::size_t c = 0; c < last_kept.size(); ++c) {
            out.weights.head(cls, c) = weights.head(cls, last_kept[c]);
        }
    }
    out.spec.validate();
    return out;
}

} // namespace loft
