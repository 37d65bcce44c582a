#pragma once

#include <cstddef>
#include <vector>

#include "loft/partition.hpp"

namespace loft {

// One-shot magnitude ticket: per conv layer the ascending kept-filter index
// set. Layers of sensitive blocks are skipped (fully kept).
struct TicketMask {
    std::vector<std::vector<std::size_t>> kept; // per conv layer
    double ratio = 0.0;
    std::vector<std::size_t> skipped_layers;
};

// Keeps the top ceil((1-ratio)*c_out) filters of every non-skipped conv layer
// by l2 norm (ties by ascending index). Downstream input channels follow when
// the mask is applied.
TicketMask prune_filters(const ConvStackWeights& weights, const ConvStackSpec& spec,
                         double ratio);

struct PrunedModel {
    ConvStackSpec spec;
    ConvStackWeights weights;
};

// Materializes the ticket: selected filters of each layer, matching input
// channels of the next layer, and the head columns of the surviving last
// channels.
PrunedModel apply_ticket(const ConvStackWeights& weights, const ConvStackSpec& spec,
                         const TicketMask& mask);

} // namespace loft
