#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "loft/rng.hpp"
#include "loft/tensor.hpp"

namespace loft {

// One conv block: two 3x3 stride-1 layers c_in -> c_mid -> c_out with ReLU
// after each. Sensitive blocks (always the first block and any block flagged
// strided) are never partitioned or pruned; the strided flag only feeds the
// sensitivity rule, the convolution itself is fixed at stride 1.
struct BlockSpec {
    std::size_t c_in = 0;
    std::size_t c_mid = 0;
    std::size_t c_out = 0;
    bool sensitive = false;
    bool strided = false;
};

enum class LossKind { mse, cross_entropy };

struct ConvStackSpec {
    std::vector<BlockSpec> blocks;
    std::size_t num_classes = 2;
    LossKind loss = LossKind::cross_entropy;

    std::size_t num_conv_layers() const { return blocks.size() * 2; }
    std::size_t layer_in_channels(std::size_t layer) const;
    std::size_t layer_out_channels(std::size_t layer) const;
    std::size_t last_channels() const { return blocks.back().c_out; }
    bool layer_in_sensitive_block(std::size_t layer) const {
        return blocks[layer / 2].sensitive;
    }

    // Indices of conv layers belonging to non-sensitive blocks; these are the
    // layers tracked by ranking snapshots and eligible for pruning.
    std::vector<std::size_t> tracked_layers() const;

    std::size_t param_count() const;
    void validate() const;
    void validate_partition(std::size_t S) const;
};

// channels: the per-layer output channel chain, two entries per block
// (e.g. {8, 16, 16, 32} builds two blocks from input_channels).
ConvStackSpec make_convstack_spec(std::size_t input_channels,
                                  const std::vector<std::size_t>& channels,
                                  std::size_t num_classes, LossKind loss,
                                  const std::vector<std::size_t>& strided_blocks = {});

struct ConvStackWeights {
    std::vector<Tensor> layers; // (c_out, c_in, 3, 3) per conv layer
    Tensor head;                // (num_classes, last_channels), bias-free

    std::size_t param_count() const;
};

ConvStackWeights init_convstack(const ConvStackSpec& spec, Rng& rng);
ConvStackWeights zeros_like(const ConvStackWeights& w);

// Per-worker partition bookkeeping: for every block the ascending kept-filter
// index list of the first conv layer (empty for sensitive blocks, which are
// shared in full). The second conv layer keeps the same list as its input
// channels.
struct SubnetworkSpec {
    std::size_t worker_id = 0;
    std::vector<std::vector<std::size_t>> kept; // per block
};

struct PartitionResult {
    ConvStackSpec sub_spec; // common shape of every subnetwork
    std::vector<SubnetworkSpec> specs;
    std::vector<ConvStackWeights> parts;
};

// Algorithm 1's filterPartition: a fresh uniform permutation of each
// non-sensitive block's mid-channels, chunked into S equal lists. Sub-weights
// are copies; shared parameters (sensitive blocks, head) go to every worker.
PartitionResult filter_partition(const ConvStackWeights& weights, const ConvStackSpec& spec,
                                 std::size_t S, Rng& rng);

// Writes partitioned filters/channels back to their original indices (each
// exactly once) and replaces shared parameters by the arithmetic mean over
// workers. Rejects overlapping or incomplete kept lists.
ConvStackWeights aggregate(const ConvStackWeights& global, const ConvStackSpec& spec,
                           const std::vector<SubnetworkSpec>& specs,
                           const std::vector<ConvStackWeights>& parts);

struct Batch {
    std::vector<Tensor> images;
    std::vector<int> labels;
};

struct ForwardCache {
    // Per sample: conv layer inputs, pre-activations, pooled features.
    std::vector<std::vector<Tensor>> inputs;
    std::vector<std::vector<Tensor>> preacts;
    std::vector<std::vector<double>> pooled;
};

// Block-wise conv -> ReLU -> conv -> ReLU, global average pool, linear head.
// logits: (batch, num_classes).
Tensor convstack_forward(const ConvStackWeights& weights, const ConvStackSpec& spec,
                         const Batch& batch, ForwardCache* cache = nullptr);

struct LossGrad {
    double loss = 0.0;
    Tensor dlogits; // (batch, num_classes)
};

LossGrad convstack_loss(const Tensor& logits, const std::vector<int>& labels, LossKind kind);

ConvStackWeights convstack_backward(const ConvStackWeights& weights, const ConvStackSpec& spec,
                                    const Batch& batch, const ForwardCache& cache,
                                    const Tensor& dlogits);

void sgd_update(ConvStackWeights& weights, const ConvStackWeights& grads, double eta);

// ell plain-SGD steps over the provided batches (sampled with rng); no
// communication. Deterministic for a fixed rng stream.
ConvStackWeights train_local(ConvStackWeights weights, const ConvStackSpec& spec,
                             const std::vector<Batch>& batches, std::size_t ell, double eta,
                             Rng& rng);

double evaluate_accuracy(const ConvStackWeights& weights, const ConvStackSpec& spec,
                         const std::vector<Tensor>& images, const std::vector<int>& labels);

} // namespace loft
