#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "loft/metrics.hpp"
#include "loft/partition.hpp"

namespace loft {

enum class Protocol { loft, local_sgd, gpipe_model };

const char* protocol_name(Protocol p);

struct RoundRecord {
    std::size_t round = 0;
    std::vector<std::uint64_t> bytes_up;   // sent by each worker
    std::vector<std::uint64_t> bytes_down; // received by each worker
    std::vector<std::uint64_t> peak_param_bytes;
};

struct CommLedger {
    Protocol protocol = Protocol::loft;
    std::size_t workers = 0;
    std::vector<RoundRecord> rounds;

    std::uint64_t total_bytes() const;
    std::uint64_t peak_param_bytes() const;
};

struct ScheduleConfig {
    std::size_t S = 1;
    std::size_t T = 1;
    std::size_t ell = 1;
    std::size_t batch_size = 32;
    double eta = 0.05;
    std::uint64_t master_seed = 1;
    // Per-worker seed offsets; defaults to the worker index. Setting equal
    // offsets gives workers identical local randomness.
    std::vector<std::uint64_t> worker_seed_offsets;
    bool freeze_partition = false; // keep round-0 partition for all rounds

    std::uint64_t worker_offset(std::size_t s) const {
        return s < worker_seed_offsets.size() ? worker_seed_offsets[s]
                                              : static_cast<std::uint64_t>(s);
    }
    void validate() const;
};

struct ImageDataset {
    std::vector<Tensor> images;
    std::vector<int> labels;
    std::size_t num_classes = 2;
};

struct PretrainResult {
    ConvStackWeights weights;
    CommLedger ledger;
    std::vector<std::size_t> tracked_layers;
    // snapshots[l][e]: ranking of tracked layer l at epoch e (0 = init,
    // then one per synchronization round).
    std::vector<std::vector<RankedFilterList>> snapshots;
    std::vector<double> round_losses; // full-train loss after each round
};

// Algorithm 1: per round filterPartition -> S independent local trainings ->
// aggregate. The global weights are only ever read by the partition step and
// replaced by the aggregate step; this is asserted via a content hash.
PretrainResult run_loft_pretrain(ConvStackWeights weights, const ConvStackSpec& spec,
                                 const ImageDataset& data, const ScheduleConfig& sched);

// Data-parallel baseline: every worker trains a full replica on its
// round-robin shard for ell steps, then replicas are averaged.
PretrainResult run_local_sgd(ConvStackWeights weights, const ConvStackSpec& spec,
                             const ImageDataset& data, const ScheduleConfig& sched);

struct BatchShape {
    std::size_t batch = 0, channels = 0, height = 0, width = 0;
};

// Analytic pipeline-parallel cost model: per iteration and stage boundary,
// activation bytes forward plus gradient bytes backward. Nothing is executed.
CommLedger comm_cost_gpipe(const ConvStackSpec& spec, const BatchShape& batch_shape,
                           std::size_t iterations, std::size_t S);

struct LedgerReportRow {
    std::string protocol;
    std::size_t workers = 0;
    std::uint64_t total_bytes = 0;
    double ratio_vs_loft = 0.0;
    std::uint64_t peak_param_bytes = 0;
};

struct LedgerReport {
    std::vector<LedgerReportRow> rows;
};

LedgerReport ledger_report(const std::vector<CommLedger>& ledgers);

// Closed-form byte counts; tests assert these equal the measured serialized
// sizes exactly.
std::uint64_t analytic_subnetwork_bytes(const ConvStackSpec& spec, std::size_t S);
std::uint64_t analytic_loft_total_bytes(const ConvStackSpec& spec, std::size_t S, std::size_t T);
std::uint64_t analytic_local_sgd_total_bytes(const ConvStackSpec& spec, std::size_t S,
                                             std::size_t T);
std::uint64_t analytic_gpipe_total_bytes(const ConvStackSpec& spec, const BatchShape& batch_shape,
                                         std::size_t iterations, std::size_t S);

// Deterministic round-robin shard of sample indices for worker s of S.
std::vector<std::size_t> round_robin_shard(std::size_t n, std::size_t S, std::size_t s);

// Slices the dataset (optionally restricted to `indices`) into batches of
// `batch_size` after a deterministic shuffle drawn from rng.
std::vector<Batch> make_batches(const ImageDataset& data, const std::vector<std::size_t>& indices,
                                std::size_t batch_size, Rng& rng);

double full_train_loss(const ConvStackWeights& weights, const ConvStackSpec& spec,
                       const ImageDataset& data);

} // namespace loft
