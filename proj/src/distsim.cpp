#include "loft/distsim.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "loft/errors.hpp"
#include "loft/hash.hpp"
#include "loft/serialize.hpp"

namespace loft {

const char* protocol_name(Protocol p) {
    switch (p) {
        case Protocol::loft: return "loft";
        case Protocol::local_sgd: return "local_sgd";
        case Protocol::gpipe_model: return "gpipe_model";
    }
    return "unknown";
}

std::uint64_t CommLedger::total_bytes() const {
    std::uint64_t total = 0;
    for (const RoundRecord& r : rounds) {
        for (std::uint64_t b : r.bytes_up) {
            total += b;
        }
        for (std::uint64_t b : r.bytes_down) {
            total += b;
        }
    }
    return total;
}

std::uint64_t CommLedger::peak_param_bytes() const {
    std::uint64_t peak = 0;
    for (const RoundRecord& r : rounds) {
        for (std::uint64_t b : r.peak_param_bytes) {
            peak = std::max(peak, b);
        }
    }
    return peak;
}

void ScheduleConfig::validate() const {
    if (S < 1 || T < 1 || ell < 1) {
        throw ConfigError("schedule: S, T and ell must all be >= 1");
    }
    if (batch_size < 1) {
        throw ConfigError("schedule: batch_size must be >= 1");
    }
    if (!(eta > 0.0)) {
        throw ConfigError("schedule: eta must be positive");
    }
}

std::vector<std::size_t> round_robin_shard(std::size_t n, std::size_t S, std::size_t s) {
    std::vector<std::size_t> out;
    for (std::size_t i = s; i < n; i += S) {
        out.push_back(i);
    }
    return out;
}

std::vector<Batch> make_batches(const ImageDataset& data, const std::vector<std::size_t>& indices,
                                std::size_t batch_size, Rng& rng) {
    std::vector<std::size_t> order = indices;
    rng.shuffle(order);
    std::vector<Batch> batches;
    std::size_t pos = 0;
    while (pos < order.size()) {
        const std::size_t take = std::min(batch_size, order.size() - pos);
        Batch b;
        b.images.reserve(take);
        b.labels.reserve(take);
        for (std::size_t k = 0; k < take; ++k) {
            b.images.push_back(data.images[order[pos + k]]);
            b.labels.push_back(data.labels[order[pos + k]]);
        }
        batches.push_back(std::move(b));
        pos += take;
    }
    return batches;
}

double full_train_loss(const ConvStackWeights& weights, const ConvStackSpec& spec,
                       const ImageDataset& data) {
    Batch all;
    all.images = data.images;
    all.labels = data.labels;
    const Tensor logits = convstack_forward(weights, spec, all);
    return convstack_loss(logits, all.labels, spec.loss).loss;
}

namespace {

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

void take_snapshots(const ConvStackWeights& weights, const std::vector<std::size_t>& tracked,
                    int epoch, std::vector<std::vector<RankedFilterList>>& snapshots) {
    for (std::size_t l = 0; l < tracked.size(); ++l) {
        snapshots[l].push_back(rank_filters(weights.layers[tracked[l]],
                                            static_cast<int>(tracked[l]), epoch));
    }
}

} // namespace

PretrainResult run_loft_pretrain(ConvStackWeights weights, const ConvStackSpec& spec,
                                 const ImageDataset& data, const ScheduleConfig& sched) {
    sched.validate();
    spec.validate_partition(sched.S);
    if (data.images.empty()) {
        throw DataError("run_loft_pretrain: empty dataset");
    }

    PretrainResult result;
    result.tracked_layers = spec.tracked_layers();
    result.snapshots.resize(result.tracked_layers.size());
    take_snapshots(weights, result.tracked_layers, 0, result.snapshots);
    result.ledger.protocol = Protocol::loft;
    result.ledger.workers = sched.S;

    const std::vector<std::size_t> full = all_indices(data.images.size());
    for (std::size_t round = 1; round <= sched.T; ++round) {
        Rng part_rng = Rng::derive(sched.master_seed,
                                   {stream::kPartition, sched.freeze_partition ? 0 : round});
        PartitionResult part = filter_partition(weights, spec, sched.S, part_rng);

        // The full CNN is never trained directly: the global weights may not
        // change while workers run.
        const std::uint64_t global_hash = fnv1a64(serialize_weights(weights));

        RoundRecord record;
        record.round = round;
        record.bytes_up.resize(sched.S);
        record.bytes_down.resize(sched.S);
        record.peak_param_bytes.resize(sched.S);
        std::vector<ConvStackWeights> trained(sched.S);
        for (std::size_t s = 0; s < sched.S; ++s) {
            record.bytes_down[s] = serialize_weights(part.parts[s]).size();
            Rng worker_rng = Rng::derive(sched.master_seed,
                                         {stream::kWorker, sched.worker_offset(s), round});
            const std::vector<Batch> batches =
                make_batches(data, full, sched.batch_size, worker_rng);
            try {
                trained[s] = train_local(std::move(part.parts[s]), part.sub_spec, batches,
                                         sched.ell, sched.eta, worker_rng);
            } catch (const NumericError& err) {
                throw NumericError("loft round " + std::to_string(round) + ", worker " +
                                   std::to_string(s) + ": " + err.what());
            }
            record.bytes_up[s] = serialize_weights(trained[s]).size();
            record.peak_param_bytes[s] = std::max(record.bytes_up[s], record.bytes_down[s]);
        }
        if (fnv1a64(serialize_weights(weights)) != global_hash) {
            throw CorruptionError("run_loft_pretrain: global weights changed during the "
                                  "local-training phase of round " + std::to_string(round));
        }
        weights = aggregate(weights, spec, part.specs, trained);
        result.ledger.rounds.push_back(std::move(record));
        take_snapshots(weights, result.tracked_layers, static_cast<int>(round), result.snapshots);
        result.round_losses.push_back(full_train_loss(weights, spec, data));
    }
    result.weights = std::move(weights);
    return result;
}

PretrainResult run_local_sgd(ConvStackWeights weights, const ConvStackSpec& spec,
                             const ImageDataset& data, const ScheduleConfig& sched) {
    sched.validate();
    spec.validate();
    if (data.images.empty()) {
        throw DataError("run_local_sgd: empty dataset");
    }

    PretrainResult result;
    result.tracked_layers = spec.tracked_layers();
    result.snapshots.resize(result.tracked_layers.size());
    take_snapshots(weights, result.tracked_layers, 0, result.snapshots);
    result.ledger.protocol = Protocol::local_sgd;
    result.ledger.workers = sched.S;

    const std::uint64_t model_bytes = serialize_weights(weights).size();
    for (std::size_t round = 1; round <= sched.T; ++round) {
        RoundRecord record;
        record.round = round;
        record.bytes_up.assign(sched.S, model_bytes);
        record.bytes_down.assign(sched.S, model_bytes);
        record.peak_param_bytes.assign(sched.S, model_bytes);

        std::vector<ConvStackWeights> replicas;
        replicas.reserve(sched.S);
        for (std::size_t s = 0; s < sched.S; ++s) {
            Rng worker_rng = Rng::derive(sched.master_seed,
                                         {stream::kWorker, sched.worker_offset(s), round});
            const std::vector<std::size_t> shard =
                round_robin_shard(data.images.size(), sched.S, s);
            if (shard.empty()) {
                throw DataError("run_local_sgd: worker " + std::to_string(s) +
                                " received an empty shard");
            }
            const std::vector<Batch> batches =
                make_batches(data, shard, sched.batch_size, worker_rng);
            try {
                replicas.push_back(train_local(weights, spec, batches, sched.ell, sched.eta,
                                               worker_rng));
            } catch (const NumericError& err) {
                throw NumericError("local_sgd round " + std::to_string(round) + ", worker " +
                                   std::to_string(s) + ": " + err.what());
            }
        }
        // average replicas in worker order
        ConvStackWeights averaged = zeros_like(weights);
        const double inv_s = 1.0 / static_cast<double>(sched.S);
        for (const ConvStackWeights& rep : replicas) {
            for (std::size_t l = 0; l < averaged.layers.size(); ++l) {
                for (std::size_t k = 0; k < averaged.layers[l].data.size(); ++k) {
                    averaged.layers[l].data[k] += inv_s * rep.layers[l].data[k];
                }
            }
            for (std::size_t k = 0; k < averaged.head.data.size(); ++k) {
                averaged.head.data[k] += inv_s * rep.head.data[k];
            }
        }
        weights = std::move(averaged);
        result.ledger.rounds.push_back(std::move(record));
        take_snapshots(weights, result.tracked_layers, static_cast<int>(round), result.snapshots);
        result.round_losses.push_back(full_train_loss(weights, spec, data));
    }
    result.weights = std::move(weights);
    return result;
}

namespace {

// Contiguous stage cuts: the first (layers % S) stages take one extra layer.
std::vector<std::size_t> stage_sizes(std::size_t layers, std::size_t S) {
    std::vector<std::size_t> sizes(S, layers / S);
    for (std::size_t s = 0; s < layers % S; ++s) {
        ++sizes[s];
    }
    return sizes;
}

} // namespace

CommLedger comm_cost_gpipe(const ConvStackSpec& spec, const BatchShape& batch_shape,
                           std::size_t iterations, std::size_t S) {
    spec.validate();
    if (S < 2) {
        throw ConfigError("comm_cost_gpipe: need at least 2 pipeline stages");
    }
    const std::size_t layers = spec.num_conv_layers();
    if (layers < S) {
        throw ConfigError("comm_cost_gpipe: " + std::to_string(layers) +
                          " conv layers cannot fill " + std::to_string(S) + " stages");
    }
    if (batch_shape.batch == 0 || batch_shape.height == 0 || batch_shape.width == 0) {
        throw ConfigError("comm_cost_gpipe: batch shape must be positive");
    }

    const std::vector<std::size_t> sizes = stage_sizes(layers, S);
    std::vector<std::uint64_t> boundary_bytes; // activation bytes at each cut
    std::vector<std::uint64_t> stage_params(S, 0);
    std::size_t layer = 0;
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t k = 0; k < sizes[s]; ++k, ++layer) {
            stage_params[s] += spec.layer_out_channels(layer) * spec.layer_in_channels(layer) * 9;
        }
        if (s + 1 < S) {
            const std::size_t c = spec.layer_out_channels(layer - 1);
            boundary_bytes.push_back(8ull * batch_shape.batch * c * batch_shape.height *
                                     batch_shape.width);
        }
    }
    stage_params[S - 1] += spec.num_classes * spec.last_channels();

    CommLedger ledger;
    ledger.protocol = Protocol::gpipe_model;
    ledger.workers = S;
    for (std::size_t it = 0; it < iterations; ++it) {
        RoundRecord record;
        record.round = it + 1;
        record.bytes_up.assign(S, 0);
        record.bytes_down.assign(S, 0);
        record.peak_param_bytes.resize(S);
        for (std::size_t s = 0; s < S; ++s) {
            record.peak_param_bytes[s] = stage_params[s] * 8u;
        }
        for (std::size_t b = 0; b + 1 < S; ++b) {
            // stage b sends activations forward and receives gradients;
            // stage b+1 mirrors it
            record.bytes_up[b] += boundary_bytes[b];
            record.bytes_down[b] += boundary_bytes[b];
            record.bytes_up[b + 1] += boundary_bytes[b];
            record.bytes_down[b + 1] += boundary_bytes[b];
        }
        ledger.rounds.push_back(std::move(record));
    }
    return ledger;
}

LedgerReport ledger_report(const std::vector<CommLedger>& ledgers) {
    if (ledgers.empty()) {
        throw ConfigError("ledger_report: need at least one ledger");
    }
    std::uint64_t reference = 0;
    for (const CommLedger& l : ledgers) {
        if (l.protocol == Protocol::loft) {
            reference = l.total_bytes();
            break;
        }
    }
    if (reference == 0) {
        reference = ledgers.front().total_bytes();
    }
    LedgerReport report;
    for (const CommLedger& l : ledgers) {
        LedgerReportRow row;
        row.protocol = protocol_name(l.protocol);
        row.workers = l.workers;
        row.total_bytes = l.total_bytes();
        row.ratio_vs_loft = reference == 0
                                ? 1.0
                                : static_cast<double>(row.total_bytes) /
                                      static_cast<double>(reference);
        row.peak_param_bytes = l.peak_param_bytes();
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::uint64_t analytic_subnetwork_bytes(const ConvStackSpec& spec, std::size_t S) {
    spec.validate_partition(S);
    std::uint64_t params = spec.num_classes * spec.last_channels();
    for (const BlockSpec& blk : spec.blocks) {
        if (blk.sensitive) {
            params += blk.c_mid * blk.c_in * 9 + blk.c_out * blk.c_mid * 9;
        } else {
            params += (blk.c_mid / S) * blk.c_in * 9 + blk.c_out * (blk.c_mid / S) * 9;
        }
    }
    return params * 8u;
}

std::uint64_t analytic_loft_total_bytes(const ConvStackSpec& spec, std::size_t S, std::size_t T) {
    return 2u * static_cast<std::uint64_t>(S) * static_cast<std::uint64_t>(T) *
           analytic_subnetwork_bytes(spec, S);
}

std::uint64_t analytic_local_sgd_total_bytes(const ConvStackSpec& spec, std::size_t S,
                                             std::size_t T) {
    return 2u * static_cast<std::uint64_t>(S) * static_cast<std::uint64_t>(T) *
           static_cast<std::uint64_t>(spec.param_count()) * 8u;
}

std::uint64_t analytic_gpipe_total_bytes(const ConvStackSpec& spec, const BatchShape& batch_shape,
                                         std::size_t iterations, std::size_t S) {
    const CommLedger ledger = comm_cost_gpipe(spec, batch_shape, std::min<std::size_t>(1, iterations), S);
    if (iterations == 0) {
        return 0;
    }
    return ledger.total_bytes() * iterations;
}

} // namespace loft
