#include "loft/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "loft/errors.hpp"

namespace loft {

std::size_t ConvStackSpec::layer_in_channels(std::size_t layer) const {
    const BlockSpec& b = blocks[layer / 2];
    return layer % 2 == 0 ? b.c_in : b.c_mid;
}

std::size_t ConvStackSpec::layer_out_channels(std::size_t layer) const {
    const BlockSpec& b = blocks[layer / 2];
    return layer % 2 == 0 ? b.c_mid : b.c_out;
}

std::vector<std::size_t> ConvStackSpec::tracked_layers() const {
    std::vector<std::size_t> out;
    for (std::size_t layer = 0; layer < num_conv_layers(); ++layer) {
        if (!layer_in_sensitive_block(layer)) {
            out.push_back(layer);
        }
    }
    return out;
}

std::size_t ConvStackSpec::param_count() const {
    std::size_t count = 0;
    for (std::size_t layer = 0; layer < num_conv_layers(); ++layer) {
        count += layer_out_channels(layer) * layer_in_channels(layer) * 9;
    }
    count += num_classes * last_channels();
    return count;
}

void ConvStackSpec::validate() const {
    if (blocks.empty()) {
        throw ConfigError("conv stack: at least one block required");
    }
    if (num_classes < 2) {
        throw ConfigError("conv stack: num_classes must be >= 2");
    }
    if (!blocks.front().sensitive) {
        throw ConfigError("conv stack: the first block must be sensitive");
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const BlockSpec& blk = blocks[b];
        if (blk.c_in == 0 || blk.c_mid == 0 || blk.c_out == 0) {
            throw ConfigError("conv stack: block " + std::to_string(b) + " has zero channels");
        }
        if (blk.strided && !blk.sensitive) {
            throw ConfigError("conv stack: strided block " + std::to_string(b) +
                              " must be sensitive");
        }
        if (b + 1 < blocks.size() && blocks[b + 1].c_in != blk.c_out) {
            throw ConfigError("conv stack: channel chain broken between blocks " +
                              std::to_string(b) + " and " + std::to_string(b + 1));
        }
    }
}

void ConvStackSpec::validate_partition(std::size_t S) const {
    validate();
    if (S < 1) {
        throw ConfigError("partition: S must be >= 1");
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (blocks[b].sensitive) {
            continue;
        }
        if (S > blocks[b].c_mid) {
            throw ConfigError("partition: S = " + std::to_string(S) + " exceeds the " +
                              std::to_string(blocks[b].c_mid) + " filters of block " +
                              std::to_string(b));
        }
        if (blocks[b].c_mid % S != 0) {
            throw ConfigError("partition: block " + std::to_string(b) + " has " +
                              std::to_string(blocks[b].c_mid) +
                              " filters, not divisible by S = " + std::to_string(S));
        }
    }
}

ConvStackSpec make_convstack_spec(std::size_t input_channels,
                                  const std::vector<std::size_t>& channels,
                                  std::size_t num_classes, LossKind loss,
                                  const std::vector<std::size_t>& strided_blocks) {
    if (channels.empty() || channels.size() % 2 != 0) {
        throw ConfigError("conv stack: channel chain needs two entries per block");
    }
    ConvStackSpec spec;
    spec.num_classes = num_classes;
    spec.loss = loss;
    std::size_t prev = input_channels;
    for (std::size_t b = 0; b < channels.size() / 2; ++b) {
        BlockSpec blk;
        blk.c_in = prev;
        blk.c_mid = channels[2 * b];
        blk.c_out = channels[2 * b + 1];
        blk.strided = std::find(strided_blocks.begin(), strided_blocks.end(), b) !=
                      strided_blocks.end();
        blk.sensitive = blk.strided || b == 0;
        prev = blk.c_out;
        spec.blocks.push_back(blk);
    }
    spec.validate();
    return spec;
}

std::size_t ConvStackWeights::param_count() const {
    std::size_t count = head.numel();
    for (const Tensor& t : layers) {
        count += t.numel();
    }
    return count;
}

ConvStackWeights init_convstack(const ConvStackSpec& spec, Rng& rng) {
    spec.validate();
    ConvStackWeights w;
    for (std::size_t layer = 0; layer < spec.num_conv_layers(); ++layer) {
        const std::size_t c_in = spec.layer_in_channels(layer);
        const std::size_t c_out = spec.layer_out_channels(layer);
        Tensor bank = Tensor::zeros({c_out, c_in, 3, 3});
        const double scale = std::sqrt(2.0 / (static_cast<double>(c_in) * 9.0));
        for (double& v : bank.data) {
            v = scale * rng.normal();
        }
        w.layers.push_back(std::move(bank));
    }
    w.head = Tensor::zeros({spec.num_classes, spec.last_channels()});
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.last_channels()));
    for (double& v : w.head.data) {
        v = scale * rng.normal();
    }
    return w;
}

ConvStackWeights zeros_like(const ConvStackWeights& w) {
    ConvStackWeights out;
    out.layers.reserve(w.layers.size());
    for (const Tensor& t : w.layers) {
        out.layers.push_back(Tensor::zeros(t.shape));
    }
    out.head = Tensor::zeros(w.head.shape);
    return out;
}

namespace {

Tensor select_filters(const Tensor& bank, const std::vector<std::size_t>& rows) {
    const std::size_t per_filter = bank.shape[1] * 9;
    Tensor out = Tensor::zeros({rows.size(), bank.shape[1], bank.shape[2], bank.shape[3]});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy_n(&bank.data[rows[i] * per_filter], per_filter, &out.data[i * per_filter]);
    }
    return out;
}

Tensor select_input_channels(const Tensor& bank, const std::vector<std::size_t>& channels) {
    const std::size_t c_out = bank.shape[0];
    Tensor out = Tensor::zeros({c_out, channels.size(), bank.shape[2], bank.shape[3]});
    for (std::size_t o = 0; o < c_out; ++o) {
        for (std::size_t c = 0; c < channels.size(); ++c) {
            std::copy_n(&bank.data[(o * bank.shape[1] + channels[c]) * 9], 9,
                        &out.data[(o * channels.size() + c) * 9]);
        }
    }
    return out;
}

} // namespace

PartitionResult filter_partition(const ConvStackWeights& weights, const ConvStackSpec& spec,
                                 std::size_t S, Rng& rng) {
    spec.validate_partition(S);
    PartitionResult result;
    result.sub_spec = spec;
    for (BlockSpec& blk : result.sub_spec.blocks) {
        if (!blk.sensitive) {
            blk.c_mid /= S;
        }
    }
    result.specs.resize(S);
    result.parts.reserve(S);
    for (std::size_t s = 0; s < S; ++s) {
        result.specs[s].worker_id = s;
        result.specs[s].kept.resize(spec.blocks.size());
    }

    // Fresh permutation per block, chunked into S equal ascending lists.
    for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
        if (spec.blocks[b].sensitive) {
            continue;
        }
        const std::size_t mid = spec.blocks[b].c_mid;
        std::vector<std::size_t> perm(mid);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rng.shuffle(perm);
        const std::size_t chunk = mid / S;
        for (std::size_t s = 0; s < S; ++s) {
            std::vector<std::size_t> kept(perm.begin() + static_cast<long>(s * chunk),
                                          perm.begin() + static_cast<long>((s + 1) * chunk));
            std::sort(kept.begin(), kept.end());
            result.specs[s].kept[b] = std::move(kept);
        }
    }

    for (std::size_t s = 0; s < S; ++s) {
        ConvStackWeights part;
        for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
            const Tensor& first = weights.layers[2 * b];
            const Tensor& second = weights.layers[2 * b + 1];
            if (spec.blocks[b].sensitive) {
                part.layers.push_back(first);
                part.layers.push_back(second);
            } else {
                part.layers.push_back(select_filters(first, result.specs[s].kept[b]));
                part.layers.push_back(select_input_channels(second, result.specs[s].kept[b]));
            }
        }
        part.head = weights.head;
        result.parts.push_back(std::move(part));
    }
    return result;
}

ConvStackWeights aggregate(const ConvStackWeights& global, const ConvStackSpec& spec,
                           const std::vector<SubnetworkSpec>& specs,
                           const std::vector<ConvStackWeights>& parts) {
    const std::size_t S = specs.size();
    if (S == 0 || parts.size() != S) {
        throw ConfigError("aggregate: specs/parts size mismatch");
    }
    // Validate the partition is disjoint and complete per block.
    for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
        if (spec.blocks[b].sensitive) {
            continue;
        }
        std::vector<std::size_t> seen(spec.blocks[b].c_mid, 0);
        for (const SubnetworkSpec& sub : specs) {
            for (std::size_t idx : sub.kept[b]) {
                if (idx >= seen.size()) {
                    throw CorruptionError("aggregate: kept index " + std::to_string(idx) +
                                          " out of range in block " + std::to_string(b));
                }
                if (++seen[idx] > 1) {
                    throw CorruptionError("aggregate: filter " + std::to_string(idx) +
                                          " of block " + std::to_string(b) +
                                          " appears in multiple subnetworks");
                }
            }
        }
        for (std::size_t idx = 0; idx < seen.size(); ++idx) {
            if (seen[idx] == 0) {
                throw CorruptionError("aggregate: incomplete partition, filter " +
                                      std::to_string(idx) + " of block " + std::to_string(b) +
                                      " missing");
            }
        }
    }

    ConvStackWeights out = global;
    const double inv_s = 1.0 / static_cast<double>(S);
    for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
        Tensor& first = out.layers[2 * b];
        Tensor& second = out.layers[2 * b + 1];
        if (spec.blocks[b].sensitive) {
            // shared: arithmetic mean over workers
            std::fill(first.data.begin(), first.data.end(), 0.0);
            std::fill(second.data.begin(), second.data.end(), 0.0);
            for (std::size_t s = 0; s < S; ++s) {
                const Tensor& pf = parts[s].layers[2 * b];
                const Tensor& ps = parts[s].layers[2 * b + 1];
                for (std::size_t i = 0; i < first.data.size(); ++i) {
                    first.data[i] += inv_s * pf.data[i];
                }
                for (std::size_t i = 0; i < second.data.size(); ++i) {
                    second.data[i] += inv_s * ps.data[i];
                }
            }
            continue;
        }
        const std::size_t per_filter = first.shape[1] * 9;
        for (std::size_t s = 0; s < S; ++s) {
            const std::vector<std::size_t>& kept = specs[s].kept[b];
            const Tensor& pf = parts[s].layers[2 * b];
            const Tensor& ps = parts[s].layers[2 * b + 1];
            for (std::size_t i = 0; i < kept.size(); ++i) {
                std::copy_n(&pf.data[i * per_filter], per_filter,
                            &first.data[kept[i] * per_filter]);
            }
            const std::size_t c_out = second.shape[0];
            for (std::size_t o = 0; o < c_out; ++o) {
                for (std::size_t c = 0; c < kept.size(); ++c) {
                    std::copy_n(&ps.data[(o * kept.size() + c) * 9], 9,
                                &second.data[(o * second.shape[1] + kept[c]) * 9]);
                }
            }
        }
    }
    // Head is always shared.
    std::fill(out.head.data.begin(), out.head.data.end(), 0.0);
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t i = 0; i < out.head.data.size(); ++i) {
            out.head.data[i] += inv_s * parts[s].head.data[i];
        }
    }
    return out;
}

Tensor convstack_forward(const ConvStackWeights& weights, const ConvStackSpec& spec,
                         const Batch& batch, ForwardCache* cache) {
    if (batch.images.empty()) {
        throw DimensionError("convstack_forward: empty batch");
    }
    const std::size_t bsz = batch.images.size();
    Tensor logits = Tensor::zeros({bsz, spec.num_classes});
    if (cache != nullptr) {
        cache->inputs.assign(bsz, {});
        cache->preacts.assign(bsz, {});
        cache->pooled.assign(bsz, {});
    }
    for (std::size_t i = 0; i < bsz; ++i) {
        if (batch.images[i].shape.size() != 3 ||
            batch.images[i].shape[0] != spec.blocks.front().c_in) {
            throw DimensionError("convstack_forward: sample " + std::to_string(i) +
                                 " shape mismatch");
        }
        Tensor x = batch.images[i];
        for (std::size_t layer = 0; layer < spec.num_conv_layers(); ++layer) {
            Tensor z = conv2d_forward(x, weights.layers[layer]);
            if (cache != nullptr) {
                cache->inputs[i].push_back(std::move(x));
                cache->preacts[i].push_back(z);
            }
            x = relu(z);
        }
        const std::size_t c_last = x.shape[0];
        const std::size_t area = x.shape[1] * x.shape[2];
        std::vector<double> pooled(c_last, 0.0);
        for (std::size_t c = 0; c < c_last; ++c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < area; ++k) {
                acc += x.data[c * area + k];
            }
            pooled[c] = acc / static_cast<double>(area);
        }
        for (std::size_t cls = 0; cls < spec.num_classes; ++cls) {
            double acc = 0.0;
            for (std::size_t c = 0; c < c_last; ++c) {
                acc += weights.head(cls, c) * pooled[c];
            }
            logits(i, cls) = acc;
        }
        if (cache != nullptr) {
            cache->pooled[i] = std::move(pooled);
        }
    }
    return logits;
}

LossGrad convstack_loss(const Tensor& logits, const std::vector<int>& labels, LossKind kind) {
    const std::size_t bsz = logits.shape[0];
    const std::size_t classes = logits.shape[1];
    if (labels.size() != bsz) {
        throw DimensionError("convstack_loss: labels length mismatch");
    }
    LossGrad out;
    out.dlogits = Tensor::zeros(logits.shape);
    const double inv_b = 1.0 / static_cast<double>(bsz);
    for (std::size_t i = 0; i < bsz; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw DataError("convstack_loss: label out of range");
        }
        if (kind == LossKind::mse) {
            for (std::size_t c = 0; c < classes; ++c) {
                const double target = static_cast<std::size_t>(label) == c ? 1.0 : 0.0;
                const double diff = logits(i, c) - target;
                out.loss += inv_b * diff * diff;
                out.dlogits(i, c) = 2.0 * inv_b * diff;
            }
        } else {
            double max_logit = logits(i, 0);
            for (std::size_t c = 1; c < classes; ++c) {
                max_logit = std::max(max_logit, logits(i, c));
            }
            double z = 0.0;
            for (std::size_t c = 0; c < classes; ++c) {
                z += std::exp(logits(i, c) - max_logit);
            }
            const double log_z = std::log(z) + max_logit;
            out.loss += inv_b * (log_z - logits(i, static_cast<std::size_t>(label)));
            for (std::size_t c = 0; c < classes; ++c) {
                const double p = std::exp(logits(i, c) - log_z);
                const double target = static_cast<std::size_t>(label) == c ? 1.0 : 0.0;
                out.dlogits(i, c) = inv_b * (p - target);
            }
        }
    }
    return out;
}

ConvStackWeights convstack_backward(const ConvStackWeights& weights, const ConvStackSpec& spec,
                                    const Batch& batch, const ForwardCache& cache,
                                    const Tensor& dlogits) {
    const std::size_t bsz = batch.images.size();
    ConvStackWeights grads = zeros_like(weights);
    for (std::size_t i = 0; i < bsz; ++i) {
        const std::vector<double>& pooled = cache.pooled[i];
        const std::size_t c_last = pooled.size();
        std::vector<double> dpooled(c_last, 0.0);
        for (std::size_t cls = 0; cls < spec.num_classes; ++cls) {
            const double dl = dlogits(i, cls);
            if (dl == 0.0) {
                continue;
            }
            for (std::size_t c = 0; c < c_last; ++c) {
                grads.head(cls, c) += dl * pooled[c];
                dpooled[c] += dl * weights.head(cls, c);
            }
        }
        const Tensor& last_pre = cache.preacts[i].back();
        const std::size_t area = last_pre.shape[1] * last_pre.shape[2];
        Tensor dx = Tensor::zeros(last_pre.shape);
        const double inv_area = 1.0 / static_cast<double>(area);
        for (std::size_t c = 0; c < c_last; ++c) {
            const double g = dpooled[c] * inv_area;
            for (std::size_t k = 0; k < area; ++k) {
                dx.data[c * area + k] = g;
            }
        }
        for (std::size_t layer = spec.num_conv_layers(); layer-- > 0;) {
            const Tensor& pre = cache.preacts[i][layer];
            Tensor dz = dx;
            for (std::size_t k = 0; k < dz.data.size(); ++k) {
                if (pre.data[k] <= 0.0) {
                    dz.data[k] = 0.0;
                }
            }
            ConvGrads cg = conv2d_backward(cache.inputs[i][layer], weights.layers[layer], dz);
            for (std::size_t k = 0; k < cg.grad_filters.data.size(); ++k) {
                grads.layers[layer].data[k] += cg.grad_filters.data[k];
            }
            dx = std::move(cg.grad_input);
        }
    }
    return grads;
}

void sgd_update(ConvStackWeights& weights, const ConvStackWeights& grads, double eta) {
    for (std::size_t layer = 0; layer < weights.layers.size(); ++layer) {
        for (std::size_t k = 0; k < weights.layers[layer].data.size(); ++k) {
            weights.layers[layer].data[k] -= eta * grads.layers[layer].data[k];
        }
    }
    for (std::size_t k = 0; k < weights.head.data.size(); ++k) {
        weights.head.data[k] -= eta * grads.head.data[k];
    }
}

ConvStackWeights train_local(ConvStackWeights weights, const ConvStackSpec& spec,
                             const std::vector<Batch>& batches, std::size_t ell, double eta,
                             Rng& rng) {
    if (ell < 1) {
        throw ConfigError("train_local: ell must be >= 1");
    }
    if (batches.empty()) {
        throw ConfigError("train_local: no batches");
    }
    for (std::size_t it = 0; it < ell; ++it) {
        const Batch& batch = batches[rng.below(batches.size())];
        ForwardCache cache;
        const Tensor logits = convstack_forward(weights, spec, batch, &cache);
        const LossGrad lg = convstack_loss(logits, batch.labels, spec.loss);
        if (!std::isfinite(lg.loss)) {
            throw NumericError("train_local: non-finite loss at local iteration " +
                               std::to_string(it));
        }
        const ConvStackWeights grads = convstack_backward(weights, spec, batch, cache, lg.dlogits);
        sgd_update(weights, grads, eta);
    }
    return weights;
}

double evaluate_accuracy(const ConvStackWeights& weights, const ConvStackSpec& spec,
                         const std::vector<Tensor>& images, const std::vector<int>& labels) {
    if (images.empty() || images.size() != labels.size()) {
        throw DimensionError("evaluate_accuracy: bad dataset");
    }
    std::size_t correct = 0;
    // batches of up to 64 keep the cache small
    std::size_t pos = 0;
    while (pos < images.size()) {
        const std::size_t take = std::min<std::size_t>(64, images.size() - pos);
        Batch batch;
        batch.images.assign(images.begin() + static_cast<long>(pos),
                            images.begin() + static_cast<long>(pos + take));
        batch.labels.assign(labels.begin() + static_cast<long>(pos),
                            labels.begin() + static_cast<long>(pos + take));
        const Tensor logits = convstack_forward(weights, spec, batch);
        for (std::size_t i = 0; i < take; ++i) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < spec.num_classes; ++c) {
                if (logits(i, c) > logits(i, best)) {
                    best = c;
                }
            }
            if (static_cast<int>(best) == batch.labels[i]) {
                ++correct;
            }
        }
        pos += take;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(images.size());
}

} // namespace loft
