#include "loft/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "loft/csv.hpp"
#include "loft/errors.hpp"
#include "loft/hash.hpp"
#include "loft/loft_core.hpp"
#include "loft/metrics.hpp"
#include "loft/pruning.hpp"
#include "loft/serialize.hpp"

namespace loft {

namespace {

std::string sanitize_status(std::string s) {
    for (char& c : s) {
        if (c == ',' || c == '\n' || c == '\r') {
            c = ';';
        }
    }
    return s;
}

std::uint64_t derived_value(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    return Rng::derive(master, path).next_u64();
}

struct ResultRowBuilder {
    std::string mode;
    std::string protocol;
    std::string seed;
    std::string ratio;
    std::string m;
    std::string S;
    std::string xi;

    std::vector<std::string> row(const std::string& metric, long t, double value,
                                 const std::string& status = "ok") const {
        return {mode, protocol, seed, ratio, m, S, xi, metric,
                std::to_string(t), format_double(value), sanitize_status(status)};
    }
    std::vector<std::string> error_row(const std::string& metric, const std::string& status) const {
        return {mode, protocol, seed, ratio, m, S, xi, metric, "0", "", sanitize_status(status)};
    }
};

void append_ledger_rows(ResultBundle& bundle, const CommLedger& ledger,
                        const std::string& label) {
    for (const RoundRecord& record : ledger.rounds) {
        for (std::size_t w = 0; w < ledger.workers; ++w) {
            bundle.ledger.push_back({label, format_u64(record.round), format_u64(w),
                                     format_u64(record.bytes_up[w]),
                                     format_u64(record.bytes_down[w]),
                                     format_u64(record.peak_param_bytes[w])});
        }
    }
}

} // namespace

ResultBundle run_theory_suite(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.mode != RunMode::theory) {
        throw ConfigError("run_theory_suite: config mode must be 'theory'");
    }
    ResultBundle bundle;
    bundle.master_seed = cfg.master_seed;

    for (std::size_t m : cfg.m_grid) {
        for (std::size_t S : cfg.s_grid) {
            for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
                const std::uint64_t seed_index = cfg.seeds[si];
                TheoryConfig tc = cfg.theory;
                tc.m = m;
                tc.S = S;
                tc.seed = derived_value(cfg.master_seed, {stream::kCell, seed_index, 1});

                ResultRowBuilder rows;
                rows.mode = "theory";
                rows.protocol = "loft_vs_gd";
                rows.seed = format_u64(seed_index);
                rows.m = std::to_string(m);
                rows.S = std::to_string(S);
                rows.xi = format_double(tc.xi);

                try {
                    const TheoryDataset data = synthetic_theory_dataset(
                        tc, derived_value(cfg.master_seed, {stream::kCell, seed_index, 2}),
                        cfg.dataset.height, cfg.dataset.width);
                    const DeviationReport rep = run_paired_trajectories(tc, data);
                    for (std::size_t t = 0; t < rep.loss_curve.size(); ++t) {
                        bundle.results.push_back(
                            rows.row("loss", static_cast<long>(t), rep.loss_curve[t]));
                        bundle.results.push_back(rows.row("weight_dev", static_cast<long>(t),
                                                          rep.weight_dev_curve[t]));
                        bundle.results.push_back(
                            rows.row("drift", static_cast<long>(t), rep.drift_curve[t]));
                    }
                    for (std::size_t t = 0; t < rep.output_dev_curve.size(); ++t) {
                        bundle.results.push_back(rows.row("output_dev", static_cast<long>(t),
                                                          rep.output_dev_curve[t]));
                    }
                    const long final_t = static_cast<long>(tc.T);
                    bundle.results.push_back(rows.row("weight_dev_final", final_t, rep.weight_dev));
                    bundle.results.push_back(rows.row("output_dev_sum", final_t, rep.output_dev_sum));
                    bundle.results.push_back(rows.row("weight_drift_max", final_t, rep.weight_drift));
                    bundle.results.push_back(rows.row("lambda0", 0, rep.lambda0));
                    bundle.results.push_back(rows.row("eta", 0, rep.eta));
                } catch (const std::exception& err) {
                    bundle.all_cells_ok = false;
                    bundle.results.push_back(rows.error_row("cell_error", err.what()));
                }
            }
        }
    }

    for (std::size_t S : cfg.s_grid) {
        Rng rng = Rng::derive(cfg.master_seed, {stream::kMasks, S});
        const MomentTable table = mask_moments(cfg.theory.xi, S, cfg.moment_trials, rng);
        for (const MomentRow& row : table.rows) {
            bundle.moments.push_back({format_double(table.xi), std::to_string(table.S),
                                      format_double(table.theta), row.quantity,
                                      format_double(row.estimate), format_double(row.std_error),
                                      format_double(row.ref_paper), format_double(row.ref_exact)});
        }
    }
    return bundle;
}

namespace {

struct FinetuneOutcome {
    std::vector<double> epoch_losses;
    double accuracy = 0.0;
};

FinetuneOutcome finetune_ticket(const PrunedModel& model, const ImageDataset& train,
                                const ImageDataset& test, std::size_t epochs,
                                std::size_t batch_size, double eta, Rng& rng) {
    FinetuneOutcome out;
    ConvStackWeights w = model.weights;
    std::vector<std::size_t> all(train.images.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        all[i] = i;
    }
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const std::vector<Batch> batches = make_batches(train, all, batch_size, rng);
        double loss_acc = 0.0;
        for (const Batch& batch : batches) {
            ForwardCache cache;
            const Tensor logits = convstack_forward(w, model.spec, batch, &cache);
            const LossGrad lg = convstack_loss(logits, batch.labels, model.spec.loss);
            if (!std::isfinite(lg.loss)) {
                throw NumericError("finetune: non-finite loss at epoch " + std::to_string(epoch));
            }
            loss_acc += lg.loss;
            const ConvStackWeights grads =
                convstack_backward(w, model.spec, batch, cache, lg.dlogits);
            sgd_update(w, grads, eta);
        }
        out.epoch_losses.push_back(loss_acc / static_cast<double>(batches.size()));
    }
    out.accuracy = evaluate_accuracy(w, model.spec, test.images, test.labels);
    return out;
}

} // namespace

ResultBundle run_ticket_pipeline(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.mode != RunMode::system) {
        throw ConfigError("run_ticket_pipeline: config mode must be 'system'");
    }
    ResultBundle bundle;
    bundle.master_seed = cfg.master_seed;

    const ConvStackSpec spec = cfg.build_model_spec();
    const ImageDatasetPair data = load_image_dataset(cfg.dataset, cfg.master_seed);

    // Analytic pipeline-parallel ledger for the same number of gradient steps.
    try {
        const BatchShape shape{cfg.schedule.batch_size, cfg.dataset.d_hat, cfg.dataset.height,
                               cfg.dataset.width};
        const CommLedger gpipe = comm_cost_gpipe(spec, shape, cfg.schedule.T * cfg.schedule.ell,
                                                 cfg.gpipe_stages);
        append_ledger_rows(bundle, gpipe, "gpipe_model");
    } catch (const std::exception& err) {
        bundle.results.push_back(ResultRowBuilder{"system", "gpipe_model", "", "", "",
                                                  std::to_string(cfg.gpipe_stages), ""}
                                     .error_row("cell_error", err.what()));
        bundle.all_cells_ok = false;
    }

    bool heatmap_written = false;
    std::vector<std::string> ledger_written;
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
        const std::uint64_t seed_index = cfg.seeds[si];
        Rng init_rng = Rng::derive(cfg.master_seed, {stream::kInit, seed_index});
        const ConvStackWeights init_weights = init_convstack(spec, init_rng);

        for (const std::string& protocol : cfg.protocols) {
            ResultRowBuilder rows;
            rows.mode = "system";
            rows.protocol = protocol;
            rows.seed = format_u64(seed_index);
            rows.S = std::to_string(protocol == "dense" ? 1 : cfg.schedule.S);

            ScheduleConfig sched = cfg.schedule;
            sched.master_seed = derived_value(cfg.master_seed,
                                              {stream::kCell, seed_index,
                                               protocol == "loft"        ? 10u
                                               : protocol == "local_sgd" ? 11u
                                                                         : 12u});
            if (protocol == "dense") {
                sched.S = 1;
            }

            PretrainResult pre;
            try {
                if (protocol == "loft") {
                    pre = run_loft_pretrain(init_weights, spec, data.train, sched);
                } else {
                    pre = run_local_sgd(init_weights, spec, data.train, sched);
                }
            } catch (const std::exception& err) {
                bundle.all_cells_ok = false;
                for (double ratio : cfg.pruning_ratios) {
                    rows.ratio = format_double(ratio);
                    bundle.results.push_back(rows.error_row("ticket_accuracy", err.what()));
                }
                continue;
            }

            rows.ratio = "";
            for (std::size_t t = 0; t < pre.round_losses.size(); ++t) {
                bundle.results.push_back(
                    rows.row("pretrain_loss", static_cast<long>(t + 1), pre.round_losses[t]));
            }
            bundle.results.push_back(rows.row(
                "pretrain_accuracy", static_cast<long>(sched.T),
                evaluate_accuracy(pre.weights, spec, data.test.images, data.test.labels)));

            const std::vector<double> curve = distance_to_final(pre.snapshots);
            for (std::size_t t = 0; t < curve.size(); ++t) {
                bundle.curves.push_back({"distance_to_final/" + protocol,
                                         std::to_string(t), format_double(curve[t]),
                                         format_u64(seed_index)});
            }
            if (!heatmap_written) {
                heatmap_written = true;
                for (std::size_t l = 0; l < pre.snapshots.size(); ++l) {
                    const std::vector<double> heat = pairwise_heatmap(pre.snapshots[l]);
                    const std::size_t e = pre.snapshots[l].size();
                    for (std::size_t t1 = 0; t1 < e; ++t1) {
                        for (std::size_t t2 = 0; t2 < e; ++t2) {
                            bundle.heatmap.push_back({format_u64(pre.tracked_layers[l]),
                                                      std::to_string(t1), std::to_string(t2),
                                                      format_double(heat[t1 * e + t2])});
                        }
                    }
                }
            }
            if (std::find(ledger_written.begin(), ledger_written.end(), protocol) ==
                ledger_written.end()) {
                ledger_written.push_back(protocol);
                append_ledger_rows(bundle, pre.ledger, protocol);
            }

            for (std::size_t ri = 0; ri < cfg.pruning_ratios.size(); ++ri) {
                const double ratio = cfg.pruning_ratios[ri];
                rows.ratio = format_double(ratio);
                try {
                    const TicketMask ticket = prune_filters(pre.weights, spec, ratio);
                    const PrunedModel pruned = apply_ticket(pre.weights, spec, ticket);
                    Rng ft_rng = Rng::derive(sched.master_seed, {stream::kFinetune, ri});
                    const FinetuneOutcome fine =
                        finetune_ticket(pruned, data.train, data.test, cfg.finetune_epochs,
                                        cfg.schedule.batch_size, cfg.finetune_eta, ft_rng);
                    for (std::size_t e = 0; e < fine.epoch_losses.size(); ++e) {
                        bundle.results.push_back(rows.row("finetune_loss",
                                                          static_cast<long>(e + 1),
                                                          fine.epoch_losses[e]));
                    }
                    bundle.results.push_back(rows.row("ticket_accuracy",
                                                      static_cast<long>(cfg.finetune_epochs),
                                                      fine.accuracy));
                } catch (const std::exception& err) {
                    bundle.all_cells_ok = false;
                    bundle.results.push_back(rows.error_row("ticket_accuracy", err.what()));
                }
            }
        }
    }
    return bundle;
}

namespace {

const std::vector<std::string> kResultsHeader = {"mode", "protocol", "seed", "ratio", "m",
                                                 "S",    "xi",       "metric", "t",   "value",
                                                 "status"};
const std::vector<std::string> kCurvesHeader = {"metric", "t", "value", "seed"};
const std::vector<std::string> kHeatmapHeader = {"layer", "t1", "t2", "distance"};
const std::vector<std::string> kLedgerHeader = {"protocol", "round", "worker",
                                                "bytes_up", "bytes_down", "peak_param_bytes"};
const std::vector<std::string> kMomentsHeader = {"xi", "S", "theta", "quantity",
                                                 "estimate", "std_error", "ref_paper",
                                                 "ref_exact"};

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows, Manifest& manifest) {
    std::string blob = join_csv(header);
    for (const std::vector<std::string>& row : rows) {
        blob += join_csv(row);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << blob;
    out.close();
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
    manifest.entries.push_back({path.filename().string(), rows.size(), to_hex(fnv1a64(blob))});
}

} // namespace

Manifest emit_outputs(const ResultBundle& bundle, const std::string& outdir) {
    std::filesystem::create_directories(outdir);
    Manifest manifest;
    manifest.master_seed = bundle.master_seed;
    manifest.config_hash = to_hex(fnv1a64(bundle.config_text) ^ (bundle.master_seed * 0x9e3779b97f4a7c15ull));

    const std::filesystem::path base(outdir);
    if (!bundle.results.empty()) {
        write_csv(base / "results.csv", kResultsHeader, bundle.results, manifest);
    }
    if (!bundle.curves.empty()) {
        write_csv(base / "curves.csv", kCurvesHeader, bundle.curves, manifest);
    }
    if (!bundle.heatmap.empty()) {
        write_csv(base / "heatmap.csv", kHeatmapHeader, bundle.heatmap, manifest);
    }
    if (!bundle.ledger.empty()) {
        write_csv(base / "ledger.csv", kLedgerHeader, bundle.ledger, manifest);
    }
    if (!bundle.moments.empty()) {
        write_csv(base / "moments.csv", kMomentsHeader, bundle.moments, manifest);
    }

    nlohmann::ordered_json doc;
    doc["config_hash"] = manifest.config_hash;
    doc["master_seed"] = manifest.master_seed;
    doc["artifacts"] = nlohmann::ordered_json::array();
    for (const ManifestEntry& entry : manifest.entries) {
        doc["artifacts"].push_back({{"file", entry.file},
                                    {"rows", entry.rows},
                                    {"fnv64", entry.fnv64}});
    }
    std::ofstream out(base / "manifest.json", std::ios::binary);
    if (!out) {
        throw IoError("cannot write manifest.json in " + outdir);
    }
    out << doc.dump(2) << '\n';
    return manifest;
}

namespace {

std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> fields;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        fields.push_back(cur);
        rows.push_back(std::move(fields));
    }
    return rows;
}

double median_of(std::vector<double> v) {
    if (v.empty()) {
        return 0.0;
    }
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

} // namespace

std::string render_report(const std::string& outdir) {
    const std::filesystem::path base(outdir);
    std::ostringstream out;

    const std::filesystem::path results_path = base / "results.csv";
    if (std::filesystem::exists(results_path)) {
        const auto rows = read_csv_rows(results_path);
        // (protocol, ratio) -> accuracies
        std::map<std::pair<std::string, std::string>, std::vector<double>> acc;
        for (std::size_t i = 1; i < rows.size(); ++i) {
            const auto& r = rows[i];
            if (r.size() == kResultsHeader.size() && r[7] == "ticket_accuracy" &&
                r[10] == "ok") {
                acc[{r[1], r[3]}].push_back(std::stod(r[9]));
            }
        }
        if (!acc.empty()) {
            out << "ticket accuracy (median over seeds)\n";
            out << "  protocol      ratio   accuracy   cells\n";
            for (const auto& [key, values] : acc) {
                std::ostringstream l;
                l << "  " << key.first;
                for (std::size_t pad = key.first.size(); pad < 12; ++pad) {
                    l << ' ';
                }
                l << "  " << key.second << "   " << median_of(values) << "   " << values.size();
                out << l.str() << '\n';
            }
        }
    }

    const std::filesystem::path ledger_path = base / "ledger.csv";
    if (std::filesystem::exists(ledger_path)) {
        const auto rows = read_csv_rows(ledger_path);
        std::map<std::string, std::uint64_t> totals;
        std::map<std::string, std::uint64_t> peaks;
        for (std::size_t i = 1; i < rows.size(); ++i) {
            const auto& r = rows[i];
            if (r.size() != kLedgerHeader.size()) {
                continue;
            }
            totals[r[0]] += std::stoull(r[3]) + std::stoull(r[4]);
            peaks[r[0]] = std::max<std::uint64_t>(peaks[r[0]], std::stoull(r[5]));
        }
        std::uint64_t loft_total = totals.count("loft") != 0 ? totals["loft"] : 0;
        out << "communication totals\n";
        out << "  protocol      bytes        ratio_vs_loft   peak_param_bytes\n";
        for (const auto& [name, total] : totals) {
            std::ostringstream l;
            l << "  " << name;
            for (std::size_t pad = name.size(); pad < 12; ++pad) {
                l << ' ';
            }
            l << "  " << total << "   ";
            if (loft_total > 0) {
                l << static_cast<double>(total) / static_cast<double>(loft_total);
            } else {
                l << "-";
            }
            l << "   " << peaks[name];
            out << l.str() << '\n';
        }
    }
    if (out.str().empty()) {
        out << "no artifacts found in " << outdir << '\n';
    }
    return out.str();
}

int run_self_checks() {
    int failures = 0;
    auto check = [&failures](const char* name, bool ok) {
        std::cout << (ok ? "[PASS] " : "[FAIL] ") << name << '\n';
        if (!ok) {
            ++failures;
        }
    };

    // conv identity kernel
    {
        Tensor input = Tensor::zeros({1, 3, 3});
        for (std::size_t i = 0; i < 9; ++i) {
            input.data[i] = static_cast<double>(i + 1);
        }
        Tensor filters = Tensor::zeros({1, 1, 3, 3});
        filters(0, 0, 1, 1) = 1.0;
        const Tensor out = conv2d_forward(input, filters);
        check("conv2d identity kernel", out.data == input.data);
    }
    // footrule hand values
    {
        RankedFilterList a, b;
        a.entries = {{0, 2.0}, {1, 1.0}};
        b.entries = {{1, 2.0}, {0, 1.0}};
        const double fd = filter_distance(a, b);
        check("filter distance of a 2-swap is 1.5*ln2",
              std::abs(fd - 1.5 * std::log(2.0)) < 1e-12);
    }
    // mask moments vs exact closed forms
    {
        Rng rng(99);
        const MomentTable t = mask_moments(0.5, 2, 20000, rng);
        bool ok = true;
        for (const MomentRow& row : t.rows) {
            ok = ok && std::abs(row.estimate - row.ref_exact) <= 4.0 * row.std_error + 1e-9;
        }
        check("mask moments match exact closed forms", ok);
    }
    // loft == gd at xi = 1, S = 1
    {
        TheoryConfig tc;
        tc.m = 16;
        tc.n = 4;
        tc.p = 4;
        tc.q = 1;
        tc.d_hat = 2;
        tc.xi = 1.0;
        tc.S = 1;
        tc.seed = 7;
        const TheoryDataset data = synthetic_theory_dataset(tc, 7, 2, 2);
        const TheoryModelState state = init_theory_model(tc, data);
        Rng mrng(3);
        const MaskMatrix masks = sample_masks(tc.m, 1, 1.0, MaskMode::bernoulli, mrng);
        const LoftStepResult ls = loft_step(state, masks);
        const std::vector<double> gd = gd_step(state);
        double diff = 0.0;
        for (std::size_t i = 0; i < gd.size(); ++i) {
            diff = std::max(diff, std::abs(gd[i] - ls.W_next[i]));
        }
        check("loft_step equals gd_step at xi=1, S=1", diff <= 1e-12);
    }
    // partition round-trip
    {
        const ConvStackSpec spec = make_convstack_spec(1, {4, 8, 8, 8}, 2,
                                                       LossKind::cross_entropy);
        Rng rng(5);
        const ConvStackWeights w = init_convstack(spec, rng);
        Rng prng(6);
        const PartitionResult part = filter_partition(w, spec, 2, prng);
        const ConvStackWeights back = aggregate(w, spec, part.specs, part.parts);
        double diff = 0.0;
        for (std::size_t l = 0; l < w.layers.size(); ++l) {
            for (std::size_t k = 0; k < w.layers[l].data.size(); ++k) {
                diff = std::max(diff, std::abs(w.layers[l].data[k] - back.layers[l].data[k]));
            }
        }
        for (std::size_t k = 0; k < w.head.data.size(); ++k) {
            diff = std::max(diff, std::abs(w.head.data[k] - back.head.data[k]));
        }
        check("aggregate(filter_partition(w)) is the identity", diff <= 1e-12);
    }
    return failures;
}

} // namespace loft
