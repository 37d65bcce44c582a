#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loft/config.hpp"
#include "loft/dataset.hpp"

namespace loft {

// Everything an experiment produces, as pre-formatted CSV rows. Column
// layouts (documented in the README):
//   results.csv  mode,protocol,seed,ratio,m,S,xi,metric,t,value,status
//   curves.csv   metric,t,value,seed
//   heatmap.csv  layer,t1,t2,distance
//   ledger.csv   protocol,round,worker,bytes_up,bytes_down,peak_param_bytes
//   moments.csv  xi,S,theta,quantity,estimate,std_error,ref_paper,ref_exact
struct ResultBundle {
    std::vector<std::vector<std::string>> results;
    std::vector<std::vector<std::string>> curves;
    std::vector<std::vector<std::string>> heatmap;
    std::vector<std::vector<std::string>> ledger;
    std::vector<std::vector<std::string>> moments;
    std::string config_text;
    std::uint64_t master_seed = 0;
    bool all_cells_ok = true;
};

struct ManifestEntry {
    std::string file;
    std::size_t rows = 0;
    std::string fnv64;
};

struct Manifest {
    std::string config_hash;
    std::uint64_t master_seed = 0;
    std::vector<ManifestEntry> entries;
};

// Theory pipeline: sweeps the m and S grids, runs paired LoFT/GD
// trajectories per seed and collects the mask-moment table.
ResultBundle run_theory_suite(const ExperimentConfig& cfg);

// System pipeline: per seed x protocol pretrain, then per ratio prune and
// finetune the ticket; snapshots feed distance-to-final curves and the
// heatmap. Cell failures are recorded in the status column and the pipeline
// moves on.
ResultBundle run_ticket_pipeline(const ExperimentConfig& cfg);

// Writes CSVs (only for non-empty row sets) plus manifest.json; byte-for-byte
// reproducible for a fixed (config, master seed).
Manifest emit_outputs(const ResultBundle& bundle, const std::string& outdir);

// Human-readable tables from a previous run's outdir (ledger + accuracy).
std::string render_report(const std::string& outdir);

// Fast invariant/oracle battery behind `loft-lab check`; returns the number
// of failed checks and prints one line per check.
int run_self_checks();

} // namespace loft
