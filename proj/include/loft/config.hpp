#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "loft/distsim.hpp"
#include "loft/partition.hpp"
#include "loft/theory_model.hpp"

namespace loft {

// Flat sectioned key-value config text:
//   # comment
//   [section]
//   key = value          (scalars or comma lists)
// Unknown sections or keys are rejected with their line number.

enum class DataSource { synthetic_theory, synthetic_images, idx_files, csv_file };

struct DatasetSpec {
    DataSource source = DataSource::synthetic_images;
    std::size_t n = 128;
    std::size_t n_test = 64;
    std::size_t d_hat = 1;
    std::size_t height = 8;
    std::size_t width = 8;
    std::size_t num_classes = 2;
    double label_bound = 1.0; // theory label range [-C, C]
    bool normalize = true;
    std::string images_path;
    std::string labels_path;
    std::string csv_path;

    void validate() const;
};

enum class RunMode { theory, system };

struct ExperimentConfig {
    RunMode mode = RunMode::system;
    std::uint64_t master_seed = 1;
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "out";

    DatasetSpec dataset;

    // system mode
    std::vector<std::size_t> channels{8, 16, 16, 32};
    std::vector<std::size_t> strided_blocks;
    LossKind loss = LossKind::cross_entropy;
    ScheduleConfig schedule;
    std::vector<std::string> protocols{"loft", "dense"};
    std::vector<double> pruning_ratios{0.5};
    std::size_t finetune_epochs = 30;
    double finetune_eta = 0.05;
    std::size_t gpipe_stages = 2;

    // theory mode
    TheoryConfig theory;
    std::vector<std::size_t> m_grid{256};
    std::vector<std::size_t> s_grid{1};
    std::size_t moment_trials = 100000;

    ConvStackSpec build_model_spec() const;
    void validate() const;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

// Raw text of the config file; hashed into the output manifest.
std::string read_text_file(const std::string& path);

} // namespace loft
