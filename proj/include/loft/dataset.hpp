#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loft/config.hpp"
#include "loft/distsim.hpp"
#include "loft/theory_model.hpp"

namespace loft {

struct ImageDatasetPair {
    ImageDataset train;
    ImageDataset test;
};

// System-mode data. synthetic_images renders class-conditional Gaussian
// blobs; idx_files parses big-endian IDX images/labels bit-exactly; csv_file
// reads rows of label followed by d_hat*h*w pixel values.
ImageDatasetPair load_image_dataset(const DatasetSpec& spec, std::uint64_t seed);

// Theory-mode data: Gaussian images normalized to |x|_F = q^{-1/2} with
// labels uniform in [-C, C].
TheoryDataset load_theory_dataset(const DatasetSpec& spec, std::size_t q, std::uint64_t seed);

// IDX primitives, exposed for tests.
struct IdxImages {
    std::size_t count = 0, rows = 0, cols = 0;
    std::vector<std::uint8_t> pixels; // count*rows*cols
};
IdxImages parse_idx_images(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_binary_file(const std::string& path);

} // namespace loft
