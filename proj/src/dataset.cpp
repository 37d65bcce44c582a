#include "loft/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "loft/errors.hpp"

namespace loft {

namespace {

std::uint32_t read_be_u32(const std::vector<std::uint8_t>& bytes, std::size_t pos) {
    if (pos + 4 > bytes.size()) {
        throw FormatError("idx: truncated header");
    }
    return (static_cast<std::uint32_t>(bytes[pos]) << 24) |
           (static_cast<std::uint32_t>(bytes[pos + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[pos + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[pos + 3]);
}

// Blob centers on a fixed grid, one per class, assigned by a seeded shuffle.
std::vector<std::pair<double, double>> class_centers(std::size_t num_classes, std::size_t h,
                                                     std::size_t w, Rng& rng) {
    std::vector<std::pair<double, double>> grid;
    const double hh = static_cast<double>(h);
    const double ww = static_cast<double>(w);
    for (double fy : {0.25, 0.75, 0.5}) {
        for (double fx : {0.25, 0.75, 0.5}) {
            grid.emplace_back(fy * hh, fx * ww);
        }
    }
    if (num_classes > grid.size()) {
        throw ConfigError("synthetic_images: at most " + std::to_string(grid.size()) +
                          " classes supported, got " + std::to_string(num_classes));
    }
    rng.shuffle(grid);
    grid.resize(num_classes);
    return grid;
}

ImageDataset synthesize_images(const DatasetSpec& spec, std::size_t count, Rng& rng,
                               const std::vector<std::pair<double, double>>& centers,
                               const std::vector<std::vector<double>>& amplitudes) {
    ImageDataset out;
    out.num_classes = spec.num_classes;
    const double sigma = 0.16 * static_cast<double>(std::min(spec.height, spec.width));
    const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t i = 0; i < count; ++i) {
        const int label = static_cast<int>(rng.below(spec.num_classes));
        const auto [cy, cx] = centers[static_cast<std::size_t>(label)];
        Tensor img = Tensor::zeros({spec.d_hat, spec.height, spec.width});
        for (std::size_t c = 0; c < spec.d_hat; ++c) {
            const double amp = amplitudes[static_cast<std::size_t>(label)][c];
            for (std::size_t y = 0; y < spec.height; ++y) {
                for (std::size_t x = 0; x < spec.width; ++x) {
                    const double dy = static_cast<double>(y) - cy;
                    const double dx = static_cast<double>(x) - cx;
                    const double bump = amp * std::exp(-(dy * dy + dx * dx) * inv_two_sigma2);
                    img(c, y, x) = bump + 0.15 * rng.normal();
                }
            }
        }
        out.images.push_back(std::move(img));
        out.labels.push_back(label);
    }
    return out;
}

} // namespace

std::vector<std::uint8_t> read_binary_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open file: " + path);
    }
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
}

IdxImages parse_idx_images(const std::vector<std::uint8_t>& bytes) {
    const std::uint32_t magic = read_be_u32(bytes, 0);
    if (magic != 0x00000803u) {
        throw FormatError("idx: bad image magic (expected 0x00000803)");
    }
    IdxImages out;
    out.count = read_be_u32(bytes, 4);
    out.rows = read_be_u32(bytes, 8);
    out.cols = read_be_u32(bytes, 12);
    const std::size_t expected = 16 + out.count * out.rows * out.cols;
    if (bytes.size() != expected) {
        throw FormatError("idx: image payload is " + std::to_string(bytes.size() - 16) +
                          " bytes, header promises " + std::to_string(expected - 16));
    }
    out.pixels.assign(bytes.begin() + 16, bytes.end());
    return out;
}

std::vector<std::uint8_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes) {
    const std::uint32_t magic = read_be_u32(bytes, 0);
    if (magic != 0x00000801u) {
        throw FormatError("idx: bad label magic (expected 0x00000801)");
    }
    const std::size_t count = read_be_u32(bytes, 4);
    if (bytes.size() != 8 + count) {
        throw FormatError("idx: label payload size mismatch");
    }
    return std::vector<std::uint8_t>(bytes.begin() + 8, bytes.end());
}

ImageDatasetPair load_image_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    spec.validate();
    ImageDatasetPair pair;
    switch (spec.source) {
        case DataSource::synthetic_images: {
            Rng layout_rng = Rng::derive(seed, {stream::kDataset, 0});
            const auto centers = class_centers(spec.num_classes, spec.height, spec.width,
                                               layout_rng);
            std::vector<std::vector<double>> amps(spec.num_classes,
                                                  std::vector<double>(spec.d_hat, 1.0));
            for (auto& per_class : amps) {
                for (double& a : per_class) {
                    a = layout_rng.uniform(0.6, 1.4);
                }
            }
            Rng train_rng = Rng::derive(seed, {stream::kDataset, 1});
            Rng test_rng = Rng::derive(seed, {stream::kDataset, 2});
            pair.train = synthesize_images(spec, spec.n, train_rng, centers, amps);
            pair.test = synthesize_images(spec, spec.n_test, test_rng, centers, amps);
            return pair;
        }
        case DataSource::idx_files: {
            const IdxImages imgs = parse_idx_images(read_binary_file(spec.images_path));
            const std::vector<std::uint8_t> labels =
                parse_idx_labels(read_binary_file(spec.labels_path));
            if (labels.size() != imgs.count) {
                throw FormatError("idx: image/label counts differ");
            }
            if (imgs.rows != spec.height || imgs.cols != spec.width || spec.d_hat != 1) {
                throw ConfigError("idx: declared dims (" + std::to_string(spec.d_hat) + "x" +
                                  std::to_string(spec.height) + "x" + std::to_string(spec.width) +
                                  ") do not match file (1x" + std::to_string(imgs.rows) + "x" +
                                  std::to_string(imgs.cols) + ")");
            }
            if (spec.n + spec.n_test > imgs.count) {
                throw ConfigError("idx: file holds " + std::to_string(imgs.count) +
                                  " images, config needs " + std::to_string(spec.n + spec.n_test));
            }
            const double scale = spec.normalize ? 1.0 / 255.0 : 1.0;
            auto take = [&](std::size_t begin, std::size_t count, ImageDataset& out) {
                out.num_classes = spec.num_classes;
                const std::size_t area = imgs.rows * imgs.cols;
                for (std::size_t i = begin; i < begin + count; ++i) {
                    Tensor img = Tensor::zeros({1, imgs.rows, imgs.cols});
                    for (std::size_t k = 0; k < area; ++k) {
                        img.data[k] = scale * static_cast<double>(imgs.pixels[i * area + k]);
                    }
                    const int label = static_cast<int>(labels[i]);
                    if (label < 0 || static_cast<std::size_t>(label) >= spec.num_classes) {
                        throw DataError("idx: label " + std::to_string(label) +
                                        " outside num_classes");
                    }
                    out.images.push_back(std::move(img));
                    out.labels.push_back(label);
                }
            };
            take(0, spec.n, pair.train);
            take(spec.n, spec.n_test, pair.test);
            return pair;
        }
        case DataSource::csv_file: {
            const std::string text = read_text_file(spec.csv_path);
            std::istringstream in(text);
            std::string line;
            ImageDataset all;
            all.num_classes = spec.num_classes;
            const std::size_t pixels = spec.d_hat * spec.height * spec.width;
            int line_no = 0;
            while (std::getline(in, line)) {
                ++line_no;
                if (line.empty()) {
                    continue;
                }
                std::istringstream row(line);
                std::string field;
                std::vector<double> values;
                while (std::getline(row, field, ',')) {
                    double v = 0.0;
                    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
                    if (res.ec != std::errc()) {
                        throw FormatError(spec.csv_path + ":" + std::to_string(line_no) +
                                          ": bad number '" + field + "'");
                    }
                    values.push_back(v);
                }
                if (values.size() != pixels + 1) {
                    throw FormatError(spec.csv_path + ":" + std::to_string(line_no) +
                                      ": expected 1 label + " + std::to_string(pixels) +
                                      " pixels, got " + std::to_string(values.size()) +
                                      " fields");
                }
                Tensor img({spec.d_hat, spec.height, spec.width},
                           std::vector<double>(values.begin() + 1, values.end()));
                all.images.push_back(std::move(img));
                all.labels.push_back(static_cast<int>(values[0]));
            }
            if (all.images.size() < spec.n + spec.n_test) {
                throw ConfigError("csv: file holds " + std::to_string(all.images.size()) +
                                  " rows, config needs " + std::to_string(spec.n + spec.n_test));
            }
            pair.train.num_classes = spec.num_classes;
            pair.test.num_classes = spec.num_classes;
            for (std::size_t i = 0; i < spec.n; ++i) {
                pair.train.images.push_back(all.images[i]);
                pair.train.labels.push_back(all.labels[i]);
            }
            for (std::size_t i = spec.n; i < spec.n + spec.n_test; ++i) {
                pair.test.images.push_back(all.images[i]);
                pair.test.labels.push_back(all.labels[i]);
            }
            return pair;
        }
        case DataSource::synthetic_theory:
            throw ConfigError("load_image_dataset: synthetic_theory is a theory-mode source");
    }
    throw ConfigError("load_image_dataset: unhandled source");
}

TheoryDataset load_theory_dataset(const DatasetSpec& spec, std::size_t q, std::uint64_t seed) {
    spec.validate();
    if (spec.source != DataSource::synthetic_theory) {
        throw ConfigError("load_theory_dataset: source must be synthetic_theory");
    }
    TheoryConfig probe;
    probe.n = spec.n;
    probe.d_hat = spec.d_hat;
    probe.p = spec.height * spec.width;
    probe.q = q;
    probe.label_bound = spec.label_bound;
    return synthetic_theory_dataset(probe, seed, spec.height, spec.width);
}

} // namespace loft
