#include "loft/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "loft/errors.hpp"

namespace loft {

void DatasetSpec::validate() const {
    if (n == 0) {
        throw ConfigError("dataset: n must be positive");
    }
    if (d_hat == 0 || height == 0 || width == 0) {
        throw ConfigError("dataset: d_hat, height, width must be positive");
    }
    if (num_classes < 2 && source != DataSource::synthetic_theory) {
        throw ConfigError("dataset: num_classes must be >= 2");
    }
    if (label_bound <= 0.0) {
        throw ConfigError("dataset: label_bound must be positive");
    }
    if (source == DataSource::idx_files && (images_path.empty() || labels_path.empty())) {
        throw ConfigError("dataset: idx_files source needs images_path and labels_path");
    }
    if (source == DataSource::csv_file && csv_path.empty()) {
        throw ConfigError("dataset: csv_file source needs csv_path");
    }
}

ConvStackSpec ExperimentConfig::build_model_spec() const {
    return make_convstack_spec(dataset.d_hat, channels, dataset.num_classes, loss,
                               strided_blocks);
}

void ExperimentConfig::validate() const {
    if (seeds.empty()) {
        throw ConfigError("experiment: seeds must be nonempty");
    }
    for (double r : pruning_ratios) {
        if (r < 0.0 || r >= 1.0) {
            throw ConfigError("experiment: pruning ratio outside [0,1)");
        }
    }
    dataset.validate();
    if (mode == RunMode::system) {
        schedule.validate();
        const ConvStackSpec model = build_model_spec();
        model.validate_partition(schedule.S);
        if (pruning_ratios.empty()) {
            throw ConfigError("experiment: pruning_ratios must be nonempty in system mode");
        }
        if (protocols.empty()) {
            throw ConfigError("experiment: protocols must be nonempty");
        }
        for (const std::string& p : protocols) {
            if (p != "loft" && p != "local_sgd" && p != "dense") {
                throw ConfigError("experiment: unknown protocol '" + p + "'");
            }
        }
        if (finetune_epochs == 0) {
            throw ConfigError("experiment: finetune_epochs must be >= 1");
        }
        if (!(finetune_eta > 0.0)) {
            throw ConfigError("experiment: finetune_eta must be positive");
        }
    } else {
        TheoryConfig probe = theory;
        probe.n = dataset.n;
        probe.p = dataset.height * dataset.width;
        probe.d_hat = dataset.d_hat;
        for (std::size_t m : m_grid) {
            for (std::size_t s : s_grid) {
                probe.m = m;
                probe.S = s;
                probe.validate();
            }
        }
        if (m_grid.empty() || s_grid.empty()) {
            throw ConfigError("experiment: theory grids must be nonempty");
        }
        if (moment_trials < 10000) {
            throw ConfigError("experiment: moment_trials must be >= 10^4");
        }
    }
}

namespace {

struct RawValue {
    std::string value;
    int line = 0;
    bool consumed = false;
};

using Section = std::map<std::string, RawValue>;

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) {
        ++a;
    }
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) {
        --b;
    }
    return s.substr(a, b - a);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    out.erase(std::remove_if(out.begin(), out.end(),
                             [](const std::string& x) { return x.empty(); }),
              out.end());
    return out;
}

class ConfigReader {
public:
    ConfigReader(const std::string& text, std::string origin) : origin_(std::move(origin)) {
        std::istringstream in(text);
        std::string line;
        std::string section;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string stripped = trim(line);
            if (stripped.empty() || stripped[0] == '#' || stripped[0] == ';') {
                continue;
            }
            if (stripped.front() == '[') {
                if (stripped.back() != ']') {
                    fail(line_no, "unterminated section header");
                }
                section = trim(stripped.substr(1, stripped.size() - 2));
                sections_[section]; // create
                continue;
            }
            const std::size_t eq = stripped.find('=');
            if (eq == std::string::npos) {
                fail(line_no, "expected key = value");
            }
            if (section.empty()) {
                fail(line_no, "key outside any [section]");
            }
            const std::string key = trim(stripped.substr(0, eq));
            const std::string value = trim(stripped.substr(eq + 1));
            if (key.empty()) {
                fail(line_no, "empty key");
            }
            auto [it, inserted] = sections_[section].emplace(key, RawValue{value, line_no, false});
            if (!inserted) {
                fail(line_no, "duplicate key '" + key + "'");
            }
        }
    }

    bool has(const std::string& section, const std::string& key) {
        auto sit = sections_.find(section);
        if (sit == sections_.end()) {
            return false;
        }
        return sit->second.count(key) != 0;
    }

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) {
        RawValue* raw = lookup(section, key);
        if (raw == nullptr) {
            return fallback;
        }
        raw->consumed = true;
        return raw->value;
    }

    double get_double(const std::string& section, const std::string& key, double fallback) {
        RawValue* raw = lookup(section, key);
        if (raw == nullptr) {
            return fallback;
        }
        raw->consumed = true;
        return parse_double(raw->value, raw->line);
    }

    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) {
        RawValue* raw = lookup(section, key);
        if (raw == nullptr) {
            return fallback;
        }
        raw->consumed = true;
        return parse_u64(raw->value, raw->line);
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) {
        RawValue* raw = lookup(section, key);
        if (raw == nullptr) {
            return fallback;
        }
        raw->consumed = true;
        if (raw->value == "true" || raw->value == "1") {
            return true;
        }
        if (raw->value == "false" || raw->value == "0") {
            return false;
        }
        fail(raw->line, "expected true/false for '" + key + "'");
        return false;
    }

    std::vector<std::uint64_t> get_u64_list(const std::string& section, const std::string& key,
                                            std::vector<std::uint64_t> fallback) {
        RawValue* raw = lookup(section, key);
        if (raw == nullptr) {
            return fallback;
        }
        raw->consumed = true;
        std::vector<std::uint64_t> out;
        for (const std::string& item : split_list(raw->value)) {
            out.push_back(parse_u64(item, raw->line));
        }
        return out;
    }

    std::vector<double> get_double_list(const std::string& section, const std::string& key,
                                        std::vector<double> fallback) {
        RawValue* raw = lookup(section, key);
        if (raw == nullptr) {
            return fallback;
        }
        raw->consumed = true;
        std::vector<double> out;
        for (const std::string& item : split_list(raw->value)) {
            out.push_back(parse_double(item, raw->line));
        }
        return out;
    }

    std::vector<std::string> get_string_list(const std::string& section, const std::string& key,
                                             std::vector<std::string> fallback) {
        RawValue* raw = lookup(section, key);
        if (raw == nullptr) {
            return fallback;
        }
        raw->consumed = true;
        return split_list(raw->value);
    }

    void finish(const std::vector<std::string>& known_sections) {
        for (const auto& [name, section] : sections_) {
            if (std::find(known_sections.begin(), known_sections.end(), name) ==
                known_sections.end()) {
                throw FormatError(origin_ + ": unknown section [" + name + "]");
            }
            for (const auto& [key, raw] : section) {
                if (!raw.consumed) {
                    fail(raw.line, "unknown key '" + key + "' in section [" + name + "]");
                }
            }
        }
    }

private:
    RawValue* lookup(const std::string& section, const std::string& key) {
        auto sit = sections_.find(section);
        if (sit == sections_.end()) {
            return nullptr;
        }
        auto kit = sit->second.find(key);
        if (kit == sit->second.end()) {
            return nullptr;
        }
        return &kit->second;
    }

    double parse_double(const std::string& s, int line) {
        double v = 0.0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
            fail(line, "expected a number, got '" + s + "'");
        }
        return v;
    }

    std::uint64_t parse_u64(const std::string& s, int line) {
        std::uint64_t v = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
            fail(line, "expected a non-negative integer, got '" + s + "'");
        }
        return v;
    }

    [[noreturn]] void fail(int line, const std::string& message) {
        throw FormatError(origin_ + ":" + std::to_string(line) + ": " + message);
    }

    std::string origin_;
    std::map<std::string, Section> sections_;
};

DataSource parse_source(const std::string& s) {
    if (s == "synthetic_theory") {
        return DataSource::synthetic_theory;
    }
    if (s == "synthetic_images") {
        return DataSource::synthetic_images;
    }
    if (s == "idx_files") {
        return DataSource::idx_files;
    }
    if (s == "csv_file") {
        return DataSource::csv_file;
    }
    throw ConfigError("dataset: unknown source '" + s + "'");
}

} // namespace

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open file: " + path);
    }
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

ExperimentConfig load_config(const std::string& path) {
    return parse_config_text(read_text_file(path), path);
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    ConfigReader reader(text, origin);
    ExperimentConfig cfg;

    const std::string mode = reader.get_string("experiment", "mode", "system");
    if (mode == "theory") {
        cfg.mode = RunMode::theory;
    } else if (mode == "system") {
        cfg.mode = RunMode::system;
    } else {
        throw ConfigError("experiment: mode must be 'theory' or 'system', got '" + mode + "'");
    }
    cfg.master_seed = reader.get_u64("experiment", "master_seed", 1);
    cfg.seeds = reader.get_u64_list("experiment", "seeds", {1});
    cfg.output_dir = reader.get_string("experiment", "output_dir", "out");
    cfg.pruning_ratios = reader.get_double_list("experiment", "pruning_ratios", {0.5});
    cfg.finetune_epochs = reader.get_u64("experiment", "finetune_epochs", 30);
    cfg.finetune_eta = reader.get_double("experiment", "finetune_eta", 0.05);
    cfg.protocols = reader.get_string_list("experiment", "protocols", {"loft", "dense"});

    cfg.dataset.source = parse_source(reader.get_string("dataset", "source",
                                                        cfg.mode == RunMode::theory
                                                            ? "synthetic_theory"
                                                            : "synthetic_images"));
    cfg.dataset.n = reader.get_u64("dataset", "n", cfg.mode == RunMode::theory ? 16 : 128);
    cfg.dataset.n_test = reader.get_u64("dataset", "n_test", 64);
    cfg.dataset.d_hat = reader.get_u64("dataset", "d_hat", 1);
    cfg.dataset.height = reader.get_u64("dataset", "height", cfg.mode == RunMode::theory ? 4 : 8);
    cfg.dataset.width = reader.get_u64("dataset", "width", cfg.mode == RunMode::theory ? 4 : 8);
    cfg.dataset.num_classes = reader.get_u64("dataset", "num_classes", 2);
    cfg.dataset.label_bound = reader.get_double("dataset", "label_bound", 1.0);
    cfg.dataset.normalize = reader.get_bool("dataset", "normalize", true);
    cfg.dataset.images_path = reader.get_string("dataset", "images_path", "");
    cfg.dataset.labels_path = reader.get_string("dataset", "labels_path", "");
    cfg.dataset.csv_path = reader.get_string("dataset", "csv_path", "");

    std::vector<std::uint64_t> channels64 =
        reader.get_u64_list("model", "channels", {8, 16, 16, 32});
    cfg.channels.assign(channels64.begin(), channels64.end());
    std::vector<std::uint64_t> strided64 = reader.get_u64_list("model", "strided_blocks", {});
    cfg.strided_blocks.assign(strided64.begin(), strided64.end());
    const std::string loss = reader.get_string("model", "loss", "cross_entropy");
    if (loss == "mse") {
        cfg.loss = LossKind::mse;
    } else if (loss == "cross_entropy") {
        cfg.loss = LossKind::cross_entropy;
    } else {
        throw ConfigError("model: loss must be 'mse' or 'cross_entropy', got '" + loss + "'");
    }

    cfg.schedule.S = reader.get_u64("schedule", "workers", 2);
    cfg.schedule.T = reader.get_u64("schedule", "rounds", 10);
    cfg.schedule.ell = reader.get_u64("schedule", "local_iters", 2);
    cfg.schedule.batch_size = reader.get_u64("schedule", "batch_size", 32);
    cfg.schedule.eta = reader.get_double("schedule", "eta", 0.05);
    cfg.schedule.worker_seed_offsets =
        reader.get_u64_list("schedule", "worker_seed_offsets", {});
    cfg.schedule.freeze_partition = reader.get_bool("schedule", "freeze_partition", false);
    cfg.schedule.master_seed = cfg.master_seed;
    cfg.gpipe_stages = reader.get_u64("schedule", "gpipe_stages", 2);

    cfg.theory.n = cfg.dataset.n;
    cfg.theory.d_hat = cfg.dataset.d_hat;
    cfg.theory.p = cfg.dataset.height * cfg.dataset.width;
    cfg.theory.label_bound = cfg.dataset.label_bound;
    cfg.theory.m = reader.get_u64("theory", "m", 256);
    cfg.theory.q = reader.get_u64("theory", "q", 9);
    cfg.theory.kappa = reader.get_double("theory", "kappa", 0.0);
    cfg.theory.xi = reader.get_double("theory", "xi", 1.0);
    cfg.theory.eta_coeff = reader.get_double("theory", "eta_coeff", 1.0);
    cfg.theory.S = reader.get_u64("theory", "workers", 1);
    cfg.theory.T = reader.get_u64("theory", "iterations", 100);
    cfg.theory.delta = reader.get_double("theory", "delta", 0.1);
    cfg.theory.seed = cfg.master_seed;
    std::vector<std::uint64_t> mg = reader.get_u64_list("theory", "m_grid", {cfg.theory.m});
    cfg.m_grid.assign(mg.begin(), mg.end());
    std::vector<std::uint64_t> sg = reader.get_u64_list("theory", "s_grid", {cfg.theory.S});
    cfg.s_grid.assign(sg.begin(), sg.end());
    cfg.moment_trials = reader.get_u64("theory", "moment_trials", 100000);

    reader.finish({"experiment", "dataset", "model", "schedule", "theory"});
    cfg.validate();
    return cfg;
}

} // namespace loft
