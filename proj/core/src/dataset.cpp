#include "dris/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dris/model.hpp"
#include "dris/rng.hpp"

namespace dris {

std::size_t LabeledDataset::num_corrupt() const {
    std::size_t c = 0;
    for (auto m : corrupt_mask) c += m ? 1 : 0;
    return c;
}

void LabeledDataset::check_consistent() const {
    if (labels.size() != n || clean_labels.size() != n || corrupt_mask.size() != n)
        throw std::invalid_argument("dataset: vector lengths disagree with n");
    if (features.size() != n * dim)
        throw std::invalid_argument("dataset: feature matrix size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes ||
            clean_labels[i] < 0 || clean_labels[i] >= num_classes)
            throw std::invalid_argument("dataset: label out of range at row " +
                                        std::to_string(i));
        bool differs = labels[i] != clean_labels[i];
        if (differs != static_cast<bool>(corrupt_mask[i]))
            throw std::invalid_argument("dataset: corrupt_mask inconsistent at row " +
                                        std::to_string(i));
    }
}

double synthetic_rare_center_distance() { return 15.0; }

LabeledDataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n < 2) throw std::invalid_argument("synthetic: n must be >= 2");
    if (!(spec.rare_ratio > 0.0 && spec.rare_ratio < 1.0))
        throw std::invalid_argument("synthetic: rare_ratio must be in (0,1)");
    if (!(spec.var_rare > 0.0) || !(spec.var_common > 0.0))
        throw std::invalid_argument("synthetic: variances must be positive");

    const std::size_t n_rare =
        static_cast<std::size_t>(spec.rare_ratio * static_cast<double>(spec.n));
    LabeledDataset ds;
    ds.n = spec.n;
    ds.dim = spec.d;
    ds.num_classes = 2;
    ds.features.resize(spec.n * spec.d);
    ds.labels.resize(spec.n);

    auto gen = named_stream(spec.seed, "synthetic-generation");
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sd_rare = std::sqrt(spec.var_rare);
    const double sd_common = std::sqrt(spec.var_common);
    const double center = synthetic_rare_center_distance();

    // Rare cluster first (label 1), isotropic around (center, 0, ..., 0).
    for (std::size_t i = 0; i < spec.n; ++i) {
        const bool rare = i < n_rare;
        const double sd = rare ? sd_rare : sd_common;
        double* row = ds.features.data() + i * spec.d;
        for (std::size_t j = 0; j < spec.d; ++j) row[j] = sd * normal(gen);
        if (rare) row[0] += center;
        ds.labels[i] = rare ? 1 : 0;
    }
    ds.clean_labels = ds.labels;
    ds.corrupt_mask.assign(spec.n, 0);
    return ds;
}

namespace {

int parse_label(const std::string& field, std::size_t row) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(field, &pos);
        if (pos != field.size()) throw std::invalid_argument("trailing chars");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("csv: bad label at row " + std::to_string(row) +
                                 ": '" + field + "'");
    }
}

std::uint32_t read_be32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("idx: truncated " + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

LabeledDataset load_csv(const std::string& path, bool header) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv: cannot open " + path);
    LabeledDataset ds;
    std::string line;
    std::size_t row = 0;
    std::size_t expected_cols = 0;
    if (header && !std::getline(in, line))
        throw std::runtime_error("csv: empty file " + path);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++row;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() < 2)
            throw std::runtime_error("csv: row " + std::to_string(row) +
                                     " has fewer than 2 columns");
        if (expected_cols == 0)
            expected_cols = fields.size();
        else if (fields.size() != expected_cols)
            throw std::runtime_error("csv: row " + std::to_string(row) +
                                     " has " + std::to_string(fields.size()) +
                                     " columns, expected " +
                                     std::to_string(expected_cols));
        for (std::size_t j = 0; j + 1 < fields.size(); ++j) {
            try {
                std::size_t pos = 0;
                const double v = std::stod(fields[j], &pos);
                if (pos != fields[j].size()) throw std::invalid_argument("trailing");
                ds.features.push_back(v);
            } catch (const std::exception&) {
                throw std::runtime_error("csv: bad value at row " +
                                         std::to_string(row) + " col " +
                                         std::to_string(j + 1));
            }
        }
        ds.labels.push_back(parse_label(fields.back(), row));
    }
    if (row == 0) throw std::runtime_error("csv: no data rows in " + path);
    ds.n = row;
    ds.dim = expected_cols - 1;
    const int max_label = *std::max_element(ds.labels.begin(), ds.labels.end());
    const int min_label = *std::min_element(ds.labels.begin(), ds.labels.end());
    if (min_label < 0) throw std::runtime_error("csv: negative label");
    ds.num_classes = max_label + 1;
    ds.clean_labels = ds.labels;
    ds.corrupt_mask.assign(ds.n, 0);
    return ds;
}

LabeledDataset load_idx_pair(const std::string& images_path,
                             const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw std::runtime_error("idx: cannot open " + images_path);
    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw std::runtime_error("idx: cannot open " + labels_path);

    const std::uint32_t img_magic = read_be32(imgs, "image magic");
    if (img_magic != 0x803)
        throw std::runtime_error("idx: bad image magic in " + images_path);
    const std::uint32_t n = read_be32(imgs, "image count");
    const std::uint32_t rows = read_be32(imgs, "rows");
    const std::uint32_t cols = read_be32(imgs, "cols");

    const std::uint32_t lab_magic = read_be32(labs, "label magic");
    if (lab_magic != 0x801)
        throw std::runtime_error("idx: bad label magic in " + labels_path);
    const std::uint32_t n_labels = read_be32(labs, "label count");
    if (n_labels != n)
        throw std::runtime_error("idx: image/label count mismatch");

    LabeledDataset ds;
    ds.n = n;
    ds.dim = static_cast<std::size_t>(rows) * cols;
    ds.features.resize(ds.n * ds.dim);
    ds.labels.resize(ds.n);
    std::vector<unsigned char> buf(ds.dim);
    for (std::uint32_t i = 0; i < n; ++i) {
        if (!imgs.read(reinterpret_cast<char*>(buf.data()),
                       static_cast<std::streamsize>(buf.size())))
            throw std::runtime_error("idx: truncated image data at offset " +
                                     std::to_string(16 + std::size_t(i) * ds.dim));
        for (std::size_t j = 0; j < ds.dim; ++j)
            ds.features[i * ds.dim + j] = static_cast<double>(buf[j]);
        char lab = 0;
        if (!labs.read(&lab, 1))
            throw std::runtime_error("idx: truncated label data at offset " +
                                     std::to_string(8 + i));
        ds.labels[i] = static_cast<unsigned char>(lab);
    }
    const int max_label = ds.n ? *std::max_element(ds.labels.begin(), ds.labels.end()) : 0;
    ds.num_classes = max_label + 1;
    ds.clean_labels = ds.labels;
    ds.corrupt_mask.assign(ds.n, 0);
    return ds;
}

std::string to_string(dense_format f) {
    switch (f) {
        case dense_format::csv: return "csv";
        case dense_format::idx_pair: return "idx-pair";
    }
    throw std::invalid_argument("unknown dense format");
}

dense_format dense_format_from_string(const std::string& s) {
    if (s == "csv") return dense_format::csv;
    if (s == "idx-pair") return dense_format::idx_pair;
    throw std::invalid_argument("unknown dense format: " + s);
}

LabeledDataset load_dense(const std::string& path, dense_format format, bool header) {
    if (format == dense_format::csv) return load_csv(path, header);
    const auto comma = path.find(',');
    if (comma == std::string::npos)
        throw std::invalid_argument(
            "idx-pair path must be '<images>,<labels>', got: " + path);
    return load_idx_pair(path.substr(0, comma), path.substr(comma + 1));
}

namespace {

// Relabel `idx` to a uniformly chosen other class and update bookkeeping.
void flip_label(LabeledDataset& ds, std::size_t idx, std::mt19937_64& target_gen) {
    const int c = ds.num_classes;
    std::uniform_int_distribution<int> pick(0, c - 2);
    int offset = pick(target_gen);
    int new_label = offset >= ds.clean_labels[idx] ? offset + 1 : offset;
    ds.labels[idx] = new_label;
    ds.corrupt_mask[idx] = ds.labels[idx] != ds.clean_labels[idx] ? 1 : 0;
}

}  // namespace

LabeledDataset subset(const LabeledDataset& ds,
                      const std::vector<std::size_t>& indices) {
    LabeledDataset sub;
    sub.n = indices.size();
    sub.dim = ds.dim;
    sub.num_classes = ds.num_classes;
    sub.features.reserve(sub.n * sub.dim);
    for (std::size_t i : indices) {
        if (i >= ds.n) throw std::invalid_argument("subset: index out of range");
        const auto row = ds.row(i);
        sub.features.insert(sub.features.end(), row.begin(), row.end());
        sub.labels.push_back(ds.labels[i]);
        sub.clean_labels.push_back(ds.clean_labels[i]);
        sub.corrupt_mask.push_back(ds.corrupt_mask[i]);
    }
    return sub;
}

LabeledDataset inject_uniform_noise(const LabeledDataset& ds, double nu,
                                    std::uint64_t seed) {
    if (!(nu >= 0.0 && nu < 1.0))
        throw std::invalid_argument("noise rate must be in [0,1)");
    if (ds.num_classes < 2)
        throw std::invalid_argument("noise injection needs at least 2 classes");
    LabeledDataset out = ds;
    out.labels = ds.clean_labels;
    out.corrupt_mask.assign(ds.n, 0);
    const auto flips = static_cast<std::size_t>(
        std::floor(nu * static_cast<double>(ds.n) + 1e-9));
    if (flips == 0) return out;

    std::vector<std::size_t> order(ds.n);
    std::iota(order.begin(), order.end(), 0);
    auto select_gen = named_stream(seed, "flip-selection");
    std::shuffle(order.begin(), order.end(), select_gen);
    auto target_gen = named_stream(seed, "flip-target");
    for (std::size_t i = 0; i < flips; ++i) flip_label(out, order[i], target_gen);
    return out;
}

LabeledDataset inject_targeted_noise(const LabeledDataset& ds, double nu,
                                     const TrainedModel& attacker,
                                     std::uint64_t seed) {
    if (!(nu >= 0.0 && nu < 1.0))
        throw std::invalid_argument("noise rate must be in [0,1)");
    if (attacker.spec.input_dim != ds.dim ||
        attacker.spec.num_classes != ds.num_classes)
        throw std::invalid_argument("attacker model does not match dataset shape");

    LabeledDataset clean = ds;
    clean.labels = ds.clean_labels;
    clean.corrupt_mask.assign(ds.n, 0);
    LabeledDataset out = clean;
    const auto flips = static_cast<std::size_t>(
        std::floor(nu * static_cast<double>(ds.n) + 1e-9));
    if (flips == 0) return out;

    const PerSampleStats stats = eval_stats(attacker, clean);
    std::vector<std::size_t> order(ds.n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                         return stats.grad_norm[a] > stats.grad_norm[b];
                     });
    auto target_gen = named_stream(seed, "flip-target");
    for (std::size_t i = 0; i < flips; ++i) flip_label(out, order[i], target_gen);
    return out;
}

void save_csv(const LabeledDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    char buf[64];
    for (std::size_t i = 0; i < ds.n; ++i) {
        const double* row = ds.features.data() + i * ds.dim;
        for (std::size_t j = 0; j < ds.dim; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", row[j]);
            out << buf << ',';
        }
        out << ds.labels[i] << '\n';
    }
}

void save_mask(const LabeledDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (auto m : ds.corrupt_mask) out << (m ? 1 : 0) << '\n';
}

void save_labels(const std::vector<int>& labels, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (int v : labels) out << v << '\n';
}

std::vector<std::uint8_t> load_mask(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::uint8_t> mask;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line != "0" && line != "1")
            throw std::runtime_error("mask file: expected 0/1 lines in " + path);
        mask.push_back(line == "1" ? 1 : 0);
    }
    return mask;
}

std::vector<int> load_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<int> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        labels.push_back(parse_label(line, labels.size()));
    }
    return labels;
}

std::string mask_hash(const LabeledDataset& ds) {
    std::uint64_t h = 14695981039346656037ull;
    for (auto m : ds.corrupt_mask) {
        h ^= m ? 1u : 0u;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace dris
