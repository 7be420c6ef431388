#include "odsc/datasets.hpp"

#include "odsc/layers.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace odsc {

namespace fs = std::filesystem;

int LabeledDataset::num_classes() const {
    std::vector<int> uniq(labels);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    return static_cast<int>(uniq.size());
}

void LabeledDataset::validate() const {
    if (static_cast<int>(labels.size()) != images.n)
        throw DataError("dataset: label count " + std::to_string(labels.size()) +
                        " != image count " + std::to_string(images.n));
    if (images.n == 0) throw DataError("dataset: empty");
    if (images.data.minCoeff() < 0.0 || images.data.maxCoeff() > 1.0)
        throw DataError("dataset: pixel values outside [0,1]");
    if (num_classes() < 2) throw DataError("dataset: fewer than 2 classes");
}

namespace {

uint32_t read_be32(const std::vector<uint8_t>& b, size_t off) {
    if (off + 4 > b.size()) throw DataError("idx: truncated header");
    return (uint32_t(b[off]) << 24) | (uint32_t(b[off + 1]) << 16) |
           (uint32_t(b[off + 2]) << 8) | uint32_t(b[off + 3]);
}

void write_be32(std::vector<uint8_t>& b, uint32_t v) {
    b.push_back(uint8_t(v >> 24));
    b.push_back(uint8_t(v >> 16));
    b.push_back(uint8_t(v >> 8));
    b.push_back(uint8_t(v));
}

uint64_t fnv1a(uint64_t h, uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xFF;
        h *= 0x100000001B3ULL;
    }
    return h;
}

constexpr uint64_t kFnvOffset = 0xCBF29CE484222325ULL;

uint8_t quantize(double v) {
    const double s = std::clamp(v, 0.0, 1.0) * 255.0;
    return static_cast<uint8_t>(std::lround(s));
}

} // namespace

LabeledDataset parse_idx(const std::vector<uint8_t>& image_bytes,
                         const std::vector<uint8_t>& label_bytes) {
    const uint32_t img_magic = read_be32(image_bytes, 0);
    if (img_magic != 2051)
        throw DataError("idx: bad image magic " + std::to_string(img_magic) + " (expected 2051)");
    const uint32_t lab_magic = read_be32(label_bytes, 0);
    if (lab_magic != 2049)
        throw DataError("idx: bad label magic " + std::to_string(lab_magic) + " (expected 2049)");
    const uint32_t n = read_be32(image_bytes, 4);
    const uint32_t h = read_be32(image_bytes, 8);
    const uint32_t w = read_be32(image_bytes, 12);
    const uint32_t nl = read_be32(label_bytes, 4);
    if (n != nl)
        throw DataError("idx: image count " + std::to_string(n) + " != label count " +
                        std::to_string(nl));
    const size_t payload = static_cast<size_t>(n) * h * w;
    if (image_bytes.size() != 16 + payload) throw DataError("idx: image payload size mismatch");
    if (label_bytes.size() != 8 + n) throw DataError("idx: label payload size mismatch");

    LabeledDataset ds;
    ds.images = Tensor(static_cast<int>(n), 1, static_cast<int>(h), static_cast<int>(w));
    for (size_t i = 0; i < payload; ++i)
        ds.images.data[static_cast<Eigen::Index>(i)] = image_bytes[16 + i] / 255.0;
    ds.labels.resize(n);
    for (uint32_t i = 0; i < n; ++i) ds.labels[i] = label_bytes[8 + i];
    ds.meta.source = "idx";
    return ds;
}

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

} // namespace

LabeledDataset load_idx_files(const std::string& image_path, const std::string& label_path) {
    LabeledDataset ds = parse_idx(read_file(image_path), read_file(label_path));
    ds.meta.source = image_path;
    return ds;
}

std::vector<uint8_t> serialize_idx_images(const LabeledDataset& ds) {
    std::vector<uint8_t> b;
    write_be32(b, 2051);
    write_be32(b, static_cast<uint32_t>(ds.images.n));
    write_be32(b, static_cast<uint32_t>(ds.images.h));
    write_be32(b, static_cast<uint32_t>(ds.images.w));
    for (Eigen::Index i = 0; i < ds.images.size(); ++i) b.push_back(quantize(ds.images.data[i]));
    return b;
}

std::vector<uint8_t> serialize_idx_labels(const LabeledDataset& ds) {
    std::vector<uint8_t> b;
    write_be32(b, 2049);
    write_be32(b, static_cast<uint32_t>(ds.labels.size()));
    for (int l : ds.labels) b.push_back(static_cast<uint8_t>(l));
    return b;
}

Tensor read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open '" + path + "'");
    auto next_token = [&]() -> std::string {
        std::string tok;
        char c;
        while (is.get(c)) {
            if (c == '#') {
                while (is.get(c) && c != '\n') {}
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!tok.empty()) return tok;
                continue;
            }
            tok.push_back(c);
        }
        return tok;
    };
    if (next_token() != "P5") throw DataError("'" + path + "': not a binary PGM (P5) file");
    const int w = std::stoi(next_token());
    const int h = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (maxval != 255) throw DataError("'" + path + "': PGM maxval must be 255");
    if (w < 1 || h < 1) throw DataError("'" + path + "': bad PGM dimensions");
    std::vector<char> buf(static_cast<size_t>(w) * h);
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!is) throw DataError("'" + path + "': truncated PGM payload");
    Tensor img(1, 1, h, w);
    for (size_t i = 0; i < buf.size(); ++i)
        img.data[static_cast<Eigen::Index>(i)] = static_cast<uint8_t>(buf[i]) / 255.0;
    return img;
}

void write_pgm(const std::string& path, const Tensor& image, int batch_index, int channel) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os << "P5\n" << image.w << " " << image.h << "\n255\n";
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x)
            os.put(static_cast<char>(quantize(image.at(batch_index, channel, y, x))));
    if (!os) throw DataError("write failed for '" + path + "'");
}

LabeledDataset load_raw_folder(const std::string& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw DataError("cannot open manifest '" + manifest_path + "'");
    const fs::path base = fs::path(manifest_path).parent_path();
    std::vector<std::pair<std::string, int>> entries;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw DataError("manifest '" + manifest_path + "': line without tab separator: " + line);
        entries.emplace_back(line.substr(0, tab), std::stoi(line.substr(tab + 1)));
    }
    if (entries.empty()) throw DataError("manifest '" + manifest_path + "' lists no samples");

    LabeledDataset ds;
    for (size_t i = 0; i < entries.size(); ++i) {
        const Tensor img = read_pgm((base / entries[i].first).string());
        if (i == 0) {
            ds.images = Tensor(static_cast<int>(entries.size()), 1, img.h, img.w);
        } else if (img.h != ds.images.h || img.w != ds.images.w) {
            throw DataError("manifest '" + manifest_path + "': '" + entries[i].first +
                            "' has inconsistent dimensions");
        }
        ds.images.data.segment(static_cast<Eigen::Index>(i) * img.h * img.w,
                               static_cast<Eigen::Index>(img.h) * img.w) = img.data;
        ds.labels.push_back(entries[i].second);
    }
    ds.meta.source = manifest_path;
    return ds;
}

LabeledDataset subset_per_class(const LabeledDataset& ds, int per_class, uint64_t seed) {
    if (per_class < 1) throw ConfigError("subset_per_class: per_class must be positive");
    std::map<int, std::vector<int>> by_class;
    for (int i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
    Rng rng(seed);
    std::vector<int> chosen;
    for (auto& [label, idxs] : by_class) {
        if (static_cast<int>(idxs.size()) < per_class)
            throw DataError("subset_per_class: class " + std::to_string(label) + " has only " +
                            std::to_string(idxs.size()) + " samples, need " +
                            std::to_string(per_class));
        // Partial Fisher-Yates, then restore original order within the class.
        for (int j = 0; j < per_class; ++j) {
            const int pick = j + static_cast<int>(rng.uniform_int(idxs.size() - j));
            std::swap(idxs[j], idxs[pick]);
        }
        std::sort(idxs.begin(), idxs.begin() + per_class);
        chosen.insert(chosen.end(), idxs.begin(), idxs.begin() + per_class);
    }

    LabeledDataset out;
    out.images = Tensor(static_cast<int>(chosen.size()), 1, ds.images.h, ds.images.w);
    const Eigen::Index plane = static_cast<Eigen::Index>(ds.images.h) * ds.images.w;
    uint64_t hash = kFnvOffset;
    for (size_t i = 0; i < chosen.size(); ++i) {
        out.images.data.segment(static_cast<Eigen::Index>(i) * plane, plane) =
            ds.images.data.segment(static_cast<Eigen::Index>(chosen[i]) * plane, plane);
        out.labels.push_back(ds.labels[chosen[i]]);
        hash = fnv1a(hash, static_cast<uint64_t>(chosen[i]));
    }
    out.meta = ds.meta;
    out.meta.subset_seed = seed;
    out.meta.subset_hash = hash;
    return out;
}

LabeledDataset add_noise(const LabeledDataset& ds, double level, uint64_t seed) {
    if (level < 0.0 || level > 1.0) throw ConfigError("add_noise: level must be in [0,1]");
    LabeledDataset out = ds;
    out.meta.noise_level = level;
    out.meta.noise_seed = seed;
    const int hw = ds.images.h * ds.images.w;
    const int corrupt = static_cast<int>(std::floor(level * hw));
    if (corrupt == 0) return out;
    Rng rng(seed);
    std::vector<int> pos(hw);
    for (int b = 0; b < ds.size(); ++b) {
        for (int i = 0; i < hw; ++i) pos[i] = i;
        for (int j = 0; j < corrupt; ++j) {
            const int pick = j + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(hw - j)));
            std::swap(pos[j], pos[pick]);
            out.images.data[static_cast<Eigen::Index>(b) * hw + pos[j]] = rng.uniform();
        }
    }
    return out;
}

LabeledDataset resize_dataset(const LabeledDataset& ds, int h, int w) {
    LabeledDataset out = ds;
    out.images = resize_bilinear(ds.images, h, w);
    out.meta.resize_h = h;
    out.meta.resize_w = w;
    return out;
}

} // namespace odsc
