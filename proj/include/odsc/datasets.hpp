#ifndef ODSC_DATASETS_HPP
#define ODSC_DATASETS_HPP

#include "odsc/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace odsc {

struct DatasetMeta {
    std::string source;
    uint64_t subset_seed = 0;
    uint64_t subset_hash = 0; // FNV-1a over the chosen original indices
    int resize_h = 0, resize_w = 0;
    double noise_level = 0.0;
    uint64_t noise_seed = 0;
};

/// Images (N x 1 x H x W, values in [0,1]) with integer class labels.
struct LabeledDataset {
    Tensor images;
    std::vector<int> labels;
    DatasetMeta meta;

    int size() const { return images.n; }
    int num_classes() const;
    void validate() const;
};

/// MNIST IDX pair (big-endian; image magic 2051, label magic 2049), pixels /255.
LabeledDataset parse_idx(const std::vector<uint8_t>& image_bytes,
                         const std::vector<uint8_t>& label_bytes);
LabeledDataset load_idx_files(const std::string& image_path, const std::string& label_path);

std::vector<uint8_t> serialize_idx_images(const LabeledDataset& ds);
std::vector<uint8_t> serialize_idx_labels(const LabeledDataset& ds);

/// Raw container: plain-text manifest of "relative/path.pgm<TAB>label" lines,
/// images as binary 8-bit PGM (P5), all the same size.
LabeledDataset load_raw_folder(const std::string& manifest_path);

/// Seeded uniform choice of per_class samples per class, output ordered by
/// (class, original index).
LabeledDataset subset_per_class(const LabeledDataset& ds, int per_class, uint64_t seed);

/// Replace floor(level*H*W) distinct pixels per image with uniform [0,1] values.
LabeledDataset add_noise(const LabeledDataset& ds, double level, uint64_t seed);

LabeledDataset resize_dataset(const LabeledDataset& ds, int h, int w);

/// 8-bit binary PGM (P5) helpers.
Tensor read_pgm(const std::string& path);
void write_pgm(const std::string& path, const Tensor& image, int batch_index, int channel);

} // namespace odsc

#endif
