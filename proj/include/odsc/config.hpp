#ifndef ODSC_CONFIG_HPP
#define ODSC_CONFIG_HPP

#include "odsc/model.hpp"

#include <string>

namespace odsc {

inline constexpr const char* kVersionString = "0.1.0";

struct DatasetConfig {
    std::string format;   // "idx" | "raw"
    std::string images;   // idx image file
    std::string labels;   // idx label file
    std::string manifest; // raw-container manifest
    int subset_per_class = 0; // 0 = keep all samples
    int resize_h = 0, resize_w = 0; // 0 = keep native size
    double noise = 0.0;
    uint64_t seed = 1;
};

struct TrainBlock {
    int pretrain_epochs = 100;
    int finetune_epochs = 100;
    double lr = 1e-3;
    uint64_t seed = 1;
};

struct SpectralConfig {
    int k = 2;
    double rho = 1.0;
    int restarts = 20;
    uint64_t seed = 1;
};

struct RunConfig {
    DatasetConfig dataset;
    NetworkSpec model;
    TrainBlock train;
    SpectralConfig spectral;
    std::string out_dir = "out";
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

/// Fixed-order serialization of every field that influences a run.
std::string canonical_config(const RunConfig& cfg);
/// FNV-1a over the canonical serialization.
uint64_t config_hash(const RunConfig& cfg);

/// Applies a CLI --seed override to all seed fields.
void override_seed(RunConfig& cfg, uint64_t seed);

} // namespace odsc

#endif
