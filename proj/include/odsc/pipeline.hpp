#ifndef ODSC_PIPELINE_HPP
#define ODSC_PIPELINE_HPP

#include "odsc/config.hpp"
#include "odsc/datasets.hpp"
#include "odsc/spectral.hpp"
#include "odsc/training.hpp"

#include <string>
#include <vector>

namespace odsc {

struct MismatchError : std::runtime_error {
    explicit MismatchError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Load + subset + resize + corrupt per the dataset block.
LabeledDataset load_dataset(const DatasetConfig& cfg);

struct PipelineResult {
    double error_percent = 0.0;
    double wall_seconds = 0.0;
    std::vector<int> labels_pred, labels_true;
    Eigen::MatrixXd affinity;
    Eigen::MatrixXd C;
    std::vector<double> pretrain_trace, finetune_trace;
    uint64_t subset_hash = 0;
    uint64_t cfg_hash = 0;
};

/// pretrain -> finetune -> affinity -> spectral clustering -> error.
PipelineResult run_full(const RunConfig& cfg);

/// Finetune (if needed) + clustering starting from an existing checkpoint.
PipelineResult run_cluster(const RunConfig& cfg, const Checkpoint& ck,
                           const LabeledDataset& ds);

/// Provenance comment lines for emitted CSVs.
std::vector<std::string> provenance_lines(const RunConfig& cfg, uint64_t subset_hash);

void write_csv(const std::string& path, const std::vector<std::string>& provenance,
               const std::string& header, const std::vector<std::string>& rows);

} // namespace odsc

#endif
