#ifndef ODSC_TRAINING_HPP
#define ODSC_TRAINING_HPP

#include "odsc/adam.hpp"
#include "odsc/model.hpp"

#include <string>
#include <vector>

namespace odsc {

struct TrainConfig {
    Stage stage = Stage::Pretrain;
    int epochs = 100;
    double lr = 1e-3;
    uint64_t seed = 1;
    bool freeze_conv = false; // fine-tune C only (ablation switch)
};

struct TrainState {
    AdamState adam;
    int epoch = 0;
};

struct TrainResult {
    std::vector<double> loss_trace; // one entry per epoch (one full-batch Adam step)
};

/// Stage 1: reconstruction-only training of the conv parameters; C untouched.
TrainResult pretrain(Network& net, const Tensor& x, const TrainConfig& cfg, TrainState& state);

/// Stage 2: joint training of conv parameters and C on the combined loss.
TrainResult finetune(Network& net, const Tensor& x, const TrainConfig& cfg, TrainState& state);

/// Closed-form minimizer of mu*||C||_F^2/2-style linear self-expression:
/// C* = (G + mu I)^-1 G with G = Z Z^T.
Eigen::MatrixXd solve_linear_self_expression(const Eigen::MatrixXd& z, double mu);

/// Versioned binary checkpoint ("ODSC" magic, little-endian doubles).
struct Checkpoint {
    uint64_t config_hash = 0;
    Stage stage = Stage::Pretrain;
    int epoch = 0;
    Eigen::VectorXd conv_params;
    Eigen::MatrixXd C;
    AdamState adam;
};

Checkpoint make_checkpoint(const Network& net, const TrainState& state, Stage stage,
                           uint64_t config_hash);
void restore_checkpoint(const Checkpoint& ck, Network& net, TrainState& state);

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace odsc

#endif
