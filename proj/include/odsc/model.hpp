#ifndef ODSC_MODEL_HPP
#define ODSC_MODEL_HPP

#include "odsc/layers.hpp"

#include <string>
#include <utility>
#include <vector>

namespace odsc {

enum class Fusion { Concat, Add };
enum class Variant { DscU, DscO, Odsc };
enum class Stage { Pretrain, Finetune };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct LayerSpec {
    int kernel = 3;
    int channels_out = 1;
    bool bias_on_input = false; // final ODSC decoder layer parameterization
};

struct NetworkSpec {
    Variant variant = Variant::Odsc;
    std::vector<LayerSpec> enc_u, enc_o, dec;
    int in_h = 0, in_w = 0, in_c = 1;
    Fusion fusion = Fusion::Concat;
    int n_samples = 0;
    double lambda1 = 1.0, lambda2 = 1.0, lambda3 = 1.0;
    int pretrain_epochs = 100, finetune_epochs = 100;

    bool uses_u() const { return variant != Variant::DscO; }
    bool uses_o() const { return variant != Variant::DscU; }
};

/// Spatial size of the fused latent: the input halved (ceil) once per decoder stage.
std::pair<int, int> latent_size(const NetworkSpec& spec);
/// Channel count entering the decoder for the spec's variant and fusion mode.
int fused_channels(const NetworkSpec& spec);
/// Decoder upsample targets, innermost first, ending at the input size.
std::vector<std::pair<int, int>> decoder_targets(const NetworkSpec& spec);

void validate_spec(const NetworkSpec& spec);

struct ParamCountRow {
    std::string name;
    int kernel = 0;       // 0 for the self-expressive layer
    int channels = 0;
    Eigen::Index params = 0;
};
struct ParamCounts {
    std::vector<ParamCountRow> rows;
    Eigen::Index total = 0;
};
ParamCounts param_count(const NetworkSpec& spec);

/// Exact rational, for receptive-field extents like k/2.
struct Rational {
    long long num = 0, den = 1;
    Rational() = default;
    Rational(long long n, long long d);
    bool operator==(const Rational& o) const { return num == o.num && den == o.den; }
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

enum class RfMode { Undercomplete, Overcomplete };
/// Per-side receptive-field extent of conv layer i (1-based) with kernel k:
/// 2^(i-1)*k under pooling, k/2^(i-1) under upsampling.
Rational receptive_field(int layer_index, int kernel, RfMode mode);

struct Network {
    NetworkSpec spec;
    std::vector<ConvWeights> enc_u, enc_o, dec;
    Eigen::MatrixXd C; // N x N self-expressive coefficients

    int latent_h = 0, latent_w = 0;
};

/// He-normal conv weights (seeded), zero biases, C filled with 1e-4.
Network build_network(const NetworkSpec& spec, Rng& rng);

struct LatentBlock {
    Eigen::MatrixXd Z; // N x d, one row per sample (vectorized fused maps)
    int channels = 0, h = 0, w = 0;
};

LatentBlock encode_fuse(const Network& net, const Tensor& x);

/// Row i of the result is sum_j C(j,i) * row j of Z (the linear layer ZC
/// of the column convention, written for row-major Z).
Eigen::MatrixXd self_express(const Eigen::MatrixXd& z, const Eigen::MatrixXd& c);

/// Decode latent rows back to image space through the recorded mirror sizes.
Tensor decode(const Network& net, const Eigen::MatrixXd& latent_rows);

/// Eq-style total loss on already-computed quantities (value only).
double loss_total_value(const Tensor& x, const Tensor& xhat, const Eigen::MatrixXd& z,
                        const Eigen::MatrixXd& c, double l1, double l2, double l3);

/// Full forward + backward pass of one stage.
struct Objective {
    double loss = 0.0;
    double recon_term = 0.0, reg_term = 0.0, self_term = 0.0;
    Tensor xhat;
    Eigen::MatrixXd Z;
    std::vector<Eigen::VectorXd> dw_enc_u, db_enc_u, dw_enc_o, db_enc_o, dw_dec, db_dec;
    Eigen::MatrixXd dC; // zero-sized during pretraining
};
Objective evaluate(const Network& net, const Tensor& x, Stage stage);

/// Conv parameters as one flat vector (enc_u, enc_o, dec order; w then b per layer).
Eigen::VectorXd flatten_conv(const Network& net);
void unflatten_conv(Network& net, const Eigen::VectorXd& flat);
Eigen::VectorXd flatten_conv_grads(const Network& net, const Objective& obj);

/// Conv(+ReLU) outputs before resampling, for feature-map dumps.
/// Names: enc_u.1, enc_o.2, dec.1, ...
std::vector<std::pair<std::string, Tensor>> forward_features(const Network& net, const Tensor& x);
std::vector<std::string> feature_names(const NetworkSpec& spec);

} // namespace odsc

#endif
