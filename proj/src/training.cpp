#include "odsc/training.hpp"

#include <Eigen/Cholesky>

#include <cstring>
#include <fstream>

namespace odsc {

namespace {

void check_divergence(double loss, double initial) {
    if (!std::isfinite(loss))
        throw NumericError("training diverged: non-finite loss (lr too high or bad data?)");
    if (loss > 1e6 * std::max(initial, 1e-300))
        throw NumericError("training diverged: loss exceeded 1e6x its initial value");
}

} // namespace

TrainResult pretrain(Network& net, const Tensor& x, const TrainConfig& cfg, TrainState& state) {
    if (cfg.epochs < 0 || cfg.lr <= 0.0) throw ConfigError("pretrain: epochs >= 0 and lr > 0 required");
    TrainResult res;
    state.adam.lr = cfg.lr;
    Eigen::VectorXd params = flatten_conv(net);
    double initial = -1.0;
    for (int e = 0; e < cfg.epochs; ++e) {
        Objective obj = evaluate(net, x, Stage::Pretrain);
        if (initial < 0.0) initial = obj.loss;
        check_divergence(obj.loss, initial);
        res.loss_trace.push_back(obj.loss);
        Eigen::VectorXd grad = flatten_conv_grads(net, obj);
        adam_step(params, grad, state.adam);
        unflatten_conv(net, params);
        state.epoch += 1;
    }
    return res;
}

TrainResult finetune(Network& net, const Tensor& x, const TrainConfig& cfg, TrainState& state) {
    if (cfg.epochs < 0 || cfg.lr <= 0.0) throw ConfigError("finetune: epochs >= 0 and lr > 0 required");
    const NetworkSpec& spec = net.spec;
    TrainResult res;
    state.adam.lr = cfg.lr;
    const Eigen::Index nn = net.C.size();
    double initial = -1.0;

    if (cfg.freeze_conv && spec.lambda1 == 0.0) {
        // Conv stack and decoder are frozen and the reconstruction term is off:
        // the latent is constant, so encode once and iterate on C alone.
        const Eigen::MatrixXd z = encode_fuse(net, x).Z;
        Eigen::VectorXd params = Eigen::Map<const Eigen::VectorXd>(net.C.data(), nn);
        for (int e = 0; e < cfg.epochs; ++e) {
            Eigen::Map<const Eigen::MatrixXd> c(params.data(), net.C.rows(), net.C.cols());
            const Eigen::MatrixXd r = z - c.transpose() * z;
            const double loss = spec.lambda2 * c.squaredNorm() + 0.5 * spec.lambda3 * r.squaredNorm();
            if (initial < 0.0) initial = loss;
            check_divergence(loss, initial);
            res.loss_trace.push_back(loss);
            const Eigen::MatrixXd dc = 2.0 * spec.lambda2 * c - spec.lambda3 * (z * r.transpose());
            Eigen::VectorXd grad = Eigen::Map<const Eigen::VectorXd>(dc.data(), nn);
            adam_step(params, grad, state.adam);
            state.epoch += 1;
        }
        net.C = Eigen::Map<const Eigen::MatrixXd>(params.data(), net.C.rows(), net.C.cols());
        return res;
    }

    Eigen::VectorXd conv = flatten_conv(net);
    Eigen::VectorXd params(cfg.freeze_conv ? nn : conv.size() + nn);
    if (!cfg.freeze_conv) params.head(conv.size()) = conv;
    params.tail(nn) = Eigen::Map<const Eigen::VectorXd>(net.C.data(), nn);
    for (int e = 0; e < cfg.epochs; ++e) {
        Objective obj = evaluate(net, x, Stage::Finetune);
        if (initial < 0.0) initial = obj.loss;
        check_divergence(obj.loss, initial);
        res.loss_trace.push_back(obj.loss);
        Eigen::VectorXd grad(params.size());
        if (!cfg.freeze_conv) grad.head(conv.size()) = flatten_conv_grads(net, obj);
        grad.tail(nn) = Eigen::Map<const Eigen::VectorXd>(obj.dC.data(), nn);
        adam_step(params, grad, state.adam);
        if (!cfg.freeze_conv) unflatten_conv(net, params.head(conv.size()));
        net.C = Eigen::Map<const Eigen::MatrixXd>(params.tail(nn).data(), net.C.rows(), net.C.cols());
        state.epoch += 1;
    }
    return res;
}

Eigen::MatrixXd solve_linear_self_expression(const Eigen::MatrixXd& z, double mu) {
    if (mu <= 0.0) throw ConfigError("solve_linear_self_expression: mu must be positive");
    const Eigen::Index n = z.rows();
    const Eigen::MatrixXd g = z * z.transpose();
    const double gnorm = g.norm();
    if (gnorm == 0.0) return Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd a = g;
    a.diagonal().array() += mu;
    Eigen::MatrixXd c = a.ldlt().solve(g);
    const double resid = (a * c - g).norm() / gnorm;
    if (resid >= 1e-10)
        throw NumericError("solve_linear_self_expression: solver residual " + std::to_string(resid));
    return c;
}

Checkpoint make_checkpoint(const Network& net, const TrainState& state, Stage stage,
                           uint64_t config_hash) {
    Checkpoint ck;
    ck.config_hash = config_hash;
    ck.stage = stage;
    ck.epoch = state.epoch;
    ck.conv_params = flatten_conv(net);
    ck.C = net.C;
    ck.adam = state.adam;
    return ck;
}

void restore_checkpoint(const Checkpoint& ck, Network& net, TrainState& state) {
    unflatten_conv(net, ck.conv_params);
    if (ck.C.rows() != net.C.rows() || ck.C.cols() != net.C.cols())
        throw ShapeError("checkpoint: C dimension does not match the network");
    net.C = ck.C;
    state.adam = ck.adam;
    state.epoch = ck.epoch;
}

namespace {

constexpr char kMagic[4] = {'O', 'D', 'S', 'C'};
constexpr uint32_t kVersion = 1;

// Fixed little-endian layout; plain byte writes on the LE targets we build for.
template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("checkpoint: truncated file");
    return v;
}

void put_vec(std::ostream& os, const Eigen::VectorXd& v) {
    put<uint64_t>(os, static_cast<uint64_t>(v.size()));
    os.write(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

Eigen::VectorXd get_vec(std::istream& is) {
    const uint64_t n = get<uint64_t>(is);
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw DataError("checkpoint: truncated payload");
    return v;
}

} // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    put<uint32_t>(os, kVersion);
    put<uint64_t>(os, ck.config_hash);
    put<uint8_t>(os, ck.stage == Stage::Pretrain ? 0 : 1);
    put<int32_t>(os, ck.epoch);
    put_vec(os, ck.conv_params);
    put<uint64_t>(os, static_cast<uint64_t>(ck.C.rows()));
    os.write(reinterpret_cast<const char*>(ck.C.data()),
             static_cast<std::streamsize>(ck.C.size() * sizeof(double)));
    put_vec(os, ck.adam.m);
    put_vec(os, ck.adam.v);
    put<int64_t>(os, ck.adam.t);
    put<double>(os, ck.adam.lr);
    put<double>(os, ck.adam.beta1);
    put<double>(os, ck.adam.beta2);
    put<double>(os, ck.adam.eps);
    if (!os) throw DataError("checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("checkpoint: bad magic in '" + path + "'");
    const uint32_t version = get<uint32_t>(is);
    if (version != kVersion)
        throw DataError("checkpoint: unsupported format version " + std::to_string(version));
    Checkpoint ck;
    ck.config_hash = get<uint64_t>(is);
    ck.stage = get<uint8_t>(is) == 0 ? Stage::Pretrain : Stage::Finetune;
    ck.epoch = get<int32_t>(is);
    ck.conv_params = get_vec(is);
    const uint64_t n = get<uint64_t>(is);
    ck.C.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    is.read(reinterpret_cast<char*>(ck.C.data()),
            static_cast<std::streamsize>(ck.C.size() * sizeof(double)));
    if (!is) throw DataError("checkpoint: truncated C block");
    ck.adam.m = get_vec(is);
    ck.adam.v = get_vec(is);
    ck.adam.t = get<int64_t>(is);
    ck.adam.lr = get<double>(is);
    ck.adam.beta1 = get<double>(is);
    ck.adam.beta2 = get<double>(is);
    ck.adam.eps = get<double>(is);
    return ck;
}

} // namespace odsc
