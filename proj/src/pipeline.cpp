#include "odsc/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace odsc {

LabeledDataset load_dataset(const DatasetConfig& cfg) {
    LabeledDataset ds;
    if (cfg.format == "idx")
        ds = load_idx_files(cfg.images, cfg.labels);
    else if (cfg.format == "raw")
        ds = load_raw_folder(cfg.manifest);
    else
        throw ConfigError("dataset format must be 'idx' or 'raw'");
    if (cfg.subset_per_class > 0) ds = subset_per_class(ds, cfg.subset_per_class, cfg.seed);
    if (cfg.resize_h > 0 && cfg.resize_w > 0 &&
        (cfg.resize_h != ds.images.h || cfg.resize_w != ds.images.w))
        ds = resize_dataset(ds, cfg.resize_h, cfg.resize_w);
    if (cfg.noise > 0.0) ds = add_noise(ds, cfg.noise, cfg.seed ^ 0x6E6F697365ULL);
    ds.validate();
    return ds;
}

namespace {

void check_dataset_matches(const RunConfig& cfg, const LabeledDataset& ds) {
    if (ds.size() != cfg.model.n_samples)
        throw ConfigError("dataset has " + std::to_string(ds.size()) + " samples but model.n is " +
                          std::to_string(cfg.model.n_samples));
    if (ds.images.h != cfg.model.in_h || ds.images.w != cfg.model.in_w)
        throw ConfigError("dataset image size " + std::to_string(ds.images.h) + "x" +
                          std::to_string(ds.images.w) + " does not match model.input");
}

} // namespace

PipelineResult run_cluster(const RunConfig& cfg, const Checkpoint& ck, const LabeledDataset& ds) {
    const auto t0 = std::chrono::steady_clock::now();
    check_dataset_matches(cfg, ds);

    Rng rng(cfg.train.seed);
    Network net = build_network(cfg.model, rng);
    TrainState state;
    restore_checkpoint(ck, net, state);

    PipelineResult res;
    res.cfg_hash = config_hash(cfg);
    res.subset_hash = ds.meta.subset_hash;
    if (ck.stage == Stage::Pretrain) {
        TrainConfig tc;
        tc.stage = Stage::Finetune;
        tc.epochs = cfg.train.finetune_epochs;
        tc.lr = cfg.train.lr;
        tc.seed = cfg.train.seed;
        TrainState ft_state; // fine-tuning restarts the optimizer over conv+C
        res.finetune_trace = finetune(net, ds.images, tc, ft_state).loss_trace;
    }
    res.C = net.C;
    res.affinity = build_affinity(net.C, cfg.spectral.rho);
    res.labels_pred =
        spectral_clustering(res.affinity, cfg.spectral.k, cfg.spectral.seed, cfg.spectral.restarts);
    res.labels_true = ds.labels;
    res.error_percent = clustering_error(res.labels_pred, res.labels_true);
    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

PipelineResult run_full(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    LabeledDataset ds = load_dataset(cfg.dataset);
    check_dataset_matches(cfg, ds);

    Rng rng(cfg.train.seed);
    Network net = build_network(cfg.model, rng);

    TrainConfig pt;
    pt.stage = Stage::Pretrain;
    pt.epochs = cfg.train.pretrain_epochs;
    pt.lr = cfg.train.lr;
    pt.seed = cfg.train.seed;
    TrainState pt_state;
    PipelineResult res;
    res.pretrain_trace = pretrain(net, ds.images, pt, pt_state).loss_trace;

    Checkpoint ck = make_checkpoint(net, pt_state, Stage::Pretrain, config_hash(cfg));
    PipelineResult cres = run_cluster(cfg, ck, ds);
    cres.pretrain_trace = std::move(res.pretrain_trace);
    cres.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return cres;
}

std::vector<std::string> provenance_lines(const RunConfig& cfg, uint64_t subset_hash) {
    std::ostringstream id;
    id << std::hex << config_hash(cfg);
    std::ostringstream sh;
    sh << std::hex << subset_hash;
    return {
        "# odsc version=" + std::string(kVersionString),
        "# config_hash=" + id.str(),
        "# subset_hash=" + sh.str(),
        "# seeds dataset=" + std::to_string(cfg.dataset.seed) +
            " train=" + std::to_string(cfg.train.seed) +
            " spectral=" + std::to_string(cfg.spectral.seed),
    };
}

void write_csv(const std::string& path, const std::vector<std::string>& provenance,
               const std::string& header, const std::vector<std::string>& rows) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream os(path);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    for (const auto& line : provenance) os << line << "\n";
    os << header << "\n";
    for (const auto& row : rows) os << row << "\n";
    if (!os) throw DataError("write failed for '" + path + "'");
}

} // namespace odsc
