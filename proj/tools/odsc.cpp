// Command-line front end: config-driven pretraining, fine-tuning, clustering,
// sweeps, ablations and image dumps.
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric divergence,
// 5 checkpoint/config hash mismatch.

#include "odsc/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace odsc;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string checkpoint_path;
    uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_checkpoint) {
    cmd->add_option("--config", args.config_path, "Run configuration file")->required();
    cmd->add_option("--out", args.out_dir, "Output directory override");
    if (with_checkpoint)
        cmd->add_option("--checkpoint", args.checkpoint_path, "Checkpoint file");
    cmd->add_option("--seed", args.seed, "Override every seed in the config")
        ->each([&args](const std::string&) { args.seed_set = true; });
}

RunConfig load_config(const CommonArgs& args) {
    if (!fs::exists(args.config_path))
        throw ConfigError("config file not found: " + args.config_path);
    RunConfig cfg = parse_config_file(args.config_path);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (args.seed_set) override_seed(cfg, args.seed);
    return cfg;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string default_checkpoint(const RunConfig& cfg) {
    return (fs::path(cfg.out_dir) / "pretrain.ckpt").string();
}

void write_trace(const RunConfig& cfg, const std::string& name,
                 const std::vector<double>& trace, uint64_t subset_hash) {
    std::vector<std::string> rows;
    for (size_t i = 0; i < trace.size(); ++i)
        rows.push_back(std::to_string(i + 1) + "," + fmt(trace[i]));
    write_csv((fs::path(cfg.out_dir) / name).string(), provenance_lines(cfg, subset_hash),
              "epoch,loss", rows);
}

Checkpoint load_matching_checkpoint(const RunConfig& cfg, const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.config_hash != config_hash(cfg))
        throw MismatchError("checkpoint '" + path + "' was produced by a different configuration");
    return ck;
}

std::string report_header() {
    return "run_id,variant,dataset,noise,pretrain_epochs,error_percent,wall_seconds";
}

std::string report_row(const RunConfig& cfg, const PipelineResult& res) {
    std::ostringstream id;
    id << std::hex << res.cfg_hash;
    const std::string dataset =
        cfg.dataset.format == "idx" ? cfg.dataset.images : cfg.dataset.manifest;
    std::ostringstream os;
    os << id.str() << "," << to_string(cfg.model.variant) << "," << dataset << ","
       << cfg.dataset.noise << "," << cfg.train.pretrain_epochs << "," << fmt(res.error_percent)
       << "," << res.wall_seconds;
    return os.str();
}

int cmd_pretrain(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    LabeledDataset ds = load_dataset(cfg.dataset);
    Rng rng(cfg.train.seed);
    Network net = build_network(cfg.model, rng);
    TrainConfig tc;
    tc.stage = Stage::Pretrain;
    tc.epochs = cfg.train.pretrain_epochs;
    tc.lr = cfg.train.lr;
    tc.seed = cfg.train.seed;
    TrainState state;
    TrainResult res = pretrain(net, ds.images, tc, state);
    fs::create_directories(cfg.out_dir);
    const std::string ckpath =
        args.checkpoint_path.empty() ? default_checkpoint(cfg) : args.checkpoint_path;
    save_checkpoint(make_checkpoint(net, state, Stage::Pretrain, config_hash(cfg)), ckpath);
    write_trace(cfg, "pretrain_trace.csv", res.loss_trace, ds.meta.subset_hash);
    std::cout << "pretrained " << cfg.train.pretrain_epochs << " epochs, final loss "
              << (res.loss_trace.empty() ? 0.0 : res.loss_trace.back()) << ", checkpoint " << ckpath
              << "\n";
    return 0;
}

int cmd_finetune(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    LabeledDataset ds = load_dataset(cfg.dataset);
    const std::string ckpath =
        args.checkpoint_path.empty() ? default_checkpoint(cfg) : args.checkpoint_path;
    Checkpoint ck = load_matching_checkpoint(cfg, ckpath);
    Rng rng(cfg.train.seed);
    Network net = build_network(cfg.model, rng);
    TrainState state;
    restore_checkpoint(ck, net, state);
    TrainConfig tc;
    tc.stage = Stage::Finetune;
    tc.epochs = cfg.train.finetune_epochs;
    tc.lr = cfg.train.lr;
    tc.seed = cfg.train.seed;
    TrainState ft_state;
    TrainResult res = finetune(net, ds.images, tc, ft_state);
    const std::string outck = (fs::path(cfg.out_dir) / "finetune.ckpt").string();
    save_checkpoint(make_checkpoint(net, ft_state, Stage::Finetune, config_hash(cfg)), outck);
    write_trace(cfg, "finetune_trace.csv", res.loss_trace, ds.meta.subset_hash);
    std::cout << "fine-tuned " << cfg.train.finetune_epochs << " epochs, final loss "
              << (res.loss_trace.empty() ? 0.0 : res.loss_trace.back()) << ", checkpoint " << outck
              << "\n";
    return 0;
}

int cmd_cluster(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    LabeledDataset ds = load_dataset(cfg.dataset);
    const std::string ckpath =
        args.checkpoint_path.empty() ? default_checkpoint(cfg) : args.checkpoint_path;
    Checkpoint ck = load_matching_checkpoint(cfg, ckpath);
    PipelineResult res = run_cluster(cfg, ck, ds);
    const auto prov = provenance_lines(cfg, ds.meta.subset_hash);

    write_csv((fs::path(cfg.out_dir) / "report.csv").string(), prov, report_header(),
              {report_row(cfg, res)});

    std::vector<std::string> label_rows;
    for (size_t i = 0; i < res.labels_pred.size(); ++i)
        label_rows.push_back(std::to_string(i) + "," + std::to_string(res.labels_pred[i]) + "," +
                             std::to_string(res.labels_true[i]));
    write_csv((fs::path(cfg.out_dir) / "labels.csv").string(), prov, "index,predicted,truth",
              label_rows);

    std::vector<std::string> aff_rows;
    for (Eigen::Index i = 0; i < res.affinity.rows(); ++i) {
        std::ostringstream os;
        os << std::setprecision(17);
        for (Eigen::Index j = 0; j < res.affinity.cols(); ++j) {
            if (j) os << ",";
            os << res.affinity(i, j);
        }
        aff_rows.push_back(os.str());
    }
    std::ostringstream header;
    for (Eigen::Index j = 0; j < res.affinity.cols(); ++j) {
        if (j) header << ",";
        header << "w" << j;
    }
    write_csv((fs::path(cfg.out_dir) / "affinity.csv").string(), prov, header.str(), aff_rows);

    std::cout << "clustering error " << res.error_percent << "%\n";
    return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& axis,
              const std::vector<std::string>& values) {
    if (axis != "noise" && axis != "pretrain_epochs")
        throw ConfigError("unknown sweep axis '" + axis + "' (expected noise or pretrain_epochs)");
    if (values.empty()) throw ConfigError("sweep: empty values list");
    RunConfig base = load_config(args);
    std::vector<std::string> rows;
    for (const auto& v : values) {
        RunConfig cfg = base;
        try {
            if (axis == "noise")
                cfg.dataset.noise = std::stod(v);
            else {
                cfg.train.pretrain_epochs = std::stoi(v);
                cfg.model.pretrain_epochs = cfg.train.pretrain_epochs;
            }
        } catch (const std::exception&) {
            throw ConfigError("sweep: bad value '" + v + "' for axis " + axis);
        }
        PipelineResult res = run_full(cfg);
        rows.push_back(report_row(cfg, res));
        std::cout << axis << "=" << v << " error " << res.error_percent << "%\n";
    }
    write_csv((fs::path(base.out_dir) / ("sweep_" + axis + ".csv")).string(),
              provenance_lines(base, 0), report_header(), rows);
    return 0;
}

int cmd_ablate(const CommonArgs& args) {
    RunConfig base = load_config(args);
    std::vector<std::string> rows;
    uint64_t subset_hash = 0;
    for (Variant v : {Variant::DscU, Variant::DscO, Variant::Odsc}) {
        RunConfig cfg = base;
        cfg.model.variant = v;
        PipelineResult res = run_full(cfg);
        subset_hash = res.subset_hash;
        rows.push_back(report_row(cfg, res));
        std::cout << to_string(v) << " error " << res.error_percent << "%\n";
    }
    write_csv((fs::path(base.out_dir) / "ablation.csv").string(),
              provenance_lines(base, subset_hash), report_header(), rows);
    return 0;
}

int cmd_dump(const CommonArgs& args, const std::string& what, const std::string& layer,
             int samples) {
    RunConfig cfg = load_config(args);
    LabeledDataset ds = load_dataset(cfg.dataset);
    const std::string ckpath =
        args.checkpoint_path.empty() ? default_checkpoint(cfg) : args.checkpoint_path;
    Checkpoint ck = load_matching_checkpoint(cfg, ckpath);
    Rng rng(cfg.train.seed);
    Network net = build_network(cfg.model, rng);
    TrainState state;
    restore_checkpoint(ck, net, state);

    const int count = samples <= 0 ? ds.size() : std::min(samples, ds.size());
    const fs::path dir = fs::path(cfg.out_dir) / what;
    fs::create_directories(dir);

    // Min-max normalize a single map into [0,1]; flat maps become all zeros.
    auto normalized = [](const Tensor& t, int b, int c) {
        Tensor out(1, 1, t.h, t.w);
        double lo = t.at(b, c, 0, 0), hi = lo;
        for (int y = 0; y < t.h; ++y)
            for (int x = 0; x < t.w; ++x) {
                lo = std::min(lo, t.at(b, c, y, x));
                hi = std::max(hi, t.at(b, c, y, x));
            }
        if (hi > lo)
            for (int y = 0; y < t.h; ++y)
                for (int x = 0; x < t.w; ++x)
                    out.at(0, 0, y, x) = (t.at(b, c, y, x) - lo) / (hi - lo);
        return out;
    };

    int files = 0;
    if (what == "reconstructions") {
        Tensor xhat = decode(net, encode_fuse(net, ds.images).Z);
        for (int i = 0; i < count; ++i) {
            const std::string name = "sample" + std::to_string(i) + "_reconstruction.pgm";
            write_pgm((dir / name).string(), normalized(xhat, i, 0), 0, 0);
            ++files;
        }
    } else if (what == "featuremaps") {
        const auto names = feature_names(cfg.model);
        if (std::find(names.begin(), names.end(), layer) == names.end()) {
            std::string valid;
            for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
            throw ConfigError("unknown layer '" + layer + "'; valid layers: " + valid);
        }
        const auto feats = forward_features(net, ds.images);
        for (const auto& [name, maps] : feats) {
            if (name != layer) continue;
            for (int i = 0; i < count; ++i)
                for (int c = 0; c < maps.c; ++c) {
                    const std::string fname = "sample" + std::to_string(i) + "_" + name + "_ch" +
                                              std::to_string(c) + ".pgm";
                    write_pgm((dir / fname).string(), normalized(maps, i, c), 0, 0);
                    ++files;
                }
        }
    } else {
        throw ConfigError("dump: 'what' must be reconstructions or featuremaps");
    }
    std::cout << "wrote " << files << " PGM files to " << dir.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Overcomplete deep subspace clustering experiments"};
    app.require_subcommand(1);

    CommonArgs a_pre, a_fine, a_clu, a_sweep, a_abl, a_dump;
    std::string sweep_axis, dump_what = "reconstructions", dump_layer;
    std::vector<std::string> sweep_values;
    int dump_samples = 8;

    add_common(app.add_subcommand("pretrain", "Stage-1 reconstruction training"), a_pre, true);
    add_common(app.add_subcommand("finetune", "Stage-2 joint training"), a_fine, true);
    add_common(app.add_subcommand("cluster", "Fine-tune and cluster from a checkpoint"), a_clu, true);
    auto* sweep = app.add_subcommand("sweep", "Run a noise or pretrain-epoch grid");
    add_common(sweep, a_sweep, false);
    sweep->add_option("--axis", sweep_axis, "noise | pretrain_epochs")->required();
    sweep->add_option("--values", sweep_values, "Grid values")->required();
    add_common(app.add_subcommand("ablate", "Run dsc-u, dsc-o and odsc on the same data"), a_abl,
               false);
    auto* dump = app.add_subcommand("dump", "Write reconstructions or feature maps as PGM");
    add_common(dump, a_dump, true);
    dump->add_option("--what", dump_what, "reconstructions | featuremaps");
    dump->add_option("--layer", dump_layer, "Feature-map layer name (e.g. enc_o.2)");
    dump->add_option("--samples", dump_samples, "Samples to dump (0 = all)");

    try {
        app.parse(argc, argv);
        if (app.got_subcommand("pretrain")) return cmd_pretrain(a_pre);
        if (app.got_subcommand("finetune")) return cmd_finetune(a_fine);
        if (app.got_subcommand("cluster")) return cmd_cluster(a_clu);
        if (app.got_subcommand("sweep")) return cmd_sweep(a_sweep, sweep_axis, sweep_values);
        if (app.got_subcommand("ablate")) return cmd_ablate(a_abl);
        if (app.got_subcommand("dump")) return cmd_dump(a_dump, dump_what, dump_layer, dump_samples);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const MismatchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
