#include "odsc/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace odsc {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

using Block = std::map<std::string, std::string>;

std::map<std::string, Block> parse_blocks(const std::string& text) {
    std::map<std::string, Block> blocks;
    std::istringstream is(text);
    std::string line, current;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            current = trim(line.substr(1, line.size() - 2));
            blocks[current];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos || current.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        blocks[current][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return blocks;
}

std::string get_str(const Block& b, const std::string& key, const std::string& def = "") {
    auto it = b.find(key);
    return it == b.end() ? def : it->second;
}

double get_double(const Block& b, const std::string& key, double def) {
    auto it = b.find(key);
    if (it == b.end()) return def;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config: bad number for '" + key + "': " + it->second);
    }
}

long get_int(const Block& b, const std::string& key, long def) {
    auto it = b.find(key);
    if (it == b.end()) return def;
    try {
        return std::stol(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer for '" + key + "': " + it->second);
    }
}

uint64_t get_u64(const Block& b, const std::string& key, uint64_t def) {
    auto it = b.find(key);
    if (it == b.end()) return def;
    try {
        return std::stoull(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config: bad seed for '" + key + "': " + it->second);
    }
}

std::pair<int, int> parse_hw(const std::string& s, const std::string& key) {
    const auto x = s.find('x');
    if (x == std::string::npos) throw ConfigError("config: '" + key + "' expects HxW, got " + s);
    try {
        return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' expects HxW, got " + s);
    }
}

// Layer tokens like "k5c20" or "k3c1i" (input-bias), space separated.
std::vector<LayerSpec> parse_layers(const std::string& s, const std::string& key) {
    std::vector<LayerSpec> layers;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) {
        LayerSpec l;
        const auto c = tok.find('c');
        if (tok.size() < 4 || tok[0] != 'k' || c == std::string::npos)
            throw ConfigError("config: '" + key + "' token '" + tok + "' (expected e.g. k3c5)");
        std::string tail = tok.substr(c + 1);
        if (!tail.empty() && tail.back() == 'i') {
            l.bias_on_input = true;
            tail.pop_back();
        }
        try {
            l.kernel = std::stoi(tok.substr(1, c - 1));
            l.channels_out = std::stoi(tail);
        } catch (const std::exception&) {
            throw ConfigError("config: '" + key + "' token '" + tok + "' (expected e.g. k3c5)");
        }
        layers.push_back(l);
    }
    return layers;
}

std::string layers_to_string(const std::vector<LayerSpec>& layers) {
    std::string s;
    for (const auto& l : layers) {
        if (!s.empty()) s += " ";
        s += "k" + std::to_string(l.kernel) + "c" + std::to_string(l.channels_out) +
             (l.bias_on_input ? "i" : "");
    }
    return s;
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

RunConfig parse_config_text(const std::string& text) {
    const auto blocks = parse_blocks(text);
    RunConfig cfg;

    auto it = blocks.find("dataset");
    if (it == blocks.end()) throw ConfigError("config: missing [dataset] block");
    {
        const Block& b = it->second;
        cfg.dataset.format = get_str(b, "format");
        if (cfg.dataset.format != "idx" && cfg.dataset.format != "raw")
            throw ConfigError("config: dataset format must be 'idx' or 'raw'");
        cfg.dataset.images = get_str(b, "images");
        cfg.dataset.labels = get_str(b, "labels");
        cfg.dataset.manifest = get_str(b, "manifest");
        cfg.dataset.subset_per_class = static_cast<int>(get_int(b, "subset_per_class", 0));
        const std::string rs = get_str(b, "resize");
        if (!rs.empty()) {
            auto [h, w] = parse_hw(rs, "resize");
            cfg.dataset.resize_h = h;
            cfg.dataset.resize_w = w;
        }
        cfg.dataset.noise = get_double(b, "noise", 0.0);
        cfg.dataset.seed = get_u64(b, "seed", 1);
    }

    it = blocks.find("model");
    if (it == blocks.end()) throw ConfigError("config: missing [model] block");
    {
        const Block& b = it->second;
        cfg.model.variant = variant_from_string(get_str(b, "variant", "odsc"));
        const std::string fusion = get_str(b, "fusion", "concat");
        if (fusion == "concat") cfg.model.fusion = Fusion::Concat;
        else if (fusion == "add") cfg.model.fusion = Fusion::Add;
        else throw ConfigError("config: fusion must be 'concat' or 'add'");
        auto [h, w] = parse_hw(get_str(b, "input", "0x0"), "input");
        cfg.model.in_h = h;
        cfg.model.in_w = w;
        cfg.model.n_samples = static_cast<int>(get_int(b, "n", 0));
        cfg.model.enc_u = parse_layers(get_str(b, "enc_u"), "enc_u");
        cfg.model.enc_o = parse_layers(get_str(b, "enc_o"), "enc_o");
        cfg.model.dec = parse_layers(get_str(b, "dec"), "dec");
        cfg.model.lambda1 = get_double(b, "lambda1", 1.0);
        cfg.model.lambda2 = get_double(b, "lambda2", 1.0);
        cfg.model.lambda3 = get_double(b, "lambda3", 1.0);
    }

    it = blocks.find("train");
    if (it == blocks.end()) throw ConfigError("config: missing [train] block");
    {
        const Block& b = it->second;
        cfg.train.pretrain_epochs = static_cast<int>(get_int(b, "pretrain_epochs", 100));
        cfg.train.finetune_epochs = static_cast<int>(get_int(b, "finetune_epochs", 100));
        cfg.train.lr = get_double(b, "lr", 1e-3);
        cfg.train.seed = get_u64(b, "seed", 1);
        if (cfg.train.pretrain_epochs <= 0 || cfg.train.finetune_epochs <= 0)
            throw ConfigError("config: epochs must be positive");
        if (cfg.train.lr <= 0.0) throw ConfigError("config: lr must be positive");
    }
    cfg.model.pretrain_epochs = cfg.train.pretrain_epochs;
    cfg.model.finetune_epochs = cfg.train.finetune_epochs;

    it = blocks.find("spectral");
    if (it == blocks.end()) throw ConfigError("config: missing [spectral] block");
    {
        const Block& b = it->second;
        cfg.spectral.k = static_cast<int>(get_int(b, "k", 0));
        cfg.spectral.rho = get_double(b, "rho", 1.0);
        cfg.spectral.restarts = static_cast<int>(get_int(b, "restarts", 20));
        cfg.spectral.seed = get_u64(b, "seed", 1);
        if (cfg.spectral.k < 2) throw ConfigError("config: spectral k must be >= 2");
    }

    it = blocks.find("output");
    if (it != blocks.end()) cfg.out_dir = get_str(it->second, "dir", "out");

    validate_spec(cfg.model);
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

std::string canonical_config(const RunConfig& cfg) {
    std::ostringstream os;
    os << "dataset.format=" << cfg.dataset.format << "\n"
       << "dataset.images=" << cfg.dataset.images << "\n"
       << "dataset.labels=" << cfg.dataset.labels << "\n"
       << "dataset.manifest=" << cfg.dataset.manifest << "\n"
       << "dataset.subset_per_class=" << cfg.dataset.subset_per_class << "\n"
       << "dataset.resize=" << cfg.dataset.resize_h << "x" << cfg.dataset.resize_w << "\n"
       << "dataset.noise=" << fmt_double(cfg.dataset.noise) << "\n"
       << "dataset.seed=" << cfg.dataset.seed << "\n"
       << "model.variant=" << to_string(cfg.model.variant) << "\n"
       << "model.fusion=" << (cfg.model.fusion == Fusion::Concat ? "concat" : "add") << "\n"
       << "model.input=" << cfg.model.in_h << "x" << cfg.model.in_w << "\n"
       << "model.n=" << cfg.model.n_samples << "\n"
       << "model.enc_u=" << layers_to_string(cfg.model.enc_u) << "\n"
       << "model.enc_o=" << layers_to_string(cfg.model.enc_o) << "\n"
       << "model.dec=" << layers_to_string(cfg.model.dec) << "\n"
       << "model.lambda1=" << fmt_double(cfg.model.lambda1) << "\n"
       << "model.lambda2=" << fmt_double(cfg.model.lambda2) << "\n"
       << "model.lambda3=" << fmt_double(cfg.model.lambda3) << "\n"
       << "train.pretrain_epochs=" << cfg.train.pretrain_epochs << "\n"
       << "train.finetune_epochs=" << cfg.train.finetune_epochs << "\n"
       << "train.lr=" << fmt_double(cfg.train.lr) << "\n"
       << "train.seed=" << cfg.train.seed << "\n"
       << "spectral.k=" << cfg.spectral.k << "\n"
       << "spectral.rho=" << fmt_double(cfg.spectral.rho) << "\n"
       << "spectral.restarts=" << cfg.spectral.restarts << "\n"
       << "spectral.seed=" << cfg.spectral.seed << "\n";
    return os.str();
}

uint64_t config_hash(const RunConfig& cfg) {
    const std::string s = canonical_config(cfg);
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

void override_seed(RunConfig& cfg, uint64_t seed) {
    cfg.dataset.seed = seed;
    cfg.train.seed = seed;
    cfg.spectral.seed = seed;
}

} // namespace odsc
