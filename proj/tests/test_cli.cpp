#include "odsc/tensor.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

std::string cli_bin() {
    const char* p = std::getenv("ODSC_CLI_BIN");
    REQUIRE_MESSAGE(p != nullptr, "ODSC_CLI_BIN must point at the odsc binary");
    return p;
}

int run_cli(const std::string& args) {
    const std::string cmd = "\"" + cli_bin() + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("odsc_cli_test_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), ("missing file: " + p.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// 3 classes x 4 images of 6x6: distinct, strongly class-correlated patterns.
void make_dataset(const fs::path& dir) {
    odsc::Rng rng(31415);
    std::string manifest;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 4; ++i) {
            std::string name = "c" + std::to_string(c) + "_" + std::to_string(i) + ".pgm";
            std::string body = "P5\n6 6\n255\n";
            for (int p = 0; p < 36; ++p) {
                const int base = (c == 0) ? (p < 12 ? 230 : 20)
                               : (c == 1) ? (p >= 12 && p < 24 ? 230 : 20)
                                          : (p >= 24 ? 230 : 20);
                body.push_back(static_cast<char>(
                    static_cast<uint8_t>(base + static_cast<int>(rng.uniform_int(20)))));
            }
            write_file(dir / name, body);
            manifest += name + "\t" + std::to_string(c) + "\n";
        }
    write_file(dir / "manifest.tsv", manifest);
}

std::string toy_config(const fs::path& dir, const std::string& extra_model = "") {
    std::ostringstream os;
    os << "[dataset]\n"
       << "format = raw\n"
       << "manifest = " << (dir / "manifest.tsv").string() << "\n"
       << "seed = 3\n"
       << "[model]\n"
       << "variant = odsc\n"
       << "fusion = concat\n"
       << "input = 6x6\n"
       << "n = 12\n"
       << "enc_u = k3c2 k3c2\n"
       << "enc_o = k3c2\n"
       << "dec = k3c2 k3c1\n"
       << "lambda1 = 1\n"
       << "lambda2 = 0.5\n"
       << "lambda3 = 0.25\n"
       << extra_model << "[train]\n"
       << "pretrain_epochs = 2\n"
       << "finetune_epochs = 3\n"
       << "lr = 0.001\n"
       << "seed = 7\n"
       << "[spectral]\n"
       << "k = 3\n"
       << "restarts = 5\n"
       << "seed = 9\n"
       << "[output]\n"
       << "dir = " << (dir / "out").string() << "\n";
    return os.str();
}

struct CsvFile {
    std::vector<std::string> provenance, rows;
    std::string header;
};

CsvFile parse_csv(const fs::path& p) {
    CsvFile csv;
    std::istringstream is(read_file(p));
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') csv.provenance.push_back(line);
        else if (csv.header.empty()) csv.header = line;
        else csv.rows.push_back(line);
    }
    return csv;
}

} // namespace

TEST_CASE("cli: bad invocations exit with the config code") {
    CHECK(run_cli("pretrain --config /no/such/file.cfg") == 2);
    CHECK(run_cli("frobnicate") == 2);
    CHECK(run_cli("pretrain") == 2); // --config is required
}

TEST_CASE("cli: pretrain writes a checkpoint and a one-row trace") {
    TempDir dir;
    make_dataset(dir.path);
    std::string cfg_text = toy_config(dir.path);
    const std::string from = "pretrain_epochs = 2";
    cfg_text.replace(cfg_text.find(from), from.size(), "pretrain_epochs = 1");
    write_file(dir.path / "run.cfg", cfg_text);

    CHECK(run_cli("pretrain --config " + (dir.path / "run.cfg").string()) == 0);
    CHECK(fs::exists(dir.path / "out" / "pretrain.ckpt"));
    CsvFile trace = parse_csv(dir.path / "out" / "pretrain_trace.csv");
    CHECK(trace.header == "epoch,loss");
    CHECK(trace.rows.size() == 1);
    bool has_hash = false;
    for (const auto& l : trace.provenance)
        if (l.find("config_hash") != std::string::npos) has_hash = true;
    CHECK(has_hash);
}

TEST_CASE("cli: rerunning pretrain reproduces the checkpoint byte for byte") {
    TempDir dir;
    make_dataset(dir.path);
    write_file(dir.path / "run.cfg", toy_config(dir.path));
    const std::string cfg = (dir.path / "run.cfg").string();

    CHECK(run_cli("pretrain --config " + cfg) == 0);
    const std::string first = read_file(dir.path / "out" / "pretrain.ckpt");
    CHECK(run_cli("pretrain --config " + cfg) == 0);
    CHECK(read_file(dir.path / "out" / "pretrain.ckpt") == first);
}

TEST_CASE("cli: cluster emits report, labels and a symmetric affinity") {
    TempDir dir;
    make_dataset(dir.path);
    write_file(dir.path / "run.cfg", toy_config(dir.path));
    const std::string cfg = (dir.path / "run.cfg").string();

    REQUIRE(run_cli("pretrain --config " + cfg) == 0);
    CHECK(run_cli("cluster --config " + cfg) == 0);

    CsvFile report = parse_csv(dir.path / "out" / "report.csv");
    CHECK(report.header == "run_id,variant,dataset,noise,pretrain_epochs,error_percent,wall_seconds");
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0].find(",odsc,") != std::string::npos);

    CsvFile labels = parse_csv(dir.path / "out" / "labels.csv");
    CHECK(labels.rows.size() == 12);

    CsvFile aff = parse_csv(dir.path / "out" / "affinity.csv");
    REQUIRE(aff.rows.size() == 12);
    std::vector<std::vector<double>> w;
    for (const auto& row : aff.rows) {
        std::vector<double> vals;
        std::istringstream is(row);
        std::string tok;
        while (std::getline(is, tok, ',')) vals.push_back(std::stod(tok));
        REQUIRE(vals.size() == 12);
        w.push_back(vals);
    }
    double asym = 0.0;
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j) asym = std::max(asym, std::abs(w[i][j] - w[j][i]));
    CHECK(asym < 1e-12);
}

TEST_CASE("cli: clustering a checkpoint from a different config exits 5") {
    TempDir dir;
    make_dataset(dir.path);
    write_file(dir.path / "run.cfg", toy_config(dir.path));
    // A config that differs in a run-affecting field: lambda2.
    std::string other = toy_config(dir.path);
    const std::string from = "lambda2 = 0.5";
    other.replace(other.find(from), from.size(), "lambda2 = 0.75");
    write_file(dir.path / "other.cfg", other);

    REQUIRE(run_cli("pretrain --config " + (dir.path / "run.cfg").string()) == 0);
    CHECK(run_cli("cluster --config " + (dir.path / "other.cfg").string() + " --checkpoint " +
                  (dir.path / "out" / "pretrain.ckpt").string()) == 5);
}

TEST_CASE("cli: unreadable data exits 3") {
    TempDir dir;
    make_dataset(dir.path);
    write_file(dir.path / "manifest.tsv", "ghost.pgm\t0\nghost2.pgm\t1\n");
    write_file(dir.path / "run.cfg", toy_config(dir.path));
    CHECK(run_cli("pretrain --config " + (dir.path / "run.cfg").string()) == 3);
}

TEST_CASE("cli: sweep produces one report row per value") {
    TempDir dir;
    make_dataset(dir.path);
    write_file(dir.path / "run.cfg", toy_config(dir.path));
    const std::string cfg = (dir.path / "run.cfg").string();

    CHECK(run_cli("sweep --config " + cfg + " --axis noise --values 0 0.1") == 0);
    CsvFile noise = parse_csv(dir.path / "out" / "sweep_noise.csv");
    CHECK(noise.rows.size() == 2);

    CHECK(run_cli("sweep --config " + cfg + " --axis pretrain_epochs --values 1 2 3") == 0);
    CsvFile pe = parse_csv(dir.path / "out" / "sweep_pretrain_epochs.csv");
    CHECK(pe.rows.size() == 3);

    CHECK(run_cli("sweep --config " + cfg + " --axis nonsense --values 1") == 2);
    CHECK(run_cli("sweep --config " + cfg + " --axis noise") == 2); // --values required
    CHECK(run_cli("sweep --config " + cfg + " --axis noise --values") == 2);
}

TEST_CASE("cli: ablate runs all three variants on the same subset") {
    TempDir dir;
    make_dataset(dir.path);
    write_file(dir.path / "run.cfg", toy_config(dir.path));

    CHECK(run_cli("ablate --config " + (dir.path / "run.cfg").string()) == 0);
    CsvFile abl = parse_csv(dir.path / "out" / "ablation.csv");
    REQUIRE(abl.rows.size() == 3);
    CHECK(abl.rows[0].find(",dsc-u,") != std::string::npos);
    CHECK(abl.rows[1].find(",dsc-o,") != std::string::npos);
    CHECK(abl.rows[2].find(",odsc,") != std::string::npos);
    bool has_subset = false;
    for (const auto& l : abl.provenance)
        if (l.find("subset_hash") != std::string::npos) has_subset = true;
    CHECK(has_subset);
}

TEST_CASE("cli: dump writes the expected PGM files") {
    TempDir dir;
    make_dataset(dir.path);
    write_file(dir.path / "run.cfg", toy_config(dir.path));
    const std::string cfg = (dir.path / "run.cfg").string();
    REQUIRE(run_cli("pretrain --config " + cfg) == 0);

    SUBCASE("reconstructions: one file per requested sample") {
        CHECK(run_cli("dump --config " + cfg + " --what reconstructions --samples 5") == 0);
        size_t files = 0;
        for (const auto& e : fs::directory_iterator(dir.path / "out" / "reconstructions"))
            if (e.path().extension() == ".pgm") ++files;
        CHECK(files == 5);
    }
    SUBCASE("featuremaps: samples x channels files, pre-resample size") {
        CHECK(run_cli("dump --config " + cfg + " --what featuremaps --layer enc_o.1 --samples 3") ==
              0);
        size_t files = 0;
        for (const auto& e : fs::directory_iterator(dir.path / "out" / "featuremaps"))
            if (e.path().extension() == ".pgm") ++files;
        CHECK(files == 3 * 2); // 3 samples, 2 channels
        // The overcomplete conv-1 output is dumped before its upsample: 6x6.
        const std::string pgm =
            read_file(dir.path / "out" / "featuremaps" / "sample0_enc_o.1_ch0.pgm");
        CHECK(pgm.rfind("P5\n6 6\n255\n", 0) == 0);
    }
    SUBCASE("unknown layer exits 2") {
        CHECK(run_cli("dump --config " + cfg + " --what featuremaps --layer enc_x.9") == 2);
    }
    SUBCASE("unknown dump kind exits 2") {
        CHECK(run_cli("dump --config " + cfg + " --what holograms") == 2);
    }
}
