#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "c2p/datasets.hpp"

using namespace c2p;
namespace fs = std::filesystem;

namespace {

const char* cli = C2P_CLI_PATH;

int run(const std::string& args) {
    const std::string cmd = std::string(cli) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("c2p_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_tiny_config(const fs::path& p) {
    std::ofstream out(p);
    out << "epochs = 1\n"
           "batch_size = 2\n"
           "crop = 32\n"
           "calibration_size = 4\n"
           "network.channels = 8\n"
           "network.blocks_per_group = 1\n"
           "seed = 7\n";
}

} // namespace

TEST_CASE("synth writes the requested number of entries plus run metadata") {
    const fs::path out = fresh_dir("synth");
    REQUIRE(run("synth --n 4 --size 48 --seed 7 --out " + out.string()) == 0);
    const DatasetManifest m = load_manifest(out / "manifest.json");
    CHECK(m.entries.size() == 4);
    CHECK(fs::exists(out / "run_meta.json"));
    fs::remove_all(out);
}

TEST_CASE("unknown flags exit 2 without writing files") {
    const fs::path out = fresh_dir("badflag");
    fs::remove_all(out); // the CLI must not recreate it
    CHECK(run("synth --n 2 --size 48 --frobnicate --out " + out.string()) == 2);
    CHECK_FALSE(fs::exists(out));
    CHECK(run("bogus-subcommand") == 2);
    CHECK(run("") == 2);
    CHECK(run("--help") == 0);
}

TEST_CASE("full pipeline: synth, negatives, train, eval, plot") {
    const fs::path data = fresh_dir("pipe_data");
    const fs::path run_dir = fresh_dir("pipe_run");
    const fs::path eval_dir = fresh_dir("pipe_eval");
    const fs::path plot_dir = fresh_dir("pipe_plot");
    const fs::path cfg_file = data / "tiny.cfg";

    REQUIRE(run("synth --n 2 --size 48 --seed 7 --out " + data.string()) == 0);
    REQUIRE(run("negatives --manifest " + (data / "manifest.json").string() + " --z 7 --out " +
                data.string()) == 0);
    const DatasetManifest m = load_manifest(data / "manifest.json");
    for (const ManifestEntry& e : m.entries) CHECK(e.negatives.size() == 7);

    write_tiny_config(cfg_file);
    REQUIRE(run("train --manifest " + (data / "manifest.json").string() + " --config " +
                cfg_file.string() + " --out " + run_dir.string()) == 0);
    CHECK(fs::exists(run_dir / "logs.jsonl"));
    CHECK(fs::exists(run_dir / "summary.json"));
    CHECK(fs::exists(run_dir / "run_meta.json"));
    CHECK(fs::exists(run_dir / "ckpt" / "ckpt-final.json"));

    // run metadata pins the resolved config and input hashes
    {
        std::ifstream meta_in(run_dir / "run_meta.json");
        nlohmann::json meta;
        meta_in >> meta;
        CHECK(meta.at("subcommand") == "train");
        CHECK(meta.at("resolved").at("config").at("epochs") == 1);
        CHECK(meta.at("input_hashes").size() == 2);
        for (const auto& [path, hash] : meta.at("input_hashes").items())
            CHECK(hash.get<std::string>().size() == 40);
    }

    REQUIRE(run("eval --ckpt " + (run_dir / "ckpt" / "ckpt-final.json").string() + " --manifest " +
                (data / "manifest.json").string() + " --out " + eval_dir.string()) == 0);
    {
        std::ifstream rin(eval_dir / "report.json");
        nlohmann::json report;
        rin >> report;
        CHECK(report.at("entries").size() == 2);
        CHECK(report.at("mean_psnr").get<double>() > 0.0);
    }

    REQUIRE(run("plot --logs " + (run_dir / "logs.jsonl").string() + " --out " + plot_dir.string()) ==
            0);
    for (const char* name : {"avg_psnr.svg", "loss.svg", "difficulty.svg"}) {
        CHECK(fs::exists(plot_dir / "plots" / name));
        CHECK(fs::file_size(plot_dir / "plots" / name) > 200);
    }

    // eval on a missing checkpoint is a runtime failure, exit 1
    CHECK(run("eval --ckpt /nonexistent.json --manifest " + (data / "manifest.json").string() +
              " --out " + eval_dir.string()) == 1);

    fs::remove_all(data);
    fs::remove_all(run_dir);
    fs::remove_all(eval_dir);
    fs::remove_all(plot_dir);
}

TEST_CASE("ablate runs the 4-variant ladder") {
    const fs::path data = fresh_dir("ablate_data");
    const fs::path out = fresh_dir("ablate_out");
    const fs::path cfg_file = data / "tiny.cfg";

    REQUIRE(run("synth --n 2 --size 48 --seed 9 --out " + data.string()) == 0);
    REQUIRE(run("negatives --manifest " + (data / "manifest.json").string() + " --z 7 --out " +
                data.string()) == 0);
    write_tiny_config(cfg_file);
    REQUIRE(run("ablate --manifest " + (data / "manifest.json").string() + " --config " +
                cfg_file.string() + " --out " + out.string()) == 0);

    std::ifstream in(out / "ablation.json");
    nlohmann::json rows;
    in >> rows;
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].at("variant") == "base");
    CHECK(rows[1].at("variant") == "pdu");
    CHECK(rows[2].at("variant") == "pdu_cr_consensual");
    CHECK(rows[3].at("variant") == "full_c2r");
    for (const auto& row : rows) {
        CHECK(row.at("psnr").get<double>() > 0.0);
        CHECK(row.at("ssim").get<double>() > -1.0);
    }
    fs::remove_all(data);
    fs::remove_all(out);
}
