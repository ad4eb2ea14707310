// c2p command line: synthetic data generation, negative pools, training,
// evaluation, the ablation ladder, and log plots.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "c2p/checkpoint.hpp"
#include "c2p/config.hpp"
#include "c2p/datasets.hpp"
#include "c2p/errors.hpp"
#include "c2p/hash.hpp"
#include "c2p/svg_plot.hpp"
#include "c2p/trainer.hpp"

namespace fs = std::filesystem;

namespace {

// Every subcommand drops a run_meta.json: resolved config plus git-style
// content hashes of its file inputs, enough to reproduce the run.
void write_run_meta(const fs::path& out_dir, const std::string& subcommand,
                    const nlohmann::json& resolved, const std::vector<fs::path>& inputs) {
    nlohmann::json meta;
    meta["subcommand"] = subcommand;
    meta["resolved"] = resolved;
    nlohmann::json hashes = nlohmann::json::object();
    for (const fs::path& p : inputs) hashes[p.string()] = c2p::git_blob_sha1_file(p.string());
    meta["input_hashes"] = hashes;
    std::ofstream(out_dir / "run_meta.json") << meta.dump(2) << "\n";
}

c2p::TrainConfig resolve_config(const std::string& config_path, bool seed_set, std::uint64_t seed) {
    c2p::TrainConfig cfg;
    if (!config_path.empty()) cfg = c2p::load_config(config_path);
    if (seed_set) cfg.seed = seed;
    return cfg;
}

int run_synth(int n, int size, std::uint64_t seed, const fs::path& out) {
    fs::create_directories(out);
    const c2p::DatasetManifest m = c2p::generate_dataset(n, size, seed, out);
    write_run_meta(out, "synth",
                   {{"n", n}, {"size", size}, {"seed", seed}, {"out", out.string()}}, {});
    std::cout << "wrote " << m.entries.size() << " pairs to " << (out / "manifest.json").string()
              << "\n";
    return 0;
}

int run_negatives(const fs::path& manifest_path, int z, std::uint64_t seed, const fs::path& out) {
    c2p::DatasetManifest m = c2p::load_manifest(manifest_path);
    const fs::path src_dir = manifest_path.parent_path();
    fs::create_directories(out);
    if (!fs::equivalent(src_dir, out)) {
        // negatives land next to the (copied) manifest so paths stay relative
        fs::create_directories(out / "images");
        for (const c2p::ManifestEntry& e : m.entries) {
            fs::copy_file(src_dir / e.clear_path, out / e.clear_path, fs::copy_options::overwrite_existing);
            fs::copy_file(src_dir / e.hazy_path, out / e.hazy_path, fs::copy_options::overwrite_existing);
        }
    }
    for (c2p::ManifestEntry& e : m.entries) {
        const c2p::HazeSample s = c2p::load_sample(out, e);
        e.negatives.clear();
        for (const c2p::NegativeRecord& rec : c2p::build_negative_pool(s, z, seed, out, e.id)) {
            e.negatives.push_back({rec.image_path, rec.psnr_vs_positive, rec.generator_tag});
        }
    }
    c2p::save_manifest(m, out / "manifest.json");
    write_run_meta(out, "negatives",
                   {{"manifest", manifest_path.string()}, {"z", z}, {"seed", seed}, {"out", out.string()}},
                   {manifest_path});
    std::cout << "built " << z << " negatives per sample for " << m.entries.size() << " entries\n";
    return 0;
}

void write_summary(const fs::path& out, const c2p::TrainResult& result) {
    nlohmann::json j;
    j["final_avg_psnr"] = result.final_avg_psnr;
    if (!result.logs.empty()) j["first_logged_avg_psnr"] = result.logs.front().avg_psnr;
    j["epochs_run"] = result.logs.size();
    j["final_checkpoint"] = result.final_checkpoint.string();
    std::ofstream(out / "summary.json") << j.dump(2) << "\n";
}

int run_train(const fs::path& manifest_path, const std::string& config_path, bool seed_set,
              std::uint64_t seed, const fs::path& out, const std::string& resume) {
    const c2p::TrainConfig cfg = resolve_config(config_path, seed_set, seed);
    const c2p::DatasetManifest m = c2p::load_manifest(manifest_path);
    fs::create_directories(out);
    std::vector<fs::path> inputs{manifest_path};
    if (!config_path.empty()) inputs.push_back(config_path);
    write_run_meta(out, "train",
                   {{"manifest", manifest_path.string()},
                    {"config", c2p::config_to_json(cfg)},
                    {"resume", resume},
                    {"out", out.string()}},
                   inputs);
    const c2p::TrainResult result = c2p::train(cfg, m, manifest_path.parent_path(), out, resume);
    write_summary(out, result);
    std::cout << "final calibration avgPSNR " << result.final_avg_psnr << " dB after "
              << result.logs.size() << " epochs (logs: " << (out / "logs.jsonl").string() << ")\n";
    return 0;
}

int run_eval(const fs::path& ckpt_path, const fs::path& manifest_path, const fs::path& out) {
    const c2p::Checkpoint ckpt = c2p::load_checkpoint(ckpt_path);
    const c2p::DatasetManifest m = c2p::load_manifest(manifest_path);
    fs::create_directories(out);
    const c2p::EvalReport report = c2p::evaluate(ckpt, m, manifest_path.parent_path());
    std::ofstream(out / "report.json") << c2p::eval_report_to_json(report).dump(2) << "\n";
    write_run_meta(out, "eval",
                   {{"ckpt", ckpt_path.string()}, {"manifest", manifest_path.string()}, {"out", out.string()}},
                   {ckpt_path, manifest_path});
    std::cout << "mean PSNR " << report.mean_psnr << " dB, mean SSIM " << report.mean_ssim << " ("
              << report.entries.size() << " images)\n";
    return 0;
}

int run_ablate(const fs::path& manifest_path, const std::string& config_path, bool seed_set,
               std::uint64_t seed, const fs::path& out) {
    const c2p::TrainConfig base = resolve_config(config_path, seed_set, seed);
    const c2p::DatasetManifest m = c2p::load_manifest(manifest_path);
    fs::create_directories(out);

    struct Variant {
        std::string name;
        c2p::AttentionKind attention;
        c2p::LossMode loss;
    };
    const std::vector<Variant> ladder = {
        {"base", c2p::AttentionKind::Pa, c2p::LossMode::Fidelity},
        {"pdu", c2p::AttentionKind::Pdu, c2p::LossMode::Fidelity},
        {"pdu_cr_consensual", c2p::AttentionKind::Pdu, c2p::LossMode::ConsensualNoCl},
        {"full_c2r", c2p::AttentionKind::Pdu, c2p::LossMode::Curricular},
    };

    nlohmann::json rows = nlohmann::json::array();
    std::printf("%-20s %10s %10s\n", "variant", "PSNR", "SSIM");
    for (const Variant& v : ladder) {
        c2p::TrainConfig cfg = base;
        cfg.network.attention = v.attention;
        cfg.loss_mode = v.loss;
        const fs::path vdir = out / "variants" / v.name;
        fs::create_directories(vdir);
        const c2p::TrainResult tr = c2p::train(cfg, m, manifest_path.parent_path(), vdir);
        write_summary(vdir, tr);
        const c2p::Checkpoint ckpt = c2p::load_checkpoint(tr.final_checkpoint);
        const c2p::EvalReport report = c2p::evaluate(ckpt, m, manifest_path.parent_path());
        rows.push_back({{"variant", v.name},
                        {"attention", c2p::to_string(v.attention)},
                        {"loss_mode", c2p::to_string(v.loss)},
                        {"psnr", report.mean_psnr},
                        {"ssim", report.mean_ssim}});
        std::printf("%-20s %10.3f %10.4f\n", v.name.c_str(), report.mean_psnr, report.mean_ssim);
    }
    std::ofstream(out / "ablation.json") << rows.dump(2) << "\n";
    std::vector<fs::path> inputs{manifest_path};
    if (!config_path.empty()) inputs.push_back(config_path);
    write_run_meta(out, "ablate",
                   {{"manifest", manifest_path.string()},
                    {"config", c2p::config_to_json(base)},
                    {"out", out.string()}},
                   inputs);
    return 0;
}

int run_plot(const fs::path& logs_path, const fs::path& out) {
    std::ifstream in(logs_path);
    if (!in) throw c2p::IoError("cannot open logs: " + logs_path.string());
    std::vector<c2p::EpochLog> logs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        logs.push_back(c2p::epoch_log_from_json(nlohmann::json::parse(line)));
    }
    if (logs.empty()) throw c2p::InvalidInputError("plot: no epoch logs found");
    fs::create_directories(out / "plots");

    c2p::PlotSeries psnr{"avg_psnr", {}};
    c2p::PlotSeries total{"total", {}}, fid{"fidelity", {}}, rstar{"rstar", {}};
    c2p::PlotSeries hard{"hard", {}}, ultra{"ultra_hard", {}};
    for (const c2p::EpochLog& e : logs) {
        psnr.y.push_back(e.avg_psnr);
        total.y.push_back(e.mean_total_loss);
        fid.y.push_back(e.mean_fidelity);
        rstar.y.push_back(e.mean_rstar);
        hard.y.push_back(e.n_hard);
        ultra.y.push_back(e.n_ultrahard);
    }
    c2p::write_line_chart((out / "plots" / "avg_psnr.svg").string(), "calibration avgPSNR", "dB", {psnr});
    c2p::write_line_chart((out / "plots" / "loss.svg").string(), "loss components", "loss",
                          {total, fid, rstar});
    c2p::write_line_chart((out / "plots" / "difficulty.svg").string(), "negative difficulty counts",
                          "count", {hard, ultra});
    write_run_meta(out, "plot", {{"logs", logs_path.string()}, {"out", out.string()}}, {logs_path});
    std::cout << "wrote 3 plots to " << (out / "plots").string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale dehazing trainer with curricular contrastive regularization"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic haze dataset");
    int n = 16, size = 96;
    std::uint64_t seed = 7;
    std::string out;
    synth->add_option("--n", n, "number of samples");
    synth->add_option("--size", size, "image side length");
    synth->add_option("--seed", seed, "master seed");
    synth->add_option("--out", out, "output directory")->required();

    // negatives
    auto* negatives = app.add_subcommand("negatives", "build consensual negative pools");
    std::string manifest;
    int z = 7;
    negatives->add_option("--manifest", manifest, "dataset manifest")->required();
    negatives->add_option("--z", z, "negatives per sample");
    negatives->add_option("--seed", seed, "seed (reserved)");
    negatives->add_option("--out", out, "output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "train on a manifest");
    std::string config_path, resume;
    auto* train_seed = train->add_option("--seed", seed, "seed override");
    train->add_option("--manifest", manifest, "dataset manifest")->required();
    train->add_option("--config", config_path, "config file (key = value)");
    train->add_option("--resume", resume, "checkpoint to resume from");
    train->add_option("--out", out, "run directory")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ckpt;
    eval->add_option("--ckpt", ckpt, "checkpoint file")->required();
    eval->add_option("--manifest", manifest, "dataset manifest")->required();
    eval->add_option("--out", out, "output directory")->required();

    // ablate
    auto* ablate = app.add_subcommand("ablate", "run the 4-variant ablation ladder");
    auto* ablate_seed = ablate->add_option("--seed", seed, "seed override");
    ablate->add_option("--manifest", manifest, "dataset manifest")->required();
    ablate->add_option("--config", config_path, "base config file");
    ablate->add_option("--out", out, "output directory")->required();

    // plot
    auto* plot = app.add_subcommand("plot", "render epoch-log curves to SVG");
    std::string logs;
    plot->add_option("--logs", logs, "logs.jsonl from a training run")->required();
    plot->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (synth->parsed()) return run_synth(n, size, seed, out);
        if (negatives->parsed()) return run_negatives(manifest, z, seed, out);
        if (train->parsed())
            return run_train(manifest, config_path, !train_seed->empty(), seed, out, resume);
        if (eval->parsed()) return run_eval(ckpt, manifest, out);
        if (ablate->parsed())
            return run_ablate(manifest, config_path, !ablate_seed->empty(), seed, out);
        if (plot->parsed()) return run_plot(logs, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
