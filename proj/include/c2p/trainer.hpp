#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2p/checkpoint.hpp"
#include "c2p/config.hpp"
#include "c2p/contrastive.hpp"
#include "c2p/curriculum.hpp"
#include "c2p/datasets.hpp"
#include "c2p/metrics.hpp"
#include "c2p/network.hpp"

namespace c2p {

inline double cosine_lr(long step, long total_steps, double lr0) {
    if (total_steps < 1) throw InvalidInputError("cosine_lr: total_steps must be >= 1");
    if (step < 0 || step > total_steps) throw InvalidInputError("cosine_lr: step out of range");
    return lr0 * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total_steps)));
}

struct EpochLog {
    int epoch = 0;
    double avg_psnr = 0.0; // measured before this epoch's gradient steps
    double mean_total_loss = 0.0;
    double mean_fidelity = 0.0;
    double mean_rstar = 0.0;
    int n_hard = 0;
    int n_ultrahard = 0;
    double gamma = 0.25;
    int z = 7;
    double lr = 0.0; // at the first step of the epoch
};

inline nlohmann::json epoch_log_to_json(const EpochLog& e) {
    return nlohmann::json{{"epoch", e.epoch},
                          {"avg_psnr", e.avg_psnr},
                          {"mean_total_loss", e.mean_total_loss},
                          {"mean_fidelity", e.mean_fidelity},
                          {"mean_rstar", e.mean_rstar},
                          {"n_hard", e.n_hard},
                          {"n_ultrahard", e.n_ultrahard},
                          {"gamma", e.gamma},
                          {"z", e.z},
                          {"lr", e.lr}};
}

inline EpochLog epoch_log_from_json(const nlohmann::json& j) {
    EpochLog e;
    e.epoch = j.at("epoch").get<int>();
    e.avg_psnr = j.at("avg_psnr").get<double>();
    e.mean_total_loss = j.at("mean_total_loss").get<double>();
    e.mean_fidelity = j.at("mean_fidelity").get<double>();
    e.mean_rstar = j.at("mean_rstar").get<double>();
    e.n_hard = j.at("n_hard").get<int>();
    e.n_ultrahard = j.at("n_ultrahard").get<int>();
    e.gamma = j.at("gamma").get<double>();
    e.z = j.at("z").get<int>();
    e.lr = j.at("lr").get<double>();
    return e;
}

struct TrainResult {
    std::vector<EpochLog> logs; // this run's epochs only
    double final_avg_psnr = 0.0;
    std::filesystem::path final_checkpoint;
};

namespace detail {

struct GradRef {
    std::string name;
    const Tensor* grad;
};

inline void adam_update(NetworkParams& params, const std::vector<GradRef>& grads, AdamState& opt,
                        double lr, double beta1, double beta2, double clip) {
    double sq = 0.0;
    for (const GradRef& g : grads)
        for (double v : g.grad->data) sq += v * v;
    const double norm = std::sqrt(sq);
    const double scale = norm > clip ? clip / norm : 1.0;

    const double t = static_cast<double>(opt.step + 1);
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    std::size_t gi = 0;
    visit_params(params, [&](const std::string& name, Tensor& p) {
        const GradRef& g = grads[gi++];
        if (g.name != name) throw CheckpointError("internal: gradient/parameter order mismatch");
        Tensor& m = opt.m.try_emplace(name, Tensor::zeros(p.shape)).first->second;
        Tensor& v = opt.v.try_emplace(name, Tensor::zeros(p.shape)).first->second;
        for (long i = 0; i < p.numel(); ++i) {
            const double gv = (*g.grad)[i] * scale;
            m[i] = beta1 * m[i] + (1.0 - beta1) * gv;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gv * gv;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + 1e-8);
        }
    });
    ++opt.step;
}

template <typename RngT>
inline void shuffle_indices(std::vector<int>& v, RngT& rng) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
        const int j = rng.uniform_int(0, i);
        std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
}

} // namespace detail

// Runs the full training protocol against a manifest: measure calibration
// PSNR with the previous epoch's parameters, reclassify the negative pools,
// then take the epoch's gradient steps with cosine-annealed Adam. Writes
// logs.jsonl and periodic checkpoints under run_dir.
inline TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest,
                         const std::filesystem::path& manifest_dir,
                         const std::filesystem::path& run_dir, const std::string& resume_path = "") {
    cfg.validate();
    const int n = static_cast<int>(manifest.entries.size());
    if (n < 1) throw InvalidInputError("train: manifest has no entries");
    const bool uses_cr = cfg.loss_mode != LossMode::Fidelity && cfg.lambda > 0.0;

    // decode everything up front; desk-scale datasets fit in memory
    std::vector<TrainSample> samples;
    std::vector<std::vector<NegativeRecord>> pools;
    samples.reserve(static_cast<std::size_t>(n));
    for (const ManifestEntry& e : manifest.entries) {
        TrainSample s;
        s.hazy = read_png(manifest_dir / e.hazy_path);
        s.clear = read_png(manifest_dir / e.clear_path);
        if (uses_cr) {
            if (static_cast<int>(e.negatives.size()) != cfg.z)
                throw InvalidInputError("train: manifest entry " + e.id + " has " +
                                        std::to_string(e.negatives.size()) + " negatives, expected z=" +
                                        std::to_string(cfg.z));
            for (const ManifestNegative& mn : e.negatives) {
                s.negatives.push_back(read_png(manifest_dir / mn.path));
                s.neg_psnrs.push_back(mn.psnr);
            }
        }
        std::vector<NegativeRecord> pool;
        for (const ManifestNegative& mn : e.negatives) {
            NegativeRecord rec;
            rec.image_path = mn.path;
            rec.psnr_vs_positive = mn.psnr;
            rec.generator_tag = mn.generator_tag;
            pool.push_back(std::move(rec));
        }
        pools.push_back(std::move(pool));
        if (cfg.crop > image_height(s.hazy) || cfg.crop > image_width(s.hazy))
            throw InvalidInputError("train: crop exceeds image size for entry " + e.id);
        samples.push_back(std::move(s));
    }

    NetworkParams params;
    AdamState opt;
    CurriculumState curr;
    int start_epoch = 0;
    if (!resume_path.empty()) {
        Checkpoint ck = load_checkpoint(resume_path);
        if (serialize_config(ck.config) != serialize_config(cfg))
            throw CheckpointError("resume: checkpoint config differs from the requested config");
        params = std::move(ck.params);
        opt = std::move(ck.opt);
        curr = ck.curriculum;
        start_epoch = ck.epoch;
        if (start_epoch >= cfg.epochs)
            throw CheckpointError("resume: checkpoint already covers all configured epochs");
    } else {
        params = init_network(cfg.network, mix_seed(cfg.seed, 77));
        curr.gamma = cfg.gamma;
        curr.z = cfg.z;
    }

    std::optional<FeatureExtractor> extractor;
    auto ensure_extractor = [&]() -> const FeatureExtractor& {
        if (!extractor) {
            extractor.emplace(cfg.extractor);
            if (static_cast<int>(cfg.xi.xi.size()) != extractor->tap_count())
                throw ConfigError("train: xi length must match extractor tap count");
        }
        return *extractor;
    };

    std::vector<int> calib(static_cast<std::size_t>(n));
    std::iota(calib.begin(), calib.end(), 0);
    {
        Rng crng(mix_seed(cfg.seed, 99));
        detail::shuffle_indices(calib, crng);
    }
    calib.resize(static_cast<std::size_t>(std::min(cfg.calibration_size, n)));

    auto calibration_psnr = [&]() {
        double s = 0.0;
        for (int idx : calib) {
            const Image out = network_forward(samples[static_cast<std::size_t>(idx)].hazy, params);
            s += psnr(out, samples[static_cast<std::size_t>(idx)].clear);
        }
        return s / static_cast<double>(calib.size());
    };

    const long steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const long total_steps = static_cast<long>(cfg.epochs) * steps_per_epoch;

    std::filesystem::create_directories(run_dir / "ckpt");
    std::ofstream logfile(run_dir / "logs.jsonl", std::ios::trunc);
    if (!logfile) throw IoError("train: cannot write logs in " + run_dir.string());

    TrainResult result;
    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const double measured = calibration_psnr();
        curr = epoch_update(curr, measured, pools);
        const DifficultyCounts counts = count_difficulties(pools);

        Rng erng(mix_seed(cfg.seed, 0xE000ULL + static_cast<std::uint64_t>(epoch)));
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        detail::shuffle_indices(order, erng);

        const double lr_first = cosine_lr(opt.step, total_steps, cfg.lr0);
        double sum_total = 0.0, sum_fid = 0.0, sum_rstar = 0.0;

        for (long b = 0; b < steps_per_epoch; ++b) {
            const long lo = b * cfg.batch_size;
            const long hi = std::min<long>(lo + cfg.batch_size, n);
            std::vector<int> ids(order.begin() + lo, order.begin() + hi);

            ad::Tape tape;
            NetworkVars netvars = wrap(tape, params, /*trainable=*/true);
            ad::Var batch_loss;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                const TrainSample crop = crop_aligned(samples[static_cast<std::size_t>(ids[k])],
                                                      cfg.crop, erng);
                const Tensor hazy_chw = chw_from_image(crop.hazy);
                const Tensor clear_chw = chw_from_image(crop.clear);
                ad::Var out = network_forward(tape, ad::constant(tape, hazy_chw), netvars);
                ad::Var fid = ad::l1_mean(ad::constant(tape, clear_chw), out);
                ad::Var sample_loss = fid;
                double r_val = 0.0;
                if (uses_cr) {
                    const FeatureExtractor& ex = ensure_extractor();
                    std::vector<Tensor> negs;
                    negs.reserve(crop.negatives.size());
                    for (const Image& neg : crop.negatives) negs.push_back(chw_from_image(neg));
                    std::vector<double> weights(negs.size(), 1.0);
                    double easy_coeff = static_cast<double>(cfg.z);
                    if (cfg.loss_mode == LossMode::CanonicalCr) {
                        easy_coeff = 1.0;
                    } else if (cfg.loss_mode == LossMode::Curricular) {
                        const auto& pool = pools[static_cast<std::size_t>(ids[k])];
                        for (std::size_t q = 0; q < pool.size(); ++q) weights[q] = pool[q].weight;
                    }
                    ad::Var r = contrastive_ratio(tape, out, clear_chw, hazy_chw, negs, weights,
                                                  easy_coeff, cfg.xi, ex);
                    r_val = ad::scalar(r);
                    sample_loss = ad::add(fid, ad::scale(r, cfg.lambda));
                }
                sum_fid += ad::scalar(fid);
                sum_rstar += r_val;
                sum_total += ad::scalar(sample_loss);
                batch_loss = (k == 0) ? sample_loss : ad::add(batch_loss, sample_loss);
            }
            batch_loss = ad::scale(batch_loss, 1.0 / static_cast<double>(ids.size()));
            if (!std::isfinite(ad::scalar(batch_loss))) {
                std::string idstr;
                for (int id : ids) idstr += manifest.entries[static_cast<std::size_t>(id)].id + " ";
                nlohmann::json dump{{"epoch", epoch}, {"step", opt.step}, {"batch_ids", idstr}};
                std::ofstream(run_dir / "nan_dump.json") << dump.dump(2) << "\n";
                throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch ids: " + idstr);
            }
            tape.backward(batch_loss);

            std::vector<detail::GradRef> grads;
            visit_vars(netvars, [&grads](const std::string& name, ad::Var& v) {
                grads.push_back({name, &v.grad()});
            });
            const double lr = cosine_lr(opt.step, total_steps, cfg.lr0);
            detail::adam_update(params, grads, opt, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.grad_clip);
            curr.mid_epoch = true;
        }
        curr.mid_epoch = false;

        EpochLog log;
        log.epoch = epoch;
        log.avg_psnr = measured;
        log.mean_total_loss = sum_total / n;
        log.mean_fidelity = sum_fid / n;
        log.mean_rstar = sum_rstar / n;
        log.n_hard = counts.hard;
        log.n_ultrahard = counts.ultra_hard;
        log.gamma = curr.gamma;
        log.z = curr.z;
        log.lr = lr_first;
        result.logs.push_back(log);
        logfile << epoch_log_to_json(log).dump() << "\n";
        logfile.flush();

        if ((epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.epochs) {
            Checkpoint ck{cfg, epoch + 1, curr, params, opt};
            save_checkpoint(ck, run_dir / "ckpt" / ("ckpt-e" + std::to_string(epoch + 1) + ".json"));
        }
    }

    result.final_avg_psnr = calibration_psnr();
    Checkpoint final_ck{cfg, cfg.epochs, curr, params, opt};
    result.final_checkpoint = run_dir / "ckpt" / "ckpt-final.json";
    save_checkpoint(final_ck, result.final_checkpoint);
    return result;
}

// ---- evaluation -------------------------------------------------------------------

struct EvalEntry {
    std::string id;
    MetricReport metrics;
};

struct EvalReport {
    std::vector<EvalEntry> entries;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

// Full-image inference over a manifest; no crops.
inline EvalReport evaluate(const Checkpoint& ckpt, const DatasetManifest& manifest,
                           const std::filesystem::path& manifest_dir) {
    if (manifest.entries.empty()) throw InvalidInputError("evaluate: manifest has no entries");
    EvalReport report;
    for (const ManifestEntry& e : manifest.entries) {
        const Image hazy = read_png(manifest_dir / e.hazy_path);
        const Image clear = read_png(manifest_dir / e.clear_path);
        const Image out = network_forward(hazy, ckpt.params);
        EvalEntry r{e.id, measure(out, clear)};
        report.mean_psnr += r.metrics.psnr;
        report.mean_ssim += r.metrics.ssim;
        report.entries.push_back(std::move(r));
    }
    report.mean_psnr /= static_cast<double>(report.entries.size());
    report.mean_ssim /= static_cast<double>(report.entries.size());
    return report;
}

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
    nlohmann::json per = nlohmann::json::array();
    for (const EvalEntry& e : r.entries)
        per.push_back({{"id", e.id}, {"psnr", e.metrics.psnr}, {"ssim", e.metrics.ssim}});
    return nlohmann::json{{"entries", per}, {"mean_psnr", r.mean_psnr}, {"mean_ssim", r.mean_ssim}};
}

} // namespace c2p
