#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "c2p/errors.hpp"

namespace c2p {

// Easy is reserved for the hazy input itself; stored negatives are Hard or
// UltraHard depending on the network's current average PSNR.
enum class DifficultyLevel { Easy, Hard, UltraHard };

struct NegativeRecord {
    std::string image_path;
    double psnr_vs_positive = 0.0; // computed once at pool build
    std::string generator_tag;
    DifficultyLevel difficulty = DifficultyLevel::Hard; // recomputed per epoch
    double weight = 1.0;
};

struct CurriculumState {
    int epoch = 0;          // number of epoch updates applied so far
    double avg_psnr = 0.0;  // last measurement, dB
    double gamma = 0.25;
    int z = 7;
    bool mid_epoch = false; // set by the trainer while gradient steps are running
};

// UltraHard iff the negative beats the network; equality counts as Hard
// (the 1+gamma branch applies when avgPSNR >= PSNR(S_q)).
inline DifficultyLevel classify(double neg_psnr, double net_avg_psnr) {
    if (!std::isfinite(neg_psnr) || !std::isfinite(net_avg_psnr))
        throw InvalidInputError("classify: PSNR values must be finite");
    return neg_psnr > net_avg_psnr ? DifficultyLevel::UltraHard : DifficultyLevel::Hard;
}

inline double weight_for(DifficultyLevel level, double gamma, int z) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw ConfigError("weight_for: gamma must be in (0,1)");
    if (z < 1) throw ConfigError("weight_for: z must be >= 1");
    switch (level) {
        case DifficultyLevel::Easy: return static_cast<double>(z);
        case DifficultyLevel::Hard: return 1.0 + gamma;
        case DifficultyLevel::UltraHard: return 1.0 - gamma;
    }
    throw ConfigError("weight_for: unknown difficulty level");
}

// Epoch-boundary update: records the new measurement and reclassifies every
// pool record from scratch. Must not be called while gradient steps of an
// epoch are in flight.
inline CurriculumState epoch_update(const CurriculumState& state, double measured_avg_psnr,
                                    std::vector<std::vector<NegativeRecord>>& pools) {
    if (state.mid_epoch)
        throw SequencingError("epoch_update: called mid-epoch");
    if (!std::isfinite(measured_avg_psnr))
        throw InvalidInputError("epoch_update: measurement must be finite");
    CurriculumState next = state;
    next.avg_psnr = measured_avg_psnr;
    next.epoch = state.epoch + 1;
    for (auto& pool : pools)
        for (NegativeRecord& rec : pool) {
            rec.difficulty = classify(rec.psnr_vs_positive, measured_avg_psnr);
            rec.weight = weight_for(rec.difficulty, state.gamma, state.z);
        }
    return next;
}

struct DifficultyCounts {
    int hard = 0;
    int ultra_hard = 0;
};

inline DifficultyCounts count_difficulties(const std::vector<std::vector<NegativeRecord>>& pools) {
    DifficultyCounts c;
    for (const auto& pool : pools)
        for (const NegativeRecord& rec : pool) {
            if (rec.difficulty == DifficultyLevel::Hard) ++c.hard;
            if (rec.difficulty == DifficultyLevel::UltraHard) ++c.ultra_hard;
        }
    return c;
}

} // namespace c2p
