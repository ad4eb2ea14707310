#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2p/contrastive.hpp"
#include "c2p/errors.hpp"
#include "c2p/network.hpp"

namespace c2p {

enum class LossMode { Fidelity, CanonicalCr, ConsensualNoCl, Curricular };

inline const char* to_string(LossMode m) {
    switch (m) {
        case LossMode::Fidelity: return "fidelity";
        case LossMode::CanonicalCr: return "canonical_cr";
        case LossMode::ConsensualNoCl: return "consensual_no_cl";
        case LossMode::Curricular: return "curricular";
    }
    return "?";
}

inline LossMode loss_mode_from_string(const std::string& s) {
    if (s == "fidelity") return LossMode::Fidelity;
    if (s == "canonical_cr") return LossMode::CanonicalCr;
    if (s == "consensual_no_cl") return LossMode::ConsensualNoCl;
    if (s == "curricular") return LossMode::Curricular;
    throw ConfigError("unknown loss_mode: " + s);
}

// All knobs of a training run. Defaults are the desk-scale configuration.
struct TrainConfig {
    double lr0 = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    int batch_size = 2;
    int epochs = 30;
    double lambda = 0.2;
    double gamma = 0.25;
    int z = 7;
    int crop = 64;
    int calibration_size = 32;
    std::uint64_t seed = 7;
    LossMode loss_mode = LossMode::Curricular;
    int checkpoint_every = 5;
    double grad_clip = 1.0;
    NetworkConfig network;
    ExtractorSpec extractor;
    LayerWeights xi;

    void validate() const {
        if (!(lr0 > 0)) throw ConfigError("lr0 must be > 0");
        if (!(adam_beta1 > 0 && adam_beta1 < 1)) throw ConfigError("adam_beta1 must be in (0,1)");
        if (!(adam_beta2 > 0 && adam_beta2 < 1)) throw ConfigError("adam_beta2 must be in (0,1)");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (lambda < 0) throw ConfigError("lambda must be >= 0");
        if (!(gamma > 0 && gamma < 1)) throw ConfigError("gamma must be in (0,1)");
        if (z < 1) throw ConfigError("z must be >= 1");
        if (crop < 8) throw ConfigError("crop must be >= 8");
        if (calibration_size < 1) throw ConfigError("calibration_size must be >= 1");
        if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
        if (!(grad_clip > 0)) throw ConfigError("grad_clip must be > 0");
        for (double v : xi.xi)
            if (!(v > 0)) throw ConfigError("xi weights must be positive");
        network.validate();
    }
};

namespace detail {

inline std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

inline std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

inline std::string join_doubles(const std::vector<double>& v) {
    std::ostringstream s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s << ",";
        s << v[i];
    }
    return s.str();
}

inline std::vector<double> split_doubles(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace detail

// "key = value" lines, '#' comments; keys mirror TrainConfig field names with
// dots for the nested blocks. Unknown keys are a hard error.
inline TrainConfig parse_config_text(const std::string& text, TrainConfig base = {}) {
    TrainConfig cfg = base;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        try {
            if (key == "lr0") cfg.lr0 = std::stod(val);
            else if (key == "adam_beta1") cfg.adam_beta1 = std::stod(val);
            else if (key == "adam_beta2") cfg.adam_beta2 = std::stod(val);
            else if (key == "batch_size") cfg.batch_size = std::stoi(val);
            else if (key == "epochs") cfg.epochs = std::stoi(val);
            else if (key == "lambda") cfg.lambda = std::stod(val);
            else if (key == "gamma") cfg.gamma = std::stod(val);
            else if (key == "z") cfg.z = std::stoi(val);
            else if (key == "crop") cfg.crop = std::stoi(val);
            else if (key == "calibration_size") cfg.calibration_size = std::stoi(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "loss_mode") cfg.loss_mode = loss_mode_from_string(val);
            else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(val);
            else if (key == "grad_clip") cfg.grad_clip = std::stod(val);
            else if (key == "xi") cfg.xi.xi = detail::split_doubles(val);
            else if (key == "network.groups") cfg.network.groups = std::stoi(val);
            else if (key == "network.blocks_per_group") cfg.network.blocks_per_group = std::stoi(val);
            else if (key == "network.channels") cfg.network.channels = std::stoi(val);
            else if (key == "network.kernel") cfg.network.kernel = std::stoi(val);
            else if (key == "network.attention") cfg.network.attention = attention_from_string(val);
            else if (key == "extractor.kind") cfg.extractor.kind = extractor_kind_from_string(val);
            else if (key == "extractor.seed") cfg.extractor.seed = std::stoull(val);
            else if (key == "extractor.tap_indices") cfg.extractor.tap_indices = detail::split_ints(val);
            else if (key == "extractor.weights_path") cfg.extractor.weights_path = val;
            else throw ConfigError("unknown config key: " + key);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("config line " + std::to_string(lineno) + ": bad value for " + key);
        }
    }
    return cfg;
}

inline TrainConfig load_config(const std::string& path, TrainConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text, base);
}

inline std::string serialize_config(const TrainConfig& c) {
    std::ostringstream out;
    out.precision(17);
    out << "lr0 = " << c.lr0 << "\n";
    out << "adam_beta1 = " << c.adam_beta1 << "\n";
    out << "adam_beta2 = " << c.adam_beta2 << "\n";
    out << "batch_size = " << c.batch_size << "\n";
    out << "epochs = " << c.epochs << "\n";
    out << "lambda = " << c.lambda << "\n";
    out << "gamma = " << c.gamma << "\n";
    out << "z = " << c.z << "\n";
    out << "crop = " << c.crop << "\n";
    out << "calibration_size = " << c.calibration_size << "\n";
    out << "seed = " << c.seed << "\n";
    out << "loss_mode = " << to_string(c.loss_mode) << "\n";
    out << "checkpoint_every = " << c.checkpoint_every << "\n";
    out << "grad_clip = " << c.grad_clip << "\n";
    out << "xi = " << detail::join_doubles(c.xi.xi) << "\n";
    out << "network.groups = " << c.network.groups << "\n";
    out << "network.blocks_per_group = " << c.network.blocks_per_group << "\n";
    out << "network.channels = " << c.network.channels << "\n";
    out << "network.kernel = " << c.network.kernel << "\n";
    out << "network.attention = " << to_string(c.network.attention) << "\n";
    out << "extractor.kind = " << to_string(c.extractor.kind) << "\n";
    out << "extractor.seed = " << c.extractor.seed << "\n";
    out << "extractor.tap_indices = " << detail::join_ints(c.extractor.tap_indices) << "\n";
    out << "extractor.weights_path = " << c.extractor.weights_path << "\n";
    return out.str();
}

inline nlohmann::json config_to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["lr0"] = c.lr0;
    j["adam_beta1"] = c.adam_beta1;
    j["adam_beta2"] = c.adam_beta2;
    j["batch_size"] = c.batch_size;
    j["epochs"] = c.epochs;
    j["lambda"] = c.lambda;
    j["gamma"] = c.gamma;
    j["z"] = c.z;
    j["crop"] = c.crop;
    j["calibration_size"] = c.calibration_size;
    j["seed"] = c.seed;
    j["loss_mode"] = to_string(c.loss_mode);
    j["checkpoint_every"] = c.checkpoint_every;
    j["grad_clip"] = c.grad_clip;
    j["xi"] = c.xi.xi;
    j["network"] = {{"groups", c.network.groups},
                    {"blocks_per_group", c.network.blocks_per_group},
                    {"channels", c.network.channels},
                    {"kernel", c.network.kernel},
                    {"attention", to_string(c.network.attention)}};
    j["extractor"] = {{"kind", to_string(c.extractor.kind)},
                      {"seed", c.extractor.seed},
                      {"tap_indices", c.extractor.tap_indices},
                      {"weights_path", c.extractor.weights_path}};
    return j;
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lr0 = j.at("lr0").get<double>();
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.lambda = j.at("lambda").get<double>();
    c.gamma = j.at("gamma").get<double>();
    c.z = j.at("z").get<int>();
    c.crop = j.at("crop").get<int>();
    c.calibration_size = j.at("calibration_size").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.loss_mode = loss_mode_from_string(j.at("loss_mode").get<std::string>());
    c.checkpoint_every = j.at("checkpoint_every").get<int>();
    c.grad_clip = j.at("grad_clip").get<double>();
    c.xi.xi = j.at("xi").get<std::vector<double>>();
    const auto& jn = j.at("network");
    c.network.groups = jn.at("groups").get<int>();
    c.network.blocks_per_group = jn.at("blocks_per_group").get<int>();
    c.network.channels = jn.at("channels").get<int>();
    c.network.kernel = jn.at("kernel").get<int>();
    c.network.attention = attention_from_string(jn.at("attention").get<std::string>());
    const auto& je = j.at("extractor");
    c.extractor.kind = extractor_kind_from_string(je.at("kind").get<std::string>());
    c.extractor.seed = je.at("seed").get<std::uint64_t>();
    c.extractor.tap_indices = je.at("tap_indices").get<std::vector<int>>();
    c.extractor.weights_path = je.at("weights_path").get<std::string>();
    return c;
}

} // namespace c2p
