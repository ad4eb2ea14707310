#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "c2p/config.hpp"
#include "c2p/curriculum.hpp"
#include "c2p/errors.hpp"
#include "c2p/network.hpp"
#include "c2p/tensor.hpp"

namespace c2p {

constexpr const char* kCheckpointFormat = "c2p-ckpt-v1";

struct AdamState {
    long step = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
};

struct Checkpoint {
    TrainConfig config;
    int epoch = 0; // number of completed epochs
    CurriculumState curriculum;
    NetworkParams params;
    AdamState opt;
};

namespace detail {

inline nlohmann::json tensor_to_json(const Tensor& t) {
    return nlohmann::json{{"shape", t.shape}, {"data", t.data}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
    Tensor t;
    t.shape = j.at("shape").get<std::vector<int>>();
    t.data = j.at("data").get<std::vector<double>>();
    if (static_cast<long>(t.data.size()) != Tensor::numel_of(t.shape))
        throw CheckpointError("tensor payload does not match its shape");
    return t;
}

} // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["epoch"] = ckpt.epoch;
    j["config"] = config_to_json(ckpt.config);
    j["curriculum"] = {{"epoch", ckpt.curriculum.epoch},
                       {"avg_psnr", ckpt.curriculum.avg_psnr},
                       {"gamma", ckpt.curriculum.gamma},
                       {"z", ckpt.curriculum.z}};
    nlohmann::json params = nlohmann::json::object();
    visit_params(const_cast<NetworkParams&>(ckpt.params),
                 [&params](const std::string& name, Tensor& t) { params[name] = detail::tensor_to_json(t); });
    j["params"] = std::move(params);
    nlohmann::json m = nlohmann::json::object(), v = nlohmann::json::object();
    for (const auto& [name, t] : ckpt.opt.m) m[name] = detail::tensor_to_json(t);
    for (const auto& [name, t] : ckpt.opt.v) v[name] = detail::tensor_to_json(t);
    j["adam"] = {{"step", ckpt.opt.step}, {"m", std::move(m)}, {"v", std::move(v)}};

    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot write checkpoint: " + path.string());
        out << j.dump() << "\n";
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw CheckpointError("bad checkpoint json: " + std::string(e.what()));
    }
    if (j.value("format", "") != kCheckpointFormat)
        throw CheckpointError("checkpoint: unexpected format tag");
    Checkpoint ckpt;
    ckpt.config = config_from_json(j.at("config"));
    ckpt.epoch = j.at("epoch").get<int>();
    const auto& jc = j.at("curriculum");
    ckpt.curriculum.epoch = jc.at("epoch").get<int>();
    ckpt.curriculum.avg_psnr = jc.at("avg_psnr").get<double>();
    ckpt.curriculum.gamma = jc.at("gamma").get<double>();
    ckpt.curriculum.z = jc.at("z").get<int>();

    // materialize the parameter tree for the stored config, then fill by name
    ckpt.params = init_network(ckpt.config.network, 0);
    const auto& jp = j.at("params");
    visit_params(ckpt.params, [&jp](const std::string& name, Tensor& t) {
        if (!jp.contains(name)) throw CheckpointError("checkpoint missing parameter: " + name);
        Tensor loaded = detail::tensor_from_json(jp.at(name));
        if (loaded.shape != t.shape)
            throw CheckpointError("checkpoint shape mismatch for parameter: " + name);
        t = std::move(loaded);
    });
    std::size_t expected = 0;
    visit_params(ckpt.params, [&expected](const std::string&, Tensor&) { ++expected; });
    if (jp.size() != expected)
        throw CheckpointError("checkpoint holds parameters unknown to the configured network");

    const auto& ja = j.at("adam");
    ckpt.opt.step = ja.at("step").get<long>();
    for (const auto& [name, jt] : ja.at("m").items()) ckpt.opt.m[name] = detail::tensor_from_json(jt);
    for (const auto& [name, jt] : ja.at("v").items()) ckpt.opt.v[name] = detail::tensor_from_json(jt);
    return ckpt;
}

} // namespace c2p
