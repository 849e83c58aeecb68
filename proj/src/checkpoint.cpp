#include "dsrl/checkpoint.hpp"

#include <fstream>

#include "dsrl/errors.hpp"

namespace dsrl {

using nlohmann::json;

json net_to_json(const nn::DenseNet& net) {
    json layers = json::array();
    for (const nn::Layer& l : net.layers) {
        layers.push_back({{"in_dim", l.in_dim},
                          {"out_dim", l.out_dim},
                          {"activation", nn::to_string(l.activation)},
                          {"weights", l.weights},
                          {"biases", l.biases}});
    }
    return {{"format_version", kCheckpointFormatVersion},
            {"input_dim", net.input_dim()},
            {"layers", layers}};
}

nn::DenseNet net_from_json(const json& j) {
    if (!j.contains("format_version"))
        throw ConfigError("format_version", "checkpoint missing format_version");
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
        throw ConfigError("format_version", "unsupported checkpoint format version");
    nn::DenseNet net;
    for (const json& jl : j.at("layers")) {
        nn::Layer l;
        l.in_dim = jl.at("in_dim").get<std::size_t>();
        l.out_dim = jl.at("out_dim").get<std::size_t>();
        l.activation = nn::activation_from_string(jl.at("activation").get<std::string>());
        l.weights = jl.at("weights").get<std::vector<double>>();
        l.biases = jl.at("biases").get<std::vector<double>>();
        if (l.weights.size() != l.in_dim * l.out_dim || l.biases.size() != l.out_dim)
            throw ConfigError("layers", "checkpoint layer shape mismatch");
        net.layers.push_back(std::move(l));
    }
    for (std::size_t i = 1; i < net.layers.size(); ++i)
        if (net.layers[i].in_dim != net.layers[i - 1].out_dim)
            throw ConfigError("layers", "checkpoint layer dims do not chain");
    return net;
}

json checkpoint_to_json(const FeatureCheckpoint& ckpt) {
    return {{"format_version", kCheckpointFormatVersion},
            {"kind", "features"},
            {"env_id", ckpt.env_id},
            {"feature_dim", ckpt.feature_dim},
            {"train_seed", ckpt.train_seed},
            {"selection_episode", ckpt.selection_episode},
            {"trunk", net_to_json(ckpt.trunk)}};
}

FeatureCheckpoint checkpoint_from_json(const json& j) {
    FeatureCheckpoint ckpt;
    ckpt.trunk = net_from_json(j.at("trunk"));
    ckpt.feature_dim = j.at("feature_dim").get<std::size_t>();
    ckpt.env_id = j.at("env_id").get<std::string>();
    ckpt.train_seed = j.at("train_seed").get<std::uint64_t>();
    ckpt.selection_episode = j.at("selection_episode").get<std::size_t>();
    if (ckpt.trunk.output_dim() != ckpt.feature_dim)
        throw ConfigError("feature_dim", "checkpoint feature_dim does not match trunk");
    return ckpt;
}

void save_checkpoint(const FeatureCheckpoint& ckpt, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("out", "cannot write checkpoint file: " + path);
    out << checkpoint_to_json(ckpt).dump(2) << "\n";
}

FeatureCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("ckpt", "cannot read checkpoint file: " + path);
    json j;
    in >> j;
    return checkpoint_from_json(j);
}

}  // namespace dsrl
