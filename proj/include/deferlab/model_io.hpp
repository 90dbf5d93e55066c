#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "deferlab/human_model.hpp"
#include "deferlab/nn.hpp"

namespace deferlab {

inline constexpr int kModelSchemaVersion = 1;

class ModelFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// {schema_version, layer_dims, activation, weights, biases}. Doubles are
/// written in shortest round-trip form, so a reload is bit-identical.
inline nlohmann::json network_to_json(const Network& net) {
    nlohmann::json j;
    j["schema_version"] = kModelSchemaVersion;
    j["layer_dims"] = net.layer_dims();
    j["activation"] = "relu";
    auto& w = j["weights"] = nlohmann::json::array();
    auto& b = j["biases"] = nlohmann::json::array();
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        auto wl = net.weights(l);
        auto bl = net.biases(l);
        w.push_back(std::vector<double>(wl.begin(), wl.end()));
        b.push_back(std::vector<double>(bl.begin(), bl.end()));
    }
    return j;
}

inline Network network_from_json(const nlohmann::json& j) {
    try {
        if (!j.is_object()) throw ModelFormatError("model: expected a JSON object");
        const int version = j.at("schema_version").get<int>();
        if (version != kModelSchemaVersion)
            throw ModelFormatError("model: schema_version " + std::to_string(version) +
                                   " is incompatible with this build (expects " +
                                   std::to_string(kModelSchemaVersion) + ")");
        if (j.at("activation").get<std::string>() != "relu")
            throw ModelFormatError("model: unsupported activation");
        Network net(j.at("layer_dims").get<std::vector<int>>());
        const auto& w = j.at("weights");
        const auto& b = j.at("biases");
        if (!w.is_array() || !b.is_array() || w.size() != net.num_layers() || b.size() != net.num_layers())
            throw ModelFormatError("model: layer count does not match layer_dims");
        for (std::size_t l = 0; l < net.num_layers(); ++l) {
            const auto wl = w[l].get<std::vector<double>>();
            const auto bl = b[l].get<std::vector<double>>();
            auto dw = net.weights(l);
            auto db = net.biases(l);
            if (wl.size() != dw.size() || bl.size() != db.size())
                throw ModelFormatError("model: parameter shape mismatch in layer " + std::to_string(l));
            std::copy(wl.begin(), wl.end(), dw.begin());
            std::copy(bl.begin(), bl.end(), db.begin());
        }
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw ModelFormatError(std::string("model: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ModelFormatError(std::string("model: ") + e.what());
    }
}

inline void save_model(const std::string& path, const Network& net) {
    std::ofstream out(path);
    if (!out) throw ModelFormatError("cannot write model file: " + path);
    out << network_to_json(net).dump(1) << '\n';
}

inline Network load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelFormatError("cannot open model file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ModelFormatError(path + ": " + e.what());
    }
    return network_from_json(j);
}

/// Human performance model: the network plus its kind and output scaling.
inline nlohmann::json human_model_to_json(const HumanModel& m) {
    return {{"kind", m.kind == HumanModelKind::CorrectnessClassifier ? "correctness_classifier" : "time_regressor"},
            {"target_mean", m.target_mean},
            {"target_scale", m.target_scale},
            {"network", network_to_json(m.net)}};
}

inline HumanModel human_model_from_json(const nlohmann::json& j) {
    try {
        HumanModel m;
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "correctness_classifier")
            m.kind = HumanModelKind::CorrectnessClassifier;
        else if (kind == "time_regressor")
            m.kind = HumanModelKind::TimeRegressor;
        else
            throw ModelFormatError("human model: unknown kind " + kind);
        m.target_mean = j.at("target_mean").get<double>();
        m.target_scale = j.at("target_scale").get<double>();
        m.net = network_from_json(j.at("network"));
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ModelFormatError(std::string("human model: ") + e.what());
    }
}

inline void save_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw ModelFormatError("cannot write file: " + path);
    out << j.dump(1) << '\n';
}

}  // namespace deferlab
