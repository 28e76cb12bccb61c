#pragma once

#include <fstream>
#include <string>

#include "json.hpp"

#include "gina/models.hpp"

namespace gina {

inline constexpr const char* kModelFormat = "gina-model-v1";

inline nlohmann::json model_to_json(const TrainedModel& m) {
    nlohmann::json j;
    j["format"] = kModelFormat;
    j["spec"] = m.spec;
    j["hyper"] = m.hyper;
    j["trace"] = m.trace;
    nlohmann::json params = nlohmann::json::array();
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        const Tensor& t = m.params.values[i];
        params.push_back({{"name", m.params.names[i]},
                          {"rows", t.rows()},
                          {"cols", t.cols()},
                          {"data", std::vector<double>(t.data(), t.data() + t.size())}});
    }
    j["params"] = params;
    return j;
}

/// Parse a model and check every parameter against the shapes its spec implies.
inline TrainedModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.value("format", std::string{}) != kModelFormat)
            throw DataError("model file: unsupported format (expected " + std::string(kModelFormat) + ")");
        TrainedModel m;
        m.spec = j.at("spec").get<ModelSpec>();
        m.spec.validate();
        if (j.contains("hyper")) m.hyper = j.at("hyper").get<TrainConfig>();
        if (j.contains("trace")) m.trace = j.at("trace").get<std::vector<double>>();
        Rng rng(0);
        const Params layout = init_params(m.spec, rng);
        const auto& arr = j.at("params");
        if (arr.size() != layout.size())
            throw DataError("model file: expected " + std::to_string(layout.size()) + " parameter tensors, found " +
                            std::to_string(arr.size()));
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto name = arr[i].at("name").get<std::string>();
            const auto rows = arr[i].at("rows").get<Eigen::Index>();
            const auto cols = arr[i].at("cols").get<Eigen::Index>();
            const auto data = arr[i].at("data").get<std::vector<double>>();
            if (name != layout.names[i] || rows != layout.values[i].rows() || cols != layout.values[i].cols() ||
                static_cast<Eigen::Index>(data.size()) != rows * cols)
                throw DataError("model file: parameter " + std::to_string(i) + " ('" + name +
                                "') does not match the spec layout '" + layout.names[i] + "' " +
                                shape_str(layout.values[i]));
            Tensor t(rows, cols);
            std::copy(data.begin(), data.end(), t.data());
            m.params.add(name, std::move(t));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model file: ") + e.what());
    }
}

inline void save_model(const TrainedModel& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write model file '" + path + "'");
    out << model_to_json(m).dump(1) << '\n';
    if (!out) throw DataError("failed writing model file '" + path + "'");
}

inline TrainedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read model file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("model file '" + path + "': " + e.what());
    }
    return model_from_json(j);
}

}  // namespace gina
