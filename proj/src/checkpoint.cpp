#include "tesla/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "tesla/io.hpp"

namespace tesla {

using nlohmann::json;

namespace {

json config_to_json(const ModelConfig& c) {
    return json{{"k", c.k},
                {"alpha", c.alpha},
                {"layers", c.layers},
                {"msg_width", c.msg_width},
                {"heads", c.heads},
                {"pooled_width", c.pooled_width},
                {"hidden1", c.hidden1},
                {"hidden2", c.hidden2},
                {"classes", c.classes},
                {"use_attention", c.use_attention},
                {"collapse_time", c.collapse_time}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.k = j.at("k").get<int>();
    c.alpha = j.at("alpha").get<double>();
    c.layers = j.at("layers").get<int>();
    c.msg_width = j.at("msg_width").get<int>();
    c.heads = j.at("heads").get<int>();
    c.pooled_width = j.at("pooled_width").get<int>();
    c.hidden1 = j.at("hidden1").get<int>();
    c.hidden2 = j.at("hidden2").get<int>();
    c.classes = j.at("classes").get<int>();
    c.use_attention = j.at("use_attention").get<bool>();
    c.collapse_time = j.at("collapse_time").get<bool>();
    c.validate();
    return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ParamTable& params) {
    json tensors = json::object();
    for (const auto& [name, t] : params)
        tensors[name] = json{{"shape", t.shape}, {"data", t.data}};
    json doc{{"format_version", 1}, {"config", config_to_json(cfg)}, {"tensors", tensors}};
    std::ofstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot open for writing: " + path.string());
    f << doc.dump() << '\n';
}

std::pair<ModelConfig, ParamTable> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw LoadError("missing checkpoint: " + path.string());
    json doc = json::parse(f, nullptr, true);
    if (doc.at("format_version").get<int>() != 1)
        throw LoadError("unsupported checkpoint format version in " + path.string());
    ModelConfig cfg = config_from_json(doc.at("config"));

    ParamTable params;
    const auto& tensors = doc.at("tensors");
    for (const auto& [name, shape] : param_shapes(cfg)) {
        if (!tensors.contains(name))
            throw LoadError("checkpoint missing tensor '" + name + "': " + path.string());
        const auto& tj = tensors.at(name);
        Tensor t;
        t.shape = tj.at("shape").get<std::vector<int>>();
        if (t.shape != shape)
            throw LoadError("checkpoint tensor '" + name + "' has wrong shape: " + path.string());
        t.data = tj.at("data").get<std::vector<double>>();
        if (t.data.size() != t.numel())
            throw LoadError("checkpoint tensor '" + name + "' has wrong size: " + path.string());
        params.emplace(name, std::move(t));
    }
    return {cfg, params};
}

}  // namespace tesla
