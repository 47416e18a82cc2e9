#include "treevae/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace treevae::nn {

namespace {

std::string floats_to_base64(const std::vector<float>& v) {
    // Little-endian byte image; this code targets little-endian hosts.
    std::vector<unsigned char> bytes(v.size() * 4);
    std::memcpy(bytes.data(), v.data(), bytes.size());
    return base64_encode(bytes.data(), bytes.size());
}

std::vector<float> base64_to_floats(const std::string& text) {
    auto bytes = base64_decode(text);
    if (bytes.size() % 4 != 0) throw CorruptCheckpoint("payload is not a float32 array");
    std::vector<float> v(bytes.size() / 4);
    std::memcpy(v.data(), bytes.data(), bytes.size());
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& model_kind,
                     const nlohmann::json& hyperparams, const nlohmann::json& vocab,
                     const ParamRegistry& reg) {
    nlohmann::json j;
    j["version"] = kCheckpointVersion;
    j["model_kind"] = model_kind;
    j["hyperparams"] = hyperparams;
    j["vocab"] = vocab;
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : reg.all()) {
        nlohmann::json e;
        e["name"] = p->name;
        e["shape"] = p->value.shape;
        e["data"] = floats_to_base64(p->value.data);
        params.push_back(e);
    }
    j["params"] = params;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path);
    out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptCheckpoint("cannot read checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptCheckpoint(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    Checkpoint ck;
    try {
        if (j.at("version").get<std::string>() != kCheckpointVersion)
            throw CorruptCheckpoint("unsupported checkpoint version");
        ck.model_kind = j.at("model_kind").get<std::string>();
        ck.hyperparams = j.at("hyperparams");
        ck.vocab = j.at("vocab");
        for (const auto& e : j.at("params")) {
            Tensor t;
            t.shape = e.at("shape").get<std::vector<int>>();
            t.data = base64_to_floats(e.at("data").get<std::string>());
            if (static_cast<std::int64_t>(t.data.size()) != t.numel())
                throw CorruptCheckpoint("tensor payload does not match its shape");
            ck.params.emplace_back(e.at("name").get<std::string>(), std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CorruptCheckpoint(std::string("malformed checkpoint: ") + e.what());
    }
    return ck;
}

void load_into_registry(const Checkpoint& ckpt, ParamRegistry& reg) {
    if (ckpt.params.size() != reg.all().size())
        throw CorruptCheckpoint("parameter count differs from the model");
    for (const auto& [name, tensor] : ckpt.params) {
        Param* p = reg.find(name);
        if (!p) throw CorruptCheckpoint("unknown parameter in checkpoint: " + name);
        if (p->value.shape != tensor.shape)
            throw CorruptCheckpoint("shape mismatch for parameter: " + name);
        p->value.data = tensor.data;
    }
}

void expect_kind(const Checkpoint& ckpt, const std::string& kind) {
    if (ckpt.model_kind != kind)
        throw KindMismatch("checkpoint holds a '" + ckpt.model_kind + "' model, expected '" +
                           kind + "'");
}

}  // namespace treevae::nn
