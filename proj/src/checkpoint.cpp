#include "adarec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace adarec {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

const Tensor& Checkpoint::get(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return t;
    }
    throw MissingArtifact("checkpoint tensor not found: " + name);
}

void save_checkpoint(const std::string& base_path, const Checkpoint& ckpt) {
    json manifest;
    if (!ckpt.meta_json.empty()) manifest = json::parse(ckpt.meta_json);
    manifest["format"] = "adarec-ckpt-v1";
    manifest["byte_order"] = "little-endian";
    manifest["dtype"] = "f64";
    manifest["tensors"] = json::array();
    for (const auto& [name, t] : ckpt.tensors) {
        manifest["tensors"].push_back({{"name", name}, {"shape", t.shape}});
    }
    std::ofstream mout(base_path + ".json");
    if (!mout) throw InputError("cannot write " + base_path + ".json");
    mout << manifest.dump(2) << "\n";

    std::ofstream bout(base_path + ".bin", std::ios::binary);
    if (!bout) throw InputError("cannot write " + base_path + ".bin");
    for (const auto& [name, t] : ckpt.tensors) {
        bout.write(reinterpret_cast<const char*>(t.data.data()),
                   static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
}

Checkpoint load_checkpoint(const std::string& base_path) {
    std::ifstream min(base_path + ".json");
    if (!min) throw MissingArtifact("missing checkpoint manifest: " + base_path + ".json");
    json manifest = json::parse(min);
    if (manifest.value("format", "") != "adarec-ckpt-v1") {
        throw InputError("unrecognized checkpoint format in " + base_path + ".json");
    }

    std::ifstream bin(base_path + ".bin", std::ios::binary);
    if (!bin) throw MissingArtifact("missing checkpoint data: " + base_path + ".bin");

    Checkpoint ckpt;
    ckpt.meta_json = manifest.dump();
    for (const auto& entry : manifest.at("tensors")) {
        std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        Tensor t(shape);
        bin.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!bin) {
            throw InputError("checkpoint data truncated: " + base_path + ".bin");
        }
        ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
    }
    return ckpt;
}

}  // namespace adarec
