#pragma once

#include <string>
#include <utility>
#include <vector>

#include "adarec/tensor.hpp"

namespace adarec {

// Checkpoints are a json manifest (<base>.json: shapes plus caller metadata)
// paired with <base>.bin holding little-endian 64-bit floats in manifest
// order.
struct Checkpoint {
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::string meta_json;  // caller-owned manifest fields

    const Tensor& get(const std::string& name) const;
};

void save_checkpoint(const std::string& base_path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& base_path);

}  // namespace adarec
