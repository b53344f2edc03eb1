#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "songgen/tensor.hpp"

namespace songgen {

// Serialized training snapshot: named tensors plus an opaque manifest blob
// (the model layer stores its configuration and vocab summary there).
struct Checkpoint {
    std::int64_t step = 0;
    std::string manifest;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const noexcept;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace songgen
