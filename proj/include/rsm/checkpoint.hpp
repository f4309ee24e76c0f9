#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rsm/tensor.hpp"

namespace rsm {

// Binary checkpoint container. Layout, all integers little-endian u32:
//   magic "RSM1"
//   line count, then per line: byte length + UTF-8 "key=value"
//   tensor count, then per tensor: name length + name, rank, dims, float32 payload
// Round-trips bit-exactly.
struct Checkpoint {
    std::vector<std::pair<std::string, std::string>> config;
    std::map<std::string, Tensor> tensors;

    const std::string* find(const std::string& key) const;
    void set(const std::string& key, const std::string& value);
    void set_i64(const std::string& key, int64_t value);
    int64_t get_i64(const std::string& key) const;   // throws DataError if absent/bad
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

} // namespace rsm
