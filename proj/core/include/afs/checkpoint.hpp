#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace afs::ckpt {

// Flat named-tensor container with a shape manifest and string metadata.
// Layout: magic "AFCP", version u16, meta count u32, meta (key,value) string
// pairs, tensor count u32, then per tensor {name, rank u8, dims u32[rank],
// little-endian f32 data}.
struct Checkpoint {
    struct Tensor {
        std::vector<uint32_t> shape;
        std::vector<float> data;
    };

    std::map<std::string, std::string> meta;
    std::map<std::string, Tensor> tensors;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    // Raises ConfigMismatch when the key is missing or differs.
    void require_meta(const std::string& key, const std::string& expected) const;
};

} // namespace afs::ckpt
