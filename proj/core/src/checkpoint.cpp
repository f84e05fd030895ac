#include "afs/checkpoint.hpp"
#include "afs/error.hpp"
#include "afs/io.hpp"

namespace afs::ckpt {

void Checkpoint::save(const std::string& path) const {
    io::Writer w(path);
    w.magic("AFCP");
    w.u16(1);
    w.u32(uint32_t(meta.size()));
    for (const auto& [key, value] : meta) {
        w.str(key);
        w.str(value);
    }
    w.u32(uint32_t(tensors.size()));
    for (const auto& [name, t] : tensors) {
        w.str(name);
        w.u8(uint8_t(t.shape.size()));
        size_t count = 1;
        for (uint32_t d : t.shape) {
            w.u32(d);
            count *= d;
        }
        if (count != t.data.size())
            raise(ErrorCode::ShapeMismatch, "checkpoint save: '" + name + "' shape/data mismatch");
        w.f32s(t.data.data(), t.data.size());
    }
}

Checkpoint Checkpoint::load(const std::string& path) {
    io::Reader r(path);
    r.expect_magic("AFCP");
    const uint16_t version = r.u16();
    if (version != 1) raise(ErrorCode::FormatError, "AFCP: unsupported version");
    Checkpoint ck;
    const uint32_t n_meta = r.u32();
    for (uint32_t i = 0; i < n_meta; ++i) {
        std::string key = r.str();
        ck.meta[key] = r.str();
    }
    const uint32_t n_tensors = r.u32();
    for (uint32_t i = 0; i < n_tensors; ++i) {
        std::string name = r.str();
        const uint8_t rank = r.u8();
        Tensor t;
        size_t count = 1;
        for (uint8_t d = 0; d < rank; ++d) {
            t.shape.push_back(r.u32());
            count *= t.shape.back();
        }
        if (count > (size_t(1) << 31))
            raise(ErrorCode::FormatError, "AFCP: tensor '" + name + "' implausibly large");
        t.data.resize(count);
        r.f32s(t.data.data(), t.data.size());
        ck.tensors[name] = std::move(t);
    }
    return ck;
}

void Checkpoint::require_meta(const std::string& key, const std::string& expected) const {
    auto it = meta.find(key);
    if (it == meta.end())
        raise(ErrorCode::ConfigMismatch, "checkpoint: missing metadata key '" + key + "'");
    if (it->second != expected)
        raise(ErrorCode::ConfigMismatch, "checkpoint: metadata '" + key + "' is '" + it->second +
                                             "', expected '" + expected + "'");
}

} // namespace afs::ckpt
