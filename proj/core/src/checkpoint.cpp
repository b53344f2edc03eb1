#include "songgen/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "songgen/binio.hpp"

namespace songgen {

namespace {
constexpr char kMagic[8] = {'S', 'O', 'N', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const noexcept {
    for (auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    binio::write_bytes(out, kMagic, sizeof kMagic);
    binio::write_u32le(out, kVersion);
    binio::write_u64le(out, static_cast<std::uint64_t>(ck.step));
    binio::write_string(out, ck.manifest);
    binio::write_u64le(out, ck.tensors.size());
    for (auto& [name, t] : ck.tensors) {
        binio::write_string(out, name);
        binio::write_u32le(out, static_cast<std::uint32_t>(t.rows()));
        binio::write_u32le(out, static_cast<std::uint32_t>(t.cols()));
        for (std::size_t i = 0; i < t.size(); ++i) binio::write_f64le(out, t[i]);
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    binio::read_bytes(in, magic, sizeof magic);
    if (!std::equal(magic, magic + 8, kMagic)) throw std::runtime_error("not a checkpoint file: " + path);
    std::uint32_t version = binio::read_u32le(in);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    Checkpoint ck;
    ck.step = static_cast<std::int64_t>(binio::read_u64le(in));
    ck.manifest = binio::read_string(in);
    std::uint64_t count = binio::read_u64le(in);
    ck.tensors.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        std::string name = binio::read_string(in, 1u << 20);
        int rows = static_cast<int>(binio::read_u32le(in));
        int cols = static_cast<int>(binio::read_u32le(in));
        if (rows < 0 || cols < 0 || static_cast<std::uint64_t>(rows) * cols > (1u << 28))
            throw std::runtime_error("corrupt tensor shape in checkpoint: " + path);
        Tensor t(rows, cols);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = binio::read_f64le(in);
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

}  // namespace songgen
