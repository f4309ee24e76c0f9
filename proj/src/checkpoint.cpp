#include "rsm/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "rsm/errors.hpp"

namespace rsm {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw DataError(std::string("corrupt checkpoint: truncated ") + what);
    }
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32_array(std::ostream& os, const float* data, int64_t n) {
    // IEEE-754 float32 payload, little-endian byte order.
    for (int64_t i = 0; i < n; ++i) {
        uint32_t bits;
        std::memcpy(&bits, &data[i], 4);
        put_u32(os, bits);
    }
}

} // namespace

const std::string* Checkpoint::find(const std::string& key) const {
    for (const auto& kv : config) {
        if (kv.first == key) return &kv.second;
    }
    return nullptr;
}

void Checkpoint::set(const std::string& key, const std::string& value) {
    for (auto& kv : config) {
        if (kv.first == key) {
            kv.second = value;
            return;
        }
    }
    config.emplace_back(key, value);
}

void Checkpoint::set_i64(const std::string& key, int64_t value) {
    set(key, std::to_string(value));
}

int64_t Checkpoint::get_i64(const std::string& key) const {
    const std::string* v = find(key);
    if (!v) throw DataError("corrupt checkpoint: missing key '" + key + "'");
    try {
        return std::stoll(*v);
    } catch (const std::exception&) {
        throw DataError("corrupt checkpoint: key '" + key + "' is not an integer");
    }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write checkpoint '" + path + "'");
    os.write("RSM1", 4);
    put_u32(os, static_cast<uint32_t>(ckpt.config.size()));
    for (const auto& kv : ckpt.config) {
        const std::string line = kv.first + "=" + kv.second;
        put_u32(os, static_cast<uint32_t>(line.size()));
        os.write(line.data(), static_cast<std::streamsize>(line.size()));
    }
    put_u32(os, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& nt : ckpt.tensors) {
        put_u32(os, static_cast<uint32_t>(nt.first.size()));
        os.write(nt.first.data(), static_cast<std::streamsize>(nt.first.size()));
        const Tensor& t = nt.second;
        put_u32(os, static_cast<uint32_t>(t.rank()));
        for (int d : t.shape()) put_u32(os, static_cast<uint32_t>(d));
        put_f32_array(os, t.data(), t.numel());
    }
    if (!os) throw DataError("write failure on checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot read checkpoint '" + path + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "RSM1", 4) != 0) {
        throw DataError("corrupt checkpoint: bad magic in '" + path + "'");
    }
    Checkpoint ckpt;
    const uint32_t n_lines = get_u32(is, "config count");
    for (uint32_t i = 0; i < n_lines; ++i) {
        const uint32_t len = get_u32(is, "config line length");
        std::string line(len, '\0');
        if (!is.read(line.data(), len)) throw DataError("corrupt checkpoint: truncated config line");
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw DataError("corrupt checkpoint: config line without '='");
        ckpt.config.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    const uint32_t n_tensors = get_u32(is, "tensor count");
    for (uint32_t i = 0; i < n_tensors; ++i) {
        const uint32_t name_len = get_u32(is, "tensor name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw DataError("corrupt checkpoint: truncated tensor name");
        const uint32_t rank = get_u32(is, "tensor rank");
        if (rank == 0 || rank > 8) throw DataError("corrupt checkpoint: bad rank for '" + name + "'");
        std::vector<int> shape;
        int64_t numel = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            const uint32_t dim = get_u32(is, "tensor dim");
            if (dim == 0 || dim > (1u << 30)) throw DataError("corrupt checkpoint: bad dim for '" + name + "'");
            shape.push_back(static_cast<int>(dim));
            numel *= dim;
        }
        std::vector<float> data(static_cast<size_t>(numel));
        for (int64_t e = 0; e < numel; ++e) {
            const uint32_t bits = get_u32(is, "tensor payload");
            float f;
            std::memcpy(&f, &bits, 4);
            data[static_cast<size_t>(e)] = f;
        }
        ckpt.tensors.emplace(name, Tensor(std::move(shape), std::move(data)));
    }
    return ckpt;
}

} // namespace rsm
