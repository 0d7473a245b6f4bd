#include "gcanet/tensor_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

namespace gcanet {

namespace {

constexpr char kMagic[4] = {'G', 'C', 'A', 'T'};
constexpr uint32_t kVersion = 1;

// the build targets little-endian hosts; plain memcpy keeps the payload bit-exact
template <typename T>
void put(std::ostream& os, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    os.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path, const char* what) {
    char buf[sizeof(T)];
    if (!is.read(buf, sizeof(T)))
        throw std::runtime_error(path + ": truncated while reading " + what);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

}  // namespace

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    std::set<std::string> names;
    for (const auto& [name, t] : tensors)
        if (!names.insert(name).second)
            throw std::invalid_argument("save_tensors: duplicate name '" + name + "'");

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("save_tensors: cannot open " + path);
    os.write(kMagic, 4);
    put<uint32_t>(os, kVersion);
    put<uint32_t>(os, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.size() > UINT16_MAX)
            throw std::invalid_argument("save_tensors: name too long: " + name);
        put<uint16_t>(os, static_cast<uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        const Shape& s = t->shape();
        put<uint64_t>(os, static_cast<uint64_t>(s.n));
        put<uint64_t>(os, static_cast<uint64_t>(s.c));
        put<uint64_t>(os, static_cast<uint64_t>(s.h));
        put<uint64_t>(os, static_cast<uint64_t>(s.w));
        for (double v : t->vec()) put<double>(os, v);
    }
    if (!os) throw std::runtime_error("save_tensors: write failed for " + path);
}

std::map<std::string, Tensor> load_tensors(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_tensors: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error(path + ": bad magic, not a GCAT tensor file");
    const uint32_t version = get<uint32_t>(is, path, "version");
    if (version != kVersion)
        throw std::runtime_error(path + ": unsupported version " + std::to_string(version));
    const uint32_t count = get<uint32_t>(is, path, "count");

    std::map<std::string, Tensor> out;
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t len = get<uint16_t>(is, path, "name length");
        std::string name(len, '\0');
        if (len && !is.read(name.data(), len))
            throw std::runtime_error(path + ": truncated while reading name");
        Shape s;
        s.n = static_cast<int64_t>(get<uint64_t>(is, path, "shape"));
        s.c = static_cast<int64_t>(get<uint64_t>(is, path, "shape"));
        s.h = static_cast<int64_t>(get<uint64_t>(is, path, "shape"));
        s.w = static_cast<int64_t>(get<uint64_t>(is, path, "shape"));
        Tensor t(s);
        for (int64_t j = 0; j < t.numel(); ++j) t[j] = get<double>(is, path, "payload");
        if (out.count(name)) throw std::runtime_error(path + ": duplicate tensor name " + name);
        out.emplace(name, std::move(t));
    }
    return out;
}

}  // namespace gcanet
