#include "anysat/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "anysat/errors.hpp"

namespace anysat {

namespace {

constexpr char kMagic[8] = {'A', 'N', 'Y', 'S', 'A', 'T', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<char*>(b), 4);
}

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<char*>(b), 8);
}

uint32_t read_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw IoError(std::string("checkpoint: truncated ") + what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t read_u64(std::istream& is, const char* what) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw IoError(std::string("checkpoint: truncated ") + what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const nlohmann::json& metadata,
                     const std::vector<std::pair<std::string, const ParamTree*>>& trees) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("save_checkpoint: cannot open " + path);
    os.write(kMagic, 8);
    write_u32(os, kVersion);
    std::string meta = metadata.dump();
    write_u64(os, meta.size());
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    for (const auto& [tree_name, tree] : trees) {
        for (const std::string& leaf : tree->names()) {
            Tensor t = tree->get(leaf);
            std::string name = tree_name + "/" + leaf;
            write_u32(os, static_cast<uint32_t>(name.size()));
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
            os.put(static_cast<char>(1));  // f64
            os.put(static_cast<char>(t.rank()));
            for (size_t d : t.shape()) write_u64(os, d);
            for (double v : t.data()) {
                uint64_t bits;
                std::memcpy(&bits, &v, 8);
                write_u64(os, bits);
            }
        }
    }
    if (!os) throw IoError("save_checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_checkpoint: cannot open " + path);
    char magic[8];
    if (!is.read(magic, 8)) throw IoError("load_checkpoint: truncated magic in " + path);
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw IoError("load_checkpoint: bad magic bytes in " + path);
    uint32_t version = read_u32(is, "version");
    if (version != kVersion)
        throw IoError("load_checkpoint: unsupported version " + std::to_string(version));
    uint64_t meta_len = read_u64(is, "metadata length");
    std::string meta(meta_len, '\0');
    if (!is.read(meta.data(), static_cast<std::streamsize>(meta_len)))
        throw IoError("load_checkpoint: truncated metadata in " + path);
    LoadedCheckpoint out;
    try {
        out.metadata = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("load_checkpoint: bad metadata JSON: ") + e.what());
    }

    while (is.peek() != std::char_traits<char>::eof()) {
        uint32_t name_len = read_u32(is, "record name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len))
            throw IoError("load_checkpoint: truncated record name");
        int dtype = is.get();
        int rank = is.get();
        if (dtype == std::char_traits<char>::eof() || rank == std::char_traits<char>::eof())
            throw IoError("load_checkpoint: truncated record header");
        if (dtype != 0 && dtype != 1)
            throw IoError("load_checkpoint: unknown dtype code " + std::to_string(dtype));
        std::vector<size_t> shape(static_cast<size_t>(rank));
        size_t numel = 1;
        for (size_t i = 0; i < shape.size(); ++i) {
            shape[i] = read_u64(is, "dimension");
            numel *= shape[i];
        }
        std::vector<double> data(numel);
        for (size_t i = 0; i < numel; ++i) {
            if (dtype == 1) {
                uint64_t bits = read_u64(is, "payload");
                std::memcpy(&data[i], &bits, 8);
            } else {
                uint32_t bits = read_u32(is, "payload");
                float f;
                std::memcpy(&f, &bits, 4);
                data[i] = f;
            }
        }
        auto slash = name.find('/');
        if (slash == std::string::npos)
            throw IoError("load_checkpoint: record name lacks a tree prefix: " + name);
        std::string tree_name = name.substr(0, slash);
        std::string leaf = name.substr(slash + 1);
        out.trees[tree_name].create(leaf, Tensor::from(std::move(shape), std::move(data), true));
    }
    return out;
}

std::string config_hash(const nlohmann::json& config) {
    std::string dump = config.dump();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace anysat
