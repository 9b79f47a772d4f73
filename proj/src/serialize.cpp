#include "stmre/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace stmre {

namespace {

class Writer {
public:
    explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
        if (!out_) throw DataError("cannot open " + path.string() + " for writing");
    }

    void bytes(const void* data, std::size_t n) { out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }

    template <typename U>
    void le(U value) {
        unsigned char buf[sizeof(U)];
        using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
        const auto bits = std::bit_cast<Bits>(value);
        for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
        bytes(buf, sizeof(U));
    }

    void str(const std::string& s) {
        le<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }

    void finish(const std::filesystem::path& path) {
        out_.flush();
        if (!out_) throw DataError("failed writing " + path.string());
    }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw DataError("cannot open parameter file " + path.string());
    }

    void bytes(void* data, std::size_t n) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (!in_) throw DataError("truncated parameter file " + path_.string());
    }

    template <typename U>
    U le() {
        unsigned char buf[sizeof(U)];
        bytes(buf, sizeof(U));
        using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
        Bits bits = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<Bits>(buf[i]) << (8 * i);
        return std::bit_cast<U>(bits);
    }

    std::string str() {
        const auto n = le<std::uint32_t>();
        if (n > (1u << 20)) throw DataError("implausible string length in " + path_.string());
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }

private:
    std::filesystem::path path_;
    std::ifstream in_;
};

}  // namespace

void write_param_file(const std::filesystem::path& path, const std::string& descriptor,
                      const std::vector<NamedParam<float>>& params) {
    Writer w(path);
    w.bytes(kParamMagic, sizeof(kParamMagic));
    w.le<std::uint32_t>(kParamVersion);
    w.str(descriptor);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        w.str(p.name);
        const auto& shape = p.var->value.shape();
        w.le<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
        for (auto d : shape) w.le<std::uint64_t>(d);
    }
    for (const auto& p : params) {
        for (float v : p.var->value.values()) w.le<float>(v);
    }
    w.finish(path);
}

ParamFile read_param_file(const std::filesystem::path& path) {
    Reader r(path);
    char magic[8];
    r.bytes(magic, sizeof(magic));
    if (std::memcmp(magic, kParamMagic, sizeof(magic)) != 0) throw DataError(path.string() + " is not a parameter file");
    const auto version = r.le<std::uint32_t>();
    if (version != kParamVersion) throw DataError("unsupported parameter file version " + std::to_string(version));
    ParamFile file;
    file.descriptor = r.str();
    const auto count = r.le<std::uint32_t>();
    std::vector<std::pair<std::string, Shape>> manifest;
    for (std::uint32_t i = 0; i < count; ++i) {
        auto name = r.str();
        const auto rank = r.le<std::uint32_t>();
        if (rank == 0 || rank > 8) throw DataError("bad rank for parameter " + name);
        Shape shape(rank);
        for (auto& d : shape) {
            d = r.le<std::uint64_t>();
            if (d == 0 || d > (1u << 28)) throw DataError("bad dimension for parameter " + name);
        }
        manifest.emplace_back(std::move(name), std::move(shape));
    }
    for (auto& [name, shape] : manifest) {
        Tensor t(shape);
        for (auto& v : t.values()) v = r.le<float>();
        file.params.push_back({name, std::move(t)});
    }
    return file;
}

void load_params(const ParamFile& file, const std::vector<NamedParam<float>>& params) {
    if (file.params.size() != params.size()) {
        throw DataError("parameter file holds " + std::to_string(file.params.size()) + " tensors, model expects " +
                        std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& rec = file.params[i];
        const auto& dst = params[i];
        if (rec.name != dst.name) throw DataError("parameter " + std::to_string(i) + " is " + rec.name + ", expected " + dst.name);
        if (rec.value.shape() != dst.var->value.shape()) {
            throw DataError("parameter " + rec.name + " has shape " + shape_str(rec.value.shape()) + ", expected " +
                            shape_str(dst.var->value.shape()));
        }
        dst.var->value = rec.value;
    }
}

}  // namespace stmre
