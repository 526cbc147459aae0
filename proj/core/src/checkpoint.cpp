#include <cstring>
#include <fstream>

#include "carenet/autonn.hpp"
#include "carenet/error.hpp"

namespace carenet::nn {

namespace {

constexpr char kMagic[4] = {'C', 'N', 'W', '1'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_weights(const std::vector<Tensor*>& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorKind::Io, "cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    const std::uint32_t version = kVersion;
    const std::uint32_t count = static_cast<std::uint32_t>(params.size());
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&count), 4);
    for (const Tensor* p : params) {
        const std::uint32_t ndim = static_cast<std::uint32_t>(p->shape.size());
        out.write(reinterpret_cast<const char*>(&ndim), 4);
        for (int d : p->shape) {
            const std::uint32_t dim = static_cast<std::uint32_t>(d);
            out.write(reinterpret_cast<const char*>(&dim), 4);
        }
        out.write(reinterpret_cast<const char*>(p->v.data()),
                  static_cast<std::streamsize>(p->v.size() * sizeof(double)));
    }
    if (!out) raise(ErrorKind::Io, "write failed for checkpoint " + path.string());
}

void load_weights(const std::vector<Tensor*>& params, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::Io, "cannot open checkpoint " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        raise(ErrorKind::Format, "bad checkpoint magic in " + path.string());
    std::uint32_t version = 0, count = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&count), 4);
    require(version == kVersion, ErrorKind::Format, "unsupported checkpoint version");
    require(count == params.size(), ErrorKind::Format,
            "checkpoint parameter count does not match the graph");
    for (Tensor* p : params) {
        std::uint32_t ndim = 0;
        in.read(reinterpret_cast<char*>(&ndim), 4);
        require(ndim == p->shape.size(), ErrorKind::Format, "checkpoint rank mismatch");
        for (int d : p->shape) {
            std::uint32_t dim = 0;
            in.read(reinterpret_cast<char*>(&dim), 4);
            require(dim == static_cast<std::uint32_t>(d), ErrorKind::Format,
                    "checkpoint shape mismatch");
        }
        in.read(reinterpret_cast<char*>(p->v.data()),
                static_cast<std::streamsize>(p->v.size() * sizeof(double)));
        require(static_cast<std::size_t>(in.gcount()) == p->v.size() * sizeof(double),
                ErrorKind::Io, "truncated checkpoint payload");
    }
}

}  // namespace carenet::nn
