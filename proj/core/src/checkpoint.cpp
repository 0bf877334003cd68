// SPDX-License-Identifier: Apache-2.0

#include "dfr/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dfr::diff {

namespace {
constexpr const char* kMagic = "dfr-checkpoint 1";

void write_f32_le(std::ostream& os, float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    char b[4] = {static_cast<char>(u & 0xFF), static_cast<char>((u >> 8) & 0xFF),
                 static_cast<char>((u >> 16) & 0xFF), static_cast<char>((u >> 24) & 0xFF)};
    os.write(b, 4);
}

float read_f32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t u = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                      (static_cast<std::uint32_t>(b[2]) << 16) |
                      (static_cast<std::uint32_t>(b[3]) << 24);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

struct HeaderEntry {
    std::string name;
    std::vector<int> shape;
};

std::vector<HeaderEntry> read_header(std::istream& is, const std::string& path) {
    std::string line;
    if (!std::getline(is, line) || line != kMagic)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    std::vector<HeaderEntry> out;
    while (std::getline(is, line)) {
        if (line == "data") return out;
        std::istringstream ls(line);
        std::string tag;
        HeaderEntry e;
        int rank = 0;
        ls >> tag >> e.name >> rank;
        if (tag != "tensor" || !ls || rank < 0)
            throw std::runtime_error("checkpoint: malformed header line '" + line + "' in " + path);
        e.shape.resize(static_cast<std::size_t>(rank));
        for (int& d : e.shape) ls >> d;
        if (!ls) throw std::runtime_error("checkpoint: malformed shape in '" + line + "'");
        out.push_back(std::move(e));
    }
    throw std::runtime_error("checkpoint: missing data section in " + path);
}
}  // namespace

void save_checkpoint(const ParamStore& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os << kMagic << '\n';
    for (const auto& e : params.entries()) {
        os << "tensor " << e->name << ' ' << e->tensor.rank();
        for (int d : e->tensor.shape) os << ' ' << d;
        os << '\n';
    }
    os << "data\n";
    for (const auto& e : params.entries())
        for (Real v : e->tensor.values) write_f32_le(os, static_cast<float>(v));
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

void load_checkpoint(ParamStore& params, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    auto header = read_header(is, path);
    if (header.size() != params.count())
        throw std::runtime_error("checkpoint: " + path + " holds " + std::to_string(header.size()) +
                                 " tensors, store expects " + std::to_string(params.count()));
    for (const auto& e : header) {
        Tensor* p = params.find(e.name);
        if (!p) throw std::runtime_error("checkpoint: unknown parameter " + e.name + " in " + path);
        if (p->shape != e.shape)
            throw ShapeError("checkpoint(" + e.name + ")", p->shape, e.shape);
        for (Real& v : p->values) v = static_cast<Real>(read_f32_le(is));
        if (!is) throw std::runtime_error("checkpoint: truncated data in " + path);
    }
}

ParamStore read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    auto header = read_header(is, path);
    ParamStore store;
    for (const auto& e : header) {
        Tensor& t = store.add(e.name, Tensor::zeros(e.shape));
        for (Real& v : t.values) v = static_cast<Real>(read_f32_le(is));
        if (!is) throw std::runtime_error("checkpoint: truncated data in " + path);
    }
    return store;
}

}  // namespace dfr::diff
