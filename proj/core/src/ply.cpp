// SPDX-License-Identifier: Apache-2.0

#include "dfr/ply.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dfr::data {

namespace {

const char* type_word(PlyColumn::Type t) {
    switch (t) {
        case PlyColumn::Type::F32: return "float";
        case PlyColumn::Type::U8: return "uchar";
        case PlyColumn::Type::I32: return "int";
    }
    return "float";
}

PlyColumn::Type type_from_word(const std::string& w) {
    if (w == "float" || w == "float32") return PlyColumn::Type::F32;
    if (w == "uchar" || w == "uint8") return PlyColumn::Type::U8;
    if (w == "int" || w == "int32") return PlyColumn::Type::I32;
    throw std::runtime_error("ply: unsupported property type " + w);
}

void write_value_binary(std::ostream& os, PlyColumn::Type t, double v) {
    switch (t) {
        case PlyColumn::Type::F32: {
            float f = static_cast<float>(v);
            std::uint32_t u;
            std::memcpy(&u, &f, 4);
            char b[4] = {static_cast<char>(u & 0xFF), static_cast<char>((u >> 8) & 0xFF),
                         static_cast<char>((u >> 16) & 0xFF), static_cast<char>((u >> 24) & 0xFF)};
            os.write(b, 4);
            break;
        }
        case PlyColumn::Type::U8: {
            char b = static_cast<char>(static_cast<std::uint8_t>(v));
            os.write(&b, 1);
            break;
        }
        case PlyColumn::Type::I32: {
            std::int32_t i = static_cast<std::int32_t>(v);
            std::uint32_t u;
            std::memcpy(&u, &i, 4);
            char b[4] = {static_cast<char>(u & 0xFF), static_cast<char>((u >> 8) & 0xFF),
                         static_cast<char>((u >> 16) & 0xFF), static_cast<char>((u >> 24) & 0xFF)};
            os.write(b, 4);
            break;
        }
    }
}

double read_value_binary(std::istream& is, PlyColumn::Type t) {
    switch (t) {
        case PlyColumn::Type::F32: {
            unsigned char b[4];
            is.read(reinterpret_cast<char*>(b), 4);
            std::uint32_t u = static_cast<std::uint32_t>(b[0]) |
                              (static_cast<std::uint32_t>(b[1]) << 8) |
                              (static_cast<std::uint32_t>(b[2]) << 16) |
                              (static_cast<std::uint32_t>(b[3]) << 24);
            float f;
            std::memcpy(&f, &u, 4);
            return static_cast<double>(f);
        }
        case PlyColumn::Type::U8: {
            unsigned char b;
            is.read(reinterpret_cast<char*>(&b), 1);
            return static_cast<double>(b);
        }
        case PlyColumn::Type::I32: {
            unsigned char b[4];
            is.read(reinterpret_cast<char*>(b), 4);
            std::uint32_t u = static_cast<std::uint32_t>(b[0]) |
                              (static_cast<std::uint32_t>(b[1]) << 8) |
                              (static_cast<std::uint32_t>(b[2]) << 16) |
                              (static_cast<std::uint32_t>(b[3]) << 24);
            std::int32_t i;
            std::memcpy(&i, &u, 4);
            return static_cast<double>(i);
        }
    }
    return 0.0;
}

// viewer palette indexed by category label; background uses -1
const std::uint8_t kPalette[][3] = {
    {230, 60, 60},  {60, 160, 230}, {90, 200, 90},  {240, 200, 60},
    {180, 100, 220}, {240, 140, 50}, {100, 220, 210}, {160, 160, 160},
};

}  // namespace

const PlyColumn* PlyTable::find(const std::string& name) const {
    for (const auto& c : columns)
        if (c.name == name) return &c;
    return nullptr;
}

void write_ply(const std::string& path, const PlyTable& table, bool binary) {
    for (const auto& c : table.columns)
        if (c.values.size() != table.rows)
            throw std::invalid_argument("ply: column " + c.name + " has wrong length");

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("ply: cannot open " + path + " for writing");
    os << "ply\n";
    os << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n");
    os << "element vertex " << table.rows << "\n";
    for (const auto& c : table.columns)
        os << "property " << type_word(c.type) << ' ' << c.name << "\n";
    os << "end_header\n";

    if (binary) {
        for (std::size_t r = 0; r < table.rows; ++r)
            for (const auto& c : table.columns) write_value_binary(os, c.type, c.values[r]);
    } else {
        os.precision(9);
        for (std::size_t r = 0; r < table.rows; ++r) {
            for (std::size_t k = 0; k < table.columns.size(); ++k) {
                if (k) os << ' ';
                const auto& c = table.columns[k];
                if (c.type == PlyColumn::Type::F32)
                    os << static_cast<float>(c.values[r]);
                else
                    os << static_cast<long long>(c.values[r]);
            }
            os << '\n';
        }
    }
    if (!os) throw std::runtime_error("ply: write failed for " + path);
}

PlyTable read_ply(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("ply: cannot open " + path);

    std::string line;
    if (!std::getline(is, line) || line != "ply") throw std::runtime_error("ply: bad magic in " + path);

    PlyTable table;
    bool binary = false;
    bool saw_format = false;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "comment") continue;
        if (word == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "binary_little_endian") binary = true;
            else if (fmt == "ascii") binary = false;
            else throw std::runtime_error("ply: unsupported format " + fmt);
            saw_format = true;
        } else if (word == "element") {
            std::string what;
            std::size_t count = 0;
            ls >> what >> count;
            if (what != "vertex") throw std::runtime_error("ply: only vertex elements supported");
            table.rows = count;
        } else if (word == "property") {
            std::string type, name;
            ls >> type >> name;
            if (type == "list") throw std::runtime_error("ply: list properties not supported");
            PlyColumn col;
            col.name = name;
            col.type = type_from_word(type);
            col.values.reserve(table.rows);
            table.columns.push_back(std::move(col));
        } else if (word == "end_header") {
            break;
        }
    }
    if (!saw_format) throw std::runtime_error("ply: missing format line in " + path);

    if (binary) {
        for (std::size_t r = 0; r < table.rows; ++r)
            for (auto& c : table.columns) c.values.push_back(read_value_binary(is, c.type));
    } else {
        for (std::size_t r = 0; r < table.rows; ++r)
            for (auto& c : table.columns) {
                double v;
                is >> v;
                c.values.push_back(v);
            }
    }
    if (!is) throw std::runtime_error("ply: truncated data in " + path);
    return table;
}

void write_point_cloud(const std::string& path, const std::vector<PointSample>& points,
                       bool with_occupancy, bool binary) {
    PlyTable table;
    table.rows = points.size();
    table.columns.reserve(9);  // references below must stay valid
    auto add = [&](const char* name, PlyColumn::Type type) -> std::vector<double>& {
        table.columns.push_back({name, type, {}});
        table.columns.back().values.reserve(points.size());
        return table.columns.back().values;
    };
    auto& x = add("x", PlyColumn::Type::F32);
    auto& y = add("y", PlyColumn::Type::F32);
    auto& z = add("z", PlyColumn::Type::F32);
    auto& r = add("red", PlyColumn::Type::F32);
    auto& g = add("green", PlyColumn::Type::F32);
    auto& b = add("blue", PlyColumn::Type::F32);
    auto& cat = add("category", PlyColumn::Type::I32);
    auto& inst = add("instance", PlyColumn::Type::I32);
    std::vector<double>* occ = with_occupancy ? &add("occupied", PlyColumn::Type::U8) : nullptr;
    for (const auto& p : points) {
        x.push_back(p.xyz.x);
        y.push_back(p.xyz.y);
        z.push_back(p.xyz.z);
        r.push_back(p.rgb[0]);
        g.push_back(p.rgb[1]);
        b.push_back(p.rgb[2]);
        cat.push_back(p.category);
        inst.push_back(p.instance);
        if (occ) occ->push_back(p.occupancy);
    }
    write_ply(path, table, binary);
}

std::vector<PointSample> read_point_cloud(const std::string& path) {
    PlyTable table = read_ply(path);
    const PlyColumn* x = table.find("x");
    const PlyColumn* y = table.find("y");
    const PlyColumn* z = table.find("z");
    if (!x || !y || !z) throw std::runtime_error("ply: " + path + " lacks xyz properties");
    const PlyColumn* r = table.find("red");
    const PlyColumn* g = table.find("green");
    const PlyColumn* b = table.find("blue");
    const PlyColumn* cat = table.find("category");
    const PlyColumn* inst = table.find("instance");
    const PlyColumn* occ = table.find("occupied");

    double color_scale = (r && r->type == PlyColumn::Type::U8) ? 1.0 / 255.0 : 1.0;
    std::vector<PointSample> out(table.rows);
    for (std::size_t i = 0; i < table.rows; ++i) {
        PointSample& p = out[i];
        p.xyz = {x->values[i], y->values[i], z->values[i]};
        if (r && g && b)
            p.rgb = {r->values[i] * color_scale, g->values[i] * color_scale,
                     b->values[i] * color_scale};
        p.category = cat ? static_cast<int>(cat->values[i]) : -1;
        p.instance = inst ? static_cast<int>(inst->values[i]) : -1;
        p.occupancy = occ ? static_cast<int>(occ->values[i]) : 1;
    }
    return out;
}

void write_mask_cloud(const std::string& path, const std::vector<Vec3>& coords,
                      const std::vector<double>& mask, bool binary) {
    if (coords.size() != mask.size())
        throw std::invalid_argument("ply: mask length does not match coordinates");
    PlyTable table;
    table.rows = coords.size();
    table.columns = {{"x", PlyColumn::Type::F32, {}},
                     {"y", PlyColumn::Type::F32, {}},
                     {"z", PlyColumn::Type::F32, {}},
                     {"mask", PlyColumn::Type::F32, {}}};
    for (std::size_t i = 0; i < coords.size(); ++i) {
        table.columns[0].values.push_back(coords[i].x);
        table.columns[1].values.push_back(coords[i].y);
        table.columns[2].values.push_back(coords[i].z);
        table.columns[3].values.push_back(mask[i]);
    }
    write_ply(path, table, binary);
}

void write_segment_cloud(const std::string& path, const std::vector<Vec3>& coords,
                         const std::vector<int>& category, const std::vector<int>& instance,
                         bool binary) {
    if (coords.size() != category.size() || coords.size() != instance.size())
        throw std::invalid_argument("ply: segmentation arrays do not match coordinates");
    PlyTable table;
    table.rows = coords.size();
    table.columns = {{"x", PlyColumn::Type::F32, {}},    {"y", PlyColumn::Type::F32, {}},
                     {"z", PlyColumn::Type::F32, {}},    {"red", PlyColumn::Type::U8, {}},
                     {"green", PlyColumn::Type::U8, {}}, {"blue", PlyColumn::Type::U8, {}},
                     {"category", PlyColumn::Type::I32, {}},
                     {"instance", PlyColumn::Type::I32, {}}};
    constexpr int palette_size = static_cast<int>(sizeof(kPalette) / sizeof(kPalette[0]));
    for (std::size_t i = 0; i < coords.size(); ++i) {
        table.columns[0].values.push_back(coords[i].x);
        table.columns[1].values.push_back(coords[i].y);
        table.columns[2].values.push_back(coords[i].z);
        int c = category[i];
        if (c >= 0) {
            const auto& rgb = kPalette[c % palette_size];
            // shade instances of one category differently in the viewer
            double shade = instance[i] >= 0 ? 1.0 - 0.12 * (instance[i] % 5) : 1.0;
            table.columns[3].values.push_back(rgb[0] * shade);
            table.columns[4].values.push_back(rgb[1] * shade);
            table.columns[5].values.push_back(rgb[2] * shade);
        } else {
            table.columns[3].values.push_back(40);
            table.columns[4].values.push_back(40);
            table.columns[5].values.push_back(40);
        }
        table.columns[6].values.push_back(c);
        table.columns[7].values.push_back(instance[i]);
    }
    write_ply(path, table, binary);
}

}  // namespace dfr::data
