// SPDX-License-Identifier: Apache-2.0

#include "dfr/scene_io.hpp"

#include "dfr/ply.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace dfr::data {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

ordered_json vec3_to_json(const Vec3& v) { return ordered_json::array({v.x, v.y, v.z}); }

Vec3 vec3_from_json(const nlohmann::json& j) {
    return Vec3{j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

std::string shape_id_for(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "shape_%04zu", index);
    return buf;
}

}  // namespace

std::string shape_to_json(const ShapeSpec& shape) {
    ordered_json j;
    j["family"] = shape.family;
    j["seed"] = shape.seed;
    j["parts"] = ordered_json::array();
    for (const auto& part : shape.parts) {
        ordered_json p;
        p["category"] = part.category;
        p["instance"] = part.instance;
        p["color"] = part.color;
        p["rgb"] = ordered_json::array({part.rgb[0], part.rgb[1], part.rgb[2]});
        ordered_json prim;
        prim["kind"] = prim_kind_name(part.primitive.kind);
        prim["center"] = vec3_to_json(part.primitive.center);
        switch (part.primitive.kind) {
            case PrimKind::Box:
                prim["half"] = vec3_to_json(part.primitive.half);
                break;
            case PrimKind::Cylinder:
                prim["axis"] = part.primitive.axis;
                prim["radius"] = part.primitive.radius;
                prim["half_height"] = part.primitive.half_height;
                break;
            case PrimKind::Sphere:
                prim["radius"] = part.primitive.radius;
                break;
        }
        p["primitive"] = std::move(prim);
        j["parts"].push_back(std::move(p));
    }
    return j.dump(2);
}

ShapeSpec shape_from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    ShapeSpec shape;
    shape.family = j.at("family").get<std::string>();
    shape.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& p : j.at("parts")) {
        PartSpec part;
        part.category = p.at("category").get<std::string>();
        part.instance = p.at("instance").get<int>();
        part.color = p.at("color").get<std::string>();
        auto rgb = p.at("rgb");
        part.rgb = {rgb.at(0).get<double>(), rgb.at(1).get<double>(), rgb.at(2).get<double>()};
        const auto& prim = p.at("primitive");
        std::string kind = prim.at("kind").get<std::string>();
        Vec3 center = vec3_from_json(prim.at("center"));
        if (kind == "box") {
            part.primitive = Primitive::box(center, vec3_from_json(prim.at("half")));
        } else if (kind == "cylinder") {
            part.primitive = Primitive::cylinder(center, prim.at("axis").get<int>(),
                                                 prim.at("radius").get<double>(),
                                                 prim.at("half_height").get<double>());
        } else if (kind == "sphere") {
            part.primitive = Primitive::sphere(center, prim.at("radius").get<double>());
        } else {
            throw std::invalid_argument("unknown primitive kind: " + kind);
        }
        shape.parts.push_back(std::move(part));
    }
    return shape;
}

std::string qa_line_to_json(const QAItem& item, const std::string& shape_id) {
    ordered_json j;
    j["question"] = item.question;
    j["program"] = nlohmann::ordered_json::parse(item.program.to_json());
    switch (item.answer.kind) {
        case Answer::Kind::YesNo: j["answer"] = item.answer.yes ? "yes" : "no"; break;
        case Answer::Kind::Concept: j["answer"] = item.answer.concept_name; break;
        case Answer::Kind::Count: j["answer"] = item.answer.count; break;
    }
    j["type"] = question_type_name(item.type);
    j["shape_id"] = shape_id;
    return j.dump();
}

QAItem qa_line_from_json(const std::string& line, std::string* shape_id) {
    auto j = nlohmann::json::parse(line);
    QAItem item;
    item.question = j.at("question").get<std::string>();
    item.program = lang::Program::from_json(j.at("program").dump());
    item.type = question_type_from_name(j.at("type").get<std::string>());
    const auto& ans = j.at("answer");
    if (ans.is_number_integer()) {
        item.answer = Answer::of_count(ans.get<int>());
    } else {
        std::string text = ans.get<std::string>();
        if (item.type == QuestionType::ExistPart)
            item.answer = Answer::yes_no(text == "yes");
        else
            item.answer = Answer::of_concept(text);
    }
    if (shape_id) *shape_id = j.value("shape_id", std::string());
    return item;
}

std::size_t Corpus::question_count() const {
    std::size_t n = 0;
    for (const auto& s : scenes) n += s.questions.size();
    return n;
}

Corpus generate_corpus(const GenOptions& options) {
    if (options.count < 1) throw std::invalid_argument("generate_corpus: count must be >= 1");
    if (options.families.empty())
        throw std::invalid_argument("generate_corpus: no families requested");

    Corpus corpus;
    Rng root(options.seed);
    for (int i = 0; i < options.count; ++i) {
        const std::string& family =
            options.families[static_cast<std::size_t>(i) % options.families.size()];
        std::uint64_t shape_seed = options.first_shape_seed + static_cast<std::uint64_t>(i) +
                                   options.seed * 0x10000ull;

        SceneRecord scene;
        scene.id = shape_id_for(static_cast<std::size_t>(i));
        scene.shape = generate_shape(family, shape_seed, corpus.taxonomy);
        scene.cloud = sample_partial_cloud(scene.shape, shape_seed, options.cloud_points);
        Rng sup_rng = root.fork(0x50000000ull + static_cast<std::uint64_t>(i));
        scene.supervision = sample_supervision(scene.shape, options.supervision_points, sup_rng);
        Rng surf_rng = root.fork(0xEAF00000ull + static_cast<std::uint64_t>(i));
        scene.surface = sample_surface_points(scene.shape, options.surface_points, surf_rng);
        scene.questions =
            generate_qa(scene.shape, options.questions_per_shape, shape_seed, corpus.taxonomy);
        corpus.scenes.push_back(std::move(scene));
    }
    return corpus;
}

void write_corpus(const Corpus& corpus, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "shapes");
    fs::create_directories(fs::path(dir) / "clouds");
    fs::create_directories(fs::path(dir) / "supervision");
    fs::create_directories(fs::path(dir) / "surface");

    std::ofstream qa((fs::path(dir) / "qa.jsonl").string());
    if (!qa) throw std::runtime_error("cannot write qa.jsonl under " + dir);

    for (const auto& scene : corpus.scenes) {
        std::ofstream sj((fs::path(dir) / "shapes" / (scene.id + ".json")).string());
        sj << shape_to_json(scene.shape) << '\n';
        if (!sj) throw std::runtime_error("cannot write shape json for " + scene.id);
        write_point_cloud((fs::path(dir) / "clouds" / (scene.id + ".ply")).string(), scene.cloud,
                          /*with_occupancy=*/false);
        write_point_cloud((fs::path(dir) / "supervision" / (scene.id + ".ply")).string(),
                          scene.supervision, /*with_occupancy=*/true);
        write_point_cloud((fs::path(dir) / "surface" / (scene.id + ".ply")).string(), scene.surface,
                          /*with_occupancy=*/true);
        for (const auto& item : scene.questions) qa << qa_line_to_json(item, scene.id) << '\n';
    }

    std::ofstream tax((fs::path(dir) / "taxonomy.json").string());
    tax << corpus.taxonomy.to_json() << '\n';
}

Corpus read_corpus(const std::string& dir) {
    Corpus corpus;
    {
        std::ifstream tax((fs::path(dir) / "taxonomy.json").string());
        if (tax) {
            std::string text((std::istreambuf_iterator<char>(tax)),
                             std::istreambuf_iterator<char>());
            corpus.taxonomy = Taxonomy::from_json(text);
        }
    }

    std::vector<fs::path> shape_files;
    fs::path shapes_dir = fs::path(dir) / "shapes";
    if (!fs::is_directory(shapes_dir))
        throw std::runtime_error("dataset directory lacks shapes/: " + dir);
    for (const auto& entry : fs::directory_iterator(shapes_dir))
        if (entry.path().extension() == ".json") shape_files.push_back(entry.path());
    std::sort(shape_files.begin(), shape_files.end());

    for (const auto& path : shape_files) {
        SceneRecord scene;
        scene.id = path.stem().string();
        std::ifstream sj(path.string());
        std::string text((std::istreambuf_iterator<char>(sj)), std::istreambuf_iterator<char>());
        scene.shape = shape_from_json(text);
        scene.cloud = read_point_cloud((fs::path(dir) / "clouds" / (scene.id + ".ply")).string());
        scene.supervision =
            read_point_cloud((fs::path(dir) / "supervision" / (scene.id + ".ply")).string());
        fs::path surf = fs::path(dir) / "surface" / (scene.id + ".ply");
        if (fs::exists(surf)) scene.surface = read_point_cloud(surf.string());
        corpus.scenes.push_back(std::move(scene));
    }

    std::ifstream qa((fs::path(dir) / "qa.jsonl").string());
    std::string line;
    while (std::getline(qa, line)) {
        if (line.empty()) continue;
        std::string shape_id;
        QAItem item = qa_line_from_json(line, &shape_id);
        for (auto& scene : corpus.scenes)
            if (scene.id == shape_id) {
                scene.questions.push_back(std::move(item));
                break;
            }
    }
    return corpus;
}

}  // namespace dfr::data
