// SPDX-License-Identifier: Apache-2.0
//
// Dataset directory layout and serialization:
//   shapes/shape_NNNN.json       part specs and labels
//   clouds/shape_NNNN.ply        partial point cloud (conditioning input)
//   supervision/shape_NNNN.ply   mixed occupancy samples (occupied flag)
//   surface/shape_NNNN.ply       labeled full-surface samples (evaluation)
//   qa.jsonl                     one question per line
//   taxonomy.json, manifest.json

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfr/qa_gen.hpp"
#include "dfr/sampling.hpp"

namespace dfr::data {

std::string shape_to_json(const ShapeSpec& shape);
ShapeSpec shape_from_json(const std::string& text);

std::string qa_line_to_json(const QAItem& item, const std::string& shape_id);
QAItem qa_line_from_json(const std::string& line, std::string* shape_id = nullptr);

/// One generated scene with everything the trainer consumes.
struct SceneRecord {
    std::string id;
    ShapeSpec shape;
    std::vector<PointSample> cloud;        // partial, single viewpoint
    std::vector<PointSample> supervision;  // mixed occupancy
    std::vector<PointSample> surface;      // labeled, full surface
    std::vector<QAItem> questions;
};

struct Corpus {
    std::vector<SceneRecord> scenes;
    Taxonomy taxonomy = Taxonomy::standard();

    std::size_t question_count() const;
};

struct GenOptions {
    std::vector<std::string> families = {"table"};
    int count = 20;
    std::uint64_t seed = 0;
    int cloud_points = 1024;
    int supervision_points = 4096;
    int surface_points = 1024;
    int questions_per_shape = 8;
    std::uint64_t first_shape_seed = 0;  // shape i uses first_shape_seed + i
};

/// Generate a corpus in memory. Pure function of the options.
Corpus generate_corpus(const GenOptions& options);

void write_corpus(const Corpus& corpus, const std::string& dir);
Corpus read_corpus(const std::string& dir);

}  // namespace dfr::data
