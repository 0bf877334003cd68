// SPDX-License-Identifier: Apache-2.0
//
// Differentiable program execution over a descriptor field. State is a
// per-coordinate mask in [0,1], initialized from predicted occupancy.
//
//   Filter(c): m_i <- min(m_i, score_i(c))
//   Exist:     max_i m_i
//   Query(a):  argmax_c max_i min(m_i, score_i(c)), logits kept for the loss
//   Count(c):  m_ij = min(m_i, slot_ij); n = sum_j max_i m_ij
//
// Ties resolve to the lowest index everywhere. Execution is pure: outputs
// depend only on (code, coords, program).

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dfr/concepts.hpp"
#include "dfr/field.hpp"
#include "dfr/lang.hpp"

namespace dfr::exec {

struct ExecState {
    std::vector<data::Vec3> coords;
    diff::Var descriptors;  // [N,D]
    diff::Var occupancy;    // [N], the initial mask
    diff::Var mask;         // [N]
    std::vector<std::vector<diff::Real>> trace;  // mask snapshot per step

    int size() const { return static_cast<int>(coords.size()); }
};

struct QueryOutcome {
    std::string concept_name;  // argmax, lowest index on ties
    int concept_index = 0;
    std::vector<std::string> concept_names;
    diff::Var logits;  // [C], max_i min(m_i, score_i^c)
};

struct CountOutcome {
    diff::Var value;      // scalar n
    diff::Real n = 0.0;
    int answer = 0;       // round half up, clamped to [0, slots]
    diff::Var slot_masks; // [N,S]
};

struct ExecResult {
    enum class Kind { Exist, Concept, Count } kind = Kind::Exist;
    diff::Var exist_score;  // scalar, kind == Exist
    diff::Real exist_value = 0.0;
    std::optional<QueryOutcome> query;
    std::optional<CountOutcome> count;
    std::vector<std::vector<diff::Real>> trace;

    std::string answer_text() const;
};

/// Mask init from predicted occupancy; descriptors cached for the run.
ExecState init_state(diff::Tape& tape, const ndf::FieldModel& field,
                     const concepts::ConceptStore& store, diff::Var code,
                     const std::vector<data::Vec3>& coords);

/// Directly seed a state from raw descriptors and masks (synthetic fields,
/// tests, benchmarks). Shapes: descriptors [N,D], mask [N].
ExecState make_state(diff::Tape& tape, const std::vector<data::Vec3>& coords,
                     diff::Tensor descriptors, diff::Tensor mask);

void op_filter(diff::Tape& tape, const concepts::ConceptStore& store, ExecState& state,
               const std::string& concept_name);
diff::Var op_exist(diff::Tape& tape, ExecState& state);
QueryOutcome op_query(diff::Tape& tape, const concepts::ConceptStore& store, ExecState& state,
                      const std::string& attribute);
CountOutcome op_count(diff::Tape& tape, const concepts::ConceptStore& store, ExecState& state);

/// Sequential fold over a validated program. The trace gains one snapshot
/// for the initial mask and one per operator.
ExecResult run_program(diff::Tape& tape, const ndf::FieldModel& field,
                       const concepts::ConceptStore& store, diff::Var code,
                       const std::vector<data::Vec3>& coords, const lang::Program& program);

/// Inference coordinate set: a regular grid restricted to predicted
/// occupancy above `threshold`, plus every cloud point.
struct CoordSetOptions {
    int grid_resolution = 24;
    diff::Real threshold = 0.05;
};
std::vector<data::Vec3> inference_coords(const ndf::FieldModel& field,
                                         const std::vector<data::PointSample>& cloud,
                                         const CoordSetOptions& options = {});

struct Segmentation {
    std::vector<int> category;  // taxonomy index, -1 for background
    std::vector<int> instance;  // per-category slot groups, -1 for background
};

/// Per-point category via Query(category) against every concept; points
/// with occupancy below 0.5 become background.
Segmentation semantic_segment(diff::Tape& tape, const ndf::FieldModel& field,
                              const concepts::ConceptStore& store, diff::Var code,
                              const std::vector<data::Vec3>& coords);
Segmentation semantic_segment_state(diff::Tape& tape, const concepts::ConceptStore& store,
                                    const ExecState& state);

/// Semantic labels refined into instances by slot assignment per category.
Segmentation instance_segment(diff::Tape& tape, const ndf::FieldModel& field,
                              const concepts::ConceptStore& store, diff::Var code,
                              const std::vector<data::Vec3>& coords);
Segmentation instance_segment_state(diff::Tape& tape, const concepts::ConceptStore& store,
                                    const ExecState& state);

}  // namespace dfr::exec
