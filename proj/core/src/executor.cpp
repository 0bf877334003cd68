// SPDX-License-Identifier: Apache-2.0

#include "dfr/executor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dfr::exec {

using diff::Tape;
using diff::Tensor;
using diff::Var;

namespace {
std::vector<diff::Real> snapshot(Tape& tape, Var mask) { return tape.value(mask).values; }

int round_half_up(diff::Real x) { return static_cast<int>(std::floor(x + 0.5)); }
}  // namespace

std::string ExecResult::answer_text() const {
    switch (kind) {
        case Kind::Exist: return exist_value > 0.5 ? "yes" : "no";
        case Kind::Concept: return query ? query->concept_name : "";
        case Kind::Count: return count ? std::to_string(count->answer) : "";
    }
    return "";
}

ExecState init_state(Tape& tape, const ndf::FieldModel& field,
                     const concepts::ConceptStore& store, Var code,
                     const std::vector<data::Vec3>& coords) {
    if (coords.empty()) throw std::invalid_argument("init_state: no coordinates");
    if (store.dim() != field.config().descriptor_dim())
        throw diff::ShapeError("init_state", {store.dim()}, {field.config().descriptor_dim()});
    ndf::FieldModel::Query q = field.query(tape, code, coords);
    ExecState state;
    state.coords = coords;
    state.descriptors = q.descriptors;
    state.occupancy = q.occupancy;
    state.mask = q.occupancy;  // m_i = o_i
    state.trace.push_back(snapshot(tape, state.mask));
    return state;
}

ExecState make_state(Tape& tape, const std::vector<data::Vec3>& coords, Tensor descriptors,
                     Tensor mask) {
    if (coords.empty()) throw std::invalid_argument("make_state: no coordinates");
    int n = static_cast<int>(coords.size());
    if (descriptors.rank() != 2 || descriptors.shape[0] != n)
        throw diff::ShapeError("make_state", descriptors.shape, {n, -1});
    if (mask.shape != std::vector<int>{n}) throw diff::ShapeError("make_state", mask.shape, {n});
    ExecState state;
    state.coords = coords;
    state.descriptors = tape.leaf(std::move(descriptors));
    state.occupancy = tape.leaf(std::move(mask));
    state.mask = state.occupancy;
    state.trace.push_back(snapshot(tape, state.mask));
    return state;
}

void op_filter(Tape& tape, const concepts::ConceptStore& store, ExecState& state,
               const std::string& concept_name) {
    Var scores = store.score(tape, state.descriptors, concept_name);
    state.mask = tape.min_elem(state.mask, scores);
    state.trace.push_back(snapshot(tape, state.mask));
}

Var op_exist(Tape& tape, ExecState& state) {
    Var score = tape.max_all(state.mask);
    state.trace.push_back(snapshot(tape, state.mask));
    return score;
}

QueryOutcome op_query(Tape& tape, const concepts::ConceptStore& store, ExecState& state,
                      const std::string& attribute) {
    const Taxonomy::Attribute* attr = store.taxonomy().find_attribute(attribute);
    if (!attr) throw std::invalid_argument("op_query: unknown attribute '" + attribute + "'");
    if (attr->concepts.size() < 2)
        throw std::invalid_argument("op_query: attribute '" + attribute + "' has < 2 concepts");

    std::vector<Var> logit_parts;
    for (const auto& concept_name : attr->concepts) {
        Var scores = store.score(tape, state.descriptors, concept_name);
        Var limited = tape.min_elem(state.mask, scores);
        logit_parts.push_back(tape.reshape(tape.max_all(limited), {1, 1}));
    }
    Var logits = tape.reshape(tape.concat_cols(logit_parts),
                              {static_cast<int>(attr->concepts.size())});

    const Tensor& lv = tape.value(logits);
    int best = 0;
    for (int c = 1; c < lv.shape[0]; ++c)
        if (lv.at(c) > lv.at(best)) best = c;  // lowest index wins ties

    QueryOutcome out;
    out.concept_index = best;
    out.concept_name = attr->concepts[static_cast<std::size_t>(best)];
    out.concept_names = attr->concepts;
    out.logits = logits;
    state.trace.push_back(snapshot(tape, state.mask));
    return out;
}

CountOutcome op_count(Tape& tape, const concepts::ConceptStore& store, ExecState& state) {
    Var slots = store.slot_distribution(tape, state.descriptors);       // [N,S]
    Var tiled = tape.repeat_cols(state.mask, store.slot_count());       // [N,S]
    Var slot_masks = tape.min_elem(tiled, slots);                       // m_ij
    Var per_slot = tape.colwise_max(slot_masks);                        // [S]
    Var n = tape.sum_all(per_slot);

    CountOutcome out;
    out.value = n;
    out.n = tape.value(n).at(0);
    out.answer = std::clamp(round_half_up(out.n), 0, store.slot_count());
    out.slot_masks = slot_masks;
    state.trace.push_back(snapshot(tape, state.mask));
    return out;
}

ExecResult run_program(Tape& tape, const ndf::FieldModel& field,
                       const concepts::ConceptStore& store, Var code,
                       const std::vector<data::Vec3>& coords, const lang::Program& program) {
    if (auto err = lang::validate(program, store.taxonomy()))
        throw std::invalid_argument("run_program: " + *err);

    ExecState state = init_state(tape, field, store, code, coords);
    ExecResult result;
    for (const auto& op : program.ops) {
        switch (op.kind) {
            case lang::OpKind::Filter:
                op_filter(tape, store, state, op.arg);
                break;
            case lang::OpKind::Exist:
                result.kind = ExecResult::Kind::Exist;
                result.exist_score = op_exist(tape, state);
                result.exist_value = tape.value(result.exist_score).at(0);
                break;
            case lang::OpKind::Query:
                result.kind = ExecResult::Kind::Concept;
                result.query = op_query(tape, store, state, op.arg);
                break;
            case lang::OpKind::Count:
                result.kind = ExecResult::Kind::Count;
                result.count = op_count(tape, store, state);
                break;
        }
    }
    result.trace = std::move(state.trace);
    return result;
}

std::vector<data::Vec3> inference_coords(const ndf::FieldModel& field,
                                         const std::vector<data::PointSample>& cloud,
                                         const CoordSetOptions& options) {
    // grid occupancy is evaluated against the cloud's own code
    Tensor code_value;
    {
        diff::Tape tape;
        code_value = tape.value(field.encode(tape, cloud));
    }

    int res = options.grid_resolution;
    std::vector<data::Vec3> grid;
    grid.reserve(static_cast<std::size_t>(res) * res * res);
    for (int ix = 0; ix < res; ++ix)
        for (int iy = 0; iy < res; ++iy)
            for (int iz = 0; iz < res; ++iz)
                grid.push_back({-1.0 + 2.0 * ix / (res - 1), -1.0 + 2.0 * iy / (res - 1),
                                -1.0 + 2.0 * iz / (res - 1)});

    std::vector<data::Vec3> coords;
    // batch the decode to bound tape growth
    const std::size_t batch = 4096;
    for (std::size_t start = 0; start < grid.size(); start += batch) {
        std::vector<data::Vec3> chunk(grid.begin() + static_cast<std::ptrdiff_t>(start),
                                      grid.begin() + static_cast<std::ptrdiff_t>(
                                                         std::min(grid.size(), start + batch)));
        diff::Tape local;
        auto q = field.query(local, local.constant(code_value), chunk);
        const Tensor& occ = local.value(q.occupancy);
        for (std::size_t i = 0; i < chunk.size(); ++i)
            if (occ.at(static_cast<int>(i)) > options.threshold) coords.push_back(chunk[i]);
    }
    for (const auto& p : cloud) coords.push_back(p.xyz);
    return coords;
}

Segmentation semantic_segment(Tape& tape, const ndf::FieldModel& field,
                              const concepts::ConceptStore& store, Var code,
                              const std::vector<data::Vec3>& coords) {
    ExecState state = init_state(tape, field, store, code, coords);
    return semantic_segment_state(tape, store, state);
}

Segmentation semantic_segment_state(Tape& tape, const concepts::ConceptStore& store,
                                    const ExecState& state) {
    const auto& categories = store.taxonomy().categories();
    int n = state.size();

    // per-point argmax over min(o_i, score_i^c)
    std::vector<std::vector<diff::Real>> limited;
    for (const auto& cat : categories) {
        Var scores = store.score(tape, state.descriptors, cat);
        limited.push_back(tape.value(tape.min_elem(state.occupancy, scores)).values);
    }
    const Tensor& occ = tape.value(state.occupancy);

    Segmentation seg;
    seg.category.assign(static_cast<std::size_t>(n), -1);
    seg.instance.assign(static_cast<std::size_t>(n), -1);
    for (int i = 0; i < n; ++i) {
        if (occ.at(i) < 0.5) continue;  // background
        int best = 0;
        for (std::size_t c = 1; c < categories.size(); ++c)
            if (limited[c][static_cast<std::size_t>(i)] >
                limited[static_cast<std::size_t>(best)][static_cast<std::size_t>(i)])
                best = static_cast<int>(c);
        seg.category[static_cast<std::size_t>(i)] =
            store.taxonomy().concept_index("category", categories[static_cast<std::size_t>(best)]);
    }
    return seg;
}

Segmentation instance_segment(Tape& tape, const ndf::FieldModel& field,
                              const concepts::ConceptStore& store, Var code,
                              const std::vector<data::Vec3>& coords) {
    ExecState state = init_state(tape, field, store, code, coords);
    return instance_segment_state(tape, store, state);
}

Segmentation instance_segment_state(Tape& tape, const concepts::ConceptStore& store,
                                    const ExecState& base) {
    Segmentation seg = semantic_segment_state(tape, store, base);
    const auto& categories = store.taxonomy().categories();
    int n = base.size();

    for (std::size_t c = 0; c < categories.size(); ++c) {
        int cat_idx = store.taxonomy().concept_index("category", categories[c]);
        std::vector<int> members;
        for (int i = 0; i < n; ++i)
            if (seg.category[static_cast<std::size_t>(i)] == cat_idx) members.push_back(i);
        if (members.empty()) continue;

        // count machinery restricted to this category's points
        ExecState state = base;
        state.trace.clear();
        op_filter(tape, store, state, categories[c]);
        Var slots = store.slot_distribution(tape, state.descriptors);
        Var tiled = tape.repeat_cols(state.mask, store.slot_count());
        const Tensor& slot_masks = tape.value(tape.min_elem(tiled, slots));

        for (int i : members) {
            int best_slot = 0;
            for (int s = 1; s < store.slot_count(); ++s)
                if (slot_masks.at(i, s) > slot_masks.at(i, best_slot)) best_slot = s;
            seg.instance[static_cast<std::size_t>(i)] = best_slot;
        }
    }
    return seg;
}

}  // namespace dfr::exec
